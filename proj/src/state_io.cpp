// Copyright 2026 The OVQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "ovq/state_io.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <ostream>

namespace ovq {

namespace {

constexpr std::array<char, 4> kMagic{'O', 'V', 'Q', 'S'};

void put_u64(std::ostream& out, std::uint64_t value, int bytes = 8) {
    for (int i = 0; i < bytes; ++i) out.put(static_cast<char>((value >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::istream& in, int bytes = 8) {
    std::uint64_t value = 0;
    for (int i = 0; i < bytes; ++i) {
        const int c = in.get();
        if (c == std::char_traits<char>::eof()) throw ParseError("state snapshot truncated");
        value |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return value;
}

void put_f64(std::ostream& out, double x) { put_u64(out, std::bit_cast<std::uint64_t>(x)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

template <typename Scalar>
void put_scalar(std::ostream& out, Scalar x) {
    if constexpr (sizeof(Scalar) == 8)
        put_u64(out, std::bit_cast<std::uint64_t>(x));
    else
        put_u64(out, std::bit_cast<std::uint32_t>(x), 4);
}

template <typename Scalar>
Scalar get_scalar(std::istream& in) {
    if constexpr (sizeof(Scalar) == 8)
        return std::bit_cast<Scalar>(get_u64(in));
    else
        return std::bit_cast<Scalar>(static_cast<std::uint32_t>(get_u64(in, 4)));
}

template <typename E>
E checked_enum(std::uint64_t raw, std::uint64_t last, const char* what) {
    if (raw > last) throw ParseError(std::string("state snapshot: bad ") + what);
    return static_cast<E>(raw);
}

}  // namespace

template <typename Scalar>
void write_state(std::ostream& out, const OvqState<Scalar>& state) {
    const OvqConfig& cfg = state.config();
    out.write(kMagic.data(), kMagic.size());
    put_u64(out, kStateFormatVersion, 4);
    put_u64(out, sizeof(Scalar), 4);
    put_u64(out, state.dim());
    put_u64(out, cfg.n_max);
    put_u64(out, state.n_active());
    put_u64(out, state.tokens_seen());
    put_u64(out, state.chunks_seen());
    put_u64(out, cfg.chunk_len);
    put_f64(out, cfg.beta);
    put_u64(out, cfg.normalize_centroids ? 1 : 0, 1);
    put_u64(out, static_cast<std::uint64_t>(cfg.ablation), 1);
    put_u64(out, static_cast<std::uint64_t>(cfg.update_rule), 1);
    put_u64(out, static_cast<std::uint64_t>(cfg.scoring), 1);
    put_u64(out, state.bootstrap_extra() ? 1 : 0, 1);
    put_f64(out, cfg.constant_lr);
    put_u64(out, cfg.planned_length);
    put_u64(out, cfg.seed);
    for (Scalar x : state.means_k().flat()) put_scalar(out, x);
    for (Scalar x : state.means_v().flat()) put_scalar(out, x);
    for (std::uint64_t c : state.counts()) put_u64(out, c);
    if (!out) throw Error("failed to write state snapshot");
}

template <typename Scalar>
OvqState<Scalar> read_state(std::istream& in) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size())) throw ParseError("state snapshot truncated");
    if (magic != kMagic) throw ParseError("not an OVQ state snapshot (bad magic)");
    const auto version = get_u64(in, 4);
    if (version != kStateFormatVersion) throw ParseError("unsupported state snapshot version " + std::to_string(version));
    const auto width = get_u64(in, 4);
    if (width != sizeof(Scalar))
        throw ParseError("state snapshot holds " + std::to_string(width * 8) + "-bit scalars, expected " +
                         std::to_string(sizeof(Scalar) * 8));

    const std::uint64_t d = get_u64(in);
    OvqConfig cfg;
    cfg.n_max = get_u64(in);
    const std::uint64_t n_active = get_u64(in);
    const std::uint64_t tokens_seen = get_u64(in);
    const std::uint64_t chunks_seen = get_u64(in);
    cfg.chunk_len = get_u64(in);
    cfg.beta = get_f64(in);
    cfg.normalize_centroids = get_u64(in, 1) != 0;
    cfg.ablation = checked_enum<Ablation>(get_u64(in, 1), 3, "ablation");
    cfg.update_rule = checked_enum<UpdateRule>(get_u64(in, 1), 1, "update rule");
    cfg.scoring = checked_enum<Scoring>(get_u64(in, 1), 1, "scoring");
    const bool bootstrap_extra = get_u64(in, 1) != 0;
    cfg.constant_lr = get_f64(in);
    cfg.planned_length = get_u64(in);
    cfg.seed = get_u64(in);

    if (d == 0 || d > (1u << 20)) throw ParseError("state snapshot: implausible dimension");
    if (n_active > cfg.n_max) throw InvalidStateError("state snapshot: n_active exceeds n_max");
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw ParseError(std::string("state snapshot: ") + e.what());
    }

    Matrix<Scalar> means_k(n_active, d);
    Matrix<Scalar> means_v(n_active, d);
    for (Scalar& x : means_k.flat()) x = get_scalar<Scalar>(in);
    for (Scalar& x : means_v.flat()) x = get_scalar<Scalar>(in);
    std::vector<std::uint64_t> counts(n_active);
    for (auto& c : counts) c = get_u64(in);
    return OvqState<Scalar>::restore(cfg, d, std::move(means_k), std::move(means_v), std::move(counts), tokens_seen,
                                     chunks_seen, bootstrap_extra);
}

template <typename Scalar>
void save_state(const std::string& path, const OvqState<Scalar>& state) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    write_state(out, state);
}

template <typename Scalar>
OvqState<Scalar> load_state(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    return read_state<Scalar>(in);
}

template void write_state<float>(std::ostream&, const OvqState<float>&);
template void write_state<double>(std::ostream&, const OvqState<double>&);
template OvqState<float> read_state<float>(std::istream&);
template OvqState<double> read_state<double>(std::istream&);
template void save_state<float>(const std::string&, const OvqState<float>&);
template void save_state<double>(const std::string&, const OvqState<double>&);
template OvqState<float> load_state<float>(const std::string&);
template OvqState<double> load_state<double>(const std::string&);

}  // namespace ovq
