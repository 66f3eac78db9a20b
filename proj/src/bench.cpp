// Copyright 2026 The OVQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "ovq/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <optional>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "ovq/attention_reference.hpp"
#include "ovq/gmr_oracle.hpp"
#include "ovq/softmax.hpp"

namespace ovq {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::size_t argmax_dot(std::span<const double> x, const MatrixD& table, std::size_t rows) {
    std::size_t best = 0;
    double best_s = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < rows; ++r) {
        const double s = dot<double>(x, table.row(r));
        if (s > best_s) {
            best_s = s;
            best = r;
        }
    }
    return best;
}

MatrixD pick_rows(const MatrixD& m, const std::vector<std::size_t>& rows) {
    MatrixD out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) std::ranges::copy(m.row(rows[i]), out.row(i).begin());
    return out;
}

MatrixD fixed_dictionary(const MixerSpec& spec, const MatrixD& keys) {
    const std::size_t n = std::min(spec.vq_size, keys.rows());
    return pick_rows(keys, kmeanspp_indices(keys, n, spec.vq_seed));
}

std::string fmt_double(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

// ---------------------------------------------------------------------------
// final-state memories

class FullMemory final : public MixerMemory {
public:
    explicit FullMemory(double beta) : beta_(beta) {}
    void absorb(const MatrixD& k, const MatrixD& v) override {
        for (std::size_t t = 0; t < k.rows(); ++t) {
            k_.push_row(k.row(t));
            v_.push_row(v.row(t));
        }
    }
    std::vector<double> read(std::span<const double> q) const override {
        std::vector<double> w(k_.rows());
        for (std::size_t t = 0; t < k_.rows(); ++t) w[t] = beta_ * dot<double>(q, k_.row(t));
        std::vector<double> out(v_.cols(), 0.0);
        if (!softmax_in_place<double>(w)) return out;
        for (std::size_t t = 0; t < k_.rows(); ++t)
            for (std::size_t j = 0; j < out.size(); ++j) out[j] += w[t] * v_(t, j);
        return out;
    }
    std::size_t state_scalars() const override { return k_.rows() * (k_.cols() + v_.cols()); }

private:
    double beta_;
    MatrixD k_, v_;
};

class OvqMemory final : public MixerMemory {
public:
    OvqMemory(const MixerSpec& spec)
        : state_(spec.initial_state ? *spec.initial_state : OvqState<double>(spec.effective_ovq(), spec.dim)),
          beta_(spec.beta) {}
    void absorb(const MatrixD& k, const MatrixD& v) override {
        if (k.rows() == 0) return;
        HeadSequence seq{k, k, v, state_.config().beta};
        ovq_stream(state_, seq, &trace_);
    }
    std::vector<double> read(std::span<const double> q) const override { return ovq_readout(state_, q); }
    std::size_t state_scalars() const override { return state_.state_scalars(); }
    const std::vector<StateSizeSample>& trace() const override { return trace_; }
    const OvqState<double>* ovq_state() const override { return &state_; }

private:
    OvqState<double> state_;
    double beta_;
    std::vector<StateSizeSample> trace_;
};

class VqMemory final : public MixerMemory {
public:
    explicit VqMemory(const MixerSpec& spec) : spec_(spec) {}
    void absorb(const MatrixD& k, const MatrixD& v) override {
        if (k.rows() == 0) return;
        if (!vq_) vq_.emplace(fixed_dictionary(spec_, k), v.cols(), spec_.beta);
        for (std::size_t t = 0; t < k.rows(); ++t) vq_->absorb(k.row(t), v.row(t));
    }
    std::vector<double> read(std::span<const double> q) const override {
        if (!vq_) return std::vector<double>(spec_.dim, 0.0);
        return vq_->readout(q);
    }
    std::size_t state_scalars() const override {
        return vq_ ? vq_->dictionary().size() * (2 * spec_.dim + 1) : 0;
    }

private:
    MixerSpec spec_;
    std::optional<StreamingVqAttention> vq_;
};

class LinearMemory final : public MixerMemory {
public:
    explicit LinearMemory(std::size_t dim) : state_(dim, dim) {}
    void absorb(const MatrixD& k, const MatrixD& v) override {
        for (std::size_t t = 0; t < k.rows(); ++t) state_.absorb(k.row(t), v.row(t));
    }
    std::vector<double> read(std::span<const double> q) const override { return state_.readout(q); }
    std::size_t state_scalars() const override { return state_.state_scalars(); }

private:
    LinearAttentionState state_;
};

}  // namespace

const std::vector<StateSizeSample>& MixerMemory::trace() const {
    static const std::vector<StateSizeSample> empty;
    return empty;
}

std::string to_string(MixerKind kind) {
    switch (kind) {
        case MixerKind::full_attention: return "full_attention";
        case MixerKind::vq_fixed: return "vq_fixed";
        case MixerKind::ovq: return "ovq";
        case MixerKind::linear_baseline: return "linear_baseline";
    }
    return "full_attention";
}

MixerKind parse_mixer_kind(const std::string& text) {
    if (text == "full" || text == "full_attention") return MixerKind::full_attention;
    if (text == "vq" || text == "vq_fixed") return MixerKind::vq_fixed;
    if (text == "ovq") return MixerKind::ovq;
    if (text == "linear" || text == "linear_baseline") return MixerKind::linear_baseline;
    throw ConfigError("unknown mixer: " + text);
}

std::string MixerSpec::name() const { return to_string(kind); }

std::size_t MixerSpec::capacity() const {
    switch (kind) {
        case MixerKind::ovq: return initial_state ? initial_state->config().n_max : ovq.n_max;
        case MixerKind::vq_fixed: return vq_size;
        default: return 0;
    }
}

OvqConfig MixerSpec::effective_ovq() const {
    OvqConfig cfg = ovq;
    cfg.beta = beta;
    return cfg;
}

void MixerSpec::validate() const {
    if (dim == 0) throw ConfigError("dim must be >= 1");
    if (!std::isfinite(beta) || beta < 0.0) throw ConfigError("beta must be finite and >= 0");
    if (kind == MixerKind::vq_fixed && vq_size == 0) throw ConfigError("vq dictionary size must be >= 1");
    if (kind == MixerKind::ovq) {
        if (initial_state) {
            if (initial_state->dim() != dim) throw ConfigError("loaded state dimension does not match --dim");
        } else {
            effective_ovq().validate();
        }
    }
    if (initial_state && kind != MixerKind::ovq) throw ConfigError("an initial state only applies to the ovq mixer");
}

std::unique_ptr<MixerMemory> make_memory(const MixerSpec& spec) {
    spec.validate();
    switch (spec.kind) {
        case MixerKind::full_attention: return std::make_unique<FullMemory>(spec.beta);
        case MixerKind::ovq: return std::make_unique<OvqMemory>(spec);
        case MixerKind::vq_fixed: return std::make_unique<VqMemory>(spec);
        case MixerKind::linear_baseline: return std::make_unique<LinearMemory>(spec.dim);
    }
    throw ConfigError("unknown mixer kind");
}

RecallRow recall_benchmark(const MixerSpec& mixer, std::size_t T, std::size_t num_probes, std::uint64_t seed) {
    if (T == 0) throw ConfigError("T must be >= 1");
    if (num_probes > T) throw ConfigError("num_probes exceeds T");
    const std::size_t d = mixer.dim;
    std::mt19937_64 rng(seed);
    const MatrixD keys = random_unit_rows(T, d, rng);
    const MatrixD codebook = random_unit_rows(T, d, rng);
    std::vector<std::size_t> all(T);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<std::size_t> probes;
    std::sample(all.begin(), all.end(), std::back_inserter(probes), num_probes, rng);

    const auto start = Clock::now();
    auto memory = make_memory(mixer);
    memory->absorb(keys, codebook);
    std::size_t correct = 0;
    double cosine = 0.0;
    for (std::size_t p : probes) {
        const auto out = memory->read(keys.row(p));
        if (argmax_dot(out, codebook, T) == p) ++correct;
        const double norm = std::sqrt(dot<double>(out, out));
        if (norm > 0.0) cosine += dot<double>(out, codebook.row(p)) / norm;
    }
    RecallRow row;
    row.mixer = mixer.name();
    row.T = T;
    row.n_max = mixer.capacity();
    row.seed = seed;
    row.top1_accuracy = num_probes ? static_cast<double>(correct) / static_cast<double>(num_probes) : 0.0;
    row.mean_cosine = num_probes ? cosine / static_cast<double>(num_probes) : 0.0;
    row.state_scalars = memory->trace().empty() ? memory->state_scalars() : memory->trace().back().scalars;
    row.wall_time_ms = elapsed_ms(start);
    return row;
}

std::vector<RecallRow> state_size_sweep(const std::vector<MixerSpec>& mixers, const std::vector<std::size_t>& lengths,
                                        std::size_t num_probes, std::uint64_t seed) {
    std::vector<GridJob> jobs;
    for (const auto& m : mixers)
        for (std::size_t T : lengths) jobs.push_back({m, T, std::min(num_probes, T), seed});
    return run_grid(jobs, 1);
}

std::size_t expected_state_scalars(const MixerSpec& mixer, std::uint64_t tokens) {
    const std::size_t d = mixer.dim;
    switch (mixer.kind) {
        case MixerKind::full_attention: return static_cast<std::size_t>(tokens) * 2 * d;
        case MixerKind::linear_baseline: return d * d + d;
        case MixerKind::vq_fixed: return std::min<std::size_t>(mixer.vq_size, tokens) * (2 * d + 1);
        case MixerKind::ovq: {
            const OvqConfig cfg = mixer.effective_ovq();
            if (tokens == 0) return 0;
            const std::uint64_t first = std::min<std::uint64_t>(tokens, cfg.chunk_len);
            const std::size_t extra = growth_count(first, cfg.n_max) == 0 ? 1 : 0;
            return std::min(cfg.n_max, growth_count(tokens, cfg.n_max) + extra) * (2 * d + 1);
        }
    }
    return 0;
}

std::vector<RecallRow> run_grid(const std::vector<GridJob>& jobs, std::size_t workers) {
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, std::max<std::size_t>(jobs.size(), 1));
    std::vector<RecallRow> rows(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            try {
                rows[i] = recall_benchmark(jobs[i].mixer, jobs[i].T, jobs[i].num_probes, jobs[i].seed);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return rows;
}

// ---------------------------------------------------------------------------
// token-task probe

namespace {

struct Featurizer {
    MatrixD table;  // (vocab + specials) x d
    std::vector<double> bos;
    std::vector<std::vector<std::size_t>> perms;
    std::vector<std::vector<double>> signs;

    Featurizer(std::size_t rows, std::size_t d, std::size_t window, std::uint64_t seed) {
        std::mt19937_64 rng(mix_seed(seed, 1));
        table = random_unit_rows(rows, d, rng);
        const MatrixD b = random_unit_rows(1, d, rng);
        bos.assign(b.row(0).begin(), b.row(0).end());
        std::mt19937_64 prng(mix_seed(seed, 2));
        std::bernoulli_distribution coin(0.5);
        for (std::size_t o = 0; o < window; ++o) {
            std::vector<std::size_t> p(d);
            std::iota(p.begin(), p.end(), std::size_t{0});
            std::shuffle(p.begin(), p.end(), prng);
            std::vector<double> s(d);
            for (auto& x : s) x = coin(prng) ? 1.0 : -1.0;
            perms.push_back(std::move(p));
            signs.push_back(std::move(s));
        }
    }

    // Features of tokens[end - window, end), each offset rotated differently.
    void context(const std::vector<std::uint32_t>& tokens, std::size_t end, std::span<double> out) const {
        std::ranges::fill(out, 0.0);
        for (std::size_t o = 0; o < perms.size(); ++o) {
            std::span<const double> e = bos;
            if (end >= o + 1) e = table.row(tokens[end - 1 - o]);
            for (std::size_t j = 0; j < out.size(); ++j) out[perms[o][j]] += signs[o][j] * e[j];
        }
        const double norm = std::sqrt(dot<double>(out, out));
        if (norm < 1e-12) {
            std::ranges::copy(bos, out.begin());
        } else {
            for (auto& x : out) x /= norm;
        }
    }
};

}  // namespace

TokenEvalReport token_task_eval(const MixerSpec& mixer, const TokenStream& stream, const TokenEvalOptions& options) {
    mixer.validate();
    stream.validate();
    if (options.window == 0) throw ConfigError("window must be >= 1");
    const std::size_t T = stream.length();
    if (T == 0) throw ConfigError("empty token stream");
    const std::size_t d = mixer.dim;

    TokenEvalReport report;
    report.mixer = mixer.name();
    report.task = stream.meta.task;
    report.length = T;
    report.label = "untrained embedding-space probe; absolute accuracy is not a trained-model result";
    if (d < 16) report.warnings.push_back("embedding dimension < 16: nearest-neighbour decoding is unreliable");

    const Featurizer feat(stream.vocab_size + kNumSpecialTokens, d, options.window, options.embedding_seed);
    HeadSequence seq{MatrixD(T, d), MatrixD(T, d), MatrixD(T, d), mixer.beta};
    for (std::size_t i = 0; i < T; ++i) {
        feat.context(stream.tokens, i, seq.k.row(i));
        feat.context(stream.tokens, i + 1, seq.q.row(i));
        std::ranges::copy(feat.table.row(stream.tokens[i]), seq.v.row(i).begin());
    }

    MatrixD out;
    switch (mixer.kind) {
        case MixerKind::full_attention:
            out = softmax_attention(seq).o;
            report.state_scalars = T * 2 * d;
            break;
        case MixerKind::linear_baseline:
            out = linear_attention_baseline(seq).o;
            report.state_scalars = d * d + d;
            break;
        case MixerKind::vq_fixed: {
            const MatrixD dict = fixed_dictionary(mixer, seq.k);
            out = vq_attention_linear(seq, dict).o;
            report.state_scalars = dict.rows() * (2 * d + 1);
            break;
        }
        case MixerKind::ovq: {
            auto state = std::make_shared<OvqState<double>>(
                mixer.initial_state ? *mixer.initial_state : OvqState<double>(mixer.effective_ovq(), d));
            seq.beta = state->config().beta;
            out = ovq_stream(*state, seq, nullptr);
            report.state_scalars = state->state_scalars();
            report.final_state = state;
            break;
        }
    }

    for (std::size_t p = 1; p < T; ++p) {
        const std::int64_t target = stream.targets[p];
        if (target == kIgnore) continue;
        ++report.target_positions;
        if (argmax_dot(out.row(p - 1), feat.table, stream.vocab_size) == static_cast<std::size_t>(target))
            ++report.correct;
    }
    report.accuracy = report.target_positions
                          ? static_cast<double>(report.correct) / static_cast<double>(report.target_positions)
                          : 0.0;
    return report;
}

// ---------------------------------------------------------------------------
// reports

std::map<std::string, std::string> describe(const MixerSpec& spec) {
    const OvqConfig cfg = spec.initial_state ? spec.initial_state->config() : spec.effective_ovq();
    std::map<std::string, std::string> m{
        {"mixer", spec.name()},
        {"beta", fmt_double(spec.beta)},
        {"dim", std::to_string(spec.dim)},
    };
    if (spec.kind == MixerKind::ovq) {
        m["n_max"] = std::to_string(cfg.n_max);
        m["chunk_len"] = std::to_string(cfg.chunk_len);
        m["ablation"] = to_string(cfg.ablation);
        m["constant_lr"] = fmt_double(cfg.constant_lr);
        m["planned_length"] = std::to_string(cfg.planned_length);
        m["normalize_centroids"] = cfg.normalize_centroids ? "true" : "false";
        m["update_rule"] = cfg.update_rule == UpdateRule::scatter ? "scatter" : "eq19_strict";
        m["scoring"] = cfg.scoring == Scoring::key_dot ? "key_dot" : "joint";
        m["ovq_seed"] = std::to_string(cfg.seed);
        m["initial_state"] = spec.initial_state ? "loaded" : "empty";
    }
    if (spec.kind == MixerKind::vq_fixed) {
        m["vq_size"] = std::to_string(spec.vq_size);
        m["vq_seed"] = std::to_string(spec.vq_seed);
    }
    return m;
}

std::string format_recall_report(const RecallReport& report, ReportFormat format) {
    if (format == ReportFormat::json) {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& r : report.rows)
            rows.push_back({{"mixer", r.mixer},
                            {"T", r.T},
                            {"n_max", r.n_max},
                            {"seed", r.seed},
                            {"top1_accuracy", r.top1_accuracy},
                            {"mean_cosine", r.mean_cosine},
                            {"state_scalars", r.state_scalars},
                            {"wall_time_ms", r.wall_time_ms}});
        const nlohmann::json j = {{"schema", "ovq.recall_report"},
                                  {"schema_version", kReportSchemaVersion},
                                  {"meta", report.meta},
                                  {"rows", rows}};
        return j.dump(2) + "\n";
    }
    std::ostringstream os;
    os << "# schema=ovq.recall_report schema_version=" << kReportSchemaVersion << "\n";
    for (const auto& [k, v] : report.meta) os << "# " << k << "=" << v << "\n";
    os << "mixer,T,n_max,seed,top1_accuracy,mean_cosine,state_scalars,wall_time_ms\n";
    for (const auto& r : report.rows)
        os << r.mixer << ',' << r.T << ',' << r.n_max << ',' << r.seed << ',' << fmt_double(r.top1_accuracy) << ','
           << fmt_double(r.mean_cosine) << ',' << r.state_scalars << ',' << fmt_double(r.wall_time_ms) << "\n";
    return os.str();
}

std::string format_token_report(const TokenEvalReport& report, const std::map<std::string, std::string>& meta,
                                ReportFormat format) {
    if (format == ReportFormat::json) {
        const nlohmann::json j = {{"schema", "ovq.token_report"},
                                  {"schema_version", kReportSchemaVersion},
                                  {"meta", meta},
                                  {"label", report.label},
                                  {"warnings", report.warnings},
                                  {"mixer", report.mixer},
                                  {"task", report.task},
                                  {"length", report.length},
                                  {"target_positions", report.target_positions},
                                  {"correct", report.correct},
                                  {"accuracy", report.accuracy},
                                  {"state_scalars", report.state_scalars}};
        return j.dump(2) + "\n";
    }
    std::ostringstream os;
    os << "# schema=ovq.token_report schema_version=" << kReportSchemaVersion << "\n";
    for (const auto& [k, v] : meta) os << "# " << k << "=" << v << "\n";
    os << "# label=" << report.label << "\n";
    for (const auto& w : report.warnings) os << "# warning=" << w << "\n";
    os << "mixer,task,length,target_positions,correct,accuracy,state_scalars\n";
    os << report.mixer << ',' << report.task << ',' << report.length << ',' << report.target_positions << ','
       << report.correct << ',' << fmt_double(report.accuracy) << ',' << report.state_scalars << "\n";
    return os.str();
}

std::string format_verify_report(const VerifyReport& report, const std::map<std::string, std::string>& meta) {
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : report.checks)
        checks.push_back({{"name", c.name},
                          {"passed", c.passed},
                          {"max_deviation", c.max_deviation},
                          {"tolerance", c.tolerance},
                          {"instances", c.instances},
                          {"params", c.params},
                          {"message", c.message}});
    const nlohmann::json j = {{"schema", "ovq.verify_report"},
                              {"schema_version", kReportSchemaVersion},
                              {"meta", meta},
                              {"seed", report.seed},
                              {"passed", report.all_passed()},
                              {"checks", checks}};
    return j.dump(2) + "\n";
}

}  // namespace ovq
