// Copyright 2026 The OVQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "ovq/ovq_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "ovq/softmax.hpp"

namespace ovq {

namespace detail {

struct EngineAccess {
    template <typename Scalar>
    static Matrix<Scalar>& means_k(OvqState<Scalar>& s) { return s.means_k_; }
    template <typename Scalar>
    static Matrix<Scalar>& means_v(OvqState<Scalar>& s) { return s.means_v_; }
    template <typename Scalar>
    static std::vector<std::uint64_t>& counts(OvqState<Scalar>& s) { return s.counts_; }
    template <typename Scalar>
    static void advance(OvqState<Scalar>& s, std::size_t tokens) {
        s.tokens_seen_ += tokens;
        s.chunks_seen_ += 1;
    }
    template <typename Scalar>
    static void mark_bootstrap_extra(OvqState<Scalar>& s) { s.bootstrap_extra_ = true; }
};

}  // namespace detail

namespace {

using detail::EngineAccess;

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

template <typename Scalar>
constexpr double unit_norm_tolerance() {
    return sizeof(Scalar) >= 8 ? 1e-6 : 1e-4;
}

template <typename Scalar>
void check_unit_rows(const Matrix<Scalar>& m, const char* name) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double norm = std::sqrt(static_cast<double>(dot<Scalar>(m.row(r), m.row(r))));
        if (std::abs(norm - 1.0) > unit_norm_tolerance<Scalar>())
            throw ConfigError(std::string(name) + " row " + std::to_string(r) + " is not unit norm");
    }
}

/// Similarity of chunk row `row` against (key, value) centroid pair under the
/// configured scoring. Larger is closer.
template <typename Scalar>
double similarity(Scoring scoring, std::span<const Scalar> k, std::span<const Scalar> v,
                  std::span<const Scalar> mu_k, std::span<const Scalar> mu_v) {
    if (scoring == Scoring::key_dot) return static_cast<double>(dot<Scalar>(k, mu_k));
    return -static_cast<double>(squared_distance<Scalar>(k, mu_k) + squared_distance<Scalar>(v, mu_v));
}

/// The n_new positions with the smallest similarity, ties to lower position.
std::vector<std::size_t> lowest_similarity(const std::vector<double>& sim, std::size_t n_new) {
    std::vector<std::size_t> order(sim.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sim[a] < sim[b]; });
    order.resize(n_new);
    std::sort(order.begin(), order.end());
    return order;
}

/// Greedy farthest-point seeding over the chunk itself: position 0 first,
/// then repeatedly the row least similar to everything chosen so far.
template <typename Scalar>
std::vector<std::size_t> farthest_point_seeds(Scoring scoring, const Matrix<Scalar>& k, const Matrix<Scalar>& v,
                                              std::size_t n_new) {
    const std::size_t L = k.rows();
    std::vector<std::size_t> chosen;
    std::vector<bool> taken(L, false);
    std::vector<double> best(L, -std::numeric_limits<double>::infinity());
    std::size_t next = 0;
    while (chosen.size() < n_new) {
        chosen.push_back(next);
        taken[next] = true;
        for (std::size_t j = 0; j < L; ++j)
            best[j] = std::max(best[j], similarity<Scalar>(scoring, k.row(j), v.row(j), k.row(next), v.row(next)));
        next = kNone;
        for (std::size_t j = 0; j < L; ++j) {
            if (taken[j]) continue;
            if (next == kNone || best[j] < best[next]) next = j;
        }
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

template <typename Scalar>
std::vector<std::size_t> select_from(const OvqState<Scalar>& state, const NearestNeighbors& nn,
                                     const Matrix<Scalar>& k, const Matrix<Scalar>& v, std::size_t n_new) {
    const std::size_t L = k.rows();
    if (n_new > L) throw ConfigError("n_new exceeds chunk length");
    if (n_new == 0) return {};
    std::vector<std::size_t> all(L);
    std::iota(all.begin(), all.end(), std::size_t{0});
    if (n_new == L) return all;
    const OvqConfig& cfg = state.config();
    if (cfg.ablation == Ablation::random_assign) {
        std::mt19937_64 rng(mix_seed(cfg.seed, state.chunks_seen()));
        std::vector<std::size_t> picked;
        std::sample(all.begin(), all.end(), std::back_inserter(picked), n_new, rng);
        return picked;
    }
    if (state.n_active() == 0) return farthest_point_seeds(cfg.scoring, k, v, n_new);
    return lowest_similarity(nn.similarity, n_new);
}

}  // namespace

// ---------------------------------------------------------------------------
// configuration

void OvqConfig::validate() const {
    if (n_max < 1) throw ConfigError("n_max must be >= 1");
    if (chunk_len < 1) throw ConfigError("chunk_len must be >= 1");
    if (!std::isfinite(beta) || beta < 0.0) throw ConfigError("beta must be finite and >= 0");
    if (ablation == Ablation::constant_lr && !(constant_lr > 0.0 && constant_lr <= 1.0))
        throw ConfigError("constant learning rate must lie in (0, 1]");
    if (ablation == Ablation::linear_growth && planned_length == 0)
        throw ConfigError("linear_growth needs the planned sequence length");
}

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::none: return "none";
        case Ablation::random_assign: return "rand-assign";
        case Ablation::linear_growth: return "linear-growth";
        case Ablation::constant_lr: return "const-lr";
    }
    return "none";
}

Ablation parse_ablation(const std::string& text, double* rate) {
    if (text == "none") return Ablation::none;
    if (text == "rand-assign") return Ablation::random_assign;
    if (text == "linear-growth") return Ablation::linear_growth;
    if (text.rfind("const-lr", 0) == 0) {
        if (text.size() > 8) {
            if (text[8] != '=') throw ConfigError("bad ablation: " + text);
            std::size_t used = 0;
            double r = 0.0;
            try {
                r = std::stod(text.substr(9), &used);
            } catch (const std::exception&) {
                throw ConfigError("bad learning rate in ablation: " + text);
            }
            if (used != text.size() - 9) throw ConfigError("bad learning rate in ablation: " + text);
            if (rate) *rate = r;
        } else if (rate) {
            *rate = 0.25;
        }
        return Ablation::constant_lr;
    }
    throw ConfigError("unknown ablation: " + text);
}

std::size_t growth_count(std::uint64_t t, std::size_t n_max) {
    if (n_max == 0) throw ConfigError("n_max must be >= 1");
    const unsigned __int128 num = static_cast<unsigned __int128>(t) * n_max;
    const unsigned __int128 den = static_cast<unsigned __int128>(t) + n_max;
    return static_cast<std::size_t>(num / den);
}

namespace {

std::size_t linear_per_chunk(const OvqConfig& cfg) {
    const std::size_t planned_chunks = std::max<std::size_t>(1, (cfg.planned_length + cfg.chunk_len - 1) / cfg.chunk_len);
    return static_cast<std::size_t>(std::llround(static_cast<double>(cfg.n_max) / static_cast<double>(planned_chunks)));
}

}  // namespace

std::size_t new_centroid_budget(std::size_t chunk_index, const OvqConfig& config) {
    if (chunk_index < 1) throw ConfigError("chunk index is 1-based");
    config.validate();
    const std::uint64_t L = config.chunk_len;
    if (config.ablation == Ablation::linear_growth) {
        const std::size_t per = linear_per_chunk(config);
        const std::uint64_t used = std::min<std::uint64_t>(config.n_max, per * (chunk_index - 1));
        return static_cast<std::size_t>(std::min<std::uint64_t>(per, config.n_max - used));
    }
    return growth_count(L * chunk_index, config.n_max) - growth_count(L * (chunk_index - 1), config.n_max);
}

// ---------------------------------------------------------------------------
// state

template <typename Scalar>
OvqState<Scalar>::OvqState(OvqConfig config, std::size_t dim)
    : config_(config), dim_(dim), means_k_(0, dim), means_v_(0, dim) {
    config_.validate();
    if (dim == 0) throw ConfigError("head dimension must be >= 1");
}

template <typename Scalar>
std::size_t OvqState<Scalar>::scheduled_size() const {
    return std::min(config_.n_max, growth_count(tokens_seen_, config_.n_max) + (bootstrap_extra_ ? 1 : 0));
}

template <typename Scalar>
std::uint64_t OvqState<Scalar>::count_total() const {
    return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

template <typename Scalar>
OvqState<Scalar> OvqState<Scalar>::restore(OvqConfig config, std::size_t dim, Matrix<Scalar> means_k,
                                           Matrix<Scalar> means_v, std::vector<std::uint64_t> counts,
                                           std::uint64_t tokens_seen, std::uint64_t chunks_seen,
                                           bool bootstrap_extra) {
    OvqState state(config, dim);
    const std::size_t n = counts.size();
    if (n > config.n_max) throw InvalidStateError("restored dictionary exceeds n_max");
    if (means_k.rows() != n || means_v.rows() != n || (n > 0 && (means_k.cols() != dim || means_v.cols() != dim)))
        throw InvalidStateError("restored dictionary shape mismatch");
    for (std::uint64_t c : counts)
        if (c == 0) throw InvalidStateError("restored dictionary has a zero count");
    if (std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}) != tokens_seen)
        throw InvalidStateError("restored counts do not sum to tokens_seen");
    state.means_k_ = n > 0 ? std::move(means_k) : Matrix<Scalar>(0, dim);
    state.means_v_ = n > 0 ? std::move(means_v) : Matrix<Scalar>(0, dim);
    state.counts_ = std::move(counts);
    state.tokens_seen_ = tokens_seen;
    state.chunks_seen_ = chunks_seen;
    state.bootstrap_extra_ = bootstrap_extra;
    return state;
}

// ---------------------------------------------------------------------------
// chunk operations

template <typename Scalar>
std::size_t planned_new_centroids(const OvqState<Scalar>& state, std::size_t chunk_tokens) {
    if (chunk_tokens == 0) return 0;
    const OvqConfig& cfg = state.config();
    const std::size_t active = state.n_active();
    std::size_t n_new = 0;
    if (cfg.ablation == Ablation::linear_growth) {
        n_new = std::min(linear_per_chunk(cfg), cfg.n_max - active);
    } else {
        const std::uint64_t t = state.tokens_seen();
        n_new = growth_count(t + chunk_tokens, cfg.n_max) - growth_count(t, cfg.n_max);
    }
    // Tokens need somewhere to go: an empty dictionary always seeds one centroid.
    if (active == 0) n_new = std::max<std::size_t>(n_new, 1);
    if (cfg.fault == Fault::growth_over_allocation) n_new += 1;
    return std::min({n_new, chunk_tokens, cfg.n_max - active});
}

template <typename Scalar>
NearestNeighbors nearest_existing(const OvqState<Scalar>& state, const Matrix<Scalar>& k_chunk,
                                  const Matrix<Scalar>& v_chunk) {
    const std::size_t L = k_chunk.rows();
    const std::size_t N = state.n_active();
    const Scoring scoring = state.config().scoring;
    NearestNeighbors nn{std::vector<std::size_t>(L, kNone),
                        std::vector<double>(L, -std::numeric_limits<double>::infinity())};
    for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t n = 0; n < N; ++n) {
            const double s = similarity<Scalar>(scoring, k_chunk.row(i), v_chunk.row(i), state.means_k().row(n),
                                                state.means_v().row(n));
            if (nn.index[i] == kNone || s > nn.similarity[i]) {
                nn.similarity[i] = s;
                nn.index[i] = n;
            }
        }
    }
    return nn;
}

template <typename Scalar>
std::vector<std::size_t> select_new_centroids(const OvqState<Scalar>& state, const Matrix<Scalar>& k_chunk,
                                              const Matrix<Scalar>& v_chunk, std::size_t n_new) {
    if (n_new > k_chunk.rows()) throw ConfigError("n_new exceeds chunk length");
    const NearestNeighbors nn = (n_new == 0 || n_new == k_chunk.rows() || state.n_active() == 0)
                                    ? NearestNeighbors{}
                                    : nearest_existing(state, k_chunk, v_chunk);
    return select_from(state, nn, k_chunk, v_chunk, n_new);
}

template <typename Scalar>
ChunkUpdateRecord update_dictionary(OvqState<Scalar>& state, const Matrix<Scalar>& k_chunk,
                                    const Matrix<Scalar>& v_chunk, std::span<const std::size_t> assignments,
                                    std::span<const std::size_t> new_centroid_positions) {
    const OvqConfig& cfg = state.config();
    const std::size_t L = k_chunk.rows();
    const std::size_t d = state.dim();
    if (v_chunk.rows() != L || assignments.size() != L) throw ConfigError("update: chunk shapes differ");
    if (k_chunk.cols() != d || v_chunk.cols() != d) throw ConfigError("update: width does not match state");

    const std::size_t n_before = state.n_active();
    const std::size_t n_new = new_centroid_positions.size();
    if (n_before + n_new > cfg.n_max) throw InternalError("update would exceed n_max");

    auto& means_k = EngineAccess::means_k(state);
    auto& means_v = EngineAccess::means_v(state);
    auto& counts = EngineAccess::counts(state);

    ChunkUpdateRecord record;
    record.assignments.assign(assignments.begin(), assignments.end());
    record.new_centroid_positions.assign(new_centroid_positions.begin(), new_centroid_positions.end());
    record.learning_rates.assign(L, 0.0);

    // (1) install new centroids as [k, v] with count 1
    std::vector<bool> is_new(L, false);
    for (std::size_t i = 0; i < n_new; ++i) {
        const std::size_t pos = new_centroid_positions[i];
        if (pos >= L || is_new[pos]) throw InternalError("new centroid positions must be distinct and in range");
        if (i > 0 && pos < new_centroid_positions[i - 1]) throw InternalError("new centroid positions must be sorted");
        if (assignments[pos] != n_before + i) throw InternalError("new centroid row not pointed at its fresh id");
        is_new[pos] = true;
        means_k.push_row(k_chunk.row(pos));
        means_v.push_row(v_chunk.row(pos));
        counts.push_back(1);
        record.learning_rates[pos] = 1.0;
    }
    const std::size_t n_after = state.n_active();

    std::vector<std::size_t> merged;
    merged.reserve(L);
    for (std::size_t t = 0; t < L; ++t) {
        if (is_new[t]) continue;
        if (assignments[t] >= n_after)
            throw InternalError("assignment " + std::to_string(assignments[t]) + " >= active size " +
                                std::to_string(n_after));
        merged.push_back(t);
    }

    const bool constant = cfg.ablation == Ablation::constant_lr;
    std::vector<std::size_t> touched;

    if (cfg.update_rule == UpdateRule::scatter) {
        // (2) scatter-add counts
        bool skipped = false;
        for (std::size_t t : merged) {
            if (cfg.fault == Fault::skip_count_increment && !skipped) {
                skipped = true;
                continue;
            }
            counts[assignments[t]] += 1;
        }
        // (3) per-token learning rate from the post-update count
        for (std::size_t t : merged)
            record.learning_rates[t] = constant ? cfg.constant_lr : 1.0 / static_cast<double>(counts[assignments[t]]);
        // (4) gather pre-update centroids once, then scatter-add the deltas
        Matrix<Scalar> delta(merged.size(), 2 * d);
        for (std::size_t m = 0; m < merged.size(); ++m) {
            const std::size_t t = merged[m];
            const std::size_t a = assignments[t];
            const auto lr = static_cast<Scalar>(record.learning_rates[t]);
            auto row = delta.row(m);
            for (std::size_t j = 0; j < d; ++j) {
                row[j] = lr * (k_chunk(t, j) - means_k(a, j));
                row[d + j] = lr * (v_chunk(t, j) - means_v(a, j));
            }
        }
        for (std::size_t m = 0; m < merged.size(); ++m) {
            const std::size_t a = assignments[merged[m]];
            const auto row = delta.row(m);
            for (std::size_t j = 0; j < d; ++j) {
                means_k(a, j) += row[j];
                means_v(a, j) += row[d + j];
            }
            touched.push_back(a);
        }
    } else {
        // Per-centroid form: mu += lr * (sum_x - m * mu), lr = 1 / (c + m).
        std::vector<std::size_t> members(n_after, 0);
        Matrix<Scalar> sums(n_after, 2 * d);
        for (std::size_t t : merged) {
            const std::size_t a = assignments[t];
            members[a] += 1;
            auto row = sums.row(a);
            for (std::size_t j = 0; j < d; ++j) {
                row[j] += k_chunk(t, j);
                row[d + j] += v_chunk(t, j);
            }
        }
        bool skipped = false;
        for (std::size_t a = 0; a < n_after; ++a) {
            if (members[a] == 0) continue;
            const double lr = constant ? cfg.constant_lr
                                       : 1.0 / static_cast<double>(counts[a] + members[a]);
            const auto lr_s = static_cast<Scalar>(lr);
            const auto m = static_cast<Scalar>(members[a]);
            const auto row = sums.row(a);
            for (std::size_t j = 0; j < d; ++j) {
                means_k(a, j) += lr_s * (row[j] - m * means_k(a, j));
                means_v(a, j) += lr_s * (row[d + j] - m * means_v(a, j));
            }
            std::uint64_t add = members[a];
            if (cfg.fault == Fault::skip_count_increment && !skipped) {
                skipped = true;
                add -= 1;
            }
            counts[a] += add;
            touched.push_back(a);
        }
        for (std::size_t t : merged) {
            const std::size_t a = assignments[t];
            record.learning_rates[t] = constant ? cfg.constant_lr
                                                : 1.0 / static_cast<double>(counts[a]);
        }
    }

    // (5) optional re-normalisation of the touched key centroids
    if (cfg.normalize_centroids) {
        std::sort(touched.begin(), touched.end());
        touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
        for (std::size_t a : touched) normalize_in_place(means_k.row(a));
    }

    EngineAccess::advance(state, L);
    return record;
}

template <typename Scalar>
ChunkOutput<Scalar> ovq_forward_chunk(OvqState<Scalar>& state, const Matrix<Scalar>& q_chunk,
                                      const Matrix<Scalar>& k_chunk, const Matrix<Scalar>& v_chunk,
                                      std::vector<std::vector<double>>* weights) {
    const OvqConfig& cfg = state.config();
    const std::size_t L = q_chunk.rows();
    const std::size_t d = state.dim();
    if (L == 0) throw ConfigError("empty chunk");
    if (L > cfg.chunk_len) throw ConfigError("chunk longer than configured chunk_len");
    if (k_chunk.rows() != L || v_chunk.rows() != L) throw ConfigError("q/k/v chunk row counts differ");
    if (q_chunk.cols() != d || k_chunk.cols() != d || v_chunk.cols() != d)
        throw ConfigError("chunk width does not match state dimension");
    check_unit_rows(q_chunk, "q");
    check_unit_rows(k_chunk, "k");

    // ---- prediction: softmax(beta q [D_k; K_c]^T + log [c; 1] + M) [D_v; V_c]
    const std::size_t N = state.n_active();
    const auto beta = static_cast<Scalar>(cfg.beta);
    std::vector<Scalar> log_counts(N);
    for (std::size_t n = 0; n < N; ++n) log_counts[n] = std::log(static_cast<Scalar>(state.counts()[n]));

    ChunkOutput<Scalar> result{Matrix<Scalar>(L, d), {}};
    if (weights) weights->assign(L, {});
    std::vector<Scalar> logits;
    for (std::size_t i = 0; i < L; ++i) {
        const auto q = q_chunk.row(i);
        std::size_t visible = i + 1;
        if (cfg.fault == Fault::mask_off_by_one) visible = std::min(L, i + 2);
        logits.assign(N + visible, Scalar{0});
        for (std::size_t n = 0; n < N; ++n) logits[n] = beta * dot<Scalar>(q, state.means_k().row(n)) + log_counts[n];
        for (std::size_t j = 0; j < visible; ++j) logits[N + j] = beta * dot<Scalar>(q, k_chunk.row(j));
        softmax_in_place<Scalar>(logits);

        auto o = result.output.row(i);
        for (std::size_t n = 0; n < N; ++n) {
            const Scalar w = logits[n];
            const auto mu = state.means_v().row(n);
            for (std::size_t x = 0; x < d; ++x) o[x] += w * mu[x];
        }
        for (std::size_t j = 0; j < visible; ++j) {
            const Scalar w = logits[N + j];
            const auto v = v_chunk.row(j);
            for (std::size_t x = 0; x < d; ++x) o[x] += w * v[x];
        }
        if (weights) (*weights)[i].assign(logits.begin(), logits.end());
    }

    // ---- update: select new centroids, assign the rest, scatter
    const std::size_t n_new = planned_new_centroids(state, L);
    if (N == 0 && cfg.ablation != Ablation::linear_growth && cfg.fault == Fault::none) {
        const std::size_t scheduled = growth_count(state.tokens_seen() + L, cfg.n_max) -
                                      growth_count(state.tokens_seen(), cfg.n_max);
        if (scheduled == 0) EngineAccess::mark_bootstrap_extra(state);
    }
    const NearestNeighbors nn = N > 0 ? nearest_existing(state, k_chunk, v_chunk) : NearestNeighbors{};
    const std::vector<std::size_t> fresh = select_from(state, nn, k_chunk, v_chunk, n_new);

    std::vector<std::size_t> assignments(L, kNone);
    for (std::size_t r = 0; r < fresh.size(); ++r) assignments[fresh[r]] = N + r;
    for (std::size_t i = 0; i < L; ++i) {
        if (assignments[i] != kNone) continue;
        if (N > 0) {
            assignments[i] = nn.index[i];
            continue;
        }
        // Bootstrap chunk: merge into the nearest freshly seeded centroid.
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < fresh.size(); ++r) {
            const double s = similarity<Scalar>(cfg.scoring, k_chunk.row(i), v_chunk.row(i), k_chunk.row(fresh[r]),
                                                v_chunk.row(fresh[r]));
            if (assignments[i] == kNone || s > best) {
                best = s;
                assignments[i] = r;
            }
        }
    }
    result.record = update_dictionary(state, k_chunk, v_chunk, assignments, fresh);
    return result;
}

template <typename Scalar>
std::vector<Scalar> ovq_readout(const OvqState<Scalar>& state, std::span<const Scalar> query) {
    if (query.size() != state.dim()) throw ConfigError("query width does not match state dimension");
    const std::size_t N = state.n_active();
    std::vector<Scalar> out(state.dim(), Scalar{0});
    if (N == 0) return out;
    const auto beta = static_cast<Scalar>(state.config().beta);
    std::vector<Scalar> logits(N);
    for (std::size_t n = 0; n < N; ++n)
        logits[n] = beta * dot<Scalar>(query, state.means_k().row(n)) +
                    std::log(static_cast<Scalar>(state.counts()[n]));
    softmax_in_place<Scalar>(logits);
    for (std::size_t n = 0; n < N; ++n) {
        const auto mu = state.means_v().row(n);
        for (std::size_t x = 0; x < out.size(); ++x) out[x] += logits[n] * mu[x];
    }
    return out;
}

template <typename Scalar>
Matrix<Scalar> ovq_stream(OvqState<Scalar>& state, const HeadSequence& seq, std::vector<StateSizeSample>* trace) {
    seq.validate();
    if (seq.dim() != state.dim()) throw ConfigError("sequence width does not match state dimension");
    const std::size_t T = seq.length();
    const std::size_t L = state.config().chunk_len;
    Matrix<Scalar> out(T, seq.dim());
    for (std::size_t start = 0; start < T; start += L) {
        const std::size_t end = std::min(T, start + L);
        const auto q = seq.q.slice_rows(start, end).template cast<Scalar>();
        const auto k = seq.k.slice_rows(start, end).template cast<Scalar>();
        const auto v = seq.v.slice_rows(start, end).template cast<Scalar>();
        const auto chunk = ovq_forward_chunk(state, q, k, v);
        for (std::size_t i = start; i < end; ++i) std::ranges::copy(chunk.output.row(i - start), out.row(i).begin());
        if (trace) trace->push_back({state.tokens_seen(), state.state_scalars()});
    }
    return out;
}

template <typename Scalar>
OvqSequenceResult<Scalar> ovq_forward_sequence(const OvqConfig& config, const HeadSequence& seq) {
    config.validate();
    seq.validate();
    OvqSequenceResult<Scalar> result{Matrix<Scalar>(), OvqState<Scalar>(config, seq.dim()), {}};
    result.output = ovq_stream(result.state, seq, &result.trace);
    return result;
}

#define OVQ_INSTANTIATE(S)                                                                                         \
    template class OvqState<S>;                                                                                    \
    template std::size_t planned_new_centroids<S>(const OvqState<S>&, std::size_t);                               \
    template NearestNeighbors nearest_existing<S>(const OvqState<S>&, const Matrix<S>&, const Matrix<S>&);         \
    template std::vector<std::size_t> select_new_centroids<S>(const OvqState<S>&, const Matrix<S>&,               \
                                                              const Matrix<S>&, std::size_t);                      \
    template ChunkUpdateRecord update_dictionary<S>(OvqState<S>&, const Matrix<S>&, const Matrix<S>&,             \
                                                    std::span<const std::size_t>, std::span<const std::size_t>);   \
    template ChunkOutput<S> ovq_forward_chunk<S>(OvqState<S>&, const Matrix<S>&, const Matrix<S>&,                \
                                                 const Matrix<S>&, std::vector<std::vector<double>>*);             \
    template std::vector<S> ovq_readout<S>(const OvqState<S>&, std::span<const S>);                               \
    template Matrix<S> ovq_stream<S>(OvqState<S>&, const HeadSequence&, std::vector<StateSizeSample>*);           \
    template OvqSequenceResult<S> ovq_forward_sequence<S>(const OvqConfig&, const HeadSequence&);

OVQ_INSTANTIATE(float)
OVQ_INSTANTIATE(double)

#undef OVQ_INSTANTIATE

}  // namespace ovq
