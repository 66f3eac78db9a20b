// Copyright 2026 The OVQ Authors
// SPDX-License-Identifier: Apache-2.0

// Online vector-quantized attention.
//
// The layer keeps a growing dictionary of paired key/value centroids with
// integer counts. Sequences are consumed chunk by chunk: every chunk is first
// predicted from the frozen dictionary plus the raw (causally masked) chunk
// tokens, and only afterwards folded into the dictionary by a sparse
// scatter/gather online k-means update. Dictionary size follows the
// plateauing schedule floor(t * N / (t + N)).

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ovq/attention_reference.hpp"
#include "ovq/common.hpp"

namespace ovq {

enum class Ablation {
    none,
    random_assign,  // new centroids are a seeded random sample of the chunk
    linear_growth,  // every chunk adds the same number of centroids
    constant_lr,    // fixed learning rate instead of 1/count
};

enum class UpdateRule {
    scatter,      // per-token scatter-add against the pre-update centroids
    eq19_strict,  // per-centroid aggregate step (sum x - m mu) / (c + m)
};

enum class Scoring {
    key_dot,  // nearest neighbour by key dot product
    joint,    // nearest neighbour by squared distance in [k, v] space
};

/// Test hooks used by the verification suite to prove that its checks bite.
enum class Fault {
    none,
    skip_count_increment,    // first merged token of each chunk is not counted
    mask_off_by_one,         // chunk column i+1 leaks into row i
    growth_over_allocation,  // one extra centroid per chunk
};

struct OvqConfig {
    std::size_t n_max = 2048;
    std::size_t chunk_len = 128;
    double beta = 8.0;
    bool normalize_centroids = false;
    Ablation ablation = Ablation::none;
    double constant_lr = 0.25;
    /// Expected sequence length; required by linear_growth.
    std::size_t planned_length = 0;
    UpdateRule update_rule = UpdateRule::scatter;
    Scoring scoring = Scoring::key_dot;
    std::uint64_t seed = 0;
    Fault fault = Fault::none;

    /// Throws ConfigError.
    void validate() const;
};

std::string to_string(Ablation a);
Ablation parse_ablation(const std::string& text, double* rate = nullptr);

/// floor(t * n_max / (t + n_max)); 0 at t = 0, nondecreasing, always < n_max.
std::size_t growth_count(std::uint64_t t, std::size_t n_max);

/// Centroids added after full-length chunk `chunk_index` (1-based) for the
/// configured growth schedule. Sums telescope to growth_count(L * c).
std::size_t new_centroid_budget(std::size_t chunk_index, const OvqConfig& config);

struct ChunkUpdateRecord {
    std::vector<std::size_t> assignments;
    std::vector<std::size_t> new_centroid_positions;
    std::vector<double> learning_rates;
};

namespace detail {
struct EngineAccess;
}

template <typename Scalar>
class OvqState {
public:
    OvqState(OvqConfig config, std::size_t dim);

    const OvqConfig& config() const { return config_; }
    std::size_t dim() const { return dim_; }
    std::size_t n_active() const { return counts_.size(); }
    std::uint64_t tokens_seen() const { return tokens_seen_; }
    std::uint64_t chunks_seen() const { return chunks_seen_; }

    /// n_active x d; grows as centroids are created.
    const Matrix<Scalar>& means_k() const { return means_k_; }
    const Matrix<Scalar>& means_v() const { return means_v_; }
    const std::vector<std::uint64_t>& counts() const { return counts_; }

    /// True when the very first chunk had a zero growth budget and seeded one
    /// centroid anyway. The dictionary then runs one centroid ahead of the
    /// schedule for the rest of the stream.
    bool bootstrap_extra() const { return bootstrap_extra_; }

    /// Dictionary size the growth schedule prescribes for the current token
    /// count (default growth only).
    std::size_t scheduled_size() const;

    /// Live state scalars: n_active * (2d + 1).
    std::size_t state_scalars() const { return n_active() * (2 * dim_ + 1); }

    std::uint64_t count_total() const;

    /// Rebuilds a state from serialized parts; validates every invariant that
    /// can be checked locally.
    static OvqState restore(OvqConfig config, std::size_t dim, Matrix<Scalar> means_k, Matrix<Scalar> means_v,
                            std::vector<std::uint64_t> counts, std::uint64_t tokens_seen,
                            std::uint64_t chunks_seen, bool bootstrap_extra);

private:
    friend struct detail::EngineAccess;

    OvqConfig config_;
    std::size_t dim_;
    Matrix<Scalar> means_k_;
    Matrix<Scalar> means_v_;
    std::vector<std::uint64_t> counts_;
    std::uint64_t tokens_seen_ = 0;
    std::uint64_t chunks_seen_ = 0;
    bool bootstrap_extra_ = false;
};

/// Number of centroids the next chunk of `chunk_tokens` tokens will create.
template <typename Scalar>
std::size_t planned_new_centroids(const OvqState<Scalar>& state, std::size_t chunk_tokens);

/// Nearest existing centroid for every chunk row, with its similarity
/// (dot product, or negative squared joint distance under Scoring::joint).
struct NearestNeighbors {
    std::vector<std::size_t> index;
    std::vector<double> similarity;
};

template <typename Scalar>
NearestNeighbors nearest_existing(const OvqState<Scalar>& state, const Matrix<Scalar>& k_chunk,
                                  const Matrix<Scalar>& v_chunk);

/// Chunk positions that become new centroids: the n_new rows least similar to
/// their nearest existing centroid (ties to the lower position). With an
/// empty dictionary the chunk seeds itself by greedy farthest-point selection
/// starting at position 0. Under random_assign a seeded uniform sample.
/// Returned positions are sorted ascending.
template <typename Scalar>
std::vector<std::size_t> select_new_centroids(const OvqState<Scalar>& state, const Matrix<Scalar>& k_chunk,
                                              const Matrix<Scalar>& v_chunk, std::size_t n_new);

/// Sparse dictionary update. `assignments` must already point new-centroid
/// rows at fresh ids n_active, n_active + 1, ... in position order; all other
/// rows at pre-update centroids.
template <typename Scalar>
ChunkUpdateRecord update_dictionary(OvqState<Scalar>& state, const Matrix<Scalar>& k_chunk,
                                    const Matrix<Scalar>& v_chunk, std::span<const std::size_t> assignments,
                                    std::span<const std::size_t> new_centroid_positions);

template <typename Scalar>
struct ChunkOutput {
    Matrix<Scalar> output;
    ChunkUpdateRecord record;
};

/// Predict the chunk from the frozen dictionary and the causally masked raw
/// chunk, then fold the chunk into the dictionary. When `weights` is given it
/// receives, per row, the attention weights over [dictionary; chunk] columns.
template <typename Scalar>
ChunkOutput<Scalar> ovq_forward_chunk(OvqState<Scalar>& state, const Matrix<Scalar>& q_chunk,
                                      const Matrix<Scalar>& k_chunk, const Matrix<Scalar>& v_chunk,
                                      std::vector<std::vector<double>>* weights = nullptr);

/// Prediction from the dictionary alone: softmax(beta q D_k^T + log c) D_v.
template <typename Scalar>
std::vector<Scalar> ovq_readout(const OvqState<Scalar>& state, std::span<const Scalar> query);

struct StateSizeSample {
    std::uint64_t tokens;
    std::size_t scalars;
};

template <typename Scalar>
struct OvqSequenceResult {
    Matrix<Scalar> output;
    OvqState<Scalar> state;
    std::vector<StateSizeSample> trace;
};

/// Runs a whole sequence through a fresh state in chunks of config.chunk_len.
template <typename Scalar = double>
OvqSequenceResult<Scalar> ovq_forward_sequence(const OvqConfig& config, const HeadSequence& seq);

/// Continues streaming `seq` into an existing state.
template <typename Scalar>
Matrix<Scalar> ovq_stream(OvqState<Scalar>& state, const HeadSequence& seq, std::vector<StateSizeSample>* trace);

}  // namespace ovq
