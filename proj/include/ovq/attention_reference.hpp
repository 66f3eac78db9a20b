// Copyright 2026 The OVQ Authors
// SPDX-License-Identifier: Apache-2.0

// Exact, deliberately naive reference implementations of causal softmax
// attention and of VQ-attention in its quadratic, linear (count-based) and
// chunk-recurrent forms. Everything here runs in 64-bit arithmetic and is
// meant to be read and trusted, not to be fast.

#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "ovq/common.hpp"

namespace ovq {

/// Per-head queries, keys and values for one sequence. Query and key rows are
/// unit norm; beta is the logit scale (precision).
struct HeadSequence {
    MatrixD q;
    MatrixD k;
    MatrixD v;
    double beta = 1.0;

    std::size_t length() const { return q.rows(); }
    std::size_t dim() const { return q.cols(); }

    /// Throws ConfigError on shape mismatch, empty input, negative beta or
    /// non-unit query/key rows (tolerance 1e-6).
    void validate() const;

    /// Rows [begin, end) of all three matrices.
    HeadSequence slice(std::size_t begin, std::size_t end) const;

    /// Unit-norm random queries and keys, standard normal values.
    static HeadSequence random(std::size_t length, std::size_t dim, double beta, std::mt19937_64& rng);
};

/// Paired key/value centroids with per-centroid counts.
struct Dictionary {
    MatrixD means_k;
    MatrixD means_v;
    std::vector<double> counts;

    std::size_t size() const { return means_k.rows(); }
};

struct AttentionOutput {
    MatrixD o;
};

struct QuantizedKeys {
    MatrixD k_hat;
    std::vector<std::size_t> assignments;
};

/// Causal softmax attention: o[t] = softmax(beta * q[t] K[0..t]^T) V[0..t].
AttentionOutput softmax_attention(const HeadSequence& seq);

/// Attention weights of row t over positions 0..t (for simplex checks).
std::vector<double> softmax_attention_weights(const HeadSequence& seq, std::size_t t);

/// Index of the centroid with the largest dot product; ties go to the lowest index.
std::size_t nearest_centroid(std::span<const double> key, const MatrixD& centroids);

/// Replaces every key with its nearest centroid (max dot product, lowest index on ties).
QuantizedKeys quantize_keys(const MatrixD& k, const MatrixD& dict_k);
QuantizedKeys quantize_keys(const MatrixD& k, const Dictionary& dict);

/// Softmax attention with keys replaced by their quantized versions.
AttentionOutput vq_attention_quadratic(const HeadSequence& seq, const MatrixD& dict_k);

/// Streaming count-based VQ-attention state. Value centroids and counts are
/// accumulated online from the assignments of the keys; readout is
/// softmax(beta q D_k^T + log c) D_v with zero-count centroids excluded.
class StreamingVqAttention {
public:
    StreamingVqAttention(MatrixD dict_k, std::size_t value_dim, double beta);

    /// Assigns k to its nearest centroid and folds v into that centroid's
    /// running value mean. Returns the assignment.
    std::size_t absorb(std::span<const double> k, std::span<const double> v);

    std::vector<double> readout(std::span<const double> q) const;

    /// Readout that also returns the per-centroid weights.
    std::vector<double> readout(std::span<const double> q, std::vector<double>& weights) const;

    const Dictionary& dictionary() const { return dict_; }
    double total_count() const { return total_; }

private:
    Dictionary dict_;
    double beta_;
    double total_ = 0.0;
};

/// Linear-time VQ-attention: streams (k[t], v[t]) into a StreamingVqAttention
/// and reads out with q[t] after each absorb.
AttentionOutput vq_attention_linear(const HeadSequence& seq, const MatrixD& dict_k);

/// Chunk-recurrent VQ-attention. Row t in chunk c attends to the dictionary
/// summary of chunks <= c-2, to every quantized key of chunk c-1 and causally
/// to the quantized keys of chunk c. The final chunk may be short.
AttentionOutput vq_attention_chunked(const HeadSequence& seq, const MatrixD& dict_k, std::size_t chunk_len);

/// Sum-state linear attention used as a degradation baseline.
class LinearAttentionState {
public:
    static constexpr double kEpsilon = 1e-9;

    LinearAttentionState(std::size_t key_dim, std::size_t value_dim);

    void absorb(std::span<const double> k, std::span<const double> v);
    std::vector<double> readout(std::span<const double> q) const;

    /// d_k*d_v + d_k scalars.
    std::size_t state_scalars() const { return s_.rows() * s_.cols() + z_.size(); }

private:
    MatrixD s_;
    std::vector<double> z_;
};

/// o[t] = (q[t] S_t) / (q[t] z_t + 1e-9) with S_t = sum k^T v, z_t = sum k^T.
AttentionOutput linear_attention_baseline(const HeadSequence& seq);

}  // namespace ovq
