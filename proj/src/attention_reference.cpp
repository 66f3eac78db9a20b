// Copyright 2026 The OVQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "ovq/attention_reference.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ovq/softmax.hpp"

namespace ovq {

namespace {

constexpr double kUnitNormTolerance = 1e-6;

void check_unit_rows(const MatrixD& m, const char* name) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double norm = std::sqrt(dot<double>(m.row(r), m.row(r)));
        if (std::abs(norm - 1.0) > kUnitNormTolerance)
            throw ConfigError(std::string(name) + " row " + std::to_string(r) + " is not unit norm");
    }
}

void check_dict(const MatrixD& dict_k, std::size_t dim) {
    if (dict_k.rows() == 0) throw InvalidStateError("empty dictionary");
    if (dict_k.cols() != dim) throw ConfigError("dictionary width does not match head dimension");
}

}  // namespace

void HeadSequence::validate() const {
    if (q.rows() == 0 || q.cols() == 0) throw ConfigError("empty head sequence");
    if (k.rows() != q.rows() || v.rows() != q.rows())
        throw ConfigError("q/k/v row counts differ");
    if (k.cols() != q.cols() || v.cols() != q.cols())
        throw ConfigError("q/k/v widths differ");
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be finite and >= 0");
    check_unit_rows(q, "q");
    check_unit_rows(k, "k");
}

HeadSequence HeadSequence::slice(std::size_t begin, std::size_t end) const {
    return {q.slice_rows(begin, end), k.slice_rows(begin, end), v.slice_rows(begin, end), beta};
}

HeadSequence HeadSequence::random(std::size_t length, std::size_t dim, double beta, std::mt19937_64& rng) {
    HeadSequence seq;
    seq.q = random_unit_rows(length, dim, rng);
    seq.k = random_unit_rows(length, dim, rng);
    seq.v = random_gaussian(length, dim, rng);
    seq.beta = beta;
    return seq;
}

AttentionOutput softmax_attention(const HeadSequence& seq) {
    seq.validate();
    const std::size_t T = seq.length();
    const std::size_t d = seq.dim();
    AttentionOutput out{MatrixD(T, d)};
    std::vector<double> w;
    for (std::size_t t = 0; t < T; ++t) {
        w.assign(t + 1, 0.0);
        for (std::size_t i = 0; i <= t; ++i) w[i] = seq.beta * dot<double>(seq.q.row(t), seq.k.row(i));
        softmax_in_place<double>(w);
        auto o = out.o.row(t);
        for (std::size_t i = 0; i <= t; ++i)
            for (std::size_t j = 0; j < d; ++j) o[j] += w[i] * seq.v(i, j);
    }
    return out;
}

std::vector<double> softmax_attention_weights(const HeadSequence& seq, std::size_t t) {
    seq.validate();
    if (t >= seq.length()) throw ConfigError("row index out of range");
    std::vector<double> w(t + 1);
    for (std::size_t i = 0; i <= t; ++i) w[i] = seq.beta * dot<double>(seq.q.row(t), seq.k.row(i));
    softmax_in_place<double>(w);
    return w;
}

std::size_t nearest_centroid(std::span<const double> key, const MatrixD& centroids) {
    std::size_t best = 0;
    double best_sim = dot<double>(key, centroids.row(0));
    for (std::size_t n = 1; n < centroids.rows(); ++n) {
        const double sim = dot<double>(key, centroids.row(n));
        if (sim > best_sim) {
            best_sim = sim;
            best = n;
        }
    }
    return best;
}

QuantizedKeys quantize_keys(const MatrixD& k, const MatrixD& dict_k) {
    check_dict(dict_k, k.cols());
    QuantizedKeys out{MatrixD(k.rows(), k.cols()), std::vector<std::size_t>(k.rows())};
    for (std::size_t t = 0; t < k.rows(); ++t) {
        const std::size_t n = nearest_centroid(k.row(t), dict_k);
        out.assignments[t] = n;
        std::ranges::copy(dict_k.row(n), out.k_hat.row(t).begin());
    }
    return out;
}

QuantizedKeys quantize_keys(const MatrixD& k, const Dictionary& dict) { return quantize_keys(k, dict.means_k); }

AttentionOutput vq_attention_quadratic(const HeadSequence& seq, const MatrixD& dict_k) {
    seq.validate();
    check_dict(dict_k, seq.dim());
    // Centroids need not be unit norm, so the quantized keys never go through
    // HeadSequence::validate.
    const MatrixD k_hat = quantize_keys(seq.k, dict_k).k_hat;
    const std::size_t T = seq.length();
    const std::size_t d = seq.dim();
    AttentionOutput out{MatrixD(T, d)};
    std::vector<double> w;
    for (std::size_t t = 0; t < T; ++t) {
        w.assign(t + 1, 0.0);
        for (std::size_t i = 0; i <= t; ++i) w[i] = seq.beta * dot<double>(seq.q.row(t), k_hat.row(i));
        softmax_in_place<double>(w);
        auto o = out.o.row(t);
        for (std::size_t i = 0; i <= t; ++i)
            for (std::size_t j = 0; j < d; ++j) o[j] += w[i] * seq.v(i, j);
    }
    return out;
}

StreamingVqAttention::StreamingVqAttention(MatrixD dict_k, std::size_t value_dim, double beta)
    : beta_(beta) {
    if (dict_k.rows() == 0) throw InvalidStateError("empty dictionary");
    const std::size_t n = dict_k.rows();
    dict_.means_k = std::move(dict_k);
    dict_.means_v = MatrixD(n, value_dim);
    dict_.counts.assign(n, 0.0);
}

std::size_t StreamingVqAttention::absorb(std::span<const double> k, std::span<const double> v) {
    if (k.size() != dict_.means_k.cols() || v.size() != dict_.means_v.cols())
        throw ConfigError("absorb: width mismatch");
    const std::size_t n = nearest_centroid(k, dict_.means_k);
    const double c = (dict_.counts[n] += 1.0);
    auto mu = dict_.means_v.row(n);
    for (std::size_t j = 0; j < mu.size(); ++j) mu[j] += (v[j] - mu[j]) / c;
    total_ += 1.0;
    return n;
}

std::vector<double> StreamingVqAttention::readout(std::span<const double> q) const {
    std::vector<double> weights;
    return readout(q, weights);
}

std::vector<double> StreamingVqAttention::readout(std::span<const double> q, std::vector<double>& weights) const {
    const std::size_t n_total = dict_.size();
    weights.assign(n_total, kMasked);
    for (std::size_t n = 0; n < n_total; ++n) {
        if (dict_.counts[n] > 0.0)
            weights[n] = beta_ * dot<double>(q, dict_.means_k.row(n)) + std::log(dict_.counts[n]);
    }
    std::vector<double> out(dict_.means_v.cols(), 0.0);
    if (!softmax_in_place<double>(weights)) return out;
    for (std::size_t n = 0; n < n_total; ++n) {
        if (weights[n] == 0.0) continue;
        const auto mu = dict_.means_v.row(n);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += weights[n] * mu[j];
    }
    return out;
}

AttentionOutput vq_attention_linear(const HeadSequence& seq, const MatrixD& dict_k) {
    seq.validate();
    check_dict(dict_k, seq.dim());
    StreamingVqAttention stream(dict_k, seq.dim(), seq.beta);
    AttentionOutput out{MatrixD(seq.length(), seq.dim())};
    for (std::size_t t = 0; t < seq.length(); ++t) {
        stream.absorb(seq.k.row(t), seq.v.row(t));
        const auto o = stream.readout(seq.q.row(t));
        std::ranges::copy(o, out.o.row(t).begin());
    }
    return out;
}

AttentionOutput vq_attention_chunked(const HeadSequence& seq, const MatrixD& dict_k, std::size_t chunk_len) {
    if (chunk_len == 0) throw ConfigError("chunk length must be >= 1");
    seq.validate();
    check_dict(dict_k, seq.dim());
    const std::size_t T = seq.length();
    const std::size_t d = seq.dim();
    const std::size_t N = dict_k.rows();
    const QuantizedKeys qk = quantize_keys(seq.k, dict_k);

    // Summary of chunks <= c-2: counts and per-centroid value sums.
    std::vector<double> counts(N, 0.0);
    MatrixD value_sums(N, d);
    std::size_t summarized_end = 0;

    AttentionOutput out{MatrixD(T, d)};
    std::vector<double> logits;
    for (std::size_t start = 0; start < T; start += chunk_len) {
        const std::size_t end = std::min(T, start + chunk_len);
        const std::size_t window_begin = start >= chunk_len ? start - chunk_len : 0;
        // Fold chunk c-2 (everything before the window) into the summary.
        for (; summarized_end < window_begin; ++summarized_end) {
            const std::size_t n = qk.assignments[summarized_end];
            counts[n] += 1.0;
            for (std::size_t j = 0; j < d; ++j) value_sums(n, j) += seq.v(summarized_end, j);
        }

        for (std::size_t t = start; t < end; ++t) {
            const auto q = seq.q.row(t);
            const std::size_t n_tokens = t + 1 - window_begin;
            logits.assign(N + n_tokens, kMasked);
            // dictionary term: exp(beta q D_k^T + log c_{c-2})
            for (std::size_t n = 0; n < N; ++n)
                if (counts[n] > 0.0) logits[n] = seq.beta * dot<double>(q, dict_k.row(n)) + std::log(counts[n]);
            // window term (chunk c-1, fully visible) and causal term (chunk c, j <= t)
            for (std::size_t j = window_begin; j <= t; ++j)
                logits[N + (j - window_begin)] = seq.beta * dot<double>(q, qk.k_hat.row(j));
            softmax_in_place<double>(logits);

            auto o = out.o.row(t);
            for (std::size_t n = 0; n < N; ++n) {
                if (logits[n] == 0.0) continue;
                const double scale = logits[n] / counts[n];
                for (std::size_t j = 0; j < d; ++j) o[j] += scale * value_sums(n, j);
            }
            for (std::size_t j = window_begin; j <= t; ++j) {
                const double w = logits[N + (j - window_begin)];
                for (std::size_t x = 0; x < d; ++x) o[x] += w * seq.v(j, x);
            }
        }
    }
    return out;
}

LinearAttentionState::LinearAttentionState(std::size_t key_dim, std::size_t value_dim)
    : s_(key_dim, value_dim), z_(key_dim, 0.0) {}

void LinearAttentionState::absorb(std::span<const double> k, std::span<const double> v) {
    for (std::size_t i = 0; i < s_.rows(); ++i) {
        z_[i] += k[i];
        for (std::size_t j = 0; j < s_.cols(); ++j) s_(i, j) += k[i] * v[j];
    }
}

std::vector<double> LinearAttentionState::readout(std::span<const double> q) const {
    std::vector<double> num(s_.cols(), 0.0);
    double den = 0.0;
    for (std::size_t i = 0; i < s_.rows(); ++i) {
        den += q[i] * z_[i];
        for (std::size_t j = 0; j < s_.cols(); ++j) num[j] += q[i] * s_(i, j);
    }
    den += kEpsilon;
    for (double& x : num) x /= den;
    return num;
}

AttentionOutput linear_attention_baseline(const HeadSequence& seq) {
    seq.validate();
    LinearAttentionState state(seq.dim(), seq.dim());
    AttentionOutput out{MatrixD(seq.length(), seq.dim())};
    for (std::size_t t = 0; t < seq.length(); ++t) {
        state.absorb(seq.k.row(t), seq.v.row(t));
        std::ranges::copy(state.readout(seq.q.row(t)), out.o.row(t).begin());
    }
    return out;
}

}  // namespace ovq
