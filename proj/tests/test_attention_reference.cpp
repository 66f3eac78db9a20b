// Copyright 2026 The OVQ Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ovq/attention_reference.hpp"

namespace ovq {
namespace {

// Scalar-loop causal attention: plain exp, no max-shift, weights normalised
// after the fact. Independent of the library's softmax helper.
MatrixD naive_attention(const MatrixD& q, const MatrixD& k, const MatrixD& v, double beta) {
    const std::size_t T = q.rows(), d = q.cols();
    MatrixD o(T, v.cols());
    for (std::size_t t = 0; t < T; ++t) {
        std::vector<double> w(t + 1);
        double z = 0.0;
        for (std::size_t i = 0; i <= t; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += q(t, j) * k(i, j);
            w[i] = std::exp(beta * s);
            z += w[i];
        }
        for (std::size_t i = 0; i <= t; ++i)
            for (std::size_t j = 0; j < v.cols(); ++j) o(t, j) += w[i] / z * v(i, j);
    }
    return o;
}

TEST(SoftmaxAttention, SingleTokenReturnsItsValue) {
    std::mt19937_64 rng(1);
    const auto seq = HeadSequence::random(1, 5, 8.0, rng);
    const auto o = softmax_attention(seq).o;
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(o(0, j), seq.v(0, j));
}

TEST(SoftmaxAttention, ZeroBetaGivesRunningMean) {
    std::mt19937_64 rng(2);
    auto seq = HeadSequence::random(20, 4, 0.0, rng);
    const auto o = softmax_attention(seq).o;
    for (std::size_t t = 0; t < 20; ++t)
        for (std::size_t j = 0; j < 4; ++j) {
            double m = 0.0;
            for (std::size_t i = 0; i <= t; ++i) m += seq.v(i, j);
            EXPECT_NEAR(o(t, j), m / static_cast<double>(t + 1), 1e-14);
        }
}

TEST(SoftmaxAttention, MatchesScalarLoop) {
    std::mt19937_64 rng(3);
    const auto seq = HeadSequence::random(64, 16, 8.0, rng);
    EXPECT_LE(max_abs_diff(softmax_attention(seq).o, naive_attention(seq.q, seq.k, seq.v, 8.0)), 1e-12);
}

TEST(SoftmaxAttention, IsCausal) {
    std::mt19937_64 rng(4);
    const auto seq = HeadSequence::random(40, 6, 8.0, rng);
    const auto full = softmax_attention(seq).o;
    const auto head = softmax_attention(seq.slice(0, 25)).o;
    EXPECT_EQ(head, full.slice_rows(0, 25));
}

TEST(SoftmaxAttention, WeightsFormSimplex) {
    std::mt19937_64 rng(5);
    const auto seq = HeadSequence::random(30, 8, 32.0, rng);
    for (std::size_t t = 0; t < 30; ++t) {
        const auto w = softmax_attention_weights(seq, t);
        ASSERT_EQ(w.size(), t + 1);
        double s = 0.0;
        for (double x : w) {
            EXPECT_GE(x, 0.0);
            s += x;
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
    }
}

TEST(HeadSequence, RejectsBadInput) {
    std::mt19937_64 rng(6);
    auto seq = HeadSequence::random(4, 3, 1.0, rng);
    seq.q(0, 0) *= 2.0;
    EXPECT_THROW(seq.validate(), ConfigError);
    seq = HeadSequence::random(4, 3, 1.0, rng);
    seq.v = MatrixD(4, 2);
    EXPECT_THROW(seq.validate(), ConfigError);
    seq.v = MatrixD(3, 3);
    EXPECT_THROW(softmax_attention(seq), ConfigError);
    seq = HeadSequence::random(4, 3, 1.0, rng);
    seq.beta = -1.0;
    EXPECT_THROW(seq.validate(), ConfigError);
}

TEST(QuantizeKeys, ExactMatchAndTies) {
    std::mt19937_64 rng(7);
    const MatrixD dict = random_unit_rows(6, 4, rng);
    MatrixD k(1, 4);
    std::ranges::copy(dict.row(3), k.row(0).begin());
    const auto qk = quantize_keys(k, dict);
    EXPECT_EQ(qk.assignments[0], 3u);
    EXPECT_EQ(qk.k_hat.row(0)[0], dict(3, 0));

    // Two centroids equidistant from the key: indices 2 and 5 share a row.
    MatrixD tied = random_unit_rows(6, 4, rng);
    std::ranges::copy(tied.row(2), tied.row(5).begin());
    MatrixD key(1, 4);
    std::ranges::copy(tied.row(2), key.row(0).begin());
    EXPECT_EQ(quantize_keys(key, tied).assignments[0], 2u);
}

TEST(QuantizeKeys, SingleCentroidAndEmpty) {
    std::mt19937_64 rng(8);
    const MatrixD k = random_unit_rows(10, 3, rng);
    const auto qk = quantize_keys(k, random_unit_rows(1, 3, rng));
    for (auto a : qk.assignments) EXPECT_EQ(a, 0u);
    EXPECT_THROW(quantize_keys(k, MatrixD(0, 3)), InvalidStateError);
}

TEST(VqQuadratic, SelfDictionaryEqualsSoftmax) {
    std::mt19937_64 rng(9);
    const auto seq = HeadSequence::random(50, 8, 8.0, rng);
    EXPECT_LE(max_abs_diff(vq_attention_quadratic(seq, seq.k).o, softmax_attention(seq).o), 1e-12);
}

TEST(VqQuadratic, SingleCentroidGivesRunningMean) {
    std::mt19937_64 rng(10);
    const auto seq = HeadSequence::random(20, 4, 8.0, rng);
    const auto o = vq_attention_quadratic(seq, random_unit_rows(1, 4, rng)).o;
    for (std::size_t t = 0; t < 20; ++t) {
        double m = 0.0;
        for (std::size_t i = 0; i <= t; ++i) m += seq.v(i, 1);
        EXPECT_NEAR(o(t, 1), m / static_cast<double>(t + 1), 1e-12);
    }
}

TEST(VqLinear, MatchesQuadratic) {
    std::mt19937_64 rng(11);
    for (auto [T, N, d] : {std::tuple{128, 16, 8}, std::tuple{256, 32, 16}}) {
        const auto seq = HeadSequence::random(T, d, 8.0, rng);
        const MatrixD dict = random_unit_rows(N, d, rng);
        EXPECT_LE(max_abs_diff(vq_attention_linear(seq, dict).o, vq_attention_quadratic(seq, dict).o), 1e-10);
    }
}

TEST(VqLinear, FirstRowIsFirstValue) {
    std::mt19937_64 rng(12);
    const auto seq = HeadSequence::random(5, 4, 8.0, rng);
    const auto o = vq_attention_linear(seq, random_unit_rows(7, 4, rng)).o;
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(o(0, j), seq.v(0, j), 1e-15);
}

TEST(VqLinear, CountConservationAndZeroCountMasking) {
    std::mt19937_64 rng(13);
    const auto seq = HeadSequence::random(30, 4, 8.0, rng);
    StreamingVqAttention vq(random_unit_rows(16, 4, rng), 4, 8.0);
    for (std::size_t t = 0; t < 30; ++t) {
        vq.absorb(seq.k.row(t), seq.v.row(t));
        double total = 0.0;
        for (double c : vq.dictionary().counts) total += c;
        EXPECT_EQ(total, static_cast<double>(t + 1));
        std::vector<double> w;
        const auto o = vq.readout(seq.q.row(t), w);
        for (std::size_t n = 0; n < w.size(); ++n)
            if (vq.dictionary().counts[n] == 0.0) EXPECT_EQ(w[n], 0.0);
        for (double x : o) EXPECT_FALSE(std::isnan(x));
    }
}

TEST(VqLinear, PermutingDictionaryRowsLeavesOutputUnchanged) {
    std::mt19937_64 rng(14);
    const auto seq = HeadSequence::random(60, 6, 8.0, rng);
    const MatrixD dict = random_unit_rows(12, 6, rng);
    MatrixD reversed(12, 6);
    for (std::size_t n = 0; n < 12; ++n) std::ranges::copy(dict.row(11 - n), reversed.row(n).begin());
    EXPECT_LE(max_abs_diff(vq_attention_linear(seq, dict).o, vq_attention_linear(seq, reversed).o), 1e-12);
}

TEST(VqChunked, MatchesQuadraticForManyChunkLengths) {
    std::mt19937_64 rng(15);
    const auto seq = HeadSequence::random(200, 8, 8.0, rng);
    const MatrixD dict = random_unit_rows(32, 8, rng);
    const auto quad = vq_attention_quadratic(seq, dict).o;
    for (std::size_t L : {1, 2, 7, 64, 128, 199, 200, 500})
        EXPECT_LE(max_abs_diff(vq_attention_chunked(seq, dict, L).o, quad), 1e-10) << "L=" << L;
    EXPECT_THROW(vq_attention_chunked(seq, dict, 0), ConfigError);
}

TEST(VqChunked, SingleChunkIsQuadratic) {
    std::mt19937_64 rng(16);
    const auto seq = HeadSequence::random(64, 8, 8.0, rng);
    const MatrixD dict = random_unit_rows(8, 8, rng);
    EXPECT_LE(max_abs_diff(vq_attention_chunked(seq, dict, 64).o, vq_attention_quadratic(seq, dict).o), 1e-12);
}

TEST(VqChunked, LargeInstance) {
    std::mt19937_64 rng(17);
    const auto seq = HeadSequence::random(512, 16, 8.0, rng);
    const MatrixD dict = random_unit_rows(32, 16, rng);
    EXPECT_LE(max_abs_diff(vq_attention_chunked(seq, dict, 128).o, vq_attention_quadratic(seq, dict).o), 1e-10);
}

TEST(VqForms, CausalPrefixes) {
    std::mt19937_64 rng(18);
    const auto seq = HeadSequence::random(90, 5, 8.0, rng);
    const MatrixD dict = random_unit_rows(9, 5, rng);
    const auto head = seq.slice(0, 47);
    EXPECT_EQ(vq_attention_quadratic(head, dict).o, vq_attention_quadratic(seq, dict).o.slice_rows(0, 47));
    EXPECT_EQ(vq_attention_linear(head, dict).o, vq_attention_linear(seq, dict).o.slice_rows(0, 47));
    EXPECT_LE(max_abs_diff(vq_attention_chunked(head, dict, 16).o,
                           vq_attention_chunked(seq, dict, 16).o.slice_rows(0, 47)),
              1e-12);
}

TEST(LinearBaseline, FirstRowAndScalarLoop) {
    std::mt19937_64 rng(19);
    const auto seq = HeadSequence::random(40, 6, 1.0, rng);
    const auto o = linear_attention_baseline(seq).o;
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(o(0, j), seq.v(0, j), 1e-6);
    for (std::size_t t = 0; t < 40; ++t) {
        std::vector<double> num(6, 0.0);
        double den = 0.0;
        for (std::size_t i = 0; i <= t; ++i) {
            double qk = 0.0;
            for (std::size_t j = 0; j < 6; ++j) qk += seq.q(t, j) * seq.k(i, j);
            den += qk;
            for (std::size_t j = 0; j < 6; ++j) num[j] += qk * seq.v(i, j);
        }
        for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(o(t, j), num[j] / (den + 1e-9), 1e-9 * (1 + std::abs(o(t, j))));
    }
}

TEST(LinearBaseline, OrthogonalQueryFallsToEpsilonGuard) {
    LinearAttentionState s(2, 2);
    const std::vector<double> k{1.0, 0.0}, v{3.0, 4.0}, q{0.0, 1.0};
    s.absorb(k, v);
    const auto o = s.readout(q);
    EXPECT_EQ(o[0], 0.0);
    EXPECT_EQ(o[1], 0.0);
    EXPECT_EQ(s.state_scalars(), 6u);
}

}  // namespace
}  // namespace ovq
