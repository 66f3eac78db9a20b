// Copyright 2026 The OVQ Authors
// SPDX-License-Identifier: Apache-2.0

// Batch Gaussian-mixture oracle over joint [key, value] points with a shared
// isotropic covariance I / beta. Provides EM, k-means++ seeding, batch
// k-means, the mixture NLL and Gaussian-mixture-regression prediction, plus
// the checks that tie these back to attention.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ovq/attention_reference.hpp"
#include "ovq/common.hpp"

namespace ovq {

/// Shared precision beta of every component. Infinite precision is kept
/// symbolic: the E-step becomes a hard argmin instead of overflowing.
class Precision {
public:
    static Precision finite(double beta);
    static Precision infinite() { return Precision(0.0, true); }

    bool is_infinite() const { return infinite_; }
    double value() const;

private:
    Precision(double beta, bool infinite) : beta_(beta), infinite_(infinite) {}
    double beta_;
    bool infinite_;
};

struct GaussianMixture {
    MatrixD means_joint;  // N x 2d, rows are [mu_k, mu_v]
    std::vector<double> priors;
    Precision precision = Precision::finite(1.0);

    std::size_t components() const { return means_joint.rows(); }
    std::size_t dim() const { return means_joint.cols(); }
    std::size_t half_dim() const { return means_joint.cols() / 2; }
    MatrixD key_means() const;
    MatrixD value_means() const;

    /// Priors nonnegative and summing to 1 within 1e-12.
    void validate() const;
};

struct Responsibilities {
    MatrixD z;  // T x N, row-stochastic
};

class DegenerateComponentError : public Error {
public:
    explicit DegenerateComponentError(std::vector<std::size_t> components);
    const std::vector<std::size_t>& components() const { return components_; }

private:
    std::vector<std::size_t> components_;
};

/// Concatenates key and value rows into joint data points.
MatrixD join_key_value(const MatrixD& k, const MatrixD& v);

/// z[t, n] proportional to pi_n N(x_t | mu_n, I / beta), normalised per row in
/// the log domain. Infinite precision: one-hot at the nearest component with
/// nonzero prior, ties to the lowest index.
Responsibilities e_step(const GaussianMixture& mix, const MatrixD& data);

/// Weighted means and priors from responsibilities. The precision is carried
/// over unchanged. Throws DegenerateComponentError when some gamma_n == 0.
GaussianMixture m_step(const MatrixD& data, const Responsibilities& resp, Precision precision);

/// -sum_t log sum_n pi_n N(x_t | mu_n, I / beta), Gaussian normaliser included.
double nll(const GaussianMixture& mix, const MatrixD& data);

/// Alternates E and M steps; returns the NLL before the first and after every
/// iteration (iterations + 1 entries).
std::vector<double> run_em(GaussianMixture& mix, const MatrixD& data, std::size_t iterations);

/// k-means++ (D^2 sampling) seeding. Means are copies of data points, priors
/// uniform. Throws ConfigError when T < N.
GaussianMixture init_means_kmeanspp(const MatrixD& data, std::size_t components, std::uint64_t seed,
                                    Precision precision = Precision::finite(1.0));

/// Indices of the data rows that k-means++ picked, in pick order.
std::vector<std::size_t> kmeanspp_indices(const MatrixD& data, std::size_t components, std::uint64_t seed);

/// One batch k-means step under fixed hard assignments: every mean becomes
/// the average of its members. Throws DegenerateComponentError on empty clusters.
MatrixD kmeans_step(const MatrixD& data, std::span<const std::size_t> assignments, std::size_t components);

struct GmrPrediction {
    std::vector<double> softmax_form;      // softmax(beta q D_k^T + log c) D_v
    std::vector<double> expectation_form;  // sum_n pi_n e^{-beta/2 |q - mu_k|^2} mu_v / Z
    double max_form_gap = 0.0;
};

/// GMR prediction E[V | K = q] computed along both routes of the derivation.
/// pi is proportional to `counts`; the mixture's own priors are not used.
GmrPrediction gmr_predict(const GaussianMixture& mix, std::span<const double> counts, std::span<const double> query,
                          double beta);

struct NewtonReport {
    double max_deviation = 0.0;
    std::size_t clusters_checked = 0;
    std::vector<std::size_t> skipped_empty;
};

/// Checks that a Newton step on the per-cluster quadratic k-means loss,
/// started from the cluster's first member, lands on the cluster mean.
NewtonReport verify_newton_equivalence(const MatrixD& data, std::span<const std::size_t> assignments,
                                       std::size_t components);

struct GkrReport {
    MatrixD kernel_form;
    MatrixD softmax_form;
    double max_deviation = 0.0;
};

/// Causal Gaussian kernel regression with bandwidth 1 / beta versus causal
/// softmax attention on the same sequence.
GkrReport verify_gkr_attention(const HeadSequence& seq);

}  // namespace ovq
