// Copyright 2026 The OVQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "ovq/gmr_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "ovq/softmax.hpp"

namespace ovq {

namespace {

double log_sum_exp(std::span<const double> xs) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : xs) m = std::max(m, x);
    if (m == -std::numeric_limits<double>::infinity()) return m;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

void check_data(const GaussianMixture& mix, const MatrixD& data) {
    mix.validate();
    if (data.cols() != mix.dim()) throw ConfigError("data width does not match mixture");
}

std::string join_indices(const std::vector<std::size_t>& ids) {
    std::string s;
    for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? ", " : "") + std::to_string(ids[i]);
    return s;
}

}  // namespace

Precision Precision::finite(double beta) {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("precision must be finite and > 0");
    return Precision(beta, false);
}

double Precision::value() const {
    if (infinite_) throw InvalidStateError("infinite precision has no finite value");
    return beta_;
}

MatrixD GaussianMixture::key_means() const {
    MatrixD out(components(), half_dim());
    for (std::size_t n = 0; n < components(); ++n)
        for (std::size_t j = 0; j < half_dim(); ++j) out(n, j) = means_joint(n, j);
    return out;
}

MatrixD GaussianMixture::value_means() const {
    MatrixD out(components(), half_dim());
    for (std::size_t n = 0; n < components(); ++n)
        for (std::size_t j = 0; j < half_dim(); ++j) out(n, j) = means_joint(n, half_dim() + j);
    return out;
}

void GaussianMixture::validate() const {
    if (components() == 0) throw ConfigError("mixture has no components");
    if (priors.size() != components()) throw ConfigError("prior count does not match components");
    double total = 0.0;
    for (double p : priors) {
        if (!(p >= 0.0)) throw ConfigError("negative prior");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ConfigError("priors do not sum to 1");
}

DegenerateComponentError::DegenerateComponentError(std::vector<std::size_t> components)
    : Error("degenerate (empty) mixture components: " + join_indices(components)),
      components_(std::move(components)) {}

MatrixD join_key_value(const MatrixD& k, const MatrixD& v) {
    if (k.rows() != v.rows()) throw ConfigError("key and value row counts differ");
    MatrixD out(k.rows(), k.cols() + v.cols());
    for (std::size_t t = 0; t < k.rows(); ++t) {
        std::ranges::copy(k.row(t), out.row(t).begin());
        std::ranges::copy(v.row(t), out.row(t).begin() + static_cast<std::ptrdiff_t>(k.cols()));
    }
    return out;
}

Responsibilities e_step(const GaussianMixture& mix, const MatrixD& data) {
    check_data(mix, data);
    const std::size_t T = data.rows();
    const std::size_t N = mix.components();
    Responsibilities resp{MatrixD(T, N)};
    if (mix.precision.is_infinite()) {
        for (std::size_t t = 0; t < T; ++t) {
            std::size_t best = N;
            double best_d = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                if (mix.priors[n] <= 0.0) continue;
                const double dist = squared_distance<double>(data.row(t), mix.means_joint.row(n));
                if (best == N || dist < best_d) {
                    best = n;
                    best_d = dist;
                }
            }
            resp.z(t, best) = 1.0;
        }
        return resp;
    }
    const double beta = mix.precision.value();
    for (std::size_t t = 0; t < T; ++t) {
        auto row = resp.z.row(t);
        for (std::size_t n = 0; n < N; ++n) {
            row[n] = mix.priors[n] > 0.0
                         ? std::log(mix.priors[n]) - 0.5 * beta * squared_distance<double>(data.row(t), mix.means_joint.row(n))
                         : kMasked;
        }
        softmax_in_place<double>(row);
    }
    return resp;
}

GaussianMixture m_step(const MatrixD& data, const Responsibilities& resp, Precision precision) {
    const std::size_t T = data.rows();
    const std::size_t N = resp.z.cols();
    if (resp.z.rows() != T) throw ConfigError("responsibilities do not match data");
    std::vector<double> gamma(N, 0.0);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t n = 0; n < N; ++n) gamma[n] += resp.z(t, n);
    std::vector<std::size_t> empty;
    for (std::size_t n = 0; n < N; ++n)
        if (!(gamma[n] > 0.0)) empty.push_back(n);
    if (!empty.empty()) throw DegenerateComponentError(std::move(empty));

    GaussianMixture mix{MatrixD(N, data.cols()), std::vector<double>(N), precision};
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t n = 0; n < N; ++n) {
            const double z = resp.z(t, n);
            auto mu = mix.means_joint.row(n);
            for (std::size_t j = 0; j < mu.size(); ++j) mu[j] += z * data(t, j);
        }
    const double total = std::accumulate(gamma.begin(), gamma.end(), 0.0);
    for (std::size_t n = 0; n < N; ++n) {
        for (double& x : mix.means_joint.row(n)) x /= gamma[n];
        mix.priors[n] = gamma[n] / total;
    }
    return mix;
}

double nll(const GaussianMixture& mix, const MatrixD& data) {
    check_data(mix, data);
    if (mix.precision.is_infinite()) throw ConfigError("nll is undefined at infinite precision");
    const double beta = mix.precision.value();
    const double log_norm = 0.5 * static_cast<double>(mix.dim()) * std::log(beta / (2.0 * std::numbers::pi));
    std::vector<double> terms(mix.components());
    double total = 0.0;
    for (std::size_t t = 0; t < data.rows(); ++t) {
        for (std::size_t n = 0; n < mix.components(); ++n) {
            terms[n] = mix.priors[n] > 0.0 ? std::log(mix.priors[n]) + log_norm -
                                                  0.5 * beta * squared_distance<double>(data.row(t), mix.means_joint.row(n))
                                            : kMasked;
        }
        total -= log_sum_exp(terms);
    }
    return total;
}

std::vector<double> run_em(GaussianMixture& mix, const MatrixD& data, std::size_t iterations) {
    std::vector<double> trace{nll(mix, data)};
    for (std::size_t i = 0; i < iterations; ++i) {
        mix = m_step(data, e_step(mix, data), mix.precision);
        trace.push_back(nll(mix, data));
    }
    return trace;
}

std::vector<std::size_t> kmeanspp_indices(const MatrixD& data, std::size_t components, std::uint64_t seed) {
    const std::size_t T = data.rows();
    if (components == 0) throw ConfigError("need at least one component");
    if (T < components) throw ConfigError("k-means++ needs at least as many points as components");
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> picked;
    std::vector<bool> taken(T, false);
    std::vector<double> d2(T, std::numeric_limits<double>::infinity());

    auto take = [&](std::size_t idx) {
        picked.push_back(idx);
        taken[idx] = true;
        for (std::size_t t = 0; t < T; ++t)
            d2[t] = std::min(d2[t], squared_distance<double>(data.row(t), data.row(idx)));
    };

    take(std::uniform_int_distribution<std::size_t>(0, T - 1)(rng));
    while (picked.size() < components) {
        double total = 0.0;
        for (std::size_t t = 0; t < T; ++t)
            if (!taken[t]) total += d2[t];
        std::size_t choice = T;
        if (total > 0.0) {
            double u = std::uniform_real_distribution<double>(0.0, total)(rng);
            for (std::size_t t = 0; t < T; ++t) {
                if (taken[t] || d2[t] <= 0.0) continue;
                choice = t;
                if (u < d2[t]) break;
                u -= d2[t];
            }
        } else {
            // Every remaining point duplicates a chosen mean: pick uniformly.
            std::vector<std::size_t> rest;
            for (std::size_t t = 0; t < T; ++t)
                if (!taken[t]) rest.push_back(t);
            choice = rest[std::uniform_int_distribution<std::size_t>(0, rest.size() - 1)(rng)];
        }
        take(choice);
    }
    return picked;
}

GaussianMixture init_means_kmeanspp(const MatrixD& data, std::size_t components, std::uint64_t seed,
                                    Precision precision) {
    const auto picked = kmeanspp_indices(data, components, seed);
    GaussianMixture mix{MatrixD(components, data.cols()),
                        std::vector<double>(components, 1.0 / static_cast<double>(components)), precision};
    for (std::size_t n = 0; n < components; ++n) std::ranges::copy(data.row(picked[n]), mix.means_joint.row(n).begin());
    return mix;
}

MatrixD kmeans_step(const MatrixD& data, std::span<const std::size_t> assignments, std::size_t components) {
    if (assignments.size() != data.rows()) throw ConfigError("one assignment per data row required");
    MatrixD sums(components, data.cols());
    std::vector<double> members(components, 0.0);
    for (std::size_t t = 0; t < data.rows(); ++t) {
        const std::size_t n = assignments[t];
        if (n >= components) throw ConfigError("assignment out of range");
        members[n] += 1.0;
        auto row = sums.row(n);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] += data(t, j);
    }
    std::vector<std::size_t> empty;
    for (std::size_t n = 0; n < components; ++n)
        if (members[n] == 0.0) empty.push_back(n);
    if (!empty.empty()) throw DegenerateComponentError(std::move(empty));
    for (std::size_t n = 0; n < components; ++n)
        for (double& x : sums.row(n)) x /= members[n];
    return sums;
}

GmrPrediction gmr_predict(const GaussianMixture& mix, std::span<const double> counts, std::span<const double> query,
                          double beta) {
    const std::size_t N = mix.components();
    const std::size_t d = mix.half_dim();
    if (counts.size() != N) throw ConfigError("one count per component required");
    if (query.size() != d) throw ConfigError("query width does not match key half");
    for (double c : counts)
        if (!(c > 0.0)) throw ConfigError("counts must be positive");
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);

    std::vector<double> soft(N), kernel(N);
    for (std::size_t n = 0; n < N; ++n) {
        const auto mu = mix.means_joint.row(n);
        const auto mu_k = mu.first(d);
        soft[n] = beta * dot<double>(query, mu_k) + std::log(counts[n]);
        kernel[n] = std::log(counts[n] / total) - 0.5 * beta * squared_distance<double>(query, mu_k);
    }
    softmax_in_place<double>(soft);
    softmax_in_place<double>(kernel);

    GmrPrediction out{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0), 0.0};
    for (std::size_t n = 0; n < N; ++n) {
        const auto mu_v = mix.means_joint.row(n).subspan(d);
        for (std::size_t j = 0; j < d; ++j) {
            out.softmax_form[j] += soft[n] * mu_v[j];
            out.expectation_form[j] += kernel[n] * mu_v[j];
        }
    }
    for (std::size_t j = 0; j < d; ++j)
        out.max_form_gap = std::max(out.max_form_gap, std::abs(out.softmax_form[j] - out.expectation_form[j]));
    return out;
}

NewtonReport verify_newton_equivalence(const MatrixD& data, std::span<const std::size_t> assignments,
                                       std::size_t components) {
    if (assignments.size() != data.rows()) throw ConfigError("one assignment per data row required");
    const std::size_t D = data.cols();
    NewtonReport report;
    for (std::size_t n = 0; n < components; ++n) {
        std::vector<std::size_t> members;
        for (std::size_t t = 0; t < data.rows(); ++t)
            if (assignments[t] == n) members.push_back(t);
        if (members.empty()) {
            report.skipped_empty.push_back(n);
            continue;
        }
        // Start from the first member, as after data-point initialisation.
        const auto start = data.row(members.front());
        const double gamma = static_cast<double>(members.size());
        // loss = sum |x - mu|^2: grad = 2 sum (mu - x), Hessian = 2 gamma I
        std::vector<double> grad(D, 0.0), mean(D, 0.0);
        for (std::size_t t : members)
            for (std::size_t j = 0; j < D; ++j) {
                grad[j] += 2.0 * (start[j] - data(t, j));
                mean[j] += data(t, j);
            }
        for (std::size_t j = 0; j < D; ++j) {
            const double newton = start[j] - grad[j] / (2.0 * gamma);
            mean[j] /= gamma;
            report.max_deviation = std::max(report.max_deviation, std::abs(newton - mean[j]));
        }
        ++report.clusters_checked;
    }
    return report;
}

GkrReport verify_gkr_attention(const HeadSequence& seq) {
    seq.validate();
    const std::size_t T = seq.length();
    const std::size_t d = seq.dim();
    GkrReport report{MatrixD(T, d), softmax_attention(seq).o, 0.0};
    std::vector<double> w;
    for (std::size_t t = 0; t < T; ++t) {
        w.assign(t + 1, 0.0);
        for (std::size_t i = 0; i <= t; ++i)
            w[i] = -0.5 * seq.beta * squared_distance<double>(seq.q.row(t), seq.k.row(i));
        softmax_in_place<double>(w);
        auto o = report.kernel_form.row(t);
        for (std::size_t i = 0; i <= t; ++i)
            for (std::size_t j = 0; j < d; ++j) o[j] += w[i] * seq.v(i, j);
    }
    report.max_deviation = max_abs_diff(report.kernel_form, report.softmax_form);
    return report;
}

}  // namespace ovq
