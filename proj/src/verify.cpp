// Copyright 2026 The OVQ Authors
// SPDX-License-Identifier: Apache-2.0

// Randomized oracle-equivalence suite behind `ovq verify`.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>

#include "ovq/attention_reference.hpp"
#include "ovq/bench.hpp"
#include "ovq/gmr_oracle.hpp"

namespace ovq {

namespace {

/// Accumulates one named check over many instances.
class Check {
public:
    Check(std::string name, double tolerance) {
        result_.name = std::move(name);
        result_.tolerance = tolerance;
    }

    /// Records a deviation; fails the check when it exceeds the tolerance.
    void record(double deviation, const std::string& params) {
        ++result_.instances;
        if (std::isnan(deviation)) deviation = INFINITY;
        if (deviation > result_.max_deviation) {
            result_.max_deviation = deviation;
            result_.params = params;
        }
        if (deviation > result_.tolerance && result_.passed) {
            result_.passed = false;
            std::ostringstream os;
            os << "deviation " << deviation << " exceeds " << result_.tolerance << " at " << params;
            result_.message = os.str();
        }
    }

    /// Records a boolean property (deviation 1 when violated).
    void expect(bool ok, const std::string& params, const std::string& what) {
        ++result_.instances;
        if (ok) return;
        result_.max_deviation = std::max(result_.max_deviation, 1.0);
        if (result_.passed) {
            result_.passed = false;
            result_.params = params;
            result_.message = what + " at " + params;
        }
    }

    void fail(const std::string& params, const std::string& what) { expect(false, params, what); }

    CheckResult take() { return std::move(result_); }

private:
    CheckResult result_;
};

std::string params_string(std::initializer_list<std::pair<const char*, double>> kv) {
    std::ostringstream os;
    bool first = true;
    for (const auto& [k, v] : kv) {
        os << (first ? "" : " ") << k << "=" << v;
        first = false;
    }
    return os.str();
}

std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

double pick_beta(std::mt19937_64& rng) {
    constexpr double betas[] = {1.0, 8.0, 32.0};
    return betas[uniform(rng, 0, 2)];
}

// ---------------------------------------------------------------------------
// attention oracles

void check_vq_forms(const VerifyOptions& opt, std::vector<CheckResult>& out) {
    Check linear("vq_quadratic_vs_linear", 1e-10);
    Check chunked("vq_quadratic_vs_chunked", 1e-10);
    Check conservation("vq_linear_count_conservation", 0.0);
    std::mt19937_64 rng(mix_seed(opt.seed, 101));
    for (std::size_t i = 0; i < opt.instances; ++i) {
        const std::size_t T = uniform(rng, 1, opt.max_len);
        const std::size_t N = uniform(rng, 1, 64);
        const std::size_t d = uniform(rng, 1, 32);
        const double beta = pick_beta(rng);
        const HeadSequence seq = HeadSequence::random(T, d, beta, rng);
        const MatrixD dict = random_unit_rows(N, d, rng);
        const auto quad = vq_attention_quadratic(seq, dict).o;
        const std::string p = params_string({{"T", T}, {"N", N}, {"d", d}, {"beta", beta}});
        linear.record(max_abs_diff(quad, vq_attention_linear(seq, dict).o), p);
        const std::size_t lens[] = {1, 7, 128, T, uniform(rng, 1, T)};
        for (std::size_t L : lens)
            chunked.record(max_abs_diff(quad, vq_attention_chunked(seq, dict, L).o),
                           p + " L=" + std::to_string(L));

        StreamingVqAttention vq(dict, d, beta);
        for (std::size_t t = 0; t < T; ++t) {
            vq.absorb(seq.k.row(t), seq.v.row(t));
            const auto& c = vq.dictionary().counts;
            conservation.record(std::abs(std::accumulate(c.begin(), c.end(), 0.0) - static_cast<double>(t + 1)), p);
        }
    }
    out.push_back(linear.take());
    out.push_back(chunked.take());
    out.push_back(conservation.take());
}

void check_gmr_bridge(const VerifyOptions& opt, std::vector<CheckResult>& out) {
    Check forms("gmr_softmax_vs_expectation", 1e-10);
    Check bridge("gmr_vs_vq_linear_readout", 1e-10);
    Check gkr("gkr_vs_softmax_attention", 1e-10);
    std::mt19937_64 rng(mix_seed(opt.seed, 202));
    for (std::size_t i = 0; i < opt.instances; ++i) {
        const std::size_t T = uniform(rng, 1, std::min<std::size_t>(opt.max_len, 128));
        const std::size_t N = uniform(rng, 1, 32);
        const std::size_t d = uniform(rng, 1, 16);
        const double beta = pick_beta(rng);
        const std::string p = params_string({{"T", T}, {"N", N}, {"d", d}, {"beta", beta}});

        // Shared state: a streaming VQ dictionary, read by both routes.
        const HeadSequence seq = HeadSequence::random(T, d, beta, rng);
        StreamingVqAttention vq(random_unit_rows(N, d, rng), d, beta);
        for (std::size_t t = 0; t < T; ++t) vq.absorb(seq.k.row(t), seq.v.row(t));
        const Dictionary& dict = vq.dictionary();
        std::vector<std::size_t> live;
        for (std::size_t n = 0; n < dict.size(); ++n)
            if (dict.counts[n] > 0) live.push_back(n);
        GaussianMixture mix{MatrixD(live.size(), 2 * d), std::vector<double>(live.size()), Precision::finite(beta)};
        std::vector<double> counts(live.size());
        const double total = vq.total_count();
        for (std::size_t m = 0; m < live.size(); ++m) {
            auto row = mix.means_joint.row(m);
            std::ranges::copy(dict.means_k.row(live[m]), row.begin());
            std::ranges::copy(dict.means_v.row(live[m]), row.begin() + static_cast<std::ptrdiff_t>(d));
            counts[m] = dict.counts[live[m]];
            mix.priors[m] = counts[m] / total;
        }
        const auto q = seq.q.row(T - 1);
        const GmrPrediction pred = gmr_predict(mix, counts, q, beta);
        forms.record(pred.max_form_gap, p);
        const auto readout = vq.readout(q);
        double gap = 0.0;
        for (std::size_t j = 0; j < d; ++j)
            gap = std::max({gap, std::abs(readout[j] - pred.softmax_form[j]),
                            std::abs(readout[j] - pred.expectation_form[j])});
        bridge.record(gap, p);
        gkr.record(verify_gkr_attention(seq).max_deviation, p);
    }
    out.push_back(forms.take());
    out.push_back(bridge.take());
    out.push_back(gkr.take());
}

void check_em(const VerifyOptions& opt, std::vector<CheckResult>& out) {
    Check hard("hard_em_vs_kmeans", 0.0);
    Check newton("newton_step", 1e-12);
    Check monotone("em_nll_monotone", 1e-9);
    std::mt19937_64 rng(mix_seed(opt.seed, 303));
    for (std::size_t i = 0; i < opt.instances; ++i) {
        const std::size_t T = uniform(rng, 8, std::max<std::size_t>(8, std::min<std::size_t>(opt.max_len, 200)));
        const std::size_t N = uniform(rng, 1, std::min<std::size_t>(T, 8));
        const std::size_t D = 2 * uniform(rng, 1, 6);
        const MatrixD data = random_gaussian(T, D, rng, 1.0);
        const std::string p = params_string({{"T", T}, {"N", N}, {"D", D}});

        GaussianMixture mix = init_means_kmeanspp(data, N, rng(), Precision::infinite());
        const Responsibilities z = e_step(mix, data);
        std::vector<std::size_t> assign(T);
        for (std::size_t t = 0; t < T; ++t) {
            const auto row = z.z.row(t);
            assign[t] = static_cast<std::size_t>(std::ranges::max_element(row) - row.begin());
        }
        try {
            const GaussianMixture em = m_step(data, z, Precision::infinite());
            hard.record(max_abs_diff(em.means_joint, kmeans_step(data, assign, N)), p);
        } catch (const DegenerateComponentError& e) {
            hard.fail(p, e.what());
        }
        newton.record(verify_newton_equivalence(data, assign, N).max_deviation, p);

        GaussianMixture soft = init_means_kmeanspp(data, N, rng(), Precision::finite(1.0));
        try {
            const auto trace = run_em(soft, data, 10);
            double worst = 0.0;
            for (std::size_t s = 1; s < trace.size(); ++s) worst = std::max(worst, trace[s] - trace[s - 1]);
            monotone.record(worst, p);
        } catch (const DegenerateComponentError& e) {
            monotone.fail(p, e.what());
        }
    }
    out.push_back(hard.take());
    out.push_back(newton.take());
    out.push_back(monotone.take());
}

// ---------------------------------------------------------------------------
// engine

/// Independent recomputation of one chunk's prediction from a snapshot of
/// the dictionary taken before the chunk.
double chunk_prediction_gap(const OvqState<double>& before, const MatrixD& q, const MatrixD& k, const MatrixD& v,
                            const MatrixD& got) {
    const double beta = before.config().beta;
    const std::size_t N = before.n_active();
    const std::size_t d = before.dim();
    double gap = 0.0;
    for (std::size_t i = 0; i < q.rows(); ++i) {
        std::vector<double> logit;
        for (std::size_t n = 0; n < N; ++n)
            logit.push_back(beta * dot<double>(q.row(i), before.means_k().row(n)) +
                            std::log(static_cast<double>(before.counts()[n])));
        for (std::size_t j = 0; j <= i; ++j) logit.push_back(beta * dot<double>(q.row(i), k.row(j)));
        const double m = *std::ranges::max_element(logit);
        double z = 0.0;
        for (double& x : logit) z += (x = std::exp(x - m));
        for (std::size_t x = 0; x < d; ++x) {
            double o = 0.0;
            for (std::size_t n = 0; n < N; ++n) o += logit[n] * before.means_v()(n, x);
            for (std::size_t j = 0; j <= i; ++j) o += logit[N + j] * v(j, x);
            gap = std::max(gap, std::abs(o / z - got(i, x)));
        }
    }
    return gap;
}

void check_engine(const VerifyOptions& opt, std::vector<CheckResult>& out) {
    Check conservation("count_conservation", 0.0);
    Check growth("growth_schedule", 0.0);
    Check bound("memory_bound", 0.0);
    Check sparsity("sparse_update", 0.0);
    Check prediction("chunk_prediction", 1e-10);
    Check simplex("prediction_simplex", 1e-9);
    Check prefix("prefix_causality", 0.0);
    Check first("first_chunk_equals_softmax", 1e-12);
    std::mt19937_64 rng(mix_seed(opt.seed, 404));
    for (std::size_t i = 0; i < opt.instances; ++i) {
        const std::size_t T = uniform(rng, 2, std::max<std::size_t>(2, opt.max_len));
        const std::size_t lens[] = {1, 3, 16, 64, uniform(rng, 1, T)};
        const std::size_t L = lens[uniform(rng, 0, 4)];
        const std::size_t d = uniform(rng, 2, 16);
        OvqConfig cfg;
        cfg.n_max = uniform(rng, 1, 2 * T);
        cfg.chunk_len = L;
        cfg.beta = pick_beta(rng);
        cfg.seed = rng();
        cfg.fault = opt.fault;
        const HeadSequence seq = HeadSequence::random(T, d, cfg.beta, rng);
        const std::string p = params_string({{"T", T}, {"L", L}, {"N", cfg.n_max}, {"d", d}, {"beta", cfg.beta}});

        OvqState<double> state(cfg, d);
        MatrixD full(T, d);
        const std::size_t extra = growth_count(std::min(T, L), cfg.n_max) == 0 ? 1 : 0;
        for (std::size_t start = 0; start < T; start += L) {
            const std::size_t end = std::min(T, start + L);
            const MatrixD q = seq.q.slice_rows(start, end);
            const MatrixD k = seq.k.slice_rows(start, end);
            const MatrixD v = seq.v.slice_rows(start, end);
            const OvqState<double> before = state;
            std::vector<std::vector<double>> weights;
            const auto chunk = ovq_forward_chunk(state, q, k, v, &weights);
            for (std::size_t r = start; r < end; ++r) std::ranges::copy(chunk.output.row(r - start), full.row(r).begin());
            const std::string pc = p + " chunk_start=" + std::to_string(start);

            conservation.record(std::abs(static_cast<double>(state.count_total()) -
                                         static_cast<double>(state.tokens_seen())),
                                pc);
            const std::size_t expected = std::min(cfg.n_max, growth_count(end, cfg.n_max) + extra);
            growth.record(std::abs(static_cast<double>(state.n_active()) - static_cast<double>(expected)), pc);
            bound.expect(state.n_active() <= cfg.n_max && state.state_scalars() <= cfg.n_max * (2 * d + 1), pc,
                         "dictionary exceeds n_max");

            std::vector<bool> touched(state.n_active(), false);
            for (std::size_t a : chunk.record.assignments) touched[a] = true;
            bool stable = true;
            for (std::size_t n = 0; n < before.n_active(); ++n) {
                if (touched[n]) continue;
                stable = stable && before.counts()[n] == state.counts()[n];
                for (std::size_t x = 0; x < d; ++x)
                    stable = stable && before.means_k()(n, x) == state.means_k()(n, x) &&
                             before.means_v()(n, x) == state.means_v()(n, x);
            }
            sparsity.expect(stable, pc, "untouched dictionary row changed");

            prediction.record(chunk_prediction_gap(before, q, k, v, chunk.output), pc);
            double worst = 0.0;
            bool shaped = true;
            for (std::size_t r = 0; r < weights.size(); ++r) {
                shaped = shaped && weights[r].size() == before.n_active() + r + 1;
                double sum = 0.0;
                for (double w : weights[r]) {
                    if (w < 0.0) worst = INFINITY;
                    sum += w;
                }
                worst = std::max(worst, std::abs(sum - 1.0));
            }
            simplex.record(shaped ? worst : INFINITY, pc);
        }

        if (T <= L) first.record(max_abs_diff(full, softmax_attention(seq).o), p);

        const std::size_t cut = uniform(rng, 1, T);
        const auto head = ovq_forward_sequence<double>(cfg, seq.slice(0, cut));
        prefix.record(max_abs_diff(head.output, full.slice_rows(0, cut)), p + " cut=" + std::to_string(cut));
    }
    for (Check* c : {&conservation, &growth, &bound, &sparsity, &prediction, &simplex, &prefix, &first})
        out.push_back(c->take());
}

void check_running_mean(const VerifyOptions& opt, std::vector<CheckResult>& out) {
    Check mean("online_running_mean", 1e-12);
    std::mt19937_64 rng(mix_seed(opt.seed, 505));
    for (std::size_t i = 0; i < opt.instances; ++i) {
        const std::size_t m = uniform(rng, 1, 64);
        const std::size_t d = uniform(rng, 1, 16);
        for (UpdateRule rule : {UpdateRule::scatter, UpdateRule::eq19_strict}) {
            OvqConfig cfg;
            cfg.n_max = 1;
            cfg.chunk_len = 1;
            cfg.update_rule = rule;
            cfg.fault = opt.fault;
            OvqState<double> state(cfg, d);
            const HeadSequence seq = HeadSequence::random(m, d, 8.0, rng);
            ovq_stream(state, seq, nullptr);
            double gap = 0.0;
            for (std::size_t x = 0; x < d; ++x) {
                double mk = 0.0, mv = 0.0;
                for (std::size_t t = 0; t < m; ++t) {
                    mk += seq.k(t, x);
                    mv += seq.v(t, x);
                }
                gap = std::max({gap, std::abs(mk / static_cast<double>(m) - state.means_k()(0, x)),
                                std::abs(mv / static_cast<double>(m) - state.means_v()(0, x))});
            }
            mean.record(gap, params_string({{"m", m}, {"d", d}}) +
                                 (rule == UpdateRule::scatter ? " rule=scatter" : " rule=eq19_strict"));
        }
    }
    out.push_back(mean.take());
}

void check_growth_budget(const VerifyOptions& opt, std::vector<CheckResult>& out) {
    Check telescoping("growth_budget_telescoping", 0.0);
    std::mt19937_64 rng(mix_seed(opt.seed, 606));
    for (std::size_t i = 0; i < opt.instances; ++i) {
        OvqConfig cfg;
        cfg.n_max = uniform(rng, 1, 4096);
        cfg.chunk_len = uniform(rng, 1, 256);
        const std::size_t chunks = uniform(rng, 1, 200);
        std::size_t sum = 0;
        bool ok = true;
        for (std::size_t c = 1; c <= chunks; ++c) {
            const std::size_t n = new_centroid_budget(c, cfg);
            ok = ok && n <= cfg.chunk_len;
            sum += n;
        }
        const std::string p = params_string({{"N", cfg.n_max}, {"L", cfg.chunk_len}, {"chunks", chunks}});
        telescoping.record(ok ? std::abs(static_cast<double>(sum) -
                                         static_cast<double>(growth_count(cfg.chunk_len * chunks, cfg.n_max)))
                              : INFINITY,
                           p);
    }
    out.push_back(telescoping.take());
}

}  // namespace

bool VerifyReport::all_passed() const {
    return std::ranges::all_of(checks, [](const CheckResult& c) { return c.passed; });
}

const CheckResult* VerifyReport::find(const std::string& name) const {
    for (const auto& c : checks)
        if (c.name == name) return &c;
    return nullptr;
}

VerifyReport verify_all(const VerifyOptions& options) {
    if (options.instances == 0) throw ConfigError("verify needs at least one instance per check");
    if (options.max_len < 2) throw ConfigError("verify max_len must be >= 2");
    VerifyReport report;
    report.seed = options.seed;
    check_vq_forms(options, report.checks);
    check_gmr_bridge(options, report.checks);
    check_em(options, report.checks);
    check_engine(options, report.checks);
    check_running_mean(options, report.checks);
    check_growth_budget(options, report.checks);
    return report;
}

}  // namespace ovq
