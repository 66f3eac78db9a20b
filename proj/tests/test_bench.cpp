// Copyright 2026 The OVQ Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <json.hpp>
#include <sstream>

#include "ovq/bench.hpp"
#include "ovq/state_io.hpp"

namespace ovq {
namespace {

MixerSpec spec(MixerKind kind, std::size_t dim = 32) {
    MixerSpec s;
    s.kind = kind;
    s.dim = dim;
    return s;
}

TEST(MixerSpec, ParseNamesAndValidation) {
    EXPECT_EQ(parse_mixer_kind("full"), MixerKind::full_attention);
    EXPECT_EQ(parse_mixer_kind("ovq"), MixerKind::ovq);
    EXPECT_EQ(parse_mixer_kind("vq"), MixerKind::vq_fixed);
    EXPECT_EQ(parse_mixer_kind("linear"), MixerKind::linear_baseline);
    EXPECT_EQ(parse_mixer_kind(to_string(MixerKind::vq_fixed)), MixerKind::vq_fixed);
    EXPECT_THROW(parse_mixer_kind("mamba"), ConfigError);
    auto s = spec(MixerKind::ovq);
    EXPECT_NO_THROW(s.validate());
    s.dim = 0;
    EXPECT_THROW(s.validate(), ConfigError);
    s = spec(MixerKind::full_attention);
    s.initial_state = std::make_shared<OvqState<double>>(OvqConfig{}, 32);
    EXPECT_THROW(s.validate(), ConfigError);
    s.kind = MixerKind::ovq;
    s.dim = 16;
    EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Recall, FullAttentionIsExact) {
    MixerSpec s = spec(MixerKind::full_attention, 64);
    s.beta = 16.0;
    const auto row = recall_benchmark(s, 256, 64, 1);
    EXPECT_EQ(row.top1_accuracy, 1.0);
    EXPECT_GT(row.mean_cosine, 0.9);
    EXPECT_EQ(row.state_scalars, 256u * 2u * 64u);
}

TEST(Recall, OvqWithOneCentroidPerTokenIsExact) {
    MixerSpec s = spec(MixerKind::ovq, 64);
    s.ovq.chunk_len = 1;
    s.ovq.n_max = 256 * 256;
    const auto row = recall_benchmark(s, 256, 64, 2);
    EXPECT_EQ(row.top1_accuracy, 1.0);
}

TEST(Recall, OrderingAtModerateLength) {
    const std::size_t T = 512;
    MixerSpec full = spec(MixerKind::full_attention), ovq = spec(MixerKind::ovq), lin = spec(MixerKind::linear_baseline);
    ovq.ovq.n_max = 256;
    ovq.ovq.chunk_len = 64;
    const double a_full = recall_benchmark(full, T, 128, 3).top1_accuracy;
    const double a_ovq = recall_benchmark(ovq, T, 128, 3).top1_accuracy;
    const double a_lin = recall_benchmark(lin, T, 128, 3).top1_accuracy;
    EXPECT_GE(a_full, a_ovq);
    EXPECT_GE(a_ovq, a_lin);
}

TEST(Recall, ArgumentErrors) {
    EXPECT_THROW(recall_benchmark(spec(MixerKind::full_attention), 0, 0, 1), ConfigError);
    EXPECT_THROW(recall_benchmark(spec(MixerKind::full_attention), 10, 11, 1), ConfigError);
}

TEST(StateScalars, MeasuredMatchesFormula) {
    MixerSpec vq = spec(MixerKind::vq_fixed);
    vq.vq_size = 64;
    MixerSpec ovq = spec(MixerKind::ovq);
    ovq.ovq.n_max = 128;
    ovq.ovq.chunk_len = 32;
    MixerSpec tiny = spec(MixerKind::ovq);
    tiny.ovq.n_max = 8;
    tiny.ovq.chunk_len = 4;  // growth_count(4, 8) = 2
    MixerSpec boot = spec(MixerKind::ovq);
    boot.ovq.n_max = 1000;
    boot.ovq.chunk_len = 1;  // first chunk budget 0, one extra centroid
    const std::vector<MixerSpec> mixers{spec(MixerKind::full_attention), spec(MixerKind::linear_baseline), vq, ovq,
                                        tiny, boot};
    const auto rows = state_size_sweep(mixers, {1, 30, 100, 700}, 8, 4);
    ASSERT_EQ(rows.size(), mixers.size() * 4);
    for (std::size_t m = 0; m < mixers.size(); ++m)
        for (std::size_t i = 0; i < 4; ++i) {
            const auto& r = rows[m * 4 + i];
            EXPECT_EQ(r.state_scalars, expected_state_scalars(mixers[m], r.T)) << r.mixer << " T=" << r.T;
        }
    EXPECT_EQ(expected_state_scalars(spec(MixerKind::linear_baseline), 1 << 20), 32u * 32u + 32u);
    EXPECT_EQ(expected_state_scalars(ovq, 0), 0u);
}

TEST(StateScalars, OvqPlateausBelowCapacity) {
    MixerSpec s = spec(MixerKind::ovq, 32);
    s.ovq.n_max = 2048;
    s.ovq.chunk_len = 128;
    EXPECT_EQ(expected_state_scalars(s, 2048), 1024u * 65u);
    EXPECT_EQ(expected_state_scalars(s, 3 * 2048), 1536u * 65u);
    EXPECT_LT(expected_state_scalars(s, 1ull << 40), 2048u * 65u);
}

TEST(Grid, OrderStableAcrossWorkerCounts) {
    std::vector<GridJob> jobs;
    for (auto kind : {MixerKind::full_attention, MixerKind::ovq, MixerKind::linear_baseline, MixerKind::vq_fixed})
        for (std::size_t T : {64u, 200u})
            for (std::uint64_t seed : {1u, 2u}) jobs.push_back({spec(kind, 16), T, 16, seed});
    const auto serial = run_grid(jobs, 1);
    const auto pooled = run_grid(jobs, 4);
    ASSERT_EQ(serial.size(), jobs.size());
    ASSERT_EQ(pooled.size(), jobs.size());
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        EXPECT_EQ(serial[i].mixer, pooled[i].mixer);
        EXPECT_EQ(serial[i].T, jobs[i].T);
        EXPECT_EQ(serial[i].T, pooled[i].T);
        EXPECT_EQ(serial[i].seed, pooled[i].seed);
        EXPECT_EQ(serial[i].top1_accuracy, pooled[i].top1_accuracy);
        EXPECT_EQ(serial[i].mean_cosine, pooled[i].mean_cosine);
        EXPECT_EQ(serial[i].state_scalars, pooled[i].state_scalars);
    }
}

TEST(TokenEval, DeterministicAndLabelled) {
    BasicIcrParams p;
    p.num_pairs = 40;
    p.num_queries = 4;
    const auto stream = gen_basic_icr(p, 9);
    MixerSpec s = spec(MixerKind::ovq, 32);
    s.ovq.n_max = 64;
    s.ovq.chunk_len = 32;
    const TokenEvalOptions opt{5, 8};
    const auto a = token_task_eval(s, stream, opt);
    const auto b = token_task_eval(s, stream, opt);
    EXPECT_EQ(a.correct, b.correct);
    EXPECT_EQ(a.target_positions, 32u);
    EXPECT_EQ(a.target_positions, stream.target_count());
    EXPECT_TRUE(a.warnings.empty());
    EXPECT_FALSE(a.label.empty());
    ASSERT_TRUE(a.final_state);
    EXPECT_EQ(a.final_state->tokens_seen(), stream.length());
    EXPECT_EQ(a.state_scalars, a.final_state->state_scalars());
}

TEST(TokenEval, WarnsOnSmallDimension) {
    const auto stream = gen_icl(IclParams{}, 1);
    const auto r = token_task_eval(spec(MixerKind::linear_baseline, 8), stream, {});
    ASSERT_EQ(r.warnings.size(), 1u);
    EXPECT_NE(r.warnings[0].find("16"), std::string::npos);
}

TEST(TokenEval, ResumesFromSavedState) {
    BasicIcrParams p;
    p.num_pairs = 30;
    p.num_queries = 3;
    MixerSpec s = spec(MixerKind::ovq, 16);
    s.ovq.n_max = 64;
    s.ovq.chunk_len = 16;
    const auto first = token_task_eval(s, gen_basic_icr(p, 1), {});
    std::stringstream buf;
    write_state(buf, *first.final_state);
    s.initial_state = std::make_shared<OvqState<double>>(read_state<double>(buf));
    const auto second = token_task_eval(s, gen_basic_icr(p, 2), {});
    EXPECT_EQ(second.final_state->tokens_seen(), 2 * basic_icr_length(p));
}

TEST(Reports, CsvAndJsonCarrySchemaAndMeta) {
    RecallReport rep;
    MixerSpec s = spec(MixerKind::ovq);
    rep.meta = describe(s);
    rep.rows.push_back(recall_benchmark(s, 64, 8, 1));
    const std::string csv = format_recall_report(rep, ReportFormat::csv);
    EXPECT_EQ(csv.rfind("# schema=ovq.recall_report schema_version=1\n", 0), 0u);
    EXPECT_NE(csv.find("# n_max=" + std::to_string(s.ovq.n_max)), std::string::npos);
    EXPECT_NE(csv.find("# chunk_len="), std::string::npos);
    EXPECT_NE(csv.find("mixer,T,n_max,seed,top1_accuracy"), std::string::npos);

    const auto j = nlohmann::json::parse(format_recall_report(rep, ReportFormat::json));
    EXPECT_EQ(j["schema_version"], kReportSchemaVersion);
    EXPECT_EQ(j["meta"]["ablation"], "none");
    EXPECT_EQ(j["rows"].size(), 1u);
    EXPECT_EQ(j["rows"][0]["T"], 64);
}

TEST(Verify, CleanRunPasses) {
    VerifyOptions opt;
    opt.seed = 3;
    opt.instances = 6;
    opt.max_len = 128;
    const auto rep = verify_all(opt);
    for (const auto& c : rep.checks) EXPECT_TRUE(c.passed) << c.name << ": " << c.message;
    EXPECT_TRUE(rep.all_passed());
    EXPECT_GE(rep.checks.size(), 19u);
    const auto j = nlohmann::json::parse(format_verify_report(rep, {{"seed", "3"}}));
    EXPECT_EQ(j["passed"], true);
}

struct FaultCase {
    Fault fault;
    const char* check;
};

class VerifyFault : public ::testing::TestWithParam<FaultCase> {};

TEST_P(VerifyFault, NamedCheckFails) {
    VerifyOptions opt;
    opt.instances = 6;
    opt.max_len = 128;
    opt.fault = GetParam().fault;
    const auto rep = verify_all(opt);
    EXPECT_FALSE(rep.all_passed());
    const auto* c = rep.find(GetParam().check);
    ASSERT_NE(c, nullptr);
    EXPECT_FALSE(c->passed);
    // Checks that never touch the engine are unaffected.
    EXPECT_TRUE(rep.find("vq_quadratic_vs_linear")->passed);
    EXPECT_TRUE(rep.find("hard_em_vs_kmeans")->passed);
}

INSTANTIATE_TEST_SUITE_P(Faults, VerifyFault,
                         ::testing::Values(FaultCase{Fault::skip_count_increment, "count_conservation"},
                                           FaultCase{Fault::mask_off_by_one, "chunk_prediction"},
                                           FaultCase{Fault::mask_off_by_one, "prediction_simplex"},
                                           FaultCase{Fault::growth_over_allocation, "growth_schedule"}));

}  // namespace
}  // namespace ovq
