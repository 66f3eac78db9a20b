// Copyright 2026 The OVQ Authors
// SPDX-License-Identifier: Apache-2.0

// Embedding-space benchmarks for sequence mixers: associative recall, state
// size accounting and untrained token-task probes, plus the oracle
// verification suite and report writers used by the CLI.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ovq/common.hpp"
#include "ovq/ovq_engine.hpp"
#include "ovq/task_gen.hpp"

namespace ovq {

inline constexpr int kReportSchemaVersion = 1;

enum class MixerKind { full_attention, vq_fixed, ovq, linear_baseline };

std::string to_string(MixerKind kind);
MixerKind parse_mixer_kind(const std::string& text);

struct MixerSpec {
    MixerKind kind = MixerKind::full_attention;
    double beta = 16.0;
    std::size_t dim = 64;
    OvqConfig ovq;                  // used by MixerKind::ovq; its beta is overridden by `beta`
    std::size_t vq_size = 256;      // dictionary rows for MixerKind::vq_fixed
    std::uint64_t vq_seed = 0;      // k-means++ seed for the fixed dictionary
    /// OVQ only: continue from this state instead of an empty one.
    std::shared_ptr<const OvqState<double>> initial_state;

    /// Name used in reports, e.g. "ovq" or "vq_fixed".
    std::string name() const;
    /// Dictionary capacity for reports: n_max for ovq, vq_size for vq_fixed, 0 otherwise.
    std::size_t capacity() const;
    /// Throws ConfigError.
    void validate() const;
    OvqConfig effective_ovq() const;
};

struct RecallRow {
    std::string mixer;
    std::size_t T = 0;
    std::size_t n_max = 0;
    std::uint64_t seed = 0;
    double top1_accuracy = 0.0;
    double mean_cosine = 0.0;
    std::size_t state_scalars = 0;
    double wall_time_ms = 0.0;
};

struct RecallReport {
    std::map<std::string, std::string> meta;
    std::vector<RecallRow> rows;
};

/// Final-state memory of a mixer: absorbs a whole key/value stream, then
/// answers queries from what it stored.
class MixerMemory {
public:
    virtual ~MixerMemory() = default;
    virtual void absorb(const MatrixD& k, const MatrixD& v) = 0;
    virtual std::vector<double> read(std::span<const double> q) const = 0;
    virtual std::size_t state_scalars() const = 0;
    /// Engine trace for OVQ, empty otherwise.
    virtual const std::vector<StateSizeSample>& trace() const;
    /// Final OVQ state, null for other mixers.
    virtual const OvqState<double>* ovq_state() const { return nullptr; }
};

std::unique_ptr<MixerMemory> make_memory(const MixerSpec& spec);

/// Streams T random unit keys paired with the rows of a T-entry random unit
/// value codebook, then probes with exact copies of `num_probes` distinct
/// earlier keys. Outputs are decoded by nearest codebook row.
RecallRow recall_benchmark(const MixerSpec& mixer, std::size_t T, std::size_t num_probes, std::uint64_t seed);

/// One recall row per (mixer, T) pair, probes fixed at `num_probes`.
std::vector<RecallRow> state_size_sweep(const std::vector<MixerSpec>& mixers, const std::vector<std::size_t>& lengths,
                                        std::size_t num_probes, std::uint64_t seed);

/// Live state scalars a mixer holds after `tokens` tokens, by formula:
/// full attention T * 2d, OVQ n_active * (2d + 1) under the default schedule,
/// fixed VQ N * (2d + 1), linear attention d * d + d.
std::size_t expected_state_scalars(const MixerSpec& mixer, std::uint64_t tokens);

struct GridJob {
    MixerSpec mixer;
    std::size_t T = 0;
    std::size_t num_probes = 0;
    std::uint64_t seed = 0;
};

/// Runs recall jobs on a worker pool. Rows come back in job order regardless
/// of completion order. `workers` = 0 picks the hardware concurrency.
std::vector<RecallRow> run_grid(const std::vector<GridJob>& jobs, std::size_t workers = 0);

struct TokenEvalOptions {
    std::uint64_t embedding_seed = 0;
    /// Tokens before a position that form its query/key context.
    std::size_t window = 8;
};

struct TokenEvalReport {
    std::string mixer;
    std::string task;
    std::size_t length = 0;
    std::size_t target_positions = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;
    std::size_t state_scalars = 0;
    std::vector<std::string> warnings;
    std::string label;
    /// Final OVQ state when the mixer is OVQ.
    std::shared_ptr<const OvqState<double>> final_state;
};

/// Untrained embedding-space probe. Every token id gets a fixed random unit
/// embedding. Position i carries key = features of the `window` tokens before
/// i, value = embedding of token i, and query = features of the window ending
/// at i. The output at i - 1 is decoded by nearest embedding and scored
/// against the target at i. Only comparisons across mixers are meaningful.
TokenEvalReport token_task_eval(const MixerSpec& mixer, const TokenStream& stream, const TokenEvalOptions& options);

struct VerifyOptions {
    std::uint64_t seed = 0;
    std::size_t instances = 16;  // randomized instances per check
    std::size_t max_len = 256;   // longest sequence used by the checks
    Fault fault = Fault::none;   // injected into every engine the suite builds
};

struct CheckResult {
    std::string name;
    bool passed = true;
    double max_deviation = 0.0;
    double tolerance = 0.0;
    std::size_t instances = 0;
    std::string params;   // parameters of the worst instance
    std::string message;  // first failure, if any
};

struct VerifyReport {
    std::uint64_t seed = 0;
    std::vector<CheckResult> checks;
    bool all_passed() const;
    const CheckResult* find(const std::string& name) const;
};

VerifyReport verify_all(const VerifyOptions& options);

enum class ReportFormat { csv, json };

std::string format_recall_report(const RecallReport& report, ReportFormat format);
std::string format_token_report(const TokenEvalReport& report, const std::map<std::string, std::string>& meta,
                                ReportFormat format);
std::string format_verify_report(const VerifyReport& report, const std::map<std::string, std::string>& meta);

/// Shared reproducibility block: defaults and overrides of a mixer spec.
std::map<std::string, std::string> describe(const MixerSpec& spec);

}  // namespace ovq
