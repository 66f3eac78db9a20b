// Copyright 2026 The OVQ Authors
// SPDX-License-Identifier: Apache-2.0

// ovq: task generation, embedding-space runs, benchmark grids and the
// verification suite.
//
// Exit codes: 0 success, 1 verification failure, 2 configuration or input
// error, 3 unexpected internal error.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ovq/bench.hpp"
#include "ovq/state_io.hpp"
#include "ovq/task_gen.hpp"

namespace {

using namespace ovq;

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitInternal = 3;

struct MixerFlags {
    std::string mixer = "ovq";
    std::uint64_t seed = 0;
    std::size_t chunk_len = 128;
    std::size_t n_max = 2048;
    double beta = 16.0;
    std::size_t dim = 64;
    std::string ablation = "none";
    std::size_t planned_length = 0;
    std::string update_rule = "scatter";
    std::string scoring = "key_dot";
    bool normalize_centroids = false;
    std::size_t vq_size = 256;
    std::string load_state;
};

void add_mixer_flags(CLI::App* cmd, MixerFlags& f, bool with_mixer) {
    if (with_mixer)
        cmd->add_option("--mixer", f.mixer, "Mixer: full, vq, ovq or linear")->capture_default_str();
    cmd->add_option("--seed", f.seed, "Seed for data, probes and OVQ tie-breaking")->capture_default_str();
    cmd->add_option("--chunk-len", f.chunk_len, "OVQ chunk length L")->capture_default_str();
    cmd->add_option("--n-max", f.n_max, "OVQ dictionary capacity")->capture_default_str();
    cmd->add_option("--beta", f.beta, "Inverse temperature")->capture_default_str();
    cmd->add_option("--dim", f.dim, "Key/value width")->capture_default_str();
    cmd->add_option("--ablation", f.ablation, "none, rand-assign, linear-growth or const-lr=R")->capture_default_str();
    cmd->add_option("--planned-length", f.planned_length, "Sequence length for linear-growth (0 = stream length)")
        ->capture_default_str();
    cmd->add_option("--update-rule", f.update_rule, "scatter or eq19_strict")
        ->check(CLI::IsMember({"scatter", "eq19_strict"}))
        ->capture_default_str();
    cmd->add_option("--scoring", f.scoring, "key_dot or joint")
        ->check(CLI::IsMember({"key_dot", "joint"}))
        ->capture_default_str();
    cmd->add_flag("--normalize-centroids", f.normalize_centroids, "Renormalize key centroids after updates");
    cmd->add_option("--vq-size", f.vq_size, "Dictionary rows for the fixed VQ mixer")->capture_default_str();
    cmd->add_option("--load-state", f.load_state, "Continue OVQ from a saved state");
}

MixerSpec build_spec(const MixerFlags& f, const std::string& mixer, std::size_t planned_fallback) {
    MixerSpec s;
    s.kind = parse_mixer_kind(mixer);
    s.beta = f.beta;
    s.dim = f.dim;
    s.vq_size = f.vq_size;
    s.vq_seed = f.seed;
    s.ovq.n_max = f.n_max;
    s.ovq.chunk_len = f.chunk_len;
    s.ovq.seed = f.seed;
    s.ovq.ablation = parse_ablation(f.ablation, &s.ovq.constant_lr);
    s.ovq.planned_length = f.planned_length ? f.planned_length : planned_fallback;
    s.ovq.update_rule = f.update_rule == "scatter" ? UpdateRule::scatter : UpdateRule::eq19_strict;
    s.ovq.scoring = f.scoring == "key_dot" ? Scoring::key_dot : Scoring::joint;
    s.ovq.normalize_centroids = f.normalize_centroids;
    if (!f.load_state.empty()) {
        if (s.kind != MixerKind::ovq) throw ConfigError("--load-state only applies to --mixer ovq");
        s.initial_state = std::make_shared<OvqState<double>>(load_state<double>(f.load_state));
    }
    s.validate();
    return s;
}

ReportFormat parse_format(const std::string& text) { return text == "json" ? ReportFormat::json : ReportFormat::csv; }

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty() || out_path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw ConfigError("cannot open " + out_path + " for writing");
    out << text;
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::istringstream is(item);
        T v{};
        if (!(is >> v) || !is.eof()) throw ConfigError(std::string("bad ") + what + " entry: " + item);
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError(std::string("empty ") + what + " list");
    return out;
}

std::vector<std::string> split(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    if (out.empty()) throw ConfigError("empty mixer list");
    return out;
}

// ---------------------------------------------------------------------------

struct GenFlags {
    std::string task = "basic_icr";
    std::uint64_t seed = 0;
    std::size_t count = 1;
    std::string out;
    std::string file_format = "jsonl";
    BasicIcrParams basic;
    PositionalIcrParams positional;
    IclParams icl;
    std::size_t vocab = 10000;
    bool no_shuffle = false;
};

int run_gen(const GenFlags& g) {
    std::vector<TokenStream> streams;
    for (std::size_t i = 0; i < g.count; ++i) {
        const std::uint64_t seed = g.seed + i;
        if (g.task == "basic_icr") {
            auto p = g.basic;
            p.vocab_size = g.vocab;
            streams.push_back(gen_basic_icr(p, seed));
        } else if (g.task == "positional_icr") {
            auto p = g.positional;
            p.vocab_size = g.vocab;
            p.shuffle_context = !g.no_shuffle;
            streams.push_back(gen_positional_icr(p, seed));
        } else {
            auto p = g.icl;
            p.vocab_size = g.vocab;
            streams.push_back(gen_icl(p, seed));
        }
    }
    streams_to_file(streams, g.out, g.file_format == "binary" ? StreamFormat::binary : StreamFormat::jsonl);
    std::cerr << "wrote " << streams.size() << " stream(s) of length " << streams.front().length() << " to " << g.out
              << "\n";
    return kExitOk;
}

struct RunFlags {
    MixerFlags mixer;
    std::string input;
    std::size_t index = 0;
    std::uint64_t embedding_seed = 0;
    std::size_t window = 8;
    std::string format = "csv";
    std::string out;
    std::string save_state;
};

int run_run(const RunFlags& r) {
    const auto streams = streams_from_file(r.input);
    if (r.index >= streams.size())
        throw ConfigError("--index " + std::to_string(r.index) + " out of range (" + std::to_string(streams.size()) +
                          " streams)");
    const TokenStream& stream = streams[r.index];
    const MixerSpec spec = build_spec(r.mixer, r.mixer.mixer, stream.length());
    if (!r.save_state.empty() && spec.kind != MixerKind::ovq) throw ConfigError("--save-state needs --mixer ovq");

    const auto report = token_task_eval(spec, stream, {r.embedding_seed, r.window});
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    auto meta = describe(spec);
    meta["seed"] = std::to_string(r.mixer.seed);
    meta["input"] = r.input;
    meta["index"] = std::to_string(r.index);
    meta["embedding_seed"] = std::to_string(r.embedding_seed);
    meta["window"] = std::to_string(r.window);
    meta["stream_seed"] = std::to_string(stream.meta.seed);
    emit(format_token_report(report, meta, parse_format(r.format)), r.out);
    if (!r.save_state.empty()) save_state(r.save_state, *report.final_state);
    return kExitOk;
}

struct BenchFlags {
    MixerFlags mixer;
    std::string mixers = "full,ovq,linear";
    std::string lengths = "256,1024,4096";
    std::string seeds;
    std::size_t probes = 64;
    std::size_t workers = 0;
    std::string format = "csv";
    std::string out;
};

int run_bench(const BenchFlags& b) {
    const auto lengths = parse_list<std::size_t>(b.lengths, "length");
    const auto seeds = b.seeds.empty() ? std::vector<std::uint64_t>{b.mixer.seed}
                                       : parse_list<std::uint64_t>(b.seeds, "seed");
    std::vector<MixerSpec> specs;
    for (const auto& name : split(b.mixers)) specs.push_back(build_spec(b.mixer, name, 0));
    std::vector<GridJob> jobs;
    for (const auto& s : specs)
        for (std::size_t T : lengths) {
            for (std::uint64_t seed : seeds) {
                MixerSpec js = s;
                if (js.kind == MixerKind::ovq && js.ovq.ablation == Ablation::linear_growth && !b.mixer.planned_length)
                    js.ovq.planned_length = T;
                jobs.push_back({js, T, std::min(b.probes, T), seed});
            }
        }
    RecallReport report;
    report.rows = run_grid(jobs, b.workers);
    report.meta = describe(specs.front());
    report.meta["mixers"] = b.mixers;
    report.meta["lengths"] = b.lengths;
    report.meta["seeds"] = b.seeds.empty() ? std::to_string(b.mixer.seed) : b.seeds;
    report.meta["probes"] = std::to_string(b.probes);
    // OVQ-specific fields are echoed even when the first mixer is not OVQ.
    const auto ovq_meta = describe([&] {
        MixerSpec s = specs.front();
        s.kind = MixerKind::ovq;
        s.initial_state.reset();
        return s;
    }());
    for (const auto& [k, v] : ovq_meta) report.meta.emplace(k, v);
    report.meta.erase("mixer");
    report.meta["vq_size"] = std::to_string(b.mixer.vq_size);
    emit(format_recall_report(report, parse_format(b.format)), b.out);
    return kExitOk;
}

struct VerifyFlags {
    std::uint64_t seed = 0;
    std::size_t instances = 16;
    std::size_t max_len = 256;
    std::string fault = "none";
    std::string out;
};

int run_verify(const VerifyFlags& v) {
    VerifyOptions opt;
    opt.seed = v.seed;
    opt.instances = v.instances;
    opt.max_len = v.max_len;
    if (v.fault == "none") opt.fault = Fault::none;
    else if (v.fault == "count-skip") opt.fault = Fault::skip_count_increment;
    else if (v.fault == "mask-off-by-one") opt.fault = Fault::mask_off_by_one;
    else if (v.fault == "growth-over") opt.fault = Fault::growth_over_allocation;
    else throw ConfigError("unknown fault: " + v.fault);
    if (opt.instances == 0) throw ConfigError("--instances must be >= 1");
    if (opt.max_len < 8) throw ConfigError("--max-len must be >= 8");

    const auto report = verify_all(opt);
    const std::map<std::string, std::string> meta{{"seed", std::to_string(v.seed)},
                                                  {"instances", std::to_string(v.instances)},
                                                  {"max_len", std::to_string(v.max_len)},
                                                  {"fault", v.fault}};
    emit(format_verify_report(report, meta), v.out);
    for (const auto& c : report.checks)
        if (!c.passed) std::cerr << "FAILED " << c.name << ": " << c.message << "\n";
    return report.all_passed() ? kExitOk : kExitVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Online vector-quantized attention: tasks, benchmarks and verification"};
    app.require_subcommand(1);

    GenFlags gen;
    auto* gen_cmd = app.add_subcommand("gen", "Generate synthetic task streams to a file");
    gen_cmd->add_option("--task", gen.task, "basic_icr, positional_icr or icl")
        ->check(CLI::IsMember({"basic_icr", "positional_icr", "icl"}))
        ->capture_default_str();
    gen_cmd->add_option("--seed", gen.seed, "Seed of the first stream; stream i uses seed + i")->capture_default_str();
    gen_cmd->add_option("--count", gen.count, "Number of streams")->check(CLI::PositiveNumber)->capture_default_str();
    gen_cmd->add_option("--out", gen.out, "Output path")->required();
    gen_cmd->add_option("--file-format", gen.file_format, "jsonl or binary")
        ->check(CLI::IsMember({"jsonl", "binary"}))
        ->capture_default_str();
    gen_cmd->add_option("--vocab", gen.vocab, "Ordinary vocabulary size")->capture_default_str();
    gen_cmd->add_option("--num-pairs", gen.basic.num_pairs, "basic_icr: context pairs")->capture_default_str();
    gen_cmd->add_option("--num-queries", gen.basic.num_queries, "basic_icr: queried pairs")->capture_default_str();
    gen_cmd->add_option("--key-len", gen.basic.key_len, "Key tuple length (ICR tasks)")->capture_default_str();
    gen_cmd->add_option("--val-len", gen.basic.val_len, "Value tuple length (ICR tasks)")->capture_default_str();
    gen_cmd->add_option("--num-keys", gen.positional.num_keys, "positional_icr: distinct keys")->capture_default_str();
    gen_cmd->add_option("--copies", gen.positional.copies, "positional_icr: values per key")->capture_default_str();
    gen_cmd->add_flag("--no-shuffle", gen.no_shuffle, "positional_icr: keep context blocks in key order");
    gen_cmd->add_option("--num-functions", gen.icl.num_functions, "icl: functions")->capture_default_str();
    gen_cmd->add_option("--num-examples", gen.icl.num_examples, "icl: examples")->capture_default_str();
    gen_cmd->add_option("--io-len", gen.icl.io_len, "icl: input/output length")->capture_default_str();
    gen_cmd->add_option("--a-max", gen.icl.a_max, "icl: largest slope")->capture_default_str();
    gen_cmd->add_option("--b-max", gen.icl.b_max, "icl: largest offset")->capture_default_str();

    RunFlags run;
    auto* run_cmd = app.add_subcommand("run", "Evaluate one mixer on a task stream (untrained probe)");
    run_cmd->add_option("--input", run.input, "Stream file from `gen`")->required();
    run_cmd->add_option("--index", run.index, "Stream index within the file")->capture_default_str();
    run_cmd->add_option("--embedding-seed", run.embedding_seed, "Seed of the token embedding table")
        ->capture_default_str();
    run_cmd->add_option("--window", run.window, "Context window of the positional features")->capture_default_str();
    run_cmd->add_option("--format", run.format, "csv or json")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();
    run_cmd->add_option("--out", run.out, "Report path (default stdout)");
    run_cmd->add_option("--save-state", run.save_state, "Write the final OVQ state here");
    add_mixer_flags(run_cmd, run.mixer, true);

    BenchFlags bench;
    auto* bench_cmd = app.add_subcommand("bench", "Associative-recall and state-size grid");
    bench_cmd->add_option("--mixers", bench.mixers, "Comma-separated mixers")->capture_default_str();
    bench_cmd->add_option("--lengths", bench.lengths, "Comma-separated sequence lengths")->capture_default_str();
    bench_cmd->add_option("--seeds", bench.seeds, "Comma-separated seeds (default: --seed)");
    bench_cmd->add_option("--probes", bench.probes, "Probe queries per run")->capture_default_str();
    bench_cmd->add_option("--workers", bench.workers, "Worker threads (0 = hardware)")->capture_default_str();
    bench_cmd->add_option("--format", bench.format, "csv or json")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();
    bench_cmd->add_option("--out", bench.out, "Report path (default stdout)");
    add_mixer_flags(bench_cmd, bench.mixer, false);

    VerifyFlags verify;
    auto* verify_cmd = app.add_subcommand("verify", "Run the oracle-equivalence suite");
    verify_cmd->add_option("--seed", verify.seed, "Suite seed")->capture_default_str();
    verify_cmd->add_option("--instances", verify.instances, "Randomized instances per check")->capture_default_str();
    verify_cmd->add_option("--max-len", verify.max_len, "Longest sequence used")->capture_default_str();
    verify_cmd->add_option("--out", verify.out, "Report path (default stdout)");
    verify_cmd->add_option("--inject-fault", verify.fault, "none, count-skip, mask-off-by-one or growth-over")
        ->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*gen_cmd) {
            gen.positional.key_len = gen.basic.key_len;
            gen.positional.val_len = gen.basic.val_len;
            return run_gen(gen);
        }
        if (*run_cmd) return run_run(run);
        if (*bench_cmd) return run_bench(bench);
        return run_verify(verify);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ParseError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const GenerationError& e) {
        std::cerr << "generation error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const InvalidStateError& e) {
        std::cerr << "invalid state: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}
