// Copyright 2026 The OVQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "ovq/task_gen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ovq/common.hpp"

namespace ovq {

namespace {

constexpr std::size_t kRetryCap = 1'000'000;
constexpr char kBinaryMagic[4] = {'O', 'V', 'Q', 'T'};
constexpr std::uint32_t kBinaryVersion = 1;

using Tuple = std::vector<std::uint32_t>;

// Draws `count` distinct tuples of `len` tokens from [0, vocab).
std::vector<Tuple> unique_tuples(std::size_t count, std::size_t len, std::size_t vocab, std::mt19937_64& rng,
                                 const char* what) {
    // Capacity vocab^len, computed without overflow.
    double capacity = 1.0;
    for (std::size_t i = 0; i < len && capacity < 1e18; ++i) capacity *= static_cast<double>(vocab);
    if (capacity < static_cast<double>(count))
        throw GenerationError(std::string("vocabulary too small for ") + std::to_string(count) + " unique " + what);

    std::uniform_int_distribution<std::uint32_t> token(0, static_cast<std::uint32_t>(vocab - 1));
    std::set<Tuple> seen;
    std::vector<Tuple> out;
    out.reserve(count);
    std::size_t rejections = 0;
    while (out.size() < count) {
        Tuple t(len);
        for (auto& x : t) x = token(rng);
        if (seen.insert(t).second) {
            out.push_back(std::move(t));
        } else if (++rejections > kRetryCap) {
            throw GenerationError(std::string("retry cap exceeded drawing unique ") + what);
        }
    }
    return out;
}

void check_vocab(std::size_t vocab) {
    if (vocab == 0) throw ConfigError("vocab_size must be >= 1");
    if (vocab + kNumSpecialTokens > std::numeric_limits<std::uint32_t>::max())
        throw ConfigError("vocab_size too large for 32-bit token ids");
}

struct Builder {
    TokenStream s;

    void token(std::uint32_t id) {
        s.tokens.push_back(id);
        s.targets.push_back(kIgnore);
    }
    void tuple(const Tuple& t, bool supervised) {
        for (auto x : t) {
            s.tokens.push_back(x);
            s.targets.push_back(supervised ? static_cast<std::int64_t>(x) : kIgnore);
        }
    }
};

std::int64_t as_i64(std::size_t x) { return static_cast<std::int64_t>(x); }

void put_u32(std::ostream& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::istream& in) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        const int c = in.get();
        if (c == std::char_traits<char>::eof()) throw ParseError("binary stream file truncated");
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
}

nlohmann::json meta_to_json(const StreamMeta& m) {
    return {{"task", m.task}, {"seed", m.seed}, {"params", m.params}};
}

StreamMeta meta_from_json(const nlohmann::json& j) {
    StreamMeta m;
    m.task = j.at("task").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.params = j.at("params").get<std::map<std::string, std::int64_t>>();
    return m;
}

TokenStream stream_from_json(const nlohmann::json& j) {
    TokenStream s;
    s.tokens = j.at("tokens").get<std::vector<std::uint32_t>>();
    s.targets = j.at("targets").get<std::vector<std::int64_t>>();
    s.vocab_size = j.at("vocab_size").get<std::size_t>();
    s.meta = meta_from_json(j.at("meta"));
    return s;
}

void write_binary(std::ostream& out, const TokenStream& s) {
    put_u32(out, static_cast<std::uint32_t>(s.vocab_size));
    const std::string meta = meta_to_json(s.meta).dump();
    put_u32(out, static_cast<std::uint32_t>(meta.size()));
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    put_u32(out, static_cast<std::uint32_t>(s.tokens.size()));
    for (auto t : s.tokens) put_u32(out, t);
    put_u32(out, static_cast<std::uint32_t>(s.targets.size()));
    for (auto t : s.targets) put_u32(out, t == kIgnore ? 0xffffffffu : static_cast<std::uint32_t>(t));
}

TokenStream read_binary(std::istream& in) {
    TokenStream s;
    s.vocab_size = get_u32(in);
    std::string meta(get_u32(in), '\0');
    if (!in.read(meta.data(), static_cast<std::streamsize>(meta.size()))) throw ParseError("binary stream file truncated");
    try {
        s.meta = meta_from_json(nlohmann::json::parse(meta));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("binary stream meta: ") + e.what());
    }
    s.tokens.resize(get_u32(in));
    for (auto& t : s.tokens) t = get_u32(in);
    s.targets.resize(get_u32(in));
    for (auto& t : s.targets) {
        const std::uint32_t raw = get_u32(in);
        t = raw == 0xffffffffu ? kIgnore : static_cast<std::int64_t>(raw);
    }
    return s;
}

}  // namespace

SpecialTokens SpecialTokens::for_vocab(std::size_t vocab_size) {
    check_vocab(vocab_size);
    const auto base = static_cast<std::uint32_t>(vocab_size);
    SpecialTokens s{base, base + 1, base + 2, {}};
    s.function_marker_ids.resize(kNumFunctionMarkers);
    std::iota(s.function_marker_ids.begin(), s.function_marker_ids.end(), base + 3);
    return s;
}

std::size_t TokenStream::target_count() const {
    return static_cast<std::size_t>(std::ranges::count_if(targets, [](std::int64_t t) { return t != kIgnore; }));
}

void TokenStream::validate() const {
    if (tokens.size() != targets.size()) throw InvalidStateError("tokens and targets differ in length");
    const std::uint64_t bound = static_cast<std::uint64_t>(vocab_size) + kNumSpecialTokens;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] >= bound) throw InvalidStateError("token id out of range at " + std::to_string(i));
        const auto t = targets[i];
        if (t == kIgnore) continue;
        if (t < 0 || static_cast<std::uint64_t>(t) >= vocab_size)
            throw InvalidStateError("target id out of range at " + std::to_string(i));
    }
}

std::size_t basic_icr_length(const BasicIcrParams& p) {
    return p.num_pairs * (p.key_len + p.val_len + 2) + 1 + p.num_queries * (p.key_len + p.val_len + 1);
}

std::size_t positional_icr_length(const PositionalIcrParams& p) {
    return p.num_keys * p.copies * (p.key_len + p.val_len + 2) + 1 + p.copies * (p.key_len + p.val_len + 1);
}

std::size_t icl_length(const IclParams& p) { return p.num_examples * (2 * p.io_len + 2); }

TokenStream gen_basic_icr(const BasicIcrParams& p, std::uint64_t seed) {
    check_vocab(p.vocab_size);
    if (p.num_pairs == 0 || p.key_len == 0 || p.val_len == 0) throw ConfigError("basic ICR lengths must be >= 1");
    if (p.num_queries > p.num_pairs) throw ConfigError("num_queries exceeds num_pairs");
    const auto sp = SpecialTokens::for_vocab(p.vocab_size);
    std::mt19937_64 rng(seed);
    const auto keys = unique_tuples(p.num_pairs, p.key_len, p.vocab_size, rng, "keys");
    const auto values = unique_tuples(p.num_pairs, p.val_len, p.vocab_size, rng, "values");

    std::vector<std::size_t> order(p.num_pairs);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    Builder b;
    b.s.tokens.reserve(basic_icr_length(p));
    b.s.targets.reserve(basic_icr_length(p));
    for (std::size_t i = 0; i < p.num_pairs; ++i) {
        b.tuple(keys[i], false);
        b.token(sp.assign_id);
        b.tuple(values[i], false);
        b.token(sp.separator_id);
    }
    b.token(sp.query_marker_id);
    for (std::size_t q = 0; q < p.num_queries; ++q) {
        b.tuple(keys[order[q]], false);
        b.token(sp.assign_id);
        b.tuple(values[order[q]], true);
    }
    b.s.vocab_size = p.vocab_size;
    b.s.meta = {"basic_icr",
                seed,
                {{"num_pairs", as_i64(p.num_pairs)},
                 {"key_len", as_i64(p.key_len)},
                 {"val_len", as_i64(p.val_len)},
                 {"num_queries", as_i64(p.num_queries)},
                 {"length", as_i64(b.s.tokens.size())}}};
    return std::move(b.s);
}

TokenStream gen_positional_icr(const PositionalIcrParams& p, std::uint64_t seed) {
    check_vocab(p.vocab_size);
    if (p.num_keys == 0 || p.key_len == 0 || p.val_len == 0) throw ConfigError("positional ICR lengths must be >= 1");
    if (p.copies < 2) throw ConfigError("positional ICR needs copies >= 2");
    const auto sp = SpecialTokens::for_vocab(p.vocab_size);
    std::mt19937_64 rng(seed);
    const auto keys = unique_tuples(p.num_keys, p.key_len, p.vocab_size, rng, "keys");
    // Value j of key i is values[i * copies + j]; all values are distinct.
    const auto values = unique_tuples(p.num_keys * p.copies, p.val_len, p.vocab_size, rng, "values");

    std::vector<std::size_t> blocks(p.num_keys * p.copies);
    std::iota(blocks.begin(), blocks.end(), 0);
    // Drawn unconditionally so the query key does not depend on the shuffle flag.
    std::vector<std::size_t> shuffled = blocks;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    if (p.shuffle_context) blocks = shuffled;
    const std::size_t query_key = std::uniform_int_distribution<std::size_t>(0, p.num_keys - 1)(rng);

    Builder b;
    std::vector<std::size_t> query_values;
    for (std::size_t blk : blocks) {
        const std::size_t key = blk / p.copies;
        b.tuple(keys[key], false);
        b.token(sp.assign_id);
        b.tuple(values[blk], false);
        b.token(sp.separator_id);
        if (key == query_key) query_values.push_back(blk);
    }
    b.token(sp.query_marker_id);
    for (std::size_t blk : query_values) {
        b.tuple(keys[query_key], false);
        b.token(sp.assign_id);
        b.tuple(values[blk], true);
    }
    b.s.vocab_size = p.vocab_size;
    b.s.meta = {"positional_icr",
                seed,
                {{"num_keys", as_i64(p.num_keys)},
                 {"copies", as_i64(p.copies)},
                 {"key_len", as_i64(p.key_len)},
                 {"val_len", as_i64(p.val_len)},
                 {"shuffle_context", p.shuffle_context ? 1 : 0},
                 {"query_key", as_i64(query_key)},
                 {"length", as_i64(b.s.tokens.size())}}};
    return std::move(b.s);
}

std::uint32_t icl_input_bound(const IclParams& p) {
    check_vocab(p.vocab_size);
    if (p.a_max == 0 || p.b_max == 0) throw ConfigError("ICL a_max and b_max must be >= 1");
    if (p.vocab_size - 1 < p.b_max) throw GenerationError("vocabulary too small for ICL outputs");
    return static_cast<std::uint32_t>((p.vocab_size - 1 - p.b_max) / p.a_max);
}

std::vector<std::uint32_t> apply_icl_function(const IclFunction& f, const std::vector<std::uint32_t>& x) {
    if (f.perm.size() != x.size()) throw ConfigError("permutation size does not match input");
    std::vector<std::uint32_t> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f.a * x[f.perm[i]] + f.b;
    return y;
}

IclInstance gen_icl_instance(const IclParams& p, std::uint64_t seed) {
    if (p.io_len == 0) throw ConfigError("io_len must be >= 1");
    if (p.num_functions == 0 || p.num_functions > kNumFunctionMarkers)
        throw ConfigError("num_functions must be in [1, 128]");
    const std::uint32_t x_max = icl_input_bound(p);
    const auto sp = SpecialTokens::for_vocab(p.vocab_size);
    std::mt19937_64 rng(seed);

    IclInstance inst;
    std::uniform_int_distribution<std::uint32_t> draw_a(1, p.a_max), draw_b(1, p.b_max);
    for (std::size_t f = 0; f < p.num_functions; ++f) {
        IclFunction fn;
        fn.a = draw_a(rng);
        fn.b = draw_b(rng);
        fn.perm.resize(p.io_len);
        std::iota(fn.perm.begin(), fn.perm.end(), 0);
        std::shuffle(fn.perm.begin(), fn.perm.end(), rng);
        inst.functions.push_back(std::move(fn));
    }

    std::uniform_int_distribution<std::size_t> pick_fn(0, p.num_functions - 1);
    std::uniform_int_distribution<std::uint32_t> draw_x(0, x_max);
    Builder b;
    std::vector<std::uint32_t> x(p.io_len);
    for (std::size_t e = 0; e < p.num_examples; ++e) {
        const std::size_t f = pick_fn(rng);
        for (auto& xi : x) xi = draw_x(rng);
        b.tuple(x, false);
        b.token(sp.function_marker_ids[f]);
        b.tuple(apply_icl_function(inst.functions[f], x), true);
        b.token(sp.separator_id);
    }
    b.s.vocab_size = p.vocab_size;
    b.s.meta = {"icl",
                seed,
                {{"num_functions", as_i64(p.num_functions)},
                 {"num_examples", as_i64(p.num_examples)},
                 {"io_len", as_i64(p.io_len)},
                 {"a_max", p.a_max},
                 {"b_max", p.b_max},
                 {"length", as_i64(b.s.tokens.size())}}};
    inst.stream = std::move(b.s);
    return inst;
}

TokenStream gen_icl(const IclParams& p, std::uint64_t seed) { return gen_icl_instance(p, seed).stream; }

void streams_to_file(const std::vector<TokenStream>& streams, const std::string& path, StreamFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    if (format == StreamFormat::jsonl) {
        for (const auto& s : streams) {
            const nlohmann::json j = {{"tokens", s.tokens},
                                      {"targets", s.targets},
                                      {"vocab_size", s.vocab_size},
                                      {"meta", meta_to_json(s.meta)}};
            out << j.dump() << '\n';
        }
    } else {
        out.write(kBinaryMagic, 4);
        put_u32(out, kBinaryVersion);
        put_u32(out, static_cast<std::uint32_t>(streams.size()));
        for (const auto& s : streams) write_binary(out, s);
    }
    if (!out) throw Error("failed writing " + path);
}

std::vector<TokenStream> streams_from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    char head[4] = {};
    in.read(head, 4);
    const bool binary = in.gcount() == 4 && std::equal(head, head + 4, kBinaryMagic);
    std::vector<TokenStream> out;
    if (binary) {
        if (get_u32(in) != kBinaryVersion) throw ParseError("unsupported binary stream version");
        const std::uint32_t n = get_u32(in);
        for (std::uint32_t i = 0; i < n; ++i) out.push_back(read_binary(in));
        if (in.peek() != std::char_traits<char>::eof()) throw ParseError("trailing bytes after binary streams");
    } else {
        in.clear();
        in.seekg(0);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                out.push_back(stream_from_json(nlohmann::json::parse(line)));
            } catch (const nlohmann::json::exception& e) {
                throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
            }
            try {
                out.back().validate();
            } catch (const InvalidStateError& e) {
                throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
            }
        }
    }
    if (out.empty()) throw ParseError(path + ": no streams in file");
    return out;
}

void stream_to_file(const TokenStream& stream, const std::string& path, StreamFormat format) {
    streams_to_file({stream}, path, format);
}

TokenStream stream_from_file(const std::string& path) {
    auto streams = streams_from_file(path);
    if (streams.size() != 1)
        throw ParseError(path + ": expected one stream, found " + std::to_string(streams.size()));
    return std::move(streams.front());
}

}  // namespace ovq
