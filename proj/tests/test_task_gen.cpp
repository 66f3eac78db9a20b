// Copyright 2026 The OVQ Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "ovq/common.hpp"
#include "ovq/task_gen.hpp"

namespace ovq {
namespace {

using Tuple = std::vector<std::uint32_t>;

class TempFile {
public:
    explicit TempFile(const std::string& name)
        : path_((std::filesystem::temp_directory_path() / ("ovq_test_" + name)).string()) {}
    ~TempFile() { std::remove(path_.c_str()); }
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

Tuple take(const TokenStream& s, std::size_t& pos, std::size_t n) {
    Tuple out(s.tokens.begin() + static_cast<std::ptrdiff_t>(pos), s.tokens.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
    return out;
}

// Independent reader of a recall stream: returns the context pairs in order
// and the query pairs, checking the layout and targets on the way.
struct ParsedRecall {
    std::vector<std::pair<Tuple, Tuple>> context;
    std::vector<std::pair<Tuple, Tuple>> queries;
};

ParsedRecall parse_recall(const TokenStream& s, std::size_t blocks, std::size_t lk, std::size_t lv) {
    const auto sp = SpecialTokens::for_vocab(s.vocab_size);
    ParsedRecall r;
    std::size_t pos = 0;
    for (std::size_t b = 0; b < blocks; ++b) {
        Tuple k = take(s, pos, lk);
        EXPECT_EQ(s.tokens[pos++], sp.assign_id);
        Tuple v = take(s, pos, lv);
        EXPECT_EQ(s.tokens[pos++], sp.separator_id);
        r.context.emplace_back(std::move(k), std::move(v));
    }
    for (std::size_t i = 0; i < pos; ++i) EXPECT_EQ(s.targets[i], kIgnore) << i;
    EXPECT_EQ(s.tokens[pos], sp.query_marker_id);
    EXPECT_EQ(s.targets[pos++], kIgnore);
    while (pos < s.length()) {
        const std::size_t start = pos;
        Tuple k = take(s, pos, lk);
        EXPECT_EQ(s.tokens[pos++], sp.assign_id);
        for (std::size_t i = start; i < pos; ++i) EXPECT_EQ(s.targets[i], kIgnore);
        const std::size_t vs = pos;
        Tuple v = take(s, pos, lv);
        for (std::size_t i = 0; i < lv; ++i) EXPECT_EQ(s.targets[vs + i], static_cast<std::int64_t>(v[i]));
        r.queries.emplace_back(std::move(k), std::move(v));
    }
    return r;
}

TEST(SpecialTokens, BandLayout) {
    const auto sp = SpecialTokens::for_vocab(100);
    EXPECT_EQ(sp.assign_id, 100u);
    EXPECT_EQ(sp.separator_id, 101u);
    EXPECT_EQ(sp.query_marker_id, 102u);
    ASSERT_EQ(sp.function_marker_ids.size(), 128u);
    EXPECT_EQ(sp.function_marker_ids.front(), 103u);
    EXPECT_EQ(sp.function_marker_ids.back(), 230u);
    EXPECT_EQ(kNumSpecialTokens, 131u);
}

TEST(BasicIcr, TinyExampleLayout) {
    BasicIcrParams p;
    p.num_pairs = 2;
    p.key_len = 1;
    p.val_len = 1;
    p.num_queries = 2;
    p.vocab_size = 50;
    // 2 * (1 + 1 + 2) + 1 + 2 * (1 + 1 + 1)
    EXPECT_EQ(basic_icr_length(p), 15u);
    const auto s = gen_basic_icr(p, 1);
    EXPECT_EQ(s.length(), 15u);
    EXPECT_EQ(s.target_count(), 2u);
    EXPECT_NO_THROW(s.validate());
    p.num_queries = 1;
    EXPECT_EQ(basic_icr_length(p), 12u);
}

TEST(BasicIcr, DefaultLengthAndStructure) {
    const BasicIcrParams p;
    EXPECT_EQ(basic_icr_length(p), 4063u);
    const auto s = gen_basic_icr(p, 7);
    ASSERT_EQ(s.length(), 4063u);
    EXPECT_EQ(s.target_count(), 48u);
    EXPECT_EQ(s.meta.task, "basic_icr");
    EXPECT_EQ(s.meta.params.at("length"), 4063);
    const auto r = parse_recall(s, 220, 8, 8);
    std::set<Tuple> keys, values;
    std::map<Tuple, Tuple> lookup;
    for (const auto& [k, v] : r.context) {
        keys.insert(k);
        values.insert(v);
        lookup[k] = v;
        for (auto t : k) EXPECT_LT(t, 10000u);
    }
    EXPECT_EQ(keys.size(), 220u);
    EXPECT_EQ(values.size(), 220u);
    ASSERT_EQ(r.queries.size(), 6u);
    std::set<Tuple> asked;
    for (const auto& [k, v] : r.queries) {
        ASSERT_TRUE(lookup.count(k));
        EXPECT_EQ(lookup[k], v);
        asked.insert(k);
    }
    EXPECT_EQ(asked.size(), 6u);
}

TEST(BasicIcr, DeterministicPerSeed) {
    const BasicIcrParams p;
    EXPECT_EQ(gen_basic_icr(p, 3), gen_basic_icr(p, 3));
    EXPECT_NE(gen_basic_icr(p, 3).tokens, gen_basic_icr(p, 4).tokens);
}

TEST(BasicIcr, ConfigAndCapacityErrors) {
    BasicIcrParams p;
    p.num_queries = p.num_pairs + 1;
    EXPECT_THROW(gen_basic_icr(p, 1), ConfigError);
    p = BasicIcrParams{};
    p.key_len = 0;
    EXPECT_THROW(gen_basic_icr(p, 1), ConfigError);
    p = BasicIcrParams{};
    p.vocab_size = 3;
    p.key_len = 2;
    p.num_pairs = 10;  // only 9 distinct keys exist
    p.num_queries = 1;
    EXPECT_THROW(gen_basic_icr(p, 1), GenerationError);
    p.num_pairs = 9;  // exactly fills the space
    EXPECT_NO_THROW(gen_basic_icr(p, 1));
}

TEST(PositionalIcr, DefaultLengthAndTargetsFollowContextOrder) {
    const PositionalIcrParams p;
    EXPECT_EQ(positional_icr_length(p), 220u * 18u + 1u + 4u * 17u);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto s = gen_positional_icr(p, seed);
        ASSERT_EQ(s.length(), positional_icr_length(p));
        const auto r = parse_recall(s, 220, 8, 8);
        const auto qk = static_cast<std::size_t>(s.meta.params.at("query_key"));
        ASSERT_LT(qk, 55u);
        // Context values of the query key, in context order.
        std::vector<Tuple> expected;
        Tuple qkey;
        std::map<Tuple, std::size_t> key_counts;
        for (const auto& [k, v] : r.context) ++key_counts[k];
        EXPECT_EQ(key_counts.size(), 55u);
        for (const auto& [k, c] : key_counts) EXPECT_EQ(c, 4u);
        ASSERT_EQ(r.queries.size(), 4u);
        qkey = r.queries[0].first;
        for (const auto& [k, v] : r.context)
            if (k == qkey) expected.push_back(v);
        for (std::size_t i = 0; i < 4; ++i) {
            EXPECT_EQ(r.queries[i].first, qkey);
            EXPECT_EQ(r.queries[i].second, expected[i]);
        }
    }
}

TEST(PositionalIcr, UnshuffledContextIsKeyMajor) {
    PositionalIcrParams p;
    p.shuffle_context = false;
    p.num_keys = 5;
    p.copies = 3;
    const auto s = gen_positional_icr(p, 11);
    const auto r = parse_recall(s, 15, 8, 8);
    for (std::size_t i = 0; i < 15; ++i) EXPECT_EQ(r.context[i].first, r.context[(i / 3) * 3].first);
    // Query key matches the shuffled run with the same seed.
    p.shuffle_context = true;
    EXPECT_EQ(gen_positional_icr(p, 11).meta.params.at("query_key"), s.meta.params.at("query_key"));
    p.copies = 1;
    EXPECT_THROW(gen_positional_icr(p, 11), ConfigError);
}

TEST(Icl, FunctionApplication) {
    IclFunction f{2, 3, {0, 1}};
    EXPECT_EQ(apply_icl_function(f, {1, 4}), (Tuple{5, 11}));
    IclFunction g{1, 1, {2, 0, 1}};
    EXPECT_EQ(apply_icl_function(g, {10, 20, 30}), (Tuple{31, 11, 21}));
    EXPECT_THROW(apply_icl_function(g, {1, 2}), ConfigError);
}

TEST(Icl, InputBound) {
    IclParams p;
    EXPECT_EQ(icl_input_bound(p), 1998u);  // (9999 - 5) / 5
    p.a_max = 1;
    p.b_max = 4;
    EXPECT_EQ(icl_input_bound(p), 9995u);
    p.vocab_size = 4;
    p.b_max = 5;
    EXPECT_THROW(icl_input_bound(p), GenerationError);
}

TEST(Icl, OutputsStayInVocabularyAcrossTheGrid) {
    for (std::uint32_t a_max = 1; a_max <= 5; ++a_max)
        for (std::uint32_t b_max = 1; b_max <= 5; ++b_max)
            for (std::size_t vocab : {16u, 17u, 100u, 10000u}) {
                IclParams p;
                p.vocab_size = vocab;
                p.a_max = a_max;
                p.b_max = b_max;
                const std::uint32_t x = icl_input_bound(p);
                EXPECT_LT(a_max * x + b_max, vocab);
                EXPECT_GE(a_max * (x + 1) + b_max, vocab);
            }
}

TEST(Icl, DefaultStreamIsConsistentWithItsFunctions) {
    const IclParams p;
    EXPECT_EQ(icl_length(p), 85u * 26u);
    const auto inst = gen_icl_instance(p, 5);
    const auto& s = inst.stream;
    ASSERT_EQ(s.length(), 2210u);
    ASSERT_EQ(inst.functions.size(), 16u);
    EXPECT_NO_THROW(s.validate());
    const auto sp = SpecialTokens::for_vocab(p.vocab_size);
    const std::uint32_t bound = icl_input_bound(p);
    std::size_t pos = 0;
    std::set<std::size_t> used;
    for (std::size_t e = 0; e < 85; ++e) {
        const Tuple x = take(s, pos, 12);
        for (auto t : x) EXPECT_LE(t, bound);
        const auto marker = s.tokens[pos++];
        const auto it = std::find(sp.function_marker_ids.begin(), sp.function_marker_ids.end(), marker);
        ASSERT_NE(it, sp.function_marker_ids.end());
        const auto f = static_cast<std::size_t>(it - sp.function_marker_ids.begin());
        ASSERT_LT(f, 16u);
        used.insert(f);
        const std::size_t ys = pos;
        const Tuple y = take(s, pos, 12);
        EXPECT_EQ(y, apply_icl_function(inst.functions[f], x));
        for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(s.targets[ys + i], static_cast<std::int64_t>(y[i]));
        EXPECT_EQ(s.tokens[pos++], sp.separator_id);
    }
    EXPECT_GT(used.size(), 8u);
    for (const auto& f : inst.functions) {
        EXPECT_GE(f.a, 1u);
        EXPECT_LE(f.a, 5u);
        EXPECT_GE(f.b, 1u);
        EXPECT_LE(f.b, 5u);
        Tuple sorted(f.perm.begin(), f.perm.end());
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(sorted[i], i);
    }
    EXPECT_EQ(gen_icl(p, 5), s);
}

TEST(Icl, RejectsTooManyFunctions) {
    IclParams p;
    p.num_functions = 129;
    EXPECT_THROW(gen_icl(p, 1), ConfigError);
}

TEST(TokenStream, ValidateCatchesViolations) {
    auto s = gen_basic_icr(BasicIcrParams{}, 1);
    auto bad = s;
    bad.targets.pop_back();
    EXPECT_THROW(bad.validate(), InvalidStateError);
    bad = s;
    bad.tokens[0] = static_cast<std::uint32_t>(s.vocab_size + kNumSpecialTokens);
    EXPECT_THROW(bad.validate(), InvalidStateError);
    bad = s;
    bad.targets[0] = static_cast<std::int64_t>(s.vocab_size);
    EXPECT_THROW(bad.validate(), InvalidStateError);
}

TEST(StreamFiles, RoundTripBothFormats) {
    BasicIcrParams bp;
    bp.num_pairs = 3000;
    bp.key_len = 10;
    bp.val_len = 10;
    bp.num_queries = 50;
    const std::vector<TokenStream> streams{gen_basic_icr(bp, 1), gen_positional_icr(PositionalIcrParams{}, 2),
                                           gen_icl(IclParams{}, 3)};
    ASSERT_GT(streams[0].length(), 65536u);
    for (auto fmt : {StreamFormat::jsonl, StreamFormat::binary}) {
        TempFile f(fmt == StreamFormat::jsonl ? "rt.jsonl" : "rt.bin");
        streams_to_file(streams, f.path(), fmt);
        EXPECT_EQ(streams_from_file(f.path()), streams);
    }
    TempFile one("one.bin");
    stream_to_file(streams[2], one.path(), StreamFormat::binary);
    EXPECT_EQ(stream_from_file(one.path()), streams[2]);
    TempFile many("many.jsonl");
    streams_to_file(streams, many.path());
    EXPECT_THROW(stream_from_file(many.path()), ParseError);
}

TEST(StreamFiles, MalformedInputs) {
    TempFile empty("empty.jsonl");
    { std::ofstream(empty.path()); }
    EXPECT_THROW(streams_from_file(empty.path()), ParseError);

    TempFile broken("broken.jsonl");
    streams_to_file({gen_icl(IclParams{}, 1)}, broken.path());
    { std::ofstream(broken.path(), std::ios::app) << "{\"tokens\": [1, 2\n"; }
    try {
        streams_from_file(broken.path());
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
    }

    TempFile truncated("trunc.bin");
    streams_to_file({gen_icl(IclParams{}, 1)}, truncated.path(), StreamFormat::binary);
    std::filesystem::resize_file(truncated.path(), std::filesystem::file_size(truncated.path()) - 5);
    EXPECT_THROW(streams_from_file(truncated.path()), ParseError);

    EXPECT_THROW(streams_from_file("/nonexistent/ovq/file.jsonl"), ParseError);
}

}  // namespace
}  // namespace ovq
