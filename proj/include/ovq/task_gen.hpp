// Copyright 2026 The OVQ Authors
// SPDX-License-Identifier: Apache-2.0

// Seeded generators for the synthetic long-context tasks: basic and
// positional in-context recall, and linear-function in-context learning.
//
// Token layout. Ordinary tokens are [0, vocab_size). The special band
// [vocab_size, vocab_size + 131) holds, in order: assign, separator, query
// marker, then 128 function markers.
//
// Stream lengths:
//   basic ICR       P (Lk + Lv + 2) + 1 + Q (Lk + Lv + 1)
//   positional ICR  K C (Lk + Lv + 2) + 1 + C (Lk + Lv + 1)
//   ICL             E (2 Lio + 2)
// Context blocks end with a separator; query blocks do not carry one.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ovq {

inline constexpr std::int64_t kIgnore = -1;
inline constexpr std::size_t kNumFunctionMarkers = 128;
inline constexpr std::size_t kNumSpecialTokens = 3 + kNumFunctionMarkers;

struct SpecialTokens {
    std::uint32_t assign_id;
    std::uint32_t separator_id;
    std::uint32_t query_marker_id;
    std::vector<std::uint32_t> function_marker_ids;

    static SpecialTokens for_vocab(std::size_t vocab_size);
};

struct StreamMeta {
    std::string task;  // "basic_icr", "positional_icr" or "icl"
    std::uint64_t seed = 0;
    std::map<std::string, std::int64_t> params;

    bool operator==(const StreamMeta&) const = default;
};

struct TokenStream {
    std::vector<std::uint32_t> tokens;
    std::vector<std::int64_t> targets;  // kIgnore or an ordinary token id
    std::size_t vocab_size = 0;
    StreamMeta meta;

    std::size_t length() const { return tokens.size(); }
    std::size_t target_count() const;
    /// Throws InvalidStateError on shape, id-range or target violations.
    void validate() const;

    bool operator==(const TokenStream&) const = default;
};

struct BasicIcrParams {
    std::size_t num_pairs = 220;
    std::size_t key_len = 8;
    std::size_t val_len = 8;
    std::size_t vocab_size = 10000;
    std::size_t num_queries = 6;
};

struct PositionalIcrParams {
    std::size_t num_keys = 55;
    std::size_t copies = 4;
    std::size_t key_len = 8;
    std::size_t val_len = 8;
    std::size_t vocab_size = 10000;
    /// Off: context blocks appear in (key, copy) order. Useful for checking
    /// that targets follow context position rather than assignment order.
    bool shuffle_context = true;
};

struct IclParams {
    std::size_t num_functions = 16;
    std::size_t num_examples = 85;
    std::size_t io_len = 12;
    std::size_t vocab_size = 10000;
    // Slopes and offsets are drawn from {1..a_max} and {1..b_max}. The two
    // task descriptions disagree (5 vs 4); 5 is the default.
    std::uint32_t a_max = 5;
    std::uint32_t b_max = 5;
};

struct IclFunction {
    std::uint32_t a = 1;
    std::uint32_t b = 1;
    std::vector<std::size_t> perm;  // output i reads input perm[i]
};

struct IclInstance {
    TokenStream stream;
    std::vector<IclFunction> functions;
};

std::size_t basic_icr_length(const BasicIcrParams& p);
std::size_t positional_icr_length(const PositionalIcrParams& p);
std::size_t icl_length(const IclParams& p);

/// Largest input token id an ICL example may use:
/// floor((vocab_size - 1 - b_max) / a_max). Throws GenerationError when the
/// vocabulary cannot hold any output.
std::uint32_t icl_input_bound(const IclParams& p);

/// y[i] = a * x[perm[i]] + b.
std::vector<std::uint32_t> apply_icl_function(const IclFunction& f, const std::vector<std::uint32_t>& x);

/// Throws ConfigError when num_queries > num_pairs or a length is zero, and
/// GenerationError when the vocabulary cannot supply unique tuples.
TokenStream gen_basic_icr(const BasicIcrParams& p, std::uint64_t seed);
TokenStream gen_positional_icr(const PositionalIcrParams& p, std::uint64_t seed);
IclInstance gen_icl_instance(const IclParams& p, std::uint64_t seed);
TokenStream gen_icl(const IclParams& p, std::uint64_t seed);

enum class StreamFormat { jsonl, binary };

/// JSONL writes one {tokens, targets, vocab_size, meta} record per line with
/// kIgnore as -1. Binary is "OVQT", u32 version, then length-prefixed
/// little-endian u32 arrays (kIgnore stored as 0xFFFFFFFF) and the meta as a
/// length-prefixed JSON string, repeated per stream.
void streams_to_file(const std::vector<TokenStream>& streams, const std::string& path,
                     StreamFormat format = StreamFormat::jsonl);
/// Detects the format from the leading bytes. Throws ParseError (with the
/// line number for JSONL) on malformed or empty input.
std::vector<TokenStream> streams_from_file(const std::string& path);

void stream_to_file(const TokenStream& stream, const std::string& path, StreamFormat format = StreamFormat::jsonl);
/// Reads a file holding exactly one stream.
TokenStream stream_from_file(const std::string& path);

}  // namespace ovq
