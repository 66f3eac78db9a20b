// Copyright 2026 The OVQ Authors
// SPDX-License-Identifier: Apache-2.0

// Binary snapshot of an OvqState.
//
// Layout (all integers and floats little-endian):
//   magic "OVQS" | u32 version | u32 scalar bytes (4 or 8)
//   u64 d | u64 n_max | u64 n_active | u64 tokens_seen | u64 chunks_seen
//   u64 chunk_len | f64 beta | u8 normalize | u8 ablation | u8 update rule
//   u8 scoring | u8 bootstrap_extra | f64 constant_lr | u64 planned_length
//   u64 seed
//   means_k  (n_active x d scalars, row-major)
//   means_v  (n_active x d scalars, row-major)
//   counts   (n_active x u64)

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "ovq/ovq_engine.hpp"

namespace ovq {

inline constexpr std::uint32_t kStateFormatVersion = 1;

template <typename Scalar>
void write_state(std::ostream& out, const OvqState<Scalar>& state);

/// Throws ParseError on bad magic, version, scalar width or truncation, and
/// InvalidStateError when the payload violates a state invariant.
template <typename Scalar>
OvqState<Scalar> read_state(std::istream& in);

template <typename Scalar>
void save_state(const std::string& path, const OvqState<Scalar>& state);

template <typename Scalar>
OvqState<Scalar> load_state(const std::string& path);

}  // namespace ovq
