// Copyright 2026 The OVQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <limits>
#include <span>

namespace ovq {

/// Log-weight of an excluded column. Exclusion is explicit (never exp(-inf)
/// arithmetic) so zero-count components cannot produce NaN.
inline constexpr double kMasked = -std::numeric_limits<double>::infinity();

/// In-place softmax over `logits`; masked entries (== kMasked) get exactly 0.
/// Returns false when every entry is masked (weights left all zero).
template <typename T>
bool softmax_in_place(std::span<T> logits) {
    T max_logit = -std::numeric_limits<T>::infinity();
    for (T x : logits)
        if (x > max_logit) max_logit = x;
    if (max_logit == -std::numeric_limits<T>::infinity()) {
        for (T& x : logits) x = T{0};
        return false;
    }
    T total{0};
    for (T& x : logits) {
        x = (x == -std::numeric_limits<T>::infinity()) ? T{0} : std::exp(x - max_logit);
        total += x;
    }
    const T inv = T{1} / total;
    for (T& x : logits) x *= inv;
    return true;
}

}  // namespace ovq
