// Copyright 2026 The OVQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ovq {

// Error taxonomy. Every failure the library reports derives from Error so the
// CLI can map it onto an exit code in one place.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad shapes, out-of-range parameters, inconsistent flags.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Operation called on a state that cannot support it (e.g. empty dictionary).
class InvalidStateError : public Error {
public:
    using Error::Error;
};

/// Broken internal bookkeeping; indicates a bug, never user input.
class InternalError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class GenerationError : public Error {
public:
    using Error::Error;
};

/// Dense row-major matrix. Rows are handed out as spans so kernels never see
/// raw pointer arithmetic.
template <typename T>
class Matrix {
public:
    using value_type = T;

    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T{0})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return rows_ == 0 || cols_ == 0; }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<T> flat() { return data_; }
    std::span<const T> flat() const { return data_; }

    /// Copy of rows [begin, end).
    Matrix slice_rows(std::size_t begin, std::size_t end) const {
        Matrix out(end - begin, cols_);
        std::copy(data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_),
                  data_.begin() + static_cast<std::ptrdiff_t>(end * cols_), out.data_.begin());
        return out;
    }

    /// Appends one row; cols() must match (or the matrix must be empty).
    void push_row(std::span<const T> values) {
        if (rows_ == 0 && cols_ == 0) cols_ = values.size();
        if (values.size() != cols_) throw ConfigError("push_row: width mismatch");
        data_.insert(data_.end(), values.begin(), values.end());
        ++rows_;
    }

    template <typename U>
    Matrix<U> cast() const {
        Matrix<U> out(rows_, cols_);
        for (std::size_t i = 0; i < data_.size(); ++i) out.flat()[i] = static_cast<U>(data_[i]);
        return out;
    }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using MatrixD = Matrix<double>;

template <typename T>
T dot(std::span<const T> a, std::span<const T> b) {
    T acc{0};
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

template <typename T>
T squared_distance(std::span<const T> a, std::span<const T> b) {
    T acc{0};
    for (std::size_t i = 0; i < a.size(); ++i) {
        const T diff = a[i] - b[i];
        acc += diff * diff;
    }
    return acc;
}

template <typename T>
void normalize_in_place(std::span<T> v) {
    T norm2{0};
    for (T x : v) norm2 += x * x;
    if (norm2 <= T{0}) return;
    const T inv = T{1} / std::sqrt(norm2);
    for (T& x : v) x *= inv;
}

/// Every row rescaled to unit L2 norm (zero rows left untouched).
template <typename T>
void normalize_rows(Matrix<T>& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) normalize_in_place(m.row(r));
}

/// Rows drawn from an isotropic Gaussian and projected onto the unit sphere.
inline MatrixD random_unit_rows(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    MatrixD m(rows, cols);
    for (double& x : m.flat()) x = gauss(rng);
    normalize_rows(m);
    return m;
}

inline MatrixD random_gaussian(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                               double stddev = 1.0) {
    std::normal_distribution<double> gauss(0.0, stddev);
    MatrixD m(rows, cols);
    for (double& x : m.flat()) x = gauss(rng);
    return m;
}

/// Derives an independent stream seed from a base seed and a stream index
/// (splitmix64 finalizer).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

template <typename T>
double max_abs_diff(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
    double worst = 0.0;
    for (std::size_t i = 0; i < a.flat().size(); ++i) {
        const double diff = std::abs(static_cast<double>(a.flat()[i]) - static_cast<double>(b.flat()[i]));
        if (std::isnan(diff)) return INFINITY;
        if (diff > worst) worst = diff;
    }
    return worst;
}

}  // namespace ovq
