// Copyright (C) 2026 The GTP Engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Dense row-major matrices and the selection primitives the rest of the
// engine builds on. Everything is 64-bit floating point; no BLAS.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gtp/errors.hpp"

namespace gtp {

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw ShapeError("Matrix: data length " + std::to_string(data_.size()) + " != " +
                             std::to_string(rows_) + "x" + std::to_string(cols_));
        }
    }
    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline bool all_finite(const Matrix& m) {
    return std::all_of(m.data().begin(), m.data().end(), [](double v) { return std::isfinite(v); });
}

// Strictly increasing list of token positions.
class IndexSet {
public:
    IndexSet() = default;
    explicit IndexSet(std::vector<std::size_t> indices) : indices_(std::move(indices)) {
        for (std::size_t i = 1; i < indices_.size(); ++i) {
            if (indices_[i] <= indices_[i - 1]) throw ArgumentError("IndexSet: indices must be strictly increasing");
        }
    }
    IndexSet(std::initializer_list<std::size_t> indices) : IndexSet(std::vector<std::size_t>(indices)) {}

    // Builds a set from arbitrary-order distinct indices.
    static IndexSet from_unsorted(std::vector<std::size_t> indices) {
        std::sort(indices.begin(), indices.end());
        return IndexSet(std::move(indices));
    }

    static IndexSet range(std::size_t n) {
        std::vector<std::size_t> v(n);
        std::iota(v.begin(), v.end(), std::size_t{0});
        return IndexSet(std::move(v));
    }

    std::size_t size() const noexcept { return indices_.size(); }
    bool empty() const noexcept { return indices_.empty(); }
    std::size_t operator[](std::size_t i) const noexcept { return indices_[i]; }
    auto begin() const noexcept { return indices_.begin(); }
    auto end() const noexcept { return indices_.end(); }
    const std::vector<std::size_t>& values() const noexcept { return indices_; }

    bool contains(std::size_t v) const { return std::binary_search(indices_.begin(), indices_.end(), v); }

    void check_bound(std::size_t dim) const {
        if (!indices_.empty() && indices_.back() >= dim) {
            throw ArgumentError("IndexSet: index " + std::to_string(indices_.back()) + " out of range " +
                                std::to_string(dim));
        }
    }

    bool operator==(const IndexSet&) const = default;

private:
    std::vector<std::size_t> indices_;
};

// ---------------------------------------------------------------------------
// Multiply-accumulate instrumentation. A MacCounter in scope on the current
// thread accumulates every MAC issued by matmul/matmul_transposed; nested
// counters forward their totals to the enclosing one on destruction.

namespace detail {
inline thread_local std::uint64_t* mac_sink = nullptr;
}

inline void record_macs(std::uint64_t n) noexcept {
    if (detail::mac_sink != nullptr) *detail::mac_sink += n;
}

class MacCounter {
public:
    MacCounter() noexcept : previous_(detail::mac_sink) { detail::mac_sink = &count_; }
    ~MacCounter() {
        detail::mac_sink = previous_;
        if (previous_ != nullptr) *previous_ += count_;
    }
    MacCounter(const MacCounter&) = delete;
    MacCounter& operator=(const MacCounter&) = delete;

    std::uint64_t count() const noexcept { return count_; }

private:
    std::uint64_t count_ = 0;
    std::uint64_t* previous_;
};

// ---------------------------------------------------------------------------

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " times " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    Matrix out(n, m);
    // Four output rows share each pass over b; every entry still accumulates
    // in ascending p.
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        double* o0 = out.row(i).data();
        double* o1 = out.row(i + 1).data();
        double* o2 = out.row(i + 2).data();
        double* o3 = out.row(i + 3).data();
        for (std::size_t p = 0; p < k; ++p) {
            const double a0 = a(i, p), a1 = a(i + 1, p), a2 = a(i + 2, p), a3 = a(i + 3, p);
            const double* br = b.row(p).data();
            for (std::size_t j = 0; j < m; ++j) {
                const double bv = br[j];
                o0[j] += a0 * bv;
                o1[j] += a1 * bv;
                o2[j] += a2 * bv;
                o3[j] += a3 * bv;
            }
        }
    }
    for (; i < n; ++i) {
        double* o = out.row(i).data();
        const double* ar = a.row(i).data();
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ar[p];
            const double* br = b.row(p).data();
            for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
        }
    }
    record_macs(static_cast<std::uint64_t>(n) * k * m);
    return out;
}

// a · bᵀ without materializing the transpose.
inline Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_transposed: inner dimensions " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.cols()));
    }
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    Matrix out(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        const double* ar = a.row(i).data();
        for (std::size_t j = 0; j < m; ++j) {
            const double* br = b.row(j).data();
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += ar[p] * br[p];
            out(i, j) = acc;
        }
    }
    record_macs(static_cast<std::uint64_t>(n) * k * m);
    return out;
}

inline void add_row_bias(Matrix& m, std::span<const double> bias) {
    if (bias.size() != m.cols()) throw ShapeError("add_row_bias: bias length mismatch");
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias[j];
    }
}

inline Matrix select_rows(const Matrix& m, const IndexSet& rows) {
    rows.check_bound(m.rows());
    Matrix out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy(m.row(rows[i]).begin(), m.row(rows[i]).end(), out.row(i).begin());
    }
    return out;
}

// Softmax along each row, shifted by the row maximum.
inline Matrix row_softmax(const Matrix& m) {
    if (m.cols() == 0 && m.rows() != 0) throw ShapeError("row_softmax: empty rows");
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto in = m.row(i);
        auto o = out.row(i);
        const double mx = *std::max_element(in.begin(), in.end());
        double total = 0.0;
        for (std::size_t j = 0; j < in.size(); ++j) {
            o[j] = std::exp(in[j] - mx);
            total += o[j];
        }
        for (double& v : o) v /= total;
    }
    return out;
}

// k-th largest value (1-based, duplicates counted) by quickselect with a
// median-of-three pivot and three-way partitioning.
inline double kth_largest(std::span<const double> values, std::size_t k) {
    if (k < 1 || k > values.size()) {
        throw ArgumentError("kth_largest: k=" + std::to_string(k) + " outside [1, " + std::to_string(values.size()) +
                            "]");
    }
    std::vector<double> v(values.begin(), values.end());
    std::size_t lo = 0, hi = v.size();  // half-open window holding the target
    const std::size_t target = k - 1;   // position in descending order
    while (hi - lo > 1) {
        const double a = v[lo], b = v[lo + (hi - lo) / 2], c = v[hi - 1];
        const double pivot = std::max(std::min(a, b), std::min(std::max(a, b), c));
        // [lo, gt) > pivot, [gt, i) == pivot, [lt, hi) < pivot
        std::size_t gt = lo, i = lo, lt = hi;
        while (i < lt) {
            if (v[i] > pivot) {
                std::swap(v[i++], v[gt++]);
            } else if (v[i] < pivot) {
                std::swap(v[i], v[--lt]);
            } else {
                ++i;
            }
        }
        if (target < gt) {
            hi = gt;
        } else if (target >= lt) {
            lo = lt;
        } else {
            return pivot;
        }
    }
    return v[lo];
}

inline double dot(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ShapeError("dot: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
    return acc;
}

inline double cosine_similarity(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ShapeError("cosine_similarity: length mismatch");
    const double nx = std::sqrt(dot(x, x));
    const double ny = std::sqrt(dot(y, y));
    if (!(nx > 0.0) || !(ny > 0.0)) throw DegenerateInputError("cosine_similarity: zero-norm input");
    return std::clamp(dot(x, y) / (nx * ny), -1.0, 1.0);
}

// Stable descending order; equal values keep ascending original index.
inline std::vector<std::size_t> argsort_desc(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
    return order;
}

}  // namespace gtp
