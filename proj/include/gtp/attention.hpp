// Copyright (C) 2026 The GTP Engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Multi-head self-attention with proportional attention (log token-size bias
// on key columns) and per-head top-k sparsification of the attention maps.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gtp/errors.hpp"
#include "gtp/linalg.hpp"
#include "gtp/token_graph.hpp"

namespace gtp {

inline constexpr double kLayerNormEps = 1e-6;

struct AttentionTensor {
    std::size_t heads = 0;
    std::size_t n = 0;
    std::vector<Matrix> maps;   // one n x n map per head
    std::vector<double> sizes;  // token sizes used for the proportional bias
};

// Dense parameters of one transformer block; weights use the x·W convention.
struct BlockWeights {
    Matrix qkv_w;  // C x 3C, columns [Q | K | V], head h owns columns h*d..(h+1)*d of each
    std::vector<double> qkv_b;
    Matrix out_w;  // C x C
    std::vector<double> out_b;
    std::vector<double> ln1_scale, ln1_shift;
    std::vector<double> ln2_scale, ln2_shift;
    Matrix fc1_w;  // C x 4C
    std::vector<double> fc1_b;
    Matrix fc2_w;  // 4C x C
    std::vector<double> fc2_b;

    std::size_t dim() const noexcept { return qkv_w.rows(); }
};

inline Matrix layer_norm(const Matrix& x, std::span<const double> scale, std::span<const double> shift) {
    if (scale.size() != x.cols() || shift.size() != x.cols()) throw ShapeError("layer_norm: parameter length");
    Matrix out(x.rows(), x.cols());
    const double c = static_cast<double>(x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto in = x.row(i);
        double mean = 0.0;
        for (double v : in) mean += v;
        mean /= c;
        double var = 0.0;
        for (double v : in) var += (v - mean) * (v - mean);
        var /= c;
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        auto o = out.row(i);
        for (std::size_t j = 0; j < in.size(); ++j) o[j] = (in[j] - mean) * inv * scale[j] + shift[j];
    }
    return out;
}

inline double gelu(double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); }

// Number of entries a head keeps at sparsity theta: ceil(theta * n^2), with
// products that sit within rounding noise of an integer snapped to it.
inline std::size_t sparsity_budget(double theta, std::size_t n) {
    const double total = static_cast<double>(n) * static_cast<double>(n);
    const double want = theta * total;
    const double nearest = std::round(want);
    if (std::abs(want - nearest) <= 1e-9 * std::max(1.0, want)) return static_cast<std::size_t>(nearest);
    return static_cast<std::size_t>(std::ceil(want));
}

// Keeps the ceil(theta·n²) largest entries of each head's map and zeroes the
// rest. Ties at the cutoff go to the lower flat index. Rows are not
// renormalized afterwards.
inline AttentionTensor sparsify_attention(AttentionTensor a, double theta) {
    if (!(theta >= 0.0 && theta <= 1.0)) throw ArgumentError("sparsify_attention: theta outside [0, 1]");
    const std::size_t total = a.n * a.n;
    const std::size_t budget = sparsity_budget(theta, a.n);
    if (budget >= total) return a;
    for (auto& map : a.maps) {
        auto v = map.data();
        if (budget == 0) {
            std::fill(v.begin(), v.end(), 0.0);
            continue;
        }
        const double cutoff = kth_largest(v, budget);
        std::size_t above = 0;
        for (double x : v) above += x > cutoff ? 1 : 0;
        std::size_t ties_left = budget - above;
        for (double& x : v) {
            if (x > cutoff) continue;
            if (x == cutoff && ties_left > 0) {
                --ties_left;
                continue;
            }
            x = 0.0;
        }
    }
    return a;
}

struct MhsaResult {
    Matrix output;                     // n x C, after the output projection
    AttentionTensor attention;         // maps after sparsification
    std::optional<AttentionTensor> dense_attention;  // maps before sparsification, when requested
};

// Attention over already-normalized tokens x. sizes carries one entry per
// row of x; log(size_j) is added to every logit in key column j.
inline MhsaResult mhsa_forward(const Matrix& x, const BlockWeights& w, std::size_t heads,
                               std::span<const double> sizes, double theta, bool keep_dense = false) {
    const std::size_t n = x.rows(), c = x.cols();
    if (heads == 0 || c % heads != 0) {
        throw ConfigError("mhsa_forward: embed dim " + std::to_string(c) + " not divisible by " +
                          std::to_string(heads) + " heads");
    }
    if (sizes.size() != n) throw ShapeError("mhsa_forward: sizes length != token count");
    if (w.qkv_w.rows() != c || w.qkv_w.cols() != 3 * c) throw ShapeError("mhsa_forward: qkv weight shape");
    if (!(theta >= 0.0 && theta <= 1.0)) throw ArgumentError("mhsa_forward: theta outside [0, 1]");

    const std::size_t d = c / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    Matrix qkv = matmul(x, w.qkv_w);
    add_row_bias(qkv, w.qkv_b);

    std::vector<double> log_size(n);
    for (std::size_t j = 0; j < n; ++j) log_size[j] = std::log(sizes[j]);

    auto slice = [&](std::size_t offset) {
        Matrix m(n, d);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < d; ++k) m(i, k) = qkv(i, offset + k);
        }
        return m;
    };

    AttentionTensor attn{heads, n, {}, std::vector<double>(sizes.begin(), sizes.end())};
    attn.maps.reserve(heads);
    std::vector<Matrix> values;
    values.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Matrix logits = matmul_transposed(slice(h * d), slice(c + h * d));
        for (std::size_t i = 0; i < n; ++i) {
            auto r = logits.row(i);
            for (std::size_t j = 0; j < n; ++j) r[j] = r[j] * scale + log_size[j];
        }
        attn.maps.push_back(row_softmax(logits));
        values.push_back(slice(2 * c + h * d));
    }

    MhsaResult result;
    if (keep_dense) result.dense_attention = attn;
    result.attention = sparsify_attention(std::move(attn), theta);

    Matrix context(n, c);
    for (std::size_t h = 0; h < heads; ++h) {
        Matrix ctx = matmul(result.attention.maps[h], values[h]);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < d; ++k) context(i, h * d + k) = ctx(i, k);
        }
    }
    result.output = matmul(context, w.out_w);
    add_row_bias(result.output, w.out_b);
    return result;
}

inline Matrix ffn_forward(const Matrix& x, const BlockWeights& w) {
    Matrix hidden = matmul(x, w.fc1_w);
    add_row_bias(hidden, w.fc1_b);
    for (double& v : hidden.data()) v = gelu(v);
    Matrix out = matmul(hidden, w.fc2_w);
    add_row_bias(out, w.fc2_b);
    return out;
}

// s^s = s^k + alpha · Â^p s^p, the same operator that propagates features.
inline std::vector<double> update_sizes(std::span<const double> s_kept, std::span<const double> s_prop,
                                        const SparseMatrix& a_hat_p, double alpha) {
    if (a_hat_p.rows != s_kept.size() || a_hat_p.cols != s_prop.size()) {
        throw ShapeError("update_sizes: Â^p is " + std::to_string(a_hat_p.rows) + "x" + std::to_string(a_hat_p.cols) +
                         ", sizes are " + std::to_string(s_kept.size()) + "/" + std::to_string(s_prop.size()));
    }
    std::vector<double> out(s_kept.begin(), s_kept.end());
    if (alpha == 0.0 || s_prop.empty()) return out;
    const auto spread = a_hat_p.multiply(s_prop);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] + alpha * spread[i];
    return out;
}

}  // namespace gtp
