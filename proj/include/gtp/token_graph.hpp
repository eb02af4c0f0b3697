// Copyright (C) 2026 The GTP Engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Token graphs over the image-token patch grid.
//
// A graph is built once per image from the post-embedding features: an
// 8-neighbourhood spatial graph, a per-row top-M cosine semantic graph, or
// their union. It is symmetrically normalized (D^-1/2 A D^-1/2 with row-sum
// degrees) and stored as a coordinate list ordered by (row, col). As tokens
// are eliminated the graph keeps the plain submatrix over the survivors.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <iterator>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gtp/errors.hpp"
#include "gtp/linalg.hpp"

namespace gtp {

enum class GraphKind { Spatial, Semantic, Mixed, None };

inline std::string_view to_string(GraphKind k) {
    switch (k) {
        case GraphKind::Spatial: return "spatial";
        case GraphKind::Semantic: return "semantic";
        case GraphKind::Mixed: return "mixed";
        case GraphKind::None: return "none";
    }
    return "?";
}

inline GraphKind parse_graph_kind(std::string_view s) {
    if (s == "spatial") return GraphKind::Spatial;
    if (s == "semantic") return GraphKind::Semantic;
    if (s == "mixed") return GraphKind::Mixed;
    if (s == "none") return GraphKind::None;
    throw ConfigError("unknown graph kind '" + std::string(s) + "'");
}

struct Edge {
    std::size_t row;
    std::size_t col;
    auto operator<=>(const Edge&) const = default;
};

// Unweighted adjacency, edges sorted by (row, col) without duplicates.
struct RawAdjacency {
    std::size_t n = 0;
    std::vector<Edge> edges;

    bool contains(std::size_t r, std::size_t c) const {
        return std::binary_search(edges.begin(), edges.end(), Edge{r, c});
    }

    std::vector<std::size_t> degrees() const {
        std::vector<std::size_t> d(n, 0);
        for (const auto& e : edges) ++d[e.row];
        return d;
    }

    std::size_t max_row_nnz() const {
        auto d = degrees();
        return d.empty() ? 0 : *std::max_element(d.begin(), d.end());
    }

    bool symmetric() const {
        return std::all_of(edges.begin(), edges.end(), [&](const Edge& e) { return contains(e.col, e.row); });
    }

    Matrix to_dense() const {
        Matrix m(n, n);
        for (const auto& e : edges) m(e.row, e.col) = 1.0;
        return m;
    }

    bool operator==(const RawAdjacency&) const = default;
};

struct SparseEntry {
    std::size_t row;
    std::size_t col;
    double weight;
    bool operator==(const SparseEntry&) const = default;
};

// Weighted coordinate-list matrix.
struct SparseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<SparseEntry> entries;

    Matrix to_dense() const {
        Matrix m(rows, cols);
        for (const auto& e : entries) m(e.row, e.col) = e.weight;
        return m;
    }

    // this · dense
    Matrix multiply(const Matrix& dense) const {
        if (dense.rows() != cols) throw ShapeError("SparseMatrix::multiply: inner dimension mismatch");
        Matrix out(rows, dense.cols());
        for (const auto& e : entries) {
            auto o = out.row(e.row);
            auto in = dense.row(e.col);
            for (std::size_t j = 0; j < o.size(); ++j) o[j] += e.weight * in[j];
        }
        return out;
    }

    std::vector<double> multiply(std::span<const double> v) const {
        if (v.size() != cols) throw ShapeError("SparseMatrix::multiply: vector length mismatch");
        std::vector<double> out(rows, 0.0);
        for (const auto& e : entries) out[e.row] += e.weight * v[e.col];
        return out;
    }
};

// Moore neighbourhood on a row-major grid_h x grid_w patch grid.
inline RawAdjacency build_spatial(std::size_t grid_h, std::size_t grid_w) {
    if (grid_h == 0 || grid_w == 0) throw ArgumentError("build_spatial: empty grid");
    RawAdjacency adj{grid_h * grid_w, {}};
    for (std::size_t r = 0; r < grid_h; ++r) {
        for (std::size_t c = 0; c < grid_w; ++c) {
            const std::size_t i = r * grid_w + c;
            for (std::size_t rr = r == 0 ? 0 : r - 1; rr <= std::min(r + 1, grid_h - 1); ++rr) {
                for (std::size_t cc = c == 0 ? 0 : c - 1; cc <= std::min(c + 1, grid_w - 1); ++cc) {
                    const std::size_t j = rr * grid_w + cc;
                    if (j != i) adj.edges.push_back({i, j});
                }
            }
        }
    }
    return adj;
}

// Row i links to every j != i whose cosine similarity reaches T_i, the m-th
// largest similarity of token i to the others. Ties at T_i are all kept.
inline RawAdjacency build_semantic(const Matrix& x0, std::size_t m) {
    const std::size_t n = x0.rows();
    if (m < 1 || m >= n) {
        throw ArgumentError("build_semantic: m=" + std::to_string(m) + " needs 1 <= m < n=" + std::to_string(n));
    }
    Matrix sim(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double s = cosine_similarity(x0.row(i), x0.row(j));
            sim(i, j) = s;
            sim(j, i) = s;
        }
    }
    RawAdjacency adj{n, {}};
    std::vector<double> others(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t k = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) others[k++] = sim(i, j);
        }
        const double threshold = kth_largest(others, m);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i && sim(i, j) >= threshold) adj.edges.push_back({i, j});
        }
    }
    return adj;
}

inline RawAdjacency build_mixed(const RawAdjacency& spatial, const RawAdjacency& semantic) {
    if (spatial.n != semantic.n) throw ShapeError("build_mixed: node count mismatch");
    RawAdjacency adj{spatial.n, {}};
    adj.edges.reserve(spatial.edges.size() + semantic.edges.size());
    std::set_union(spatial.edges.begin(), spatial.edges.end(), semantic.edges.begin(), semantic.edges.end(),
                   std::back_inserter(adj.edges));
    return adj;
}

class TokenGraph {
public:
    TokenGraph() = default;
    TokenGraph(std::size_t grid_h, std::size_t grid_w, std::vector<SparseEntry> entries)
        : grid_h_(grid_h), grid_w_(grid_w), entries_(std::move(entries)), live_(IndexSet::range(grid_h * grid_w)) {}

    std::size_t n_tokens() const noexcept { return grid_h_ * grid_w_; }
    std::size_t grid_h() const noexcept { return grid_h_; }
    std::size_t grid_w() const noexcept { return grid_w_; }
    const std::vector<SparseEntry>& entries() const noexcept { return entries_; }
    const IndexSet& live() const noexcept { return live_; }

    // Normalized adjacency restricted to the live tokens, as a dense matrix
    // indexed by live position.
    Matrix live_dense() const {
        std::vector<std::ptrdiff_t> pos(n_tokens(), -1);
        for (std::size_t i = 0; i < live_.size(); ++i) pos[live_[i]] = static_cast<std::ptrdiff_t>(i);
        Matrix m(live_.size(), live_.size());
        for (const auto& e : entries_) {
            if (pos[e.row] >= 0 && pos[e.col] >= 0) m(pos[e.row], pos[e.col]) = e.weight;
        }
        return m;
    }

    void shrink_live(IndexSet kept) {
        for (std::size_t id : kept) {
            if (!live_.contains(id)) throw PartitionError("shrink_live: token " + std::to_string(id) + " is not live");
        }
        live_ = std::move(kept);
    }

    // "row col weight" per entry, (row, col) ascending.
    std::string dump() const {
        std::ostringstream os;
        char buf[96];
        for (const auto& e : entries_) {
            std::snprintf(buf, sizeof buf, "%zu %zu %.17g\n", e.row, e.col, e.weight);
            os << buf;
        }
        return os.str();
    }

private:
    std::size_t grid_h_ = 0;
    std::size_t grid_w_ = 0;
    std::vector<SparseEntry> entries_;
    IndexSet live_;
};

// Zero-degree nodes get a zero inverse square root, so their rows and
// columns vanish instead of dividing by zero.
inline TokenGraph normalize(const RawAdjacency& adj, std::size_t grid_h, std::size_t grid_w) {
    if (grid_h * grid_w != adj.n) throw ShapeError("normalize: grid does not match node count");
    const auto deg = adj.degrees();
    std::vector<double> inv_sqrt(adj.n, 0.0);
    for (std::size_t i = 0; i < adj.n; ++i) {
        if (deg[i] > 0) inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(deg[i]));
    }
    std::vector<SparseEntry> entries;
    entries.reserve(adj.edges.size());
    for (const auto& e : adj.edges) {
        if (e.row == e.col) throw ArgumentError("normalize: self-loop at node " + std::to_string(e.row));
        const double w = inv_sqrt[e.row] * inv_sqrt[e.col];
        if (w != 0.0) entries.push_back({e.row, e.col, w});
    }
    return TokenGraph(grid_h, grid_w, std::move(entries));
}

inline TokenGraph normalize(const RawAdjacency& adj) { return normalize(adj, 1, adj.n); }

// Â^p: rows follow `kept`, columns follow `propagated`.
inline SparseMatrix extract_propagation_view(const TokenGraph& g, const IndexSet& kept, const IndexSet& propagated) {
    const auto& live = g.live();
    if (kept.size() + propagated.size() != live.size()) {
        throw PartitionError("extract_propagation_view: partition size " + std::to_string(kept.size()) + "+" +
                             std::to_string(propagated.size()) + " != live " + std::to_string(live.size()));
    }
    std::vector<std::size_t> merged;
    merged.reserve(live.size());
    std::merge(kept.begin(), kept.end(), propagated.begin(), propagated.end(), std::back_inserter(merged));
    if (merged != live.values()) throw PartitionError("extract_propagation_view: partition does not match live set");

    constexpr std::size_t absent = static_cast<std::size_t>(-1);
    std::vector<std::size_t> kept_pos(g.n_tokens(), absent), prop_pos(g.n_tokens(), absent);
    for (std::size_t i = 0; i < kept.size(); ++i) kept_pos[kept[i]] = i;
    for (std::size_t i = 0; i < propagated.size(); ++i) prop_pos[propagated[i]] = i;

    SparseMatrix view{kept.size(), propagated.size(), {}};
    if (propagated.empty()) return view;
    for (const auto& e : g.entries()) {
        if (kept_pos[e.row] != absent && prop_pos[e.col] != absent) {
            view.entries.push_back({kept_pos[e.row], prop_pos[e.col], e.weight});
        }
    }
    return view;
}

// Builds the graph of the requested kind over the image-token rows of x0.
inline TokenGraph build_token_graph(GraphKind kind, std::size_t grid_h, std::size_t grid_w, const Matrix& x0,
                                    std::size_t m_neighbors) {
    if (x0.rows() != grid_h * grid_w) throw ShapeError("build_token_graph: feature rows do not match grid");
    switch (kind) {
        case GraphKind::Spatial: return normalize(build_spatial(grid_h, grid_w), grid_h, grid_w);
        case GraphKind::Semantic: return normalize(build_semantic(x0, m_neighbors), grid_h, grid_w);
        case GraphKind::Mixed:
            return normalize(build_mixed(build_spatial(grid_h, grid_w), build_semantic(x0, m_neighbors)), grid_h,
                             grid_w);
        case GraphKind::None: return normalize(RawAdjacency{grid_h * grid_w, {}}, grid_h, grid_w);
    }
    throw ConfigError("build_token_graph: bad graph kind");
}

}  // namespace gtp
