// Copyright (C) 2026 The GTP Engine Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "gtp/rng.hpp"
#include "gtp/token_graph.hpp"
#include "support/oracles.hpp"

namespace gtp {
namespace {

TEST(Spatial, DegreesOnThreeByThree) {
    const auto adj = build_spatial(3, 3);
    const auto d = adj.degrees();
    EXPECT_EQ(d[4], 8u);
    EXPECT_EQ(d[0], 3u);
    EXPECT_EQ(d[1], 5u);
    EXPECT_EQ(d[8], 3u);
    EXPECT_TRUE(adj.symmetric());
    EXPECT_EQ(adj.to_dense(), oracle::from_dense(oracle::spatial_adjacency(3, 3)));
}

TEST(Spatial, FourteenGridHasMaxDegreeEight) {
    const auto adj = build_spatial(14, 14);
    EXPECT_EQ(adj.max_row_nnz(), 8u);
    EXPECT_TRUE(std::is_sorted(adj.edges.begin(), adj.edges.end()));
    EXPECT_EQ(adj.to_dense(), oracle::from_dense(oracle::spatial_adjacency(14, 14)));
}

TEST(Spatial, SingleRowIsAPath) {
    const auto adj = build_spatial(1, 4);
    EXPECT_EQ(adj.degrees(), (std::vector<std::size_t>{1, 2, 2, 1}));
}

TEST(Semantic, MatchesBruteForceTopM) {
    SplitMix64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 3 + rng.next() % 20, m = 1 + rng.next() % (n - 1);
        const Matrix x = oracle::random_matrix(rng, n, 5);
        const auto adj = build_semantic(x, m);
        EXPECT_EQ(adj.to_dense(), oracle::from_dense(oracle::semantic_adjacency(x, m))) << "trial " << trial;
        for (std::size_t d : adj.degrees()) EXPECT_GE(d, m);
    }
}

TEST(Semantic, IdenticalTokensKeepAllTies) {
    const Matrix x(6, 3, 1.0);
    const auto adj = build_semantic(x, 2);
    for (std::size_t d : adj.degrees()) EXPECT_EQ(d, 5u);
}

TEST(Semantic, NotSymmetrizedInGeneral) {
    // 0 is closest to 1, but 1 and 2 are each other's nearest.
    const Matrix x{{1.0, 0.0}, {0.8, 0.6}, {0.7, 0.72}};
    const auto adj = build_semantic(x, 1);
    EXPECT_TRUE(adj.contains(0, 1));
    EXPECT_FALSE(adj.contains(1, 0));
    EXPECT_FALSE(adj.symmetric());
}

TEST(Semantic, RejectsBadNeighbourCount) {
    const Matrix x(4, 2, 1.0);
    EXPECT_THROW(build_semantic(x, 0), ArgumentError);
    EXPECT_THROW(build_semantic(x, 4), ArgumentError);
    EXPECT_THROW(build_semantic(Matrix(3, 2, 0.0), 1), DegenerateInputError);
}

TEST(Mixed, IsEdgeUnion) {
    SplitMix64 rng(6);
    const Matrix x = oracle::random_matrix(rng, 16, 4);
    const auto sp = build_spatial(4, 4), se = build_semantic(x, 3);
    const auto mixed = build_mixed(sp, se);
    for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t j = 0; j < 16; ++j)
            EXPECT_EQ(mixed.contains(i, j), sp.contains(i, j) || se.contains(i, j));
    EXPECT_TRUE(std::is_sorted(mixed.edges.begin(), mixed.edges.end()));
}

TEST(Normalize, TwoNodeGraph) {
    const TokenGraph g = normalize(RawAdjacency{2, {{0, 1}, {1, 0}}});
    EXPECT_EQ(g.entries(), (std::vector<SparseEntry>{{0, 1, 1.0}, {1, 0, 1.0}}));
}

TEST(Normalize, StarGraph) {
    // center 0 with four leaves: weight 1/sqrt(4·1)
    RawAdjacency star{5, {}};
    for (std::size_t leaf = 1; leaf < 5; ++leaf) star.edges.push_back({0, leaf});
    for (std::size_t leaf = 1; leaf < 5; ++leaf) star.edges.push_back({leaf, 0});
    std::sort(star.edges.begin(), star.edges.end());
    for (const auto& e : normalize(star).entries()) EXPECT_DOUBLE_EQ(e.weight, 0.5);
}

TEST(Normalize, IsolatedNodeVanishes) {
    const TokenGraph g = normalize(RawAdjacency{3, {{0, 1}, {1, 0}}});
    EXPECT_EQ(g.entries().size(), 2u);
    EXPECT_EQ(g.live_dense()(2, 2), 0.0);
}

TEST(Normalize, RejectsSelfLoop) { EXPECT_THROW(normalize(RawAdjacency{2, {{1, 1}}}), ArgumentError); }

TEST(Normalize, MatchesDenseOracle) {
    SplitMix64 rng(7);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t gh = 1 + rng.next() % 5, gw = 2 + rng.next() % 5, n = gh * gw;
        const Matrix x = oracle::random_matrix(rng, n, 4);
        const std::size_t m = 1 + rng.next() % (n - 1);
        const TokenGraph g = build_token_graph(GraphKind::Mixed, gh, gw, x, m);
        oracle::Dense a = oracle::spatial_adjacency(gh, gw);
        const auto s = oracle::semantic_adjacency(x, m);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) a[i][j] = std::max(a[i][j], s[i][j]);
        EXPECT_LE(oracle::max_abs_diff(g.live_dense(), oracle::from_dense(oracle::normalize(a))), 1e-12);
    }
}

TEST(Normalize, SpectrumBoundedForSymmetricGraph) {
    // symmetric normalization of a symmetric graph has spectral radius <= 1
    const TokenGraph g = build_token_graph(GraphKind::Spatial, 6, 6, Matrix(36, 1, 1.0), 1);
    const Matrix a = g.live_dense();
    std::vector<double> v(36, 1.0);
    double norm = 0.0;
    for (int it = 0; it < 200; ++it) {
        std::vector<double> w(36, 0.0);
        for (std::size_t i = 0; i < 36; ++i)
            for (std::size_t j = 0; j < 36; ++j) w[i] += a(i, j) * v[j];
        norm = std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0));
        for (std::size_t i = 0; i < 36; ++i) v[i] = w[i] / norm;
    }
    EXPECT_LE(norm, 1.0 + 1e-9);
}

TEST(Extract, PathGraphView) {
    // path 0-1-2-3, keep {0, 2}, propagate {1, 3}
    const TokenGraph g = build_token_graph(GraphKind::Spatial, 1, 4, Matrix(4, 1, 1.0), 1);
    const SparseMatrix v = extract_propagation_view(g, {0, 2}, {1, 3});
    const double w01 = 1.0 / std::sqrt(2.0), w21 = 0.5, w23 = 1.0 / std::sqrt(2.0);
    EXPECT_EQ(v.rows, 2u);
    EXPECT_EQ(v.cols, 2u);
    const Matrix d = v.to_dense();
    EXPECT_DOUBLE_EQ(d(0, 0), w01);
    EXPECT_DOUBLE_EQ(d(0, 1), 0.0);
    EXPECT_DOUBLE_EQ(d(1, 0), w21);
    EXPECT_DOUBLE_EQ(d(1, 1), w23);
}

TEST(Extract, RejectsInvalidPartitions) {
    TokenGraph g = build_token_graph(GraphKind::Spatial, 2, 2, Matrix(4, 1, 1.0), 1);
    EXPECT_THROW(extract_propagation_view(g, {0, 1}, {1, 3}), PartitionError);
    EXPECT_THROW(extract_propagation_view(g, {0}, {1, 2}), PartitionError);
    g.shrink_live({0, 1, 3});
    EXPECT_THROW(extract_propagation_view(g, {0, 2}, {1}), PartitionError);
    EXPECT_THROW(g.shrink_live({2}), PartitionError);
}

TEST(Extract, RepeatedShrinkOverTwelveLayers) {
    SplitMix64 rng(8);
    const Matrix x = oracle::random_matrix(rng, 196, 8);
    TokenGraph g = build_token_graph(GraphKind::Mixed, 14, 14, x, 8);
    const Matrix full = g.live_dense();
    for (int layer = 0; layer < 12; ++layer) {
        std::vector<std::size_t> live = g.live().values();
        for (std::size_t i = live.size() - 1; i > 0; --i) std::swap(live[i], live[rng.next() % (i + 1)]);
        const IndexSet prop = IndexSet::from_unsorted({live.begin(), live.begin() + 8});
        const IndexSet kept = IndexSet::from_unsorted({live.begin() + 8, live.end()});
        const Matrix view = extract_propagation_view(g, kept, prop).to_dense();
        for (std::size_t r = 0; r < kept.size(); ++r)
            for (std::size_t c = 0; c < prop.size(); ++c) ASSERT_EQ(view(r, c), full(kept[r], prop[c]));
        g.shrink_live(kept);
        ASSERT_EQ(g.live().size(), 196u - 8u * static_cast<std::size_t>(layer + 1));
    }
}

TEST(TokenGraph, DumpListsEntriesInRowColumnOrder) {
    const TokenGraph g = build_token_graph(GraphKind::Spatial, 1, 3, Matrix(3, 1, 1.0), 1);
    EXPECT_EQ(g.dump(),
              "0 1 0.70710678118654746\n"
              "1 0 0.70710678118654746\n"
              "1 2 0.70710678118654746\n"
              "2 1 0.70710678118654746\n");
}

TEST(GraphKind, ParseAndPrint) {
    for (auto k : {GraphKind::Spatial, GraphKind::Semantic, GraphKind::Mixed, GraphKind::None})
        EXPECT_EQ(parse_graph_kind(to_string(k)), k);
    EXPECT_THROW(parse_graph_kind("dense"), ConfigError);
}

}  // namespace
}  // namespace gtp
