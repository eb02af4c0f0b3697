// Copyright (C) 2026 The GTP Engine Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "gtp/gtp_reduction.hpp"
#include "gtp/rng.hpp"
#include "support/oracles.hpp"

namespace gtp {
namespace {

constexpr std::optional<std::size_t> kNoCls = std::nullopt;

AttentionTensor two_head_example() {
    return {2,
            3,
            {Matrix{{0.5, 0.3, 0.2}, {0.1, 0.6, 0.3}, {0.4, 0.4, 0.2}},
             Matrix{{0.2, 0.2, 0.6}, {0.3, 0.3, 0.4}, {0.1, 0.1, 0.8}}},
            {1, 1, 1}};
}

TEST(Scores, RegenerationIsDiagonalAggregate) {
    const auto a = two_head_example();
    EXPECT_EQ(score_regeneration(a), (std::vector<double>{0.5, 0.6, 0.8}));
    const auto mean = score_regeneration(a, Aggregator::Mean);
    EXPECT_DOUBLE_EQ(mean[0], 0.35);
    EXPECT_DOUBLE_EQ(mean[1], 0.45);
    EXPECT_DOUBLE_EQ(mean[2], 0.5);
}

TEST(Scores, BroadcastingSumsColumnsPerHeadBeforeAggregating) {
    const auto a = two_head_example();
    // head 0 off-diagonal column sums: 0.5, 0.7, 0.5; head 1: 0.4, 0.3, 1.0
    const auto psi = score_broadcasting(a);
    EXPECT_DOUBLE_EQ(psi[0], 0.5);
    EXPECT_DOUBLE_EQ(psi[1], 0.7);
    EXPECT_DOUBLE_EQ(psi[2], 1.0);
    const auto mean = score_broadcasting(a, Aggregator::Mean);
    EXPECT_DOUBLE_EQ(mean[0], 0.45);
    EXPECT_DOUBLE_EQ(mean[1], 0.5);
    EXPECT_DOUBLE_EQ(mean[2], 0.75);
}

TEST(Scores, MatchBruteForceOracles) {
    SplitMix64 rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.next() % 15, h = 1 + rng.next() % 6;
        const auto a = oracle::random_attention(rng, h, n);
        for (bool use_max : {true, false}) {
            const Aggregator agg = use_max ? Aggregator::Max : Aggregator::Mean;
            const auto g = score_regeneration(a, agg), p = score_broadcasting(a, agg);
            const auto go = oracle::gamma(a.maps, use_max), po = oracle::psi(a.maps, use_max);
            for (std::size_t i = 0; i < n; ++i) {
                EXPECT_NEAR(g[i], go[i], 1e-12);
                EXPECT_NEAR(p[i], po[i], 1e-12);
            }
        }
    }
}

TEST(Select, LowestProductIsPropagated) {
    const std::vector<double> gamma{0.10, 0.09, 0.20}, psi{1.0, 1.0, 1.0};
    const auto plan = select_tokens(gamma, psi, 1, kNoCls);
    EXPECT_EQ(plan.kept, (IndexSet{0, 2}));
    EXPECT_EQ(plan.propagated, (IndexSet{1}));
}

TEST(Select, TiesPropagateTheHigherIndex) {
    const auto plan = select_by_scores({0.3, 0.3, 0.3, 0.3}, 2, kNoCls, Strategy::DiagAttn);
    EXPECT_EQ(plan.kept, (IndexSet{0, 1}));
    EXPECT_EQ(plan.propagated, (IndexSet{2, 3}));
}

TEST(Select, ClsIsNeverScoredAndAlwaysKept) {
    const auto plan = select_by_scores({-100.0, 0.5, 0.1, 0.9}, 2, 0, Strategy::MixedAttn);
    EXPECT_EQ(plan.kept, (IndexSet{0, 3}));
    EXPECT_EQ(plan.propagated, (IndexSet{1, 2}));
    EXPECT_EQ(plan.kept_image(), (IndexSet{3}));
    EXPECT_EQ(plan.scores[0], 0.0);
}

TEST(Select, RejectsExhaustingScoreableTokens) {
    EXPECT_THROW(select_by_scores({0.1, 0.2, 0.3}, 2, 0, Strategy::MixedAttn), ConfigError);
    EXPECT_NO_THROW(select_by_scores({0.1, 0.2, 0.3}, 2, kNoCls, Strategy::MixedAttn));
    EXPECT_THROW(select_tokens(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}, 0, kNoCls), ShapeError);
}

TEST(Select, RescalingScoresPreservesPartition) {
    SplitMix64 rng(32);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 5 + rng.next() % 40, p = 1 + rng.next() % (n - 2);
        const auto a = oracle::random_attention(rng, 4, n);
        auto g = score_regeneration(a), psi = score_broadcasting(a);
        const auto base = select_tokens(g, psi, p, 0);
        for (double& v : g) v *= 3.7;
        EXPECT_EQ(select_tokens(g, psi, p, 0).kept, base.kept);
        for (double& v : psi) v *= 0.01;
        EXPECT_EQ(select_tokens(g, psi, p, 0).kept, base.kept);
    }
}

TEST(Select, DiagonalShiftPreservesRegenerationRanking) {
    SplitMix64 rng(33);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 5 + rng.next() % 40, p = 1 + rng.next() % (n - 2);
        auto a = oracle::random_attention(rng, 3, n);
        const auto base = select_by_scores(score_regeneration(a), p, kNoCls, Strategy::DiagAttn);
        for (auto& m : a.maps)
            for (std::size_t i = 0; i < n; ++i) m(i, i) -= 1.0;
        EXPECT_EQ(select_by_scores(score_regeneration(a), p, kNoCls, Strategy::DiagAttn).kept, base.kept);
    }
}

TEST(Baselines, ClsAttentionNeedsCls) {
    const auto a = two_head_example();
    EXPECT_THROW(select_tokens_baseline(Strategy::CLSAttn, a, Matrix(3, 2, 1.0), 1, kNoCls, 0), StrategyError);
    // [CLS] attention under max: token 1 gets 0.3, token 2 gets 0.6
    const auto plan = select_tokens_baseline(Strategy::CLSAttn, a, Matrix(3, 2, 1.0), 1, 0, 0);
    EXPECT_EQ(plan.propagated, (IndexSet{1}));
}

TEST(Baselines, RandomIsDeterministicPerSeed) {
    SplitMix64 rng(34);
    const auto a = oracle::random_attention(rng, 2, 30);
    const Matrix x(30, 2, 1.0);
    const auto p1 = select_tokens_baseline(Strategy::Random, a, x, 10, 0, 1234);
    const auto p2 = select_tokens_baseline(Strategy::Random, a, x, 10, 0, 1234);
    const auto p3 = select_tokens_baseline(Strategy::Random, a, x, 10, 0, 1235);
    EXPECT_EQ(p1.kept, p2.kept);
    EXPECT_NE(p1.kept, p3.kept);
    EXPECT_TRUE(p1.kept.contains(0));
}

TEST(Baselines, DiagAndBroadUseSingleScores) {
    const auto a = two_head_example();
    const Matrix x(3, 2, 1.0);
    EXPECT_EQ(select_tokens_baseline(Strategy::DiagAttn, a, x, 1, kNoCls, 0).propagated, (IndexSet{0}));
    EXPECT_EQ(select_tokens_baseline(Strategy::BroadAttn, a, x, 1, kNoCls, 0).propagated, (IndexSet{0}));
    EXPECT_EQ(parse_strategy("broad_attn"), Strategy::BroadAttn);
    EXPECT_THROW(parse_strategy("tome"), ConfigError);
}

TEST(Bipartite, IdenticalPairMergesFirst) {
    // sources 0, 2; destinations 1, 3
    const Matrix x{{1, 0}, {1, 0}, {0, 1}, {-1, 1}};
    const auto plan = select_bipartite(x, 1, kNoCls);
    EXPECT_EQ(plan.propagated, (IndexSet{0}));
    EXPECT_EQ(plan.merge_into, (std::vector<std::size_t>{1}));
    EXPECT_EQ(plan.matching_macs, 2u * 2u * 2u);
    const auto merged = merge_tokens(x, std::vector<double>(4, 1.0), plan);
    EXPECT_EQ(merged.tokens, (Matrix{{1, 0}, {0, 1}, {-1, 1}}));
    EXPECT_EQ(merged.sizes, (std::vector<double>{2, 1, 1}));
}

TEST(Bipartite, MatchingCostIsQuarterNSquaredC) {
    SplitMix64 rng(35);
    const Matrix x = oracle::random_matrix(rng, 41, 16);  // [CLS] + 40
    const auto plan = select_bipartite(x, 5, 0);
    EXPECT_EQ(plan.matching_macs, 40u * 40u * 16u / 4u);
    EXPECT_TRUE(plan.kept.contains(0));
    EXPECT_EQ(plan.kept.size(), 36u);
}

TEST(Bipartite, MergePreservesSizeMassAndUntouchedRows) {
    SplitMix64 rng(36);
    const Matrix x = oracle::random_matrix(rng, 20, 6);
    std::vector<double> sizes(20);
    for (double& s : sizes) s = rng.uniform(1.0, 3.0);
    const auto plan = select_bipartite(x, 6, kNoCls);
    const auto merged = merge_tokens(x, sizes, plan);
    double before = 0, after = 0;
    for (double s : sizes) before += s;
    for (double s : merged.sizes) after += s;
    EXPECT_NEAR(before, after, 1e-12);
    for (std::size_t t = 0; t < plan.kept.size(); ++t) {
        const std::size_t i = plan.kept[t];
        if (std::find(plan.merge_into.begin(), plan.merge_into.end(), i) == plan.merge_into.end()) {
            for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(merged.tokens(t, j), x(i, j));
        }
    }
}

TEST(Propagate, PathGraphHandExample) {
    const TokenGraph g = build_token_graph(GraphKind::Spatial, 1, 3, Matrix(3, 1, 1.0), 1);
    const Matrix x{{1}, {2}, {3}};
    const auto plan = select_by_scores({0.9, 0.1, 0.8}, 1, kNoCls, Strategy::MixedAttn);
    const Matrix out = propagate(x, plan, extract_propagation_view(g, plan.kept, plan.propagated), 0.5);
    const double w = 1.0 / std::sqrt(2.0);
    EXPECT_DOUBLE_EQ(out(0, 0), 1.0 + 0.5 * w * 2.0);
    EXPECT_DOUBLE_EQ(out(1, 0), 3.0 + 0.5 * w * 2.0);
}

TEST(Propagate, ClsPassesThroughUnchanged) {
    SplitMix64 rng(37);
    const Matrix x = oracle::random_matrix(rng, 10, 4);  // [CLS] + 3x3 grid
    const TokenGraph g = build_token_graph(GraphKind::Spatial, 3, 3, Matrix(9, 1, 1.0), 1);
    const auto plan = select_by_scores({0, 5, 4, 3, 2, 1, 9, 8, 7, 6}, 3, 0, Strategy::MixedAttn);
    std::vector<std::size_t> k, p;
    for (std::size_t r : plan.kept_image()) k.push_back(r - 1);
    for (std::size_t r : plan.propagated) p.push_back(r - 1);
    const Matrix out = propagate(x, plan, extract_propagation_view(g, IndexSet(k), IndexSet(p)), 0.3);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(out(0, j), x(0, j));
}

TEST(Propagate, AlphaZeroIsRowSelectionBitwise) {
    SplitMix64 rng(38);
    const Matrix x = oracle::random_matrix(rng, 16, 5);
    const TokenGraph g = build_token_graph(GraphKind::Mixed, 4, 4, x, 3);
    std::vector<double> keys(16);
    for (double& k : keys) k = rng.uniform();
    const auto plan = select_by_scores(keys, 5, kNoCls, Strategy::MixedAttn);
    EXPECT_EQ(propagate(x, plan, extract_propagation_view(g, plan.kept, plan.propagated), 0.0),
              select_rows(x, plan.kept));
}

TEST(Propagate, MatchesDenseOracle) {
    SplitMix64 rng(39);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t gh = 2 + rng.next() % 4, gw = 2 + rng.next() % 4, n = gh * gw;
        const Matrix x = oracle::random_matrix(rng, n, 7);
        const TokenGraph g = build_token_graph(GraphKind::Spatial, gh, gw, x, 1);
        std::vector<double> keys(n);
        for (double& k : keys) k = rng.uniform();
        const auto plan = select_by_scores(keys, 1 + rng.next() % (n - 1), kNoCls, Strategy::MixedAttn);
        const double alpha = rng.uniform();
        const Matrix got = propagate(x, plan, extract_propagation_view(g, plan.kept, plan.propagated), alpha);
        const Matrix want = oracle::propagate(x, oracle::normalize(oracle::spatial_adjacency(gh, gw)),
                                              plan.kept.values(), plan.propagated.values(), alpha);
        EXPECT_LE(oracle::max_abs_diff(got, want), 1e-12);
    }
}

TEST(Propagate, SizeUpdateIsTheSameOperatorInOneDimension) {
    SplitMix64 rng(40);
    const Matrix x = oracle::random_matrix(rng, 25, 3);
    const TokenGraph g = build_token_graph(GraphKind::Mixed, 5, 5, x, 4);
    std::vector<double> keys(25), sizes(25);
    for (double& k : keys) k = rng.uniform();
    for (double& s : sizes) s = rng.uniform(1.0, 4.0);
    const auto plan = select_by_scores(keys, 7, kNoCls, Strategy::MixedAttn);
    const auto view = extract_propagation_view(g, plan.kept, plan.propagated);
    const Matrix as_column = propagate(Matrix(25, 1, sizes), plan, view, 0.2);
    std::vector<double> sk, sp;
    for (std::size_t i : plan.kept) sk.push_back(sizes[i]);
    for (std::size_t i : plan.propagated) sp.push_back(sizes[i]);
    const auto updated = update_sizes(sk, sp, view, 0.2);
    for (std::size_t i = 0; i < updated.size(); ++i) EXPECT_EQ(as_column(i, 0), updated[i]);
}

TEST(Propagate, RejectsMismatchedView) {
    const Matrix x(4, 2, 1.0);
    const auto plan = select_by_scores({1, 2, 3, 4}, 2, kNoCls, Strategy::MixedAttn);
    EXPECT_THROW(propagate(x, plan, SparseMatrix{3, 2, {}}, 0.1), ShapeError);
}

TEST(Plan, CsvLine) {
    const auto plan = select_by_scores({0.0, 0.5, 0.25}, 1, 0, Strategy::MixedAttn);
    EXPECT_EQ(plan.csv_line(3), "3,\"0 1\",\"2\",\"0 0.5 0.25\"");
}

}  // namespace
}  // namespace gtp
