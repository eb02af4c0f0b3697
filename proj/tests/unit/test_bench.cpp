// Copyright (C) 2026 The GTP Engine Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "gtp/bench.hpp"

namespace gtp {
namespace {

BenchSpec small_spec() {
    BenchSpec s;
    s.grid = 8;
    s.channels = 32;
    s.heads = 4;
    s.depth = 4;
    s.p = 4;
    s.repeats = 10;
    return s;
}

TEST(Bench, ReportsStatisticsForBothSchemes) {
    const auto r = bench_overhead(small_spec());
    EXPECT_EQ(r.tokens, 65u);
    EXPECT_EQ(r.gtp.samples_us.size(), 10u);
    EXPECT_EQ(r.tome.samples_us.size(), 10u);
    EXPECT_LE(r.gtp.min_us, r.gtp.median_us);
    EXPECT_LE(r.gtp.median_us, r.gtp.max_us);
    EXPECT_GE(r.tome.mad_us, 0.0);
    EXPECT_EQ(r.analytic_gtp, complexity::overhead_gtp(65, 4, 4, 32, 4));
    EXPECT_EQ(r.analytic_tome, complexity::overhead_tome(65, 4, 32, 4));
}

TEST(Bench, ZeroRemovalRuns) {
    BenchSpec s = small_spec();
    s.p = 0;
    const auto r = bench_overhead(s);
    EXPECT_EQ(r.gtp.samples_us.size(), 10u);
}

TEST(Bench, RejectsTooFewRepeatsAndOversizedP) {
    BenchSpec s = small_spec();
    s.repeats = 9;
    EXPECT_THROW(bench_overhead(s), ConfigError);
    s = small_spec();
    s.p = 32;
    EXPECT_THROW(bench_overhead(s), ConfigError);
}

TEST(Bench, JsonHasStableKeys) {
    const auto j = to_json(bench_overhead(small_spec()));
    EXPECT_EQ(j.begin().key(), "tokens");
    EXPECT_TRUE(j["gtp"].contains("median_us"));
    EXPECT_TRUE(j["analytic_overhead_mmacs"].contains("tome"));
}

TEST(Median, OddAndEven) {
    EXPECT_EQ(detail::median_of({3, 1, 2}), 2.0);
    EXPECT_EQ(detail::median_of({4, 1, 3, 2}), 2.5);
    EXPECT_EQ(detail::summarize({1, 2, 3, 10}).mad_us, 1.0);
}

}  // namespace
}  // namespace gtp
