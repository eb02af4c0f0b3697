// Copyright (C) 2026 The GTP Engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Wall-clock comparison of one layer's token reduction: score + select +
// propagate against bipartite matching + merging, on identical inputs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "gtp/complexity.hpp"
#include "gtp/gtp_reduction.hpp"
#include "gtp/rng.hpp"
#include "gtp/token_graph.hpp"
#include "json.hpp"

namespace gtp {

struct BenchSpec {
    std::size_t grid = 28;  // image tokens = grid², plus [CLS]
    std::size_t channels = 768;
    std::size_t heads = 12;
    std::size_t depth = 12;  // only for the analytical totals
    std::size_t p = 20;
    std::size_t m_neighbors = 8;
    double alpha = 0.1;
    std::size_t repeats = 30;
    std::uint64_t seed = 0;
};

struct TimingStats {
    double median_us = 0.0;
    double mad_us = 0.0;  // median absolute deviation
    double min_us = 0.0;
    double max_us = 0.0;
    std::vector<double> samples_us;
};

struct BenchReport {
    BenchSpec spec;
    std::size_t tokens = 0;
    TimingStats gtp;
    TimingStats tome;
    double analytic_gtp = 0.0;  // whole-network extra MACs
    double analytic_tome = 0.0;
};

namespace detail {

inline double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size() / 2;
    return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

inline TimingStats summarize(std::vector<double> samples) {
    TimingStats t;
    t.median_us = median_of(samples);
    std::vector<double> dev;
    for (double s : samples) dev.push_back(std::abs(s - t.median_us));
    t.mad_us = median_of(dev);
    t.min_us = *std::min_element(samples.begin(), samples.end());
    t.max_us = *std::max_element(samples.begin(), samples.end());
    t.samples_us = std::move(samples);
    return t;
}

// Defeats dead-code elimination of benchmarked results.
inline volatile double bench_sink = 0.0;

}  // namespace detail

inline BenchReport bench_overhead(const BenchSpec& spec) {
    if (spec.repeats < 10) throw ConfigError("bench-overhead: repeats must be >= 10");
    const std::size_t n_img = spec.grid * spec.grid, n = n_img + 1, c = spec.channels;
    if (spec.p >= n_img / 2) throw ConfigError("bench-overhead: p too large for the token count");

    SplitMix64 rng = SplitMix64::substream(spec.seed, streams::bench);
    Matrix x(n, c);
    for (double& v : x.data()) v = rng.uniform(-1.0, 1.0);
    AttentionTensor attn{spec.heads, n, {}, std::vector<double>(n, 1.0)};
    for (std::size_t h = 0; h < spec.heads; ++h) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            double total = 0.0;
            for (std::size_t j = 0; j < n; ++j) total += (m(i, j) = std::exp(rng.uniform(-4.0, 4.0)));
            for (std::size_t j = 0; j < n; ++j) m(i, j) /= total;
        }
        attn.maps.push_back(std::move(m));
    }
    std::vector<std::size_t> image_ids(n_img);
    std::iota(image_ids.begin(), image_ids.end(), std::size_t{1});
    const Matrix image_rows = select_rows(x, IndexSet(std::move(image_ids)));
    const TokenGraph graph =
        build_token_graph(GraphKind::Mixed, spec.grid, spec.grid, image_rows, spec.m_neighbors);
    const std::vector<double> sizes(n, 1.0);
    const std::optional<std::size_t> cls = 0;

    using clock = std::chrono::steady_clock;
    auto micros = [](clock::duration d) { return std::chrono::duration<double, std::micro>(d).count(); };

    std::vector<double> gtp_samples, tome_samples;
    for (std::size_t r = 0; r < spec.repeats; ++r) {
        {
            TokenGraph g = graph;
            const auto t0 = clock::now();
            const ReductionPlan plan = select_tokens(score_regeneration(attn), score_broadcasting(attn), spec.p, cls);
            std::vector<std::size_t> kept_ids, prop_ids;
            for (std::size_t k : plan.kept_image()) kept_ids.push_back(k - 1);
            for (std::size_t k : plan.propagated) prop_ids.push_back(k - 1);
            IndexSet kept(std::move(kept_ids));
            const SparseMatrix a_hat_p = extract_propagation_view(g, kept, IndexSet(std::move(prop_ids)));
            const Matrix out = propagate(x, plan, a_hat_p, spec.alpha);
            g.shrink_live(std::move(kept));
            gtp_samples.push_back(micros(clock::now() - t0));
            detail::bench_sink = detail::bench_sink + out(0, 0);
        }
        {
            const auto t0 = clock::now();
            const ReductionPlan plan = select_bipartite(x, spec.p, cls);
            const MergeResult merged = merge_tokens(x, sizes, plan);
            tome_samples.push_back(micros(clock::now() - t0));
            detail::bench_sink = detail::bench_sink + merged.tokens(0, 0);
        }
    }

    BenchReport rep;
    rep.spec = spec;
    rep.tokens = n;
    rep.gtp = detail::summarize(std::move(gtp_samples));
    rep.tome = detail::summarize(std::move(tome_samples));
    const auto nn = static_cast<std::int64_t>(n), l = static_cast<std::int64_t>(spec.depth),
               h = static_cast<std::int64_t>(spec.heads), cc = static_cast<std::int64_t>(c),
               m = static_cast<std::int64_t>(spec.p);
    if (l * m < nn) {
        rep.analytic_gtp = complexity::overhead_gtp(nn, l, h, cc, m);
        rep.analytic_tome = complexity::overhead_tome(nn, l, cc, m);
    }
    return rep;
}

inline nlohmann::ordered_json to_json(const BenchReport& r) {
    auto stats = [](const TimingStats& t) {
        return nlohmann::ordered_json{{"median_us", t.median_us},
                                      {"mad_us", t.mad_us},
                                      {"min_us", t.min_us},
                                      {"max_us", t.max_us}};
    };
    nlohmann::ordered_json j;
    j["tokens"] = r.tokens;
    j["channels"] = r.spec.channels;
    j["heads"] = r.spec.heads;
    j["p"] = r.spec.p;
    j["repeats"] = r.spec.repeats;
    j["gtp"] = stats(r.gtp);
    j["tome"] = stats(r.tome);
    j["analytic_overhead_mmacs"] = {{"gtp", r.analytic_gtp / 1e6}, {"tome", r.analytic_tome / 1e6}};
    return j;
}

}  // namespace gtp
