// Copyright (C) 2026 The GTP Engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Multiply-accumulate (MAC) accounting for the backbone under a token
// schedule, and the closed-form extra cost of the two reduction schemes.
// Softmax, LayerNorm, GELU and bias adds are not counted.
//
// Symbols: n total tokens, l depth, h heads, c feature dim, m tokens removed
// per layer, N_l = n - (l-1)m tokens entering block l.

#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "gtp/errors.hpp"
#include "gtp/model_config.hpp"
#include "json.hpp"

namespace gtp::complexity {

namespace detail {

inline void check_schedule(std::int64_t n, std::int64_t l, std::int64_t m) {
    if (n <= 0 || l <= 0 || m < 0) throw ConfigError("complexity: n and l must be positive, m non-negative");
    if (l * m >= n) throw ConfigError("complexity: infeasible schedule, l*m >= n");
}

}  // namespace detail

// Graph construction n²c once, token selection h·N_l and propagation
// (N_l - m)·m·c per layer, in closed form:
//   n²c + lhn + lmnc - ½(l²-l)hm - ½(l+l²)m²c
inline double overhead_gtp(std::int64_t n, std::int64_t l, std::int64_t h, std::int64_t c, std::int64_t m) {
    detail::check_schedule(n, l, m);
    if (h <= 0 || c <= 0) throw ConfigError("complexity: h and c must be positive");
    const std::int64_t total =
        n * n * c + l * h * n + l * m * n * c - (l * l - l) / 2 * h * m - (l + l * l) / 2 * m * m * c;
    return static_cast<double>(total);
}

inline double overhead_gtp_summed(std::int64_t n, std::int64_t l, std::int64_t h, std::int64_t c, std::int64_t m) {
    detail::check_schedule(n, l, m);
    std::int64_t total = n * n * c;
    for (std::int64_t layer = 1; layer <= l; ++layer) {
        const std::int64_t nl = n - (layer - 1) * m;
        total += h * nl + (nl - m) * m * c;
    }
    return static_cast<double>(total);
}

// Bipartite matching ¼N_l²c plus merging m·c per layer, in the closed form
//   ¼ln²c + ¼(l-l²)nmc + (l³/12 + l²/12 + l/8)m²c + lmc
inline double overhead_tome(std::int64_t n, std::int64_t l, std::int64_t c, std::int64_t m) {
    detail::check_schedule(n, l, m);
    if (c <= 0) throw ConfigError("complexity: c must be positive");
    // scaled by 24 to stay in integers
    const std::int64_t scaled = 6 * l * n * n * c + 6 * (l - l * l) * n * m * c +
                                (2 * l * l * l + 2 * l * l + 3 * l) * m * m * c + 24 * l * m * c;
    return static_cast<double>(scaled) / 24.0;
}

// Direct per-layer sum of ¼N_l²c + mc.
inline double overhead_tome_summed(std::int64_t n, std::int64_t l, std::int64_t c, std::int64_t m) {
    detail::check_schedule(n, l, m);
    if (c <= 0) throw ConfigError("complexity: c must be positive");
    std::int64_t scaled = 0;  // x4
    for (std::int64_t layer = 1; layer <= l; ++layer) {
        const std::int64_t nl = n - (layer - 1) * m;
        scaled += nl * nl * c + 4 * m * c;
    }
    return static_cast<double>(scaled) / 4.0;
}

struct CostReport {
    std::vector<std::uint64_t> per_layer;  // backbone MACs of each block
    std::uint64_t embed_macs = 0;
    std::uint64_t head_macs = 0;
    std::uint64_t backbone_total = 0;
    double overhead_total = 0.0;
    double grand_total = 0.0;

    // parameters
    std::size_t n = 0;
    std::size_t n_img = 0;
    std::size_t l = 0;
    std::size_t h = 0;
    std::size_t c = 0;
    std::size_t m = 0;
    std::size_t mlp_ratio = 4;

    double backbone_gmacs() const { return static_cast<double>(backbone_total) / 1e9; }
};

// Block l sees N_l tokens in attention and N_{l+1} = N_l - P in the FFN:
//   4·N_l·c² + 2·N_l²·c + 2·ratio·N_{l+1}·c²
inline CostReport backbone_macs(const ModelConfig& cfg) {
    cfg.validate();
    CostReport r;
    r.n = cfg.total_tokens();
    r.n_img = cfg.img_tokens();
    r.l = cfg.depth;
    r.h = cfg.heads;
    r.c = cfg.embed_dim;
    r.m = cfg.reduction.p_per_layer;
    r.mlp_ratio = cfg.mlp_ratio;

    const std::uint64_t c = r.c, p = r.m, ratio = r.mlp_ratio;
    r.embed_macs = static_cast<std::uint64_t>(r.n_img) * cfg.patch_dim() * c;
    r.head_macs = c * cfg.num_classes;
    r.backbone_total = r.embed_macs + r.head_macs;
    for (std::size_t layer = 1; layer <= r.l; ++layer) {
        const std::uint64_t nl = r.n - (layer - 1) * p;
        const std::uint64_t next = nl - p;
        const std::uint64_t block = 4 * nl * c * c + 2 * nl * nl * c + 2 * ratio * next * c * c;
        r.per_layer.push_back(block);
        r.backbone_total += block;
    }
    if (p > 0) {
        const auto n = static_cast<std::int64_t>(r.n), l = static_cast<std::int64_t>(r.l),
                   h = static_cast<std::int64_t>(r.h), cc = static_cast<std::int64_t>(r.c),
                   m = static_cast<std::int64_t>(r.m);
        r.overhead_total =
            cfg.reduction.strategy == Strategy::CosSim ? overhead_tome(n, l, cc, m) : overhead_gtp(n, l, h, cc, m);
    }
    r.grand_total = static_cast<double>(r.backbone_total) + r.overhead_total;
    return r;
}

inline nlohmann::ordered_json to_json(const CostReport& r) {
    nlohmann::ordered_json j;
    j["parameters"] = {{"N", r.n}, {"N_img", r.n_img}, {"L", r.l}, {"H", r.h},
                       {"C", r.c}, {"M", r.m},         {"mlp_ratio", r.mlp_ratio}};
    j["backbone_macs"] = {{"per_layer", r.per_layer},
                          {"embed", r.embed_macs},
                          {"head", r.head_macs},
                          {"total", r.backbone_total}};
    j["overhead_macs"] = r.overhead_total;
    j["grand_total"] = r.grand_total;
    return j;
}

inline std::string csv_header() { return "preset,p,backbone_gmacs,overhead_mmacs,grand_total_gmacs"; }

inline std::string csv_row(const std::string& preset, const CostReport& r) {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed << preset << ',' << r.m << ',' << r.backbone_gmacs() << ',' << r.overhead_total / 1e6 << ','
       << r.grand_total / 1e9;
    return os.str();
}

}  // namespace gtp::complexity
