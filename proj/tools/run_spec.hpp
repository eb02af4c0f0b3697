// Copyright (C) 2026 The GTP Engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Command-line run specification. Flags fill a RunSpec; an optional JSON
// config (inline or a file path) is applied last and wins over flags.

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "gtp/gtp.hpp"
#include "json.hpp"

namespace gtp::cli {

// Input/output failure; maps to exit code 3.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunSpec {
    std::string preset = "deit-s";
    std::string config;  // JSON text or path, applied over the flags
    std::uint64_t seed = 42;
    std::optional<std::size_t> p;
    std::optional<double> alpha;
    std::optional<double> theta;
    std::optional<std::size_t> m_neighbors;
    std::optional<std::string> graph_kind;
    std::optional<std::string> strategy;
    std::optional<std::string> aggregator;
    std::optional<std::string> score_source;
    std::size_t repeat = 1;
    std::string out;
};

inline nlohmann::json read_config_json(const std::string& text_or_path) {
    std::string text = text_or_path;
    if (text.find('{') == std::string::npos) {
        std::ifstream f(text_or_path);
        if (!f) throw IoError("cannot read config '" + text_or_path + "'");
        std::stringstream ss;
        ss << f.rdbuf();
        text = ss.str();
    }
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
}

// Resolves preset, flags and config into a validated model configuration.
// The config may carry "preset" and "seed" next to the model keys.
inline ModelConfig resolve(RunSpec& spec) {
    nlohmann::json overlay = nlohmann::json::object();
    if (!spec.config.empty()) {
        overlay = read_config_json(spec.config);
        if (!overlay.is_object()) throw ConfigError("config must be a JSON object");
        if (overlay.contains("preset")) {
            spec.preset = overlay.at("preset").get<std::string>();
            overlay.erase("preset");
        }
        if (overlay.contains("seed")) {
            spec.seed = overlay.at("seed").get<std::uint64_t>();
            overlay.erase("seed");
        }
    }
    ModelConfig cfg = presets::by_name(spec.preset);
    auto& r = cfg.reduction;
    if (spec.p) r.p_per_layer = *spec.p;
    if (spec.alpha) r.alpha = *spec.alpha;
    if (spec.theta) r.theta = *spec.theta;
    if (spec.m_neighbors) r.m_neighbors = *spec.m_neighbors;
    if (spec.graph_kind) r.graph_kind = parse_graph_kind(*spec.graph_kind);
    if (spec.strategy) r.strategy = parse_strategy(*spec.strategy);
    if (spec.aggregator) r.aggregator = parse_aggregator(*spec.aggregator);
    if (spec.score_source) r.score_source = parse_score_source(*spec.score_source);
    cfg = config_from_json(overlay, cfg);
    if (spec.repeat == 0) throw ConfigError("repeat must be >= 1");
    cfg.validate();
    return cfg;
}

}  // namespace gtp::cli
