// Copyright (C) 2026 The GTP Engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "gtp/errors.hpp"
#include "gtp/gtp_reduction.hpp"
#include "gtp/token_graph.hpp"
#include "json.hpp"

namespace gtp {

// How a model without [CLS] pools its surviving image tokens.
enum class GapPooling { SizeWeighted, Mean };

inline std::string_view to_string(GapPooling p) { return p == GapPooling::SizeWeighted ? "size_weighted" : "mean"; }

inline GapPooling parse_gap_pooling(std::string_view s) {
    if (s == "size_weighted") return GapPooling::SizeWeighted;
    if (s == "mean") return GapPooling::Mean;
    throw ConfigError("unknown gap pooling '" + std::string(s) + "'");
}

struct ModelConfig {
    std::string name = "custom";
    std::size_t image_size = 224;
    std::size_t patch_size = 16;
    std::size_t channels = 3;
    std::size_t embed_dim = 384;
    std::size_t depth = 12;
    std::size_t heads = 6;
    bool has_cls = true;
    std::size_t mlp_ratio = 4;
    std::size_t num_classes = 1000;
    GapPooling gap_pooling = GapPooling::SizeWeighted;
    ReductionConfig reduction;

    std::size_t grid() const noexcept { return patch_size == 0 ? 0 : image_size / patch_size; }
    std::size_t img_tokens() const noexcept { return grid() * grid(); }
    std::size_t total_tokens() const noexcept { return img_tokens() + (has_cls ? 1 : 0); }
    std::size_t patch_dim() const noexcept { return patch_size * patch_size * channels; }
    std::size_t head_dim() const noexcept { return embed_dim / heads; }

    void validate() const {
        if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
            throw ConfigError("image_size must be a positive multiple of patch_size");
        }
        if (channels == 0 || embed_dim == 0 || depth == 0 || num_classes == 0) {
            throw ConfigError("channels, embed_dim, depth and num_classes must be positive");
        }
        if (heads == 0 || embed_dim % heads != 0) {
            throw ConfigError("embed_dim " + std::to_string(embed_dim) + " not divisible by heads " +
                              std::to_string(heads));
        }
        if (mlp_ratio != 4) throw ConfigError("mlp_ratio is fixed at 4");
        if (reduction.strategy == Strategy::CLSAttn && !has_cls) {
            throw StrategyError("cls_attn strategy requires a [CLS] token");
        }
        reduction.validate(img_tokens(), depth);
        if (reduction.strategy == Strategy::CosSim && reduction.p_per_layer > 0) {
            // the last block must still have p source tokens to match
            const std::size_t last_live = img_tokens() - (depth - 1) * reduction.p_per_layer;
            if ((last_live + 1) / 2 < reduction.p_per_layer) {
                throw ConfigError("cos_sim schedule infeasible: too few tokens in the last block");
            }
        }
    }
};

namespace presets {

inline ModelConfig deit_s() {
    ModelConfig c;
    c.name = "deit-s";
    return c;
}

inline ModelConfig deit_b() {
    ModelConfig c;
    c.name = "deit-b";
    c.embed_dim = 768;
    c.heads = 12;
    return c;
}

// Global-average-pooled ViT-Medium, no [CLS].
inline ModelConfig vitm_gap() {
    ModelConfig c;
    c.name = "vitm-gap";
    c.image_size = 256;
    c.embed_dim = 512;
    c.heads = 8;
    c.has_cls = false;
    return c;
}

// Desk-scale models for tests: 8x8 patch grid.
inline ModelConfig tiny() {
    ModelConfig c;
    c.name = "tiny";
    c.image_size = 32;
    c.patch_size = 4;
    c.embed_dim = 32;
    c.depth = 4;
    c.heads = 4;
    c.num_classes = 10;
    c.reduction.m_neighbors = 4;
    return c;
}

inline ModelConfig tiny_gap() {
    ModelConfig c = tiny();
    c.name = "tiny-gap";
    c.has_cls = false;
    return c;
}

inline std::vector<std::string> names() { return {"deit-s", "deit-b", "vitm-gap", "tiny", "tiny-gap"}; }

inline ModelConfig by_name(std::string_view name) {
    if (name == "deit-s") return deit_s();
    if (name == "deit-b") return deit_b();
    if (name == "vitm-gap") return vitm_gap();
    if (name == "tiny") return tiny();
    if (name == "tiny-gap") return tiny_gap();
    throw ConfigError("unknown preset '" + std::string(name) + "'");
}

}  // namespace presets

inline nlohmann::ordered_json to_json(const ReductionConfig& r) {
    nlohmann::ordered_json j;
    j["p_per_layer"] = r.p_per_layer;
    j["alpha"] = r.alpha;
    j["graph_kind"] = to_string(r.graph_kind);
    j["theta"] = r.theta;
    j["m_neighbors"] = r.m_neighbors;
    j["aggregator"] = to_string(r.aggregator);
    j["strategy"] = to_string(r.strategy);
    j["score_source"] = to_string(r.score_source);
    return j;
}

inline nlohmann::ordered_json to_json(const ModelConfig& c) {
    nlohmann::ordered_json j;
    j["name"] = c.name;
    j["img_tokens"] = c.img_tokens();
    j["embed_dim"] = c.embed_dim;
    j["depth"] = c.depth;
    j["heads"] = c.heads;
    j["has_cls"] = c.has_cls;
    j["mlp_ratio"] = c.mlp_ratio;
    j["patch_size"] = c.patch_size;
    j["image_size"] = c.image_size;
    j["channels"] = c.channels;
    j["num_classes"] = c.num_classes;
    j["gap_pooling"] = to_string(c.gap_pooling);
    j["reduction"] = to_json(c.reduction);
    return j;
}

namespace detail {

template <typename T>
T json_get(const nlohmann::json& j, const std::string& key) {
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
    }
}

inline void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& allowed, std::string_view where) {
    if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError("unknown key '" + key + "' in " + std::string(where));
        }
    }
}

}  // namespace detail

// Applies the keys present in `j` on top of `base`; unknown keys are errors.
inline ReductionConfig reduction_from_json(const nlohmann::json& j, ReductionConfig base = {}) {
    detail::reject_unknown(j,
                           {"p_per_layer", "alpha", "graph_kind", "theta", "m_neighbors", "aggregator", "strategy",
                            "score_source"},
                           "reduction");
    using detail::json_get;
    if (j.contains("p_per_layer")) base.p_per_layer = json_get<std::size_t>(j, "p_per_layer");
    if (j.contains("alpha")) base.alpha = json_get<double>(j, "alpha");
    if (j.contains("graph_kind")) base.graph_kind = parse_graph_kind(json_get<std::string>(j, "graph_kind"));
    if (j.contains("theta")) base.theta = json_get<double>(j, "theta");
    if (j.contains("m_neighbors")) base.m_neighbors = json_get<std::size_t>(j, "m_neighbors");
    if (j.contains("aggregator")) base.aggregator = parse_aggregator(json_get<std::string>(j, "aggregator"));
    if (j.contains("strategy")) base.strategy = parse_strategy(json_get<std::string>(j, "strategy"));
    if (j.contains("score_source")) base.score_source = parse_score_source(json_get<std::string>(j, "score_source"));
    return base;
}

inline ModelConfig config_from_json(const nlohmann::json& j, ModelConfig base = {}) {
    detail::reject_unknown(j,
                           {"name", "img_tokens", "embed_dim", "depth", "heads", "has_cls", "mlp_ratio", "patch_size",
                            "image_size", "channels", "num_classes", "gap_pooling", "reduction"},
                           "config");
    using detail::json_get;
    if (j.contains("name")) base.name = json_get<std::string>(j, "name");
    if (j.contains("embed_dim")) base.embed_dim = json_get<std::size_t>(j, "embed_dim");
    if (j.contains("depth")) base.depth = json_get<std::size_t>(j, "depth");
    if (j.contains("heads")) base.heads = json_get<std::size_t>(j, "heads");
    if (j.contains("has_cls")) base.has_cls = json_get<bool>(j, "has_cls");
    if (j.contains("mlp_ratio")) base.mlp_ratio = json_get<std::size_t>(j, "mlp_ratio");
    if (j.contains("patch_size")) base.patch_size = json_get<std::size_t>(j, "patch_size");
    if (j.contains("image_size")) base.image_size = json_get<std::size_t>(j, "image_size");
    if (j.contains("channels")) base.channels = json_get<std::size_t>(j, "channels");
    if (j.contains("num_classes")) base.num_classes = json_get<std::size_t>(j, "num_classes");
    if (j.contains("gap_pooling")) base.gap_pooling = parse_gap_pooling(json_get<std::string>(j, "gap_pooling"));
    if (j.contains("reduction")) base.reduction = reduction_from_json(j.at("reduction"), base.reduction);
    if (j.contains("img_tokens") && json_get<std::size_t>(j, "img_tokens") != base.img_tokens()) {
        throw ConfigError("img_tokens " + std::to_string(json_get<std::size_t>(j, "img_tokens")) +
                          " disagrees with (image_size/patch_size)^2 = " + std::to_string(base.img_tokens()));
    }
    return base;
}

}  // namespace gtp
