// Copyright (C) 2026 The GTP Engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Pre-norm ViT forward pass with graph-based token propagation in every
// block:
//
//   patch embed -> build token graph from image tokens (once)
//   per block: LN1 -> MHSA (proportional, sparsified) -> residual
//              -> score -> select -> propagate + size update + shrink graph
//              -> LN2 -> FFN -> residual
//   final LN -> head on [CLS] or on the (size-weighted) mean of image tokens

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "gtp/attention.hpp"
#include "gtp/errors.hpp"
#include "gtp/gtp_reduction.hpp"
#include "gtp/linalg.hpp"
#include "gtp/model_config.hpp"
#include "gtp/rng.hpp"
#include "gtp/token_graph.hpp"
#include "gtp/weights.hpp"

namespace gtp {

// Live tokens between blocks. token_ids holds the original grid index of
// each image row; row 0 is [CLS] when the model has one.
struct FeatureMap {
    Matrix tokens;
    std::vector<std::size_t> token_ids;
    std::vector<double> sizes;
    bool has_cls = false;

    std::size_t image_offset() const noexcept { return has_cls ? 1 : 0; }
    std::size_t image_count() const noexcept { return tokens.rows() - image_offset(); }
};

struct LayerDiagnostics {
    std::size_t layer = 0;              // 1-based block index
    std::size_t live_image_tokens = 0;  // after this block
    std::vector<std::size_t> kept_ids;
    std::vector<std::size_t> propagated_ids;
    std::optional<ReductionPlan> plan;  // row positions as seen by this block
    double oversmoothing = 0.0;         // mean pairwise cosine of image tokens after the block
    double size_mass = 0.0;             // sum of token sizes after the block
};

struct ForwardResult {
    std::vector<double> logits;
    std::vector<LayerDiagnostics> layers;
    std::vector<std::size_t> final_token_ids;
    std::size_t graph_builds = 0;
    std::uint64_t macs = 0;           // dense multiply-accumulates (backbone)
    std::uint64_t matching_macs = 0;  // similarity matching of the cos_sim baseline
};

struct ForwardOptions {
    std::uint64_t seed = 0;  // drives the random selection strategy
    bool trace_oversmoothing = true;
};

// Mean cosine similarity over unordered pairs of rows [first, rows).
inline double oversmoothing_metric(const Matrix& x, std::size_t first = 0) {
    if (x.rows() < first + 2) throw DegenerateInputError("oversmoothing_metric: needs at least two image tokens");
    std::vector<double> norms(x.rows());
    for (std::size_t i = first; i < x.rows(); ++i) {
        norms[i] = std::sqrt(dot(x.row(i), x.row(i)));
        if (!(norms[i] > 0.0)) throw DegenerateInputError("oversmoothing_metric: zero-norm token");
    }
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = first; i < x.rows(); ++i) {
        for (std::size_t j = i + 1; j < x.rows(); ++j) {
            total += std::clamp(dot(x.row(i), x.row(j)) / (norms[i] * norms[j]), -1.0, 1.0);
            ++pairs;
        }
    }
    return total / static_cast<double>(pairs);
}

inline double oversmoothing_metric(const FeatureMap& fm) { return oversmoothing_metric(fm.tokens, fm.image_offset()); }

// Image -> (grid tokens x patch_dim), patches row-major, pixels (dy, dx, ch).
inline Matrix patchify(const ModelConfig& cfg, const Image& img) {
    if (img.height != cfg.image_size || img.width != cfg.image_size || img.channels != cfg.channels ||
        img.pixels.size() != img.height * img.width * img.channels) {
        throw ShapeError("patchify: image does not match config");
    }
    const std::size_t g = cfg.grid(), ps = cfg.patch_size, ch = cfg.channels;
    Matrix patches(g * g, cfg.patch_dim());
    for (std::size_t py = 0; py < g; ++py) {
        for (std::size_t px = 0; px < g; ++px) {
            auto row = patches.row(py * g + px);
            std::size_t k = 0;
            for (std::size_t dy = 0; dy < ps; ++dy) {
                for (std::size_t dx = 0; dx < ps; ++dx) {
                    const std::size_t base = ((py * ps + dy) * img.width + (px * ps + dx)) * ch;
                    for (std::size_t c = 0; c < ch; ++c) row[k++] = img.pixels[base + c];
                }
            }
        }
    }
    return patches;
}

// Patch embedding plus [CLS] and positional embedding.
inline Matrix embed(const ModelConfig& cfg, const ModelWeights& w, const Image& img) {
    Matrix patches = matmul(patchify(cfg, img), w.embed_w);
    add_row_bias(patches, w.embed_b);
    const std::size_t off = cfg.has_cls ? 1 : 0;
    Matrix x(cfg.total_tokens(), cfg.embed_dim);
    if (cfg.has_cls) std::copy(w.cls_token.begin(), w.cls_token.end(), x.row(0).begin());
    for (std::size_t i = 0; i < patches.rows(); ++i) {
        std::copy(patches.row(i).begin(), patches.row(i).end(), x.row(i + off).begin());
    }
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto r = x.row(i);
        auto p = w.pos_embed.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += p[j];
    }
    return x;
}

namespace detail {

inline void add_inplace(Matrix& x, const Matrix& y) {
    if (x.rows() != y.rows() || x.cols() != y.cols()) throw ShapeError("residual shape mismatch");
    auto a = x.data();
    auto b = y.data();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

template <typename T>
std::vector<T> gather(const std::vector<T>& v, const IndexSet& at) {
    std::vector<T> out;
    out.reserve(at.size());
    for (std::size_t i : at) out.push_back(v[i]);
    return out;
}

}  // namespace detail

// Applies one block's reduction to the feature map and graph.
inline ReductionPlan reduce_tokens(const ModelConfig& cfg, const AttentionTensor& attn, FeatureMap& fm,
                                   TokenGraph& graph, std::uint64_t stream_seed) {
    const auto& red = cfg.reduction;
    const std::optional<std::size_t> cls = fm.has_cls ? std::optional<std::size_t>(0) : std::nullopt;
    ReductionPlan plan =
        select_tokens_baseline(red.strategy, attn, fm.tokens, red.p_per_layer, cls, stream_seed, red.aggregator);

    const std::size_t off = fm.image_offset();
    const IndexSet kept_img = plan.kept_image();
    std::vector<std::size_t> kept_ids, prop_ids;
    for (std::size_t r : kept_img) kept_ids.push_back(fm.token_ids[r - off]);
    for (std::size_t r : plan.propagated) prop_ids.push_back(fm.token_ids[r - off]);
    IndexSet kept_set(kept_ids), prop_set(prop_ids);

    if (red.strategy == Strategy::CosSim) {
        auto merged = merge_tokens(fm.tokens, fm.sizes, plan);
        fm.tokens = std::move(merged.tokens);
        fm.sizes = std::move(merged.sizes);
    } else if (red.alpha == 0.0 || red.graph_kind == GraphKind::None) {
        fm.tokens = select_rows(fm.tokens, plan.kept);
        fm.sizes = detail::gather(fm.sizes, plan.kept);
    } else {
        const SparseMatrix a_hat_p = extract_propagation_view(graph, kept_set, prop_set);
        fm.tokens = propagate(fm.tokens, plan, a_hat_p, red.alpha);
        const auto s_img = update_sizes(detail::gather(fm.sizes, kept_img), detail::gather(fm.sizes, plan.propagated),
                                        a_hat_p, red.alpha);
        std::vector<double> sizes;
        if (cls) sizes.push_back(fm.sizes[*cls]);
        sizes.insert(sizes.end(), s_img.begin(), s_img.end());
        fm.sizes = std::move(sizes);
    }
    graph.shrink_live(kept_set);
    fm.token_ids = std::move(kept_ids);
    return plan;
}

// Runs the blocks and head on an already embedded token matrix
// (total_tokens x C, [CLS] first when present).
inline ForwardResult forward_embedded(const ModelConfig& cfg, const ModelWeights& w, Matrix x0,
                                      const ForwardOptions& opts = {}) {
    cfg.validate();
    if (x0.rows() != cfg.total_tokens() || x0.cols() != cfg.embed_dim) {
        throw ShapeError("forward: embedded tokens do not match config");
    }
    if (w.blocks.size() != cfg.depth) throw SchemaError("forward: weights have " + std::to_string(w.blocks.size()) + " blocks");

    ForwardResult result;
    MacCounter counter;
    const auto& red = cfg.reduction;
    const std::size_t off = cfg.has_cls ? 1 : 0;

    FeatureMap fm;
    fm.has_cls = cfg.has_cls;
    fm.token_ids.resize(cfg.img_tokens());
    std::iota(fm.token_ids.begin(), fm.token_ids.end(), std::size_t{0});
    fm.sizes.assign(cfg.total_tokens(), 1.0);

    TokenGraph graph;
    if (red.p_per_layer > 0) {
        const GraphKind kind = red.strategy == Strategy::CosSim ? GraphKind::None : red.graph_kind;
        const Matrix image_rows(cfg.img_tokens(), cfg.embed_dim,
                                std::vector<double>(x0.data().begin() + static_cast<std::ptrdiff_t>(off * cfg.embed_dim),
                                                    x0.data().end()));
        graph = build_token_graph(kind, cfg.grid(), cfg.grid(), image_rows, red.m_neighbors);
        ++result.graph_builds;
    }
    fm.tokens = std::move(x0);

    SplitMix64 selection_rng = SplitMix64::substream(opts.seed, streams::random_selection);
    for (std::size_t l = 0; l < cfg.depth; ++l) {
        const BlockWeights& blk = w.blocks[l];
        LayerDiagnostics diag;
        diag.layer = l + 1;

        const bool keep_dense = red.score_source == ScoreSource::Dense;
        MhsaResult mh =
            mhsa_forward(layer_norm(fm.tokens, blk.ln1_scale, blk.ln1_shift), blk, cfg.heads, fm.sizes, red.theta, keep_dense);
        detail::add_inplace(fm.tokens, mh.output);

        if (red.p_per_layer > 0) {
            const AttentionTensor& scored = keep_dense ? *mh.dense_attention : mh.attention;
            const std::size_t before = fm.image_count();
            std::vector<std::size_t> ids_before = fm.token_ids;
            ReductionPlan plan = reduce_tokens(cfg, scored, fm, graph, selection_rng.next());
            for (std::size_t r : plan.propagated) diag.propagated_ids.push_back(ids_before[r - off]);
            result.matching_macs += plan.matching_macs;
            diag.plan = std::move(plan);
            if (fm.image_count() != before - red.p_per_layer) throw std::logic_error("forward: token schedule violated");
        }

        detail::add_inplace(fm.tokens, ffn_forward(layer_norm(fm.tokens, blk.ln2_scale, blk.ln2_shift), blk));

        diag.live_image_tokens = fm.image_count();
        diag.kept_ids = fm.token_ids;
        if (opts.trace_oversmoothing && fm.image_count() >= 2) diag.oversmoothing = oversmoothing_metric(fm);
        for (double s : fm.sizes) diag.size_mass += s;
        result.layers.push_back(std::move(diag));
    }

    if (red.p_per_layer > 0 && result.graph_builds != 1) throw std::logic_error("forward: token graph built more than once");

    const Matrix normed = layer_norm(fm.tokens, w.norm_scale, w.norm_shift);
    Matrix pooled(1, cfg.embed_dim);
    if (cfg.has_cls) {
        std::copy(normed.row(0).begin(), normed.row(0).end(), pooled.row(0).begin());
    } else {
        double mass = 0.0;
        for (std::size_t i = 0; i < normed.rows(); ++i) {
            const double weight = cfg.gap_pooling == GapPooling::SizeWeighted ? fm.sizes[i] : 1.0;
            mass += weight;
            for (std::size_t j = 0; j < cfg.embed_dim; ++j) pooled(0, j) += weight * normed(i, j);
        }
        for (double& v : pooled.data()) v /= mass;
    }
    Matrix logits = matmul(pooled, w.head_w);
    add_row_bias(logits, w.head_b);

    result.logits.assign(logits.data().begin(), logits.data().end());
    result.final_token_ids = fm.token_ids;
    result.macs = counter.count();
    return result;
}

inline ForwardResult forward(const ModelConfig& cfg, const ModelWeights& w, const Image& img,
                             const ForwardOptions& opts = {}) {
    cfg.validate();
    MacCounter counter;
    Matrix x0 = embed(cfg, w, img);
    const std::uint64_t embed_macs = counter.count();
    ForwardResult r = forward_embedded(cfg, w, std::move(x0), opts);
    r.macs += embed_macs;
    return r;
}

inline ForwardResult forward(const ModelConfig& cfg, const WeightStore& store, const Image& img,
                             const ForwardOptions& opts = {}) {
    return forward(cfg, load_model_weights(cfg, store), img, opts);
}

}  // namespace gtp
