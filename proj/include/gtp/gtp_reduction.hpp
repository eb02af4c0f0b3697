// Copyright (C) 2026 The GTP Engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Token scoring, kept/propagated partitioning and graph propagation.
//
// Scores come from the attention maps a block already computed:
//   regeneration difficulty  Γ_i = agg_h A_h[i,i]
//   broadcasting ability     Ψ_i = agg_h sum_{j != i} A_h[j,i]
// The default strategy keeps the tokens with the largest Γ_i·Ψ_i and folds
// the others into their graph neighbours: X^s = X^k + alpha · Â^p X^p.
// Positions in a plan index rows of the current feature matrix; the [CLS]
// row, when present, is never scored and always kept.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gtp/attention.hpp"
#include "gtp/errors.hpp"
#include "gtp/linalg.hpp"
#include "gtp/rng.hpp"
#include "gtp/token_graph.hpp"

namespace gtp {

enum class Aggregator { Max, Mean };

enum class Strategy { MixedAttn, DiagAttn, BroadAttn, CLSAttn, CosSim, Random };

// Which attention maps feed the scores.
enum class ScoreSource { Sparsified, Dense };

inline std::string_view to_string(Aggregator a) { return a == Aggregator::Max ? "max" : "mean"; }

inline Aggregator parse_aggregator(std::string_view s) {
    if (s == "max") return Aggregator::Max;
    if (s == "mean") return Aggregator::Mean;
    throw ConfigError("unknown aggregator '" + std::string(s) + "'");
}

inline std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::MixedAttn: return "mixed_attn";
        case Strategy::DiagAttn: return "diag_attn";
        case Strategy::BroadAttn: return "broad_attn";
        case Strategy::CLSAttn: return "cls_attn";
        case Strategy::CosSim: return "cos_sim";
        case Strategy::Random: return "random";
    }
    return "?";
}

inline Strategy parse_strategy(std::string_view s) {
    for (auto v : {Strategy::MixedAttn, Strategy::DiagAttn, Strategy::BroadAttn, Strategy::CLSAttn, Strategy::CosSim,
                   Strategy::Random}) {
        if (s == to_string(v)) return v;
    }
    throw ConfigError("unknown strategy '" + std::string(s) + "'");
}

inline std::string_view to_string(ScoreSource s) { return s == ScoreSource::Sparsified ? "sparsified" : "dense"; }

inline ScoreSource parse_score_source(std::string_view s) {
    if (s == "sparsified") return ScoreSource::Sparsified;
    if (s == "dense") return ScoreSource::Dense;
    throw ConfigError("unknown score source '" + std::string(s) + "'");
}

struct ReductionConfig {
    std::size_t p_per_layer = 0;
    double alpha = 0.1;
    GraphKind graph_kind = GraphKind::Mixed;
    double theta = 1.0;
    std::size_t m_neighbors = 8;
    Aggregator aggregator = Aggregator::Max;
    Strategy strategy = Strategy::MixedAttn;
    ScoreSource score_source = ScoreSource::Sparsified;

    void validate(std::size_t img_tokens, std::size_t depth) const {
        if (depth * p_per_layer >= img_tokens) {
            throw ConfigError("reduction schedule infeasible: depth*P = " + std::to_string(depth * p_per_layer) +
                              " >= " + std::to_string(img_tokens) + " image tokens");
        }
        if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
        if (!(theta > 0.0 && theta <= 1.0)) throw ConfigError("theta must lie in (0, 1]");
        const bool semantic = graph_kind == GraphKind::Semantic || graph_kind == GraphKind::Mixed;
        if (semantic && (m_neighbors < 1 || m_neighbors >= img_tokens)) {
            throw ConfigError("m_neighbors must lie in [1, image tokens)");
        }
    }
};

struct ReductionPlan {
    IndexSet kept;
    IndexSet propagated;
    // One score per row; the [CLS] entry is 0 and unused. For CosSim the score
    // is the negated best-match similarity (destination-side tokens get 2).
    std::vector<double> scores;
    Strategy strategy = Strategy::MixedAttn;
    std::optional<std::size_t> cls_index;
    // CosSim only: for each propagated[i], the row it merges into.
    std::vector<std::size_t> merge_into;
    // Multiply-accumulates spent on similarity matching (CosSim).
    std::uint64_t matching_macs = 0;

    // Kept rows other than [CLS], in order; these index the rows of Â^p.
    IndexSet kept_image() const {
        std::vector<std::size_t> v;
        v.reserve(kept.size());
        for (std::size_t k : kept) {
            if (!cls_index || k != *cls_index) v.push_back(k);
        }
        return IndexSet(std::move(v));
    }

    // One CSV line: layer,"kept","propagated","scores".
    std::string csv_line(std::size_t layer) const {
        auto join = [](const auto& xs) {
            std::ostringstream os;
            os.precision(17);
            bool first = true;
            for (const auto& x : xs) {
                os << (first ? "" : " ") << x;
                first = false;
            }
            return os.str();
        };
        return std::to_string(layer) + ",\"" + join(kept) + "\",\"" + join(propagated) + "\",\"" + join(scores) + "\"";
    }
};

namespace detail {

inline double aggregate(std::span<const double> per_head, Aggregator agg) {
    if (agg == Aggregator::Max) return *std::max_element(per_head.begin(), per_head.end());
    double s = 0.0;
    for (double v : per_head) s += v;
    return s / static_cast<double>(per_head.size());
}

inline void check_attention(const AttentionTensor& attn) {
    if (attn.heads == 0 || attn.maps.size() != attn.heads) throw ShapeError("attention tensor has no heads");
    for (const auto& m : attn.maps) {
        if (m.rows() != attn.n || m.cols() != attn.n) throw ShapeError("attention map is not n x n");
    }
}

}  // namespace detail

inline std::vector<double> score_regeneration(const AttentionTensor& attn, Aggregator agg = Aggregator::Max) {
    detail::check_attention(attn);
    std::vector<double> gamma(attn.n), per_head(attn.heads);
    for (std::size_t i = 0; i < attn.n; ++i) {
        for (std::size_t h = 0; h < attn.heads; ++h) per_head[h] = attn.maps[h](i, i);
        gamma[i] = detail::aggregate(per_head, agg);
    }
    return gamma;
}

inline std::vector<double> score_broadcasting(const AttentionTensor& attn, Aggregator agg = Aggregator::Max) {
    detail::check_attention(attn);
    const std::size_t n = attn.n;
    // column sums per head, diagonal excluded, summed in row order
    std::vector<std::vector<double>> colsum(attn.heads, std::vector<double>(n, 0.0));
    for (std::size_t h = 0; h < attn.heads; ++h) {
        const auto& m = attn.maps[h];
        for (std::size_t j = 0; j < n; ++j) {
            auto r = m.row(j);
            for (std::size_t i = 0; i < n; ++i) {
                if (i != j) colsum[h][i] += r[i];
            }
        }
    }
    std::vector<double> psi(n), per_head(attn.heads);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t h = 0; h < attn.heads; ++h) per_head[h] = colsum[h][i];
        psi[i] = detail::aggregate(per_head, agg);
    }
    return psi;
}

// Keeps the scoreable rows with the largest scores and propagates the p
// lowest. Ties go to the lower row index (stable descending order).
inline ReductionPlan select_by_scores(std::vector<double> scores, std::size_t p, std::optional<std::size_t> cls_index,
                                      Strategy strategy) {
    const std::size_t n = scores.size();
    if (cls_index && *cls_index >= n) throw ArgumentError("select: cls index out of range");
    std::vector<std::size_t> candidates;
    std::vector<double> values;
    candidates.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (cls_index && i == *cls_index) continue;
        candidates.push_back(i);
        values.push_back(scores[i]);
    }
    if (p >= candidates.size() && p > 0) {
        throw ConfigError("select: p=" + std::to_string(p) + " leaves no scoreable token (" +
                          std::to_string(candidates.size()) + " available)");
    }
    if (cls_index) scores[*cls_index] = 0.0;
    const auto order = argsort_desc(values);
    const std::size_t keep = candidates.size() - p;
    std::vector<std::size_t> kept, prop;
    if (cls_index) kept.push_back(*cls_index);
    for (std::size_t r = 0; r < order.size(); ++r) (r < keep ? kept : prop).push_back(candidates[order[r]]);
    ReductionPlan plan;
    plan.kept = IndexSet::from_unsorted(std::move(kept));
    plan.propagated = IndexSet::from_unsorted(std::move(prop));
    plan.scores = std::move(scores);
    plan.strategy = strategy;
    plan.cls_index = cls_index;
    return plan;
}

// Default strategy: largest Γ·Ψ survive.
inline ReductionPlan select_tokens(std::span<const double> gamma, std::span<const double> psi, std::size_t p,
                                   std::optional<std::size_t> cls_index) {
    if (gamma.size() != psi.size()) throw ShapeError("select_tokens: gamma/psi length mismatch");
    std::vector<double> product(gamma.size());
    for (std::size_t i = 0; i < gamma.size(); ++i) product[i] = gamma[i] * psi[i];
    return select_by_scores(std::move(product), p, cls_index, Strategy::MixedAttn);
}

// Bipartite soft matching: scoreable rows alternate into sources (even) and
// destinations (odd); each source finds its most cosine-similar destination
// and the p best-matched sources are merged away.
inline ReductionPlan select_bipartite(const Matrix& x, std::size_t p, std::optional<std::size_t> cls_index) {
    std::vector<std::size_t> src, dst;
    std::size_t k = 0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        if (cls_index && i == *cls_index) continue;
        (k++ % 2 == 0 ? src : dst).push_back(i);
    }
    if (p > src.size() || (p > 0 && dst.empty())) {
        throw ConfigError("cos_sim: p=" + std::to_string(p) + " exceeds " + std::to_string(src.size()) +
                          " matchable tokens");
    }
    std::vector<double> norms(x.rows(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        norms[i] = std::sqrt(dot(x.row(i), x.row(i)));
        if (!(norms[i] > 0.0) && !(cls_index && i == *cls_index)) {
            throw DegenerateInputError("cos_sim: zero-norm token " + std::to_string(i));
        }
    }
    std::vector<double> best(src.size(), -2.0);
    std::vector<std::size_t> best_dst(src.size(), 0);
    for (std::size_t a = 0; a < src.size(); ++a) {
        for (std::size_t b : dst) {
            const double s = std::clamp(dot(x.row(src[a]), x.row(b)) / (norms[src[a]] * norms[b]), -1.0, 1.0);
            if (s > best[a]) {
                best[a] = s;
                best_dst[a] = b;
            }
        }
    }
    const auto order = argsort_desc(best);
    std::vector<double> scores(x.rows(), 2.0);
    if (cls_index) scores[*cls_index] = 0.0;
    for (std::size_t a = 0; a < src.size(); ++a) scores[src[a]] = -best[a];

    std::vector<std::pair<std::size_t, std::size_t>> merges;  // (source row, destination row)
    for (std::size_t r = 0; r < p; ++r) merges.emplace_back(src[order[r]], best_dst[order[r]]);
    std::sort(merges.begin(), merges.end());

    ReductionPlan plan;
    std::vector<std::size_t> prop, kept;
    for (const auto& [s, d] : merges) {
        prop.push_back(s);
        plan.merge_into.push_back(d);
    }
    plan.propagated = IndexSet(std::move(prop));
    for (std::size_t i = 0; i < x.rows(); ++i) {
        if (!plan.propagated.contains(i)) kept.push_back(i);
    }
    plan.kept = IndexSet(std::move(kept));
    plan.scores = std::move(scores);
    plan.strategy = Strategy::CosSim;
    plan.cls_index = cls_index;
    plan.matching_macs = static_cast<std::uint64_t>(src.size()) * dst.size() * x.cols();
    return plan;
}

// Baseline strategies. `stream_seed` drives Random and is ignored otherwise.
inline ReductionPlan select_tokens_baseline(Strategy strategy, const AttentionTensor& attn, const Matrix& x,
                                            std::size_t p, std::optional<std::size_t> cls_index,
                                            std::uint64_t stream_seed, Aggregator agg = Aggregator::Max) {
    switch (strategy) {
        case Strategy::MixedAttn:
            return select_tokens(score_regeneration(attn, agg), score_broadcasting(attn, agg), p, cls_index);
        case Strategy::DiagAttn:
            return select_by_scores(score_regeneration(attn, agg), p, cls_index, strategy);
        case Strategy::BroadAttn:
            return select_by_scores(score_broadcasting(attn, agg), p, cls_index, strategy);
        case Strategy::CLSAttn: {
            if (!cls_index) throw StrategyError("cls_attn requires a [CLS] token");
            detail::check_attention(attn);
            std::vector<double> scores(attn.n), per_head(attn.heads);
            for (std::size_t j = 0; j < attn.n; ++j) {
                for (std::size_t h = 0; h < attn.heads; ++h) per_head[h] = attn.maps[h](*cls_index, j);
                scores[j] = detail::aggregate(per_head, agg);
            }
            return select_by_scores(std::move(scores), p, cls_index, strategy);
        }
        case Strategy::Random: {
            SplitMix64 rng(stream_seed);
            std::vector<double> scores(x.rows());
            for (double& s : scores) s = rng.uniform();
            return select_by_scores(std::move(scores), p, cls_index, strategy);
        }
        case Strategy::CosSim: return select_bipartite(x, p, cls_index);
    }
    throw StrategyError("unknown strategy");
}

namespace detail {

inline void check_plan(const ReductionPlan& plan, std::size_t rows) {
    if (plan.kept.size() + plan.propagated.size() != rows) {
        throw ShapeError("plan covers " + std::to_string(plan.kept.size() + plan.propagated.size()) + " rows, features have " +
                         std::to_string(rows));
    }
    plan.kept.check_bound(rows);
    plan.propagated.check_bound(rows);
}

}  // namespace detail

// X^s = X^k + alpha · Â^p X^p over the kept rows; [CLS] passes through.
// alpha == 0 is pure row selection.
inline Matrix propagate(const Matrix& x, const ReductionPlan& plan, const SparseMatrix& a_hat_p, double alpha) {
    detail::check_plan(plan, x.rows());
    Matrix out = select_rows(x, plan.kept);
    if (alpha == 0.0 || plan.propagated.empty()) return out;
    const IndexSet kept_img = plan.kept_image();
    if (a_hat_p.rows != kept_img.size() || a_hat_p.cols != plan.propagated.size()) {
        throw ShapeError("propagate: Â^p is " + std::to_string(a_hat_p.rows) + "x" + std::to_string(a_hat_p.cols) +
                         ", expected " + std::to_string(kept_img.size()) + "x" + std::to_string(plan.propagated.size()));
    }
    const Matrix spread = a_hat_p.multiply(select_rows(x, plan.propagated));
    std::size_t r = 0;
    for (std::size_t t = 0; t < plan.kept.size(); ++t) {
        if (plan.cls_index && plan.kept[t] == *plan.cls_index) continue;
        auto o = out.row(t);
        auto s = spread.row(r++);
        for (std::size_t j = 0; j < o.size(); ++j) o[j] = o[j] + alpha * s[j];
    }
    return out;
}

struct MergeResult {
    Matrix tokens;
    std::vector<double> sizes;
};

// Size-weighted averaging of each merged source into its destination.
inline MergeResult merge_tokens(const Matrix& x, std::span<const double> sizes, const ReductionPlan& plan) {
    detail::check_plan(plan, x.rows());
    if (sizes.size() != x.rows()) throw ShapeError("merge_tokens: sizes length mismatch");
    if (plan.merge_into.size() != plan.propagated.size()) throw PartitionError("merge_tokens: plan has no merge targets");
    Matrix acc(x.rows(), x.cols());
    std::vector<double> mass(sizes.begin(), sizes.end());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) acc(i, j) = sizes[i] * x(i, j);
    }
    for (std::size_t k = 0; k < plan.propagated.size(); ++k) {
        const std::size_t s = plan.propagated[k], d = plan.merge_into[k];
        for (std::size_t j = 0; j < x.cols(); ++j) acc(d, j) += sizes[s] * x(s, j);
        mass[d] += sizes[s];
    }
    std::vector<bool> receives(x.rows(), false);
    for (std::size_t d : plan.merge_into) receives[d] = true;
    MergeResult out{Matrix(plan.kept.size(), x.cols()), std::vector<double>(plan.kept.size())};
    for (std::size_t t = 0; t < plan.kept.size(); ++t) {
        const std::size_t i = plan.kept[t];
        for (std::size_t j = 0; j < x.cols(); ++j) out.tokens(t, j) = receives[i] ? acc(i, j) / mass[i] : x(i, j);
        out.sizes[t] = mass[i];
    }
    return out;
}

}  // namespace gtp
