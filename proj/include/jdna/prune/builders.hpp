#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "jdna/core/error.hpp"
#include "jdna/core/param_set.hpp"
#include "jdna/prune/mask.hpp"
#include "jdna/prune/scores.hpp"

namespace jdna::prune {

enum class Scope { global, layerwise, rowwise };

inline const char* to_string(Scope s) {
    switch (s) {
        case Scope::global: return "global";
        case Scope::layerwise: return "layerwise";
        case Scope::rowwise: return "rowwise";
    }
    return "?";
}

// Comparison group used when a criterion is asked for an unstructured mask without an explicit scope.
inline Scope default_scope(Criterion c) {
    switch (c) {
        case Criterion::magnitude: return Scope::global;
        case Criterion::wanda: return Scope::rowwise;
        case Criterion::second_order: return Scope::layerwise;
    }
    return Scope::global;
}

// floor(s * n); the epsilon absorbs binary rounding of s * n (e.g. 0.29 * 100).
inline std::size_t prune_count(std::size_t n, double s) {
    return static_cast<std::size_t>(std::floor(s * double(n) + 1e-9));
}

inline void check_sparsity(double s) {
    if (!(s >= 0.0 && s < 1.0)) throw ValidationError("sparsity must be in [0, 1), got " + std::to_string(s));
}

namespace detail {

inline MaskEntry ones_entry(const std::string& name, const Tensor& t) {
    return {name, t.shape(), std::vector<std::uint8_t>(t.size(), 1)};
}

// Drops the k lowest of `idx` (flat positions into `score`), ties by ascending position.
inline void drop_lowest(const Tensor& score, std::vector<std::size_t>& idx, std::size_t k, MaskEntry& out) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (score[a] != score[b]) return score[a] < score[b];
        return a < b;
    });
    for (std::size_t i = 0; i < k; ++i) out.keep[idx[i]] = 0;
}

}  // namespace detail

// Drops the floor(s * n) lowest-scoring weights, n = all prunable weights (global), each tensor
// (layerwise) or each output row (rowwise). Ties go by ascending (parameter name, flat index).
inline PruneMask build_mask_unstructured(const ImportanceScores& scores, double s, Scope scope = Scope::global) {
    check_sparsity(s);
    PruneMask mask;
    mask.target_sparsity = s;
    mask.pattern.kind = scope == Scope::global      ? PatternKind::unstructured_global
                        : scope == Scope::layerwise ? PatternKind::unstructured_layerwise
                                                    : PatternKind::unstructured_rowwise;
    for (const auto& [name, t] : scores.entries) mask.entries.push_back(detail::ones_entry(name, t));

    if (scope == Scope::global) {
        // rank tensors by name for tie-breaking
        std::vector<std::size_t> order(scores.entries.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return scores.entries[a].first < scores.entries[b].first; });
        std::vector<std::uint32_t> name_rank(order.size());
        for (std::size_t r = 0; r < order.size(); ++r) name_rank[order[r]] = std::uint32_t(r);

        struct Ref {
            double score;
            std::uint32_t tensor;
            std::uint32_t index;
        };
        std::vector<Ref> all;
        for (std::size_t t = 0; t < scores.entries.size(); ++t) {
            const auto& v = scores.entries[t].second;
            for (std::size_t i = 0; i < v.size(); ++i) all.push_back({v[i], std::uint32_t(t), std::uint32_t(i)});
        }
        const std::size_t k = prune_count(all.size(), s);
        auto less = [&](const Ref& a, const Ref& b) {
            if (a.score != b.score) return a.score < b.score;
            if (a.tensor != b.tensor) return name_rank[a.tensor] < name_rank[b.tensor];
            return a.index < b.index;
        };
        if (k > 0 && k < all.size()) std::nth_element(all.begin(), all.begin() + std::ptrdiff_t(k), all.end(), less);
        for (std::size_t i = 0; i < k; ++i) mask.entries[all[i].tensor].keep[all[i].index] = 0;
        return mask;
    }

    for (std::size_t t = 0; t < scores.entries.size(); ++t) {
        const auto& v = scores.entries[t].second;
        auto& out = mask.entries[t];
        if (scope == Scope::layerwise) {
            std::vector<std::size_t> idx(v.size());
            std::iota(idx.begin(), idx.end(), 0);
            detail::drop_lowest(v, idx, prune_count(v.size(), s), out);
        } else {
            const std::size_t cols = v.cols(), rows = v.size() / cols;
            const std::size_t k = prune_count(cols, s);
            std::vector<std::size_t> idx(cols);
            for (std::size_t r = 0; r < rows; ++r) {
                std::iota(idx.begin(), idx.end(), r * cols);
                detail::drop_lowest(v, idx, k, out);
            }
        }
    }
    return mask;
}

// In every contiguous group of M weights along each row keep the N highest scores (ties: lower index kept).
inline PruneMask build_mask_nm(const ImportanceScores& scores, int n, int m) {
    if (!(n >= 1 && n < m)) throw ConfigError("N:M requires 1 <= N < M, got " + std::to_string(n) + ":" + std::to_string(m));
    PruneMask mask;
    mask.pattern = {PatternKind::nm, n, m};
    mask.target_sparsity = 1.0 - double(n) / double(m);
    for (const auto& [name, v] : scores.entries) {
        if (v.rank() != 2 || v.cols() % std::size_t(m) != 0)
            throw ConfigError("row length of '" + name + "' (" + std::to_string(v.cols()) + ") is not divisible by M=" +
                                  std::to_string(m),
                              name);
        auto e = detail::ones_entry(name, v);
        std::vector<std::size_t> idx(static_cast<std::size_t>(m));
        for (std::size_t g = 0; g < v.size(); g += std::size_t(m)) {
            std::iota(idx.begin(), idx.end(), g);
            std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
                if (v[a] != v[b]) return v[a] > v[b];
                return a < b;
            });
            for (std::size_t i = std::size_t(n); i < std::size_t(m); ++i) e.keep[idx[i]] = 0;
        }
        mask.entries.push_back(std::move(e));
    }
    return mask;
}

// Copy of `params` with pruned weights set to exactly 0.0; other tensors untouched.
inline ParamSet apply_mask(const ParamSet& params, const PruneMask& mask) {
    check_aligned(params, mask);
    ParamSet out = params;
    for (const auto& m : mask.entries) {
        auto& t = out.at(m.name);
        for (std::size_t i = 0; i < t.size(); ++i)
            if (!m.keep[i]) t[i] = 0.0;
    }
    return out;
}

}  // namespace jdna::prune
