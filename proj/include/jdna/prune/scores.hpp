#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "jdna/core/error.hpp"
#include "jdna/core/param_set.hpp"
#include "jdna/core/rng.hpp"
#include "jdna/model/transformer.hpp"

namespace jdna::prune {

enum class Criterion { magnitude, wanda, second_order };

inline const char* to_string(Criterion c) {
    switch (c) {
        case Criterion::magnitude: return "magnitude";
        case Criterion::wanda: return "wanda";
        case Criterion::second_order: return "second_order";
    }
    return "?";
}

// Per-prunable-tensor nonnegative scores, in ParamSet order. Higher = more important.
struct ImportanceScores {
    Criterion criterion = Criterion::magnitude;
    std::vector<std::pair<std::string, Tensor>> entries;

    const Tensor& at(const std::string& name) const {
        for (const auto& [n, t] : entries)
            if (n == name) return t;
        throw AlignmentError("no scores for '" + name + "'");
    }
};

// Fixed token batches used to collect activation statistics.
struct CalibrationSet {
    std::vector<model::Batch> batches;
};

inline ImportanceScores score_magnitude(const ParamSet& params) {
    ImportanceScores s{Criterion::magnitude, {}};
    for (const auto& e : params) {
        if (!e.prunable) continue;
        Tensor t(e.value.shape());
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::abs(e.value[i]);
        s.entries.emplace_back(e.name, std::move(t));
    }
    return s;
}

// score[i][j] = |W[i][j]| * ||X[:, j]||_2, given the squared column norms of the layer input X.
inline Tensor wanda_scores(const Tensor& weight, std::span<const double> input_sq_norms) {
    if (weight.rank() != 2 || input_sq_norms.size() != weight.cols())
        throw DimensionError("wanda: input norm length does not match weight columns");
    Tensor out(weight.shape());
    for (std::size_t j = 0; j < weight.cols(); ++j) {
        const double norm = std::sqrt(input_sq_norms[j]);
        for (std::size_t i = 0; i < weight.rows(); ++i) out.at(i, j) = std::abs(weight.at(i, j)) * norm;
    }
    return out;
}

// Diagonal of the inverse of a symmetric positive-definite matrix, via Cholesky.
inline std::vector<double> spd_inverse_diagonal(const Tensor& h) {
    const std::size_t n = h.rows();
    if (h.rank() != 2 || h.cols() != n) throw DimensionError("expected a square matrix");
    Tensor l({n, n});
    for (std::size_t j = 0; j < n; ++j) {
        double diag = h.at(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= l.at(j, k) * l.at(j, k);
        if (!(diag > 0.0) || !std::isfinite(diag))
            throw NumericError("matrix is not positive definite (pivot " + std::to_string(j) + ")");
        const double ljj = std::sqrt(diag);
        l.at(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = h.at(i, j);
            for (std::size_t k = 0; k < j; ++k) v -= l.at(i, k) * l.at(j, k);
            l.at(i, j) = v / ljj;
        }
    }
    // H^-1 = L^-T L^-1, so [H^-1]_jj = sum_k (L^-1)_kj^2; solve L y = e_j column by column.
    std::vector<double> out(n, 0.0), y(n);
    for (std::size_t j = 0; j < n; ++j) {
        std::fill(y.begin(), y.end(), 0.0);
        for (std::size_t i = j; i < n; ++i) {
            double v = i == j ? 1.0 : 0.0;
            for (std::size_t k = j; k < i; ++k) v -= l.at(i, k) * y[k];
            y[i] = v / l.at(i, i);
            out[j] += y[i] * y[i];
        }
    }
    return out;
}

// score[i][j] = W[i][j]^2 / [H^-1]_jj with H = gram + lambda * mean(diag(gram)) * I.
inline Tensor second_order_scores(const Tensor& weight, const Tensor& gram, double lambda) {
    if (!(lambda > 0.0)) throw ValidationError("second-order damping must be > 0");
    const std::size_t n = weight.cols();
    if (gram.rank() != 2 || gram.rows() != n || gram.cols() != n)
        throw DimensionError("second-order: gram matrix does not match weight columns");
    double mean_diag = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean_diag += gram.at(j, j);
    mean_diag /= double(n);
    Tensor h = gram;
    for (std::size_t j = 0; j < n; ++j) h.at(j, j) += lambda * mean_diag;
    const auto hinv = spd_inverse_diagonal(h);
    Tensor out(weight.shape());
    for (std::size_t i = 0; i < weight.rows(); ++i)
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) = weight.at(i, j) * weight.at(i, j) / hinv[j];
    return out;
}

namespace detail {

template <typename Accumulate>
void for_each_calibration_input(const model::ModelConfig& cfg, const ParamSet& params, const CalibrationSet& calib,
                                Accumulate&& acc) {
    if (calib.batches.empty()) throw ValidationError("calibration set is empty");
    for (const auto& batch : calib.batches)
        for (auto& [name, x] : model::layer_inputs(cfg, params, batch)) acc(name, x);
}

}  // namespace detail

inline ImportanceScores score_wanda(const ParamSet& params, const model::ModelConfig& cfg, const CalibrationSet& calib) {
    std::vector<std::pair<std::string, std::vector<double>>> sq;
    detail::for_each_calibration_input(cfg, params, calib, [&](const std::string& name, const Tensor& x) {
        auto it = std::find_if(sq.begin(), sq.end(), [&](auto& p) { return p.first == name; });
        if (it == sq.end()) {
            sq.emplace_back(name, std::vector<double>(x.cols(), 0.0));
            it = sq.end() - 1;
        }
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t j = 0; j < x.cols(); ++j) it->second[j] += x.at(r, j) * x.at(r, j);
    });
    ImportanceScores s{Criterion::wanda, {}};
    for (const auto& e : params) {
        if (!e.prunable) continue;
        auto it = std::find_if(sq.begin(), sq.end(), [&](auto& p) { return p.first == e.name; });
        if (it == sq.end()) throw AlignmentError("no calibration input reaches '" + e.name + "'");
        s.entries.emplace_back(e.name, wanda_scores(e.value, it->second));
    }
    return s;
}

inline ImportanceScores score_second_order(const ParamSet& params, const model::ModelConfig& cfg,
                                           const CalibrationSet& calib, double lambda = 1e-2) {
    if (!(lambda > 0.0)) throw ValidationError("second-order damping must be > 0");
    std::vector<std::pair<std::string, Tensor>> grams;
    detail::for_each_calibration_input(cfg, params, calib, [&](const std::string& name, const Tensor& x) {
        auto it = std::find_if(grams.begin(), grams.end(), [&](auto& p) { return p.first == name; });
        if (it == grams.end()) {
            grams.emplace_back(name, Tensor({x.cols(), x.cols()}));
            it = grams.end() - 1;
        }
        kernels::gemm_tn_acc(x.data(), x.data(), it->second.data(), x.rows(), x.cols(), x.cols());
    });
    ImportanceScores s{Criterion::second_order, {}};
    for (const auto& e : params) {
        if (!e.prunable) continue;
        auto it = std::find_if(grams.begin(), grams.end(), [&](auto& p) { return p.first == e.name; });
        if (it == grams.end()) throw AlignmentError("no calibration input reaches '" + e.name + "'");
        s.entries.emplace_back(e.name, second_order_scores(e.value, it->second, lambda));
    }
    return s;
}

}  // namespace jdna::prune
