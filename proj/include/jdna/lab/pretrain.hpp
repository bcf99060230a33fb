#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "jdna/core/error.hpp"
#include "jdna/core/param_set.hpp"
#include "jdna/core/rng.hpp"
#include "jdna/model/transformer.hpp"
#include "jdna/task/tasks.hpp"

namespace jdna::lab {

// Masked-token pre-training uses Adam; fine-tuning stays on SGD.
struct PretrainRecipe {
    int steps = 4000;
    int batch_size = 32;
    double lr = 3e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int warmup = 100;
    std::uint64_t seed = 0;

    friend bool operator==(const PretrainRecipe&, const PretrainRecipe&) = default;
};

enum : std::uint64_t { stream_pretrain_init = 201, stream_pretrain_data = 202 };

struct PretrainResult {
    ParamSet params;
    std::vector<double> losses;
};

// Linear warmup, then cosine decay to 10% of the peak rate.
inline double pretrain_lr(const PretrainRecipe& r, int step) {
    if (step < r.warmup) return r.lr * double(step + 1) / double(r.warmup);
    const double t = double(step - r.warmup) / double(std::max(1, r.steps - r.warmup));
    return r.lr * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(3.141592653589793 * t)));
}

using ProgressFn = std::function<void(int step, double loss)>;

inline PretrainResult pretrain(const model::ModelConfig& cfg, const task::PretrainCorpus& corpus,
                               const PretrainRecipe& r, const ProgressFn& progress = {}) {
    if (cfg.head != model::HeadKind::token_prediction) throw ConfigError("pre-training needs the token head", "model.head");
    if (r.steps < 0 || r.batch_size <= 0) throw ConfigError("pretrain.steps and pretrain.batch_size", "pretrain");
    Rng init_rng(derive_seed(r.seed, stream_pretrain_init));
    Rng data_rng(derive_seed(r.seed, stream_pretrain_data));
    PretrainResult out{model::init_params(cfg, init_rng), {}};
    auto m1 = zeros_like(out.params);
    auto m2 = zeros_like(out.params);
    double b1t = 1.0, b2t = 1.0;
    for (int step = 0; step < r.steps; ++step) {
        const auto batch = task::mlm_batch(corpus, r.batch_size, data_rng);
        auto [loss, grads] = model::backward(cfg, out.params, batch);
        if (!std::isfinite(loss)) throw TrainingError("pre-training diverged", std::size_t(step));
        out.losses.push_back(loss);
        if (progress) progress(step, loss);
        b1t *= r.beta1;
        b2t *= r.beta2;
        const double lr = pretrain_lr(r, step);
        for (std::size_t e = 0; e < out.params.size(); ++e) {
            auto& w = out.params.entry(e).value;
            auto& a = m1.entry(e).value;
            auto& b = m2.entry(e).value;
            const auto& g = grads.entry(e).value;
            for (std::size_t i = 0; i < w.size(); ++i) {
                a[i] = r.beta1 * a[i] + (1.0 - r.beta1) * g[i];
                b[i] = r.beta2 * b[i] + (1.0 - r.beta2) * g[i] * g[i];
                w[i] -= lr * (a[i] / (1.0 - b1t)) / (std::sqrt(b[i] / (1.0 - b2t)) + r.eps);
            }
        }
    }
    return out;
}

}  // namespace jdna::lab
