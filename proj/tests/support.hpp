#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

#include "jdna/core/param_set.hpp"
#include "jdna/core/rng.hpp"
#include "jdna/model/config.hpp"
#include "jdna/model/transformer.hpp"
#include "jdna/prune/mask.hpp"
#include "jdna/task/tasks.hpp"

namespace jdna::testing {

// Small enough for finite differences and fast training loops, still M-divisible.
inline model::ModelConfig tiny_config(model::HeadKind head = model::HeadKind::classification, int classes = 4) {
    model::ModelConfig c;
    c.d_model = 16;
    c.n_heads = 2;
    c.n_blocks = 2;
    c.ff_mult = 2;
    c.max_seq_len = 16;
    c.head = head;
    c.num_classes = head == model::HeadKind::classification ? classes : 0;
    return c;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

// Subsample-family task on a reduced corpus.
inline task::Task tiny_subsample_task(const task::World& w, double r = 1.0, std::uint64_t seed = 0, int base = 200,
                                      int eval_items = 200) {
    Rng rng(seed);
    auto s = task::gen_subsample_task(w, base, r, rng, eval_items);
    task::Task t;
    t.name = "subsample";
    t.head = model::HeadKind::classification;
    t.num_classes = task::kSubsampleClasses;
    t.train = std::move(s.train);
    t.evals.push_back({"eval", std::move(s.eval)});
    return t;
}

// Random padded batch: row 0 full length, tokens clear of the reserved ids.
inline model::Batch random_batch(const model::ModelConfig& cfg, int batch, int seq, Rng& rng) {
    model::Batch b;
    b.batch_size = batch;
    b.seq_len = seq;
    for (int i = 0; i < batch; ++i) b.lengths.push_back(i == 0 ? seq : 1 + int(rng.below(std::uint64_t(seq))));
    for (int i = 0; i < batch; ++i)
        for (int t = 0; t < seq; ++t)
            b.token_ids.push_back(t < b.lengths[std::size_t(i)] ? 8 + int(rng.below(std::uint64_t(cfg.vocab_size - 8))) : 0);
    if (cfg.head == model::HeadKind::classification) {
        for (int i = 0; i < batch; ++i) b.labels.push_back(int(rng.below(std::uint64_t(cfg.num_classes))));
    } else {
        for (int i = 0; i < batch; ++i)
            for (int t = 0; t < seq; ++t)
                b.labels.push_back(t < b.lengths[std::size_t(i)] && rng.bernoulli(0.5)
                                       ? int(rng.below(std::uint64_t(cfg.vocab_size)))
                                       : model::kIgnoreLabel);
        b.labels[0] = 3;  // at least one target
    }
    return b;
}

inline double loss_of(const model::ModelConfig& cfg, const ParamSet& p, const model::Batch& b,
                      const prune::PruneMask* mask = nullptr) {
    return model::forward(cfg, p, b, mask).loss;
}

// Central differences at `coords` random coordinates of every tensor; returns the worst relative
// error |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline double worst_fd_error(const model::ModelConfig& cfg, ParamSet p, const model::Batch& b,
                             const prune::PruneMask* mask, int coords, std::uint64_t seed,
                             std::string* worst_name = nullptr,
                             model::MaskedGrad policy = model::MaskedGrad::effective) {
    constexpr double eps = 1e-5;
    constexpr double floor = 1e-6;
    const auto grads = model::backward(cfg, p, b, mask, policy).grads;
    Rng rng(seed);
    double worst = 0.0;
    for (std::size_t e = 0; e < p.size(); ++e) {
        auto& w = p.entry(e).value;
        for (int c = 0; c < coords; ++c) {
            const auto i = std::size_t(rng.below(w.size()));
            const double orig = w[i];
            w[i] = orig + eps;
            const double lp = loss_of(cfg, p, b, mask);
            w[i] = orig - eps;
            const double lm = loss_of(cfg, p, b, mask);
            w[i] = orig;
            const double numeric = (lp - lm) / (2 * eps);
            const double analytic = grads.entry(e).value[i];
            const double err = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
            if (err > worst) {
                worst = err;
                if (worst_name) *worst_name = p.entry(e).name;
            }
        }
    }
    return worst;
}

// Fresh directory under the system temp dir, emptied on construction and removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& name)
        : path_(std::filesystem::temp_directory_path() / ("jdna_test_" + name)) {
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

private:
    std::filesystem::path path_;
};

}  // namespace jdna::testing
