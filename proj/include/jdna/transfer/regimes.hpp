#pragma once

#include <chrono>
#include <cmath>
#include <numeric>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "jdna/core/error.hpp"
#include "jdna/core/param_set.hpp"
#include "jdna/core/rng.hpp"
#include "jdna/model/transformer.hpp"
#include "jdna/prune/builders.hpp"
#include "jdna/task/tasks.hpp"

namespace jdna::transfer {

// Plain SGD with momentum; shared by every regime.
struct Recipe {
    double lr = 0.05;
    double momentum = 0.9;
    int steps = 200;
    int batch_size = 16;
    std::uint64_t seed = 0;

    friend bool operator==(const Recipe&, const Recipe&) = default;
};

enum class RegimeKind { dense, dense_freeze, sparse, sparse_to_dense };

inline const char* to_string(RegimeKind k) {
    switch (k) {
        case RegimeKind::dense: return "dense";
        case RegimeKind::dense_freeze: return "dense_freeze";
        case RegimeKind::sparse: return "sparse";
        case RegimeKind::sparse_to_dense: return "sparse_to_dense";
    }
    return "?";
}

struct RegimeSpec {
    RegimeKind kind = RegimeKind::dense;
    double freeze_q = 0.0;               // dense_freeze only
    std::optional<prune::PruneMask> mask;  // sparse and sparse_to_dense only
    Recipe recipe;
    std::function<void(int step, const ParamSet&)> on_step;  // called after each update
};

struct EvalBreakdown {
    std::string name;
    double accuracy = 0.0;  // percent
    double loss = 0.0;
    std::size_t targets = 0;
};

struct Metrics {
    double accuracy = 0.0;  // headline (first eval set), percent
    double loss = 0.0;
    std::vector<EvalBreakdown> sets;
};

struct TrainTrace {
    std::vector<double> losses;  // loss of the batch seen at each step, before that step's update
    ParamSet final_params;
    Metrics metrics;
    double wall_seconds = 0.0;
};

// RNG streams derived from Recipe::seed.
enum : std::uint64_t { stream_head = 101, stream_data = 102 };

inline constexpr int kEvalBatchSize = 250;

inline EvalBreakdown evaluate_set(const model::ModelConfig& cfg, const ParamSet& params, const task::EvalSet& set,
                                  const prune::PruneMask* mask) {
    EvalBreakdown out;
    out.name = set.name;
    std::size_t correct = 0;
    double loss_sum = 0.0;
    for (const auto& batch : task::make_batches(set.items, cfg.head, kEvalBatchSize)) {
        auto c = model::forward_cached(cfg, params, batch, mask);
        const auto pred = model::argmax_rows(c.logits);
        for (std::size_t i = 0; i < pred.size(); ++i) correct += (pred[i] == c.targets[i]);
        loss_sum += c.loss * double(pred.size());
        out.targets += pred.size();
    }
    if (out.targets) {
        out.accuracy = 100.0 * double(correct) / double(out.targets);
        out.loss = loss_sum / double(out.targets);
    }
    return out;
}

// Accuracy (percent) and mean loss over each of the task's eval sets.
inline Metrics evaluate(const model::ModelConfig& cfg, const ParamSet& params, const task::Task& task,
                        const prune::PruneMask* mask = nullptr) {
    Metrics m;
    for (const auto& set : task.evals) m.sets.push_back(evaluate_set(cfg, params, set, mask));
    if (!m.sets.empty()) {
        m.accuracy = m.sets.front().accuracy;
        m.loss = m.sets.front().loss;
    }
    return m;
}

// Parameters with the head the task needs; a fresh head is drawn from the recipe seed when the
// pre-trained one does not fit.
inline ParamSet adapt_params(const ParamSet& pre, const model::ModelConfig& cfg, std::uint64_t seed) {
    ParamSet params = pre;
    const std::string prefix = model::head_prefix(cfg.head);
    const auto* w = params.find(prefix + ".weight");
    if (!w || w->value.rows() != std::size_t(cfg.output_size())) {
        Rng rng(derive_seed(seed, stream_head));
        model::replace_head(params, cfg, rng);
    }
    return params;
}

// The frozen set of dense_freeze: the pruner's global magnitude drop set for s = q.
inline prune::PruneMask freeze_mask(const ParamSet& pre, double q) {
    return prune::build_mask_unstructured(prune::score_magnitude(pre), q, prune::Scope::global);
}

// Runs one regime from the pre-trained parameters. `base` is the backbone config; its head is
// replaced by the task's.
inline TrainTrace run_regime(const ParamSet& pre, const model::ModelConfig& base, const task::Task& task,
                             const RegimeSpec& spec) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = task::config_for(base, task);
    const auto& r = spec.recipe;
    if (r.steps < 0 || r.batch_size <= 0) throw ValidationError("recipe needs steps >= 0 and batch_size > 0");
    if (r.steps > 0 && task.train.empty()) throw ValidationError("task '" + task.name + "' has no training data");

    ParamSet params = adapt_params(pre, cfg, r.seed);

    const prune::PruneMask* mask = nullptr;  // enforced during training and evaluation
    std::optional<prune::PruneMask> frozen;
    switch (spec.kind) {
        case RegimeKind::dense: break;
        case RegimeKind::dense_freeze:
            if (!(spec.freeze_q >= 0.0 && spec.freeze_q < 1.0)) throw ValidationError("freeze q must be in [0, 1)");
            frozen = freeze_mask(pre, spec.freeze_q);
            break;
        case RegimeKind::sparse:
        case RegimeKind::sparse_to_dense:
            if (!spec.mask) throw ValidationError(std::string(to_string(spec.kind)) + " regime requires a mask");
            params = prune::apply_mask(params, *spec.mask);
            if (spec.kind == RegimeKind::sparse) mask = &*spec.mask;
            break;
    }

    ParamSet velocity = zeros_like(params);
    TrainTrace trace;
    trace.losses.reserve(std::size_t(r.steps));
    Rng data_rng(derive_seed(r.seed, stream_data));
    std::vector<std::size_t> order(task.train.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();
    std::vector<task::Example> items;

    for (int step = 0; step < r.steps; ++step) {
        items.clear();
        while (int(items.size()) < r.batch_size) {
            if (cursor == order.size()) {
                data_rng.shuffle(order);
                cursor = 0;
            }
            items.push_back(task.train[order[cursor++]]);
        }
        const auto batch = task::make_batch(items, cfg.head);
        auto [loss, grads] = model::backward(cfg, params, batch, mask, model::MaskedGrad::effective);
        if (!std::isfinite(loss)) throw TrainingError("non-finite loss", std::size_t(step));
        trace.losses.push_back(loss);

        for (std::size_t e = 0; e < params.size(); ++e) {
            auto& w = params.entry(e);
            auto& v = velocity.entry(e).value;
            auto& g = grads.entry(e).value;
            if (frozen && w.prunable) {
                const auto& keep = frozen->find(w.name)->keep;
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (!keep[i]) g[i] = 0.0;
            }
            for (std::size_t i = 0; i < g.size(); ++i) {
                v[i] = r.momentum * v[i] + g[i];
                w.value[i] -= r.lr * v[i];
            }
            if (mask && w.prunable) {
                const auto& keep = mask->find(w.name)->keep;
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (!keep[i]) {
                        w.value[i] = 0.0;
                        v[i] = 0.0;
                    }
            }
        }
        if (spec.on_step) spec.on_step(step, params);
    }
    trace.metrics = evaluate(cfg, params, task, mask);
    trace.final_params = std::move(params);
    trace.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return trace;
}

inline TrainTrace run_dense(const ParamSet& pre, const model::ModelConfig& base, const task::Task& task,
                            const Recipe& recipe) {
    return run_regime(pre, base, task, {RegimeKind::dense, 0.0, std::nullopt, recipe, {}});
}

inline TrainTrace run_dense_freeze(const ParamSet& pre, const model::ModelConfig& base, const task::Task& task,
                                   const Recipe& recipe, double q) {
    return run_regime(pre, base, task, {RegimeKind::dense_freeze, q, std::nullopt, recipe, {}});
}

inline TrainTrace run_sparse(const ParamSet& pre, const model::ModelConfig& base, const task::Task& task,
                             const Recipe& recipe, const prune::PruneMask& mask) {
    return run_regime(pre, base, task, {RegimeKind::sparse, 0.0, mask, recipe, {}});
}

inline TrainTrace run_sparse_to_dense(const ParamSet& pre, const model::ModelConfig& base, const task::Task& task,
                                      const Recipe& recipe, const prune::PruneMask& mask) {
    return run_regime(pre, base, task, {RegimeKind::sparse_to_dense, 0.0, mask, recipe, {}});
}

inline nlohmann::json metrics_json(const Metrics& m) {
    nlohmann::json j;
    j["accuracy"] = m.accuracy;
    j["loss"] = m.loss;
    j["sets"] = nlohmann::json::array();
    for (const auto& s : m.sets)
        j["sets"].push_back({{"name", s.name}, {"accuracy", s.accuracy}, {"loss", s.loss}, {"targets", s.targets}});
    return j;
}

// One {"step": i, "loss": x} line per step, then {"final": metrics, "wall_seconds": t}.
inline void write_trace_jsonl(std::ostream& out, const TrainTrace& trace) {
    for (std::size_t i = 0; i < trace.losses.size(); ++i)
        out << nlohmann::json{{"step", i}, {"loss", trace.losses[i]}}.dump() << '\n';
    out << nlohmann::json{{"final", metrics_json(trace.metrics)}, {"wall_seconds", trace.wall_seconds}}.dump() << '\n';
}

}  // namespace jdna::transfer
