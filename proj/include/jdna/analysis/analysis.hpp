#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "jdna/core/error.hpp"
#include "jdna/core/param_set.hpp"
#include "jdna/prune/mask.hpp"
#include "jdna/task/score_table.hpp"

namespace jdna::analysis {

// Fixed two-decimal rendering; never prints "-0.00".
inline std::string fixed2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    std::string s = buf;
    if (s == "-0.00") s = "0.00";
    return s;
}

// ---------------------------------------------------------------------------------------------
// Across-task difficulty

struct DifficultyScore {
    std::string task;
    double value = 0.0;  // percent, signed

    std::string rounded() const { return fixed2(value); }
};

inline double task_difficulty(double human, double model) {
    if (!(human > 0.0)) throw ValidationError("human score must be > 0");
    return 100.0 * (human - model) / human;
}

inline std::vector<DifficultyScore> difficulty_scores(const task::ScoreTable& table) {
    std::vector<DifficultyScore> out;
    for (const auto& r : table.rows) {
        if (!(r.human > 0.0)) throw ValidationError("human score must be > 0", r.line);
        out.push_back({r.task, task_difficulty(r.human, r.model)});
    }
    return out;
}

inline void write_difficulty_csv(std::ostream& out, const task::ScoreTable& table) {
    const auto scores = difficulty_scores(table);
    out << "task,human,model,difficulty\n";
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const auto& r = table.rows[i];
        out << r.task << ',' << r.human_text << ',' << r.model_text << ',' << scores[i].rounded() << '\n';
    }
}

// ---------------------------------------------------------------------------------------------
// Linear mode connectivity

struct InterpolationPoint {
    double alpha = 0.0;
    double loss = 0.0;
    double metric = 0.0;  // percent
};

// alpha * theta_s + (1 - alpha) * theta_d over every tensor; the endpoints are returned verbatim.
inline ParamSet interpolate(const ParamSet& theta_d, const ParamSet& theta_s, double alpha) {
    if (!theta_d.same_layout(theta_s)) throw AlignmentError("interpolation endpoints differ in names or shapes");
    if (alpha == 0.0) return theta_d;
    if (alpha == 1.0) return theta_s;
    ParamSet out = theta_d;
    for (std::size_t e = 0; e < out.size(); ++e) out.entry(e).value = lerp(theta_d.entry(e).value, theta_s.entry(e).value, alpha);
    return out;
}

inline double grid_alpha(int i, int n_points) { return double(i) / double(n_points - 1); }

// `eval` maps parameters to (loss, metric). Points are in increasing alpha.
using CurveEvaluator = std::function<std::pair<double, double>(const ParamSet&)>;

inline std::vector<InterpolationPoint> lmc_curve(const ParamSet& theta_d, const ParamSet& theta_s,
                                                 const CurveEvaluator& eval, int n_points = 11) {
    if (n_points < 2) throw ValidationError("n_points must be >= 2");
    if (!theta_d.same_layout(theta_s)) throw AlignmentError("interpolation endpoints differ in names or shapes");
    std::vector<InterpolationPoint> out;
    for (int i = 0; i < n_points; ++i) {
        const double a = grid_alpha(i, n_points);
        const auto [loss, metric] = eval(interpolate(theta_d, theta_s, a));
        out.push_back({a, loss, metric});
    }
    return out;
}

// Largest excess of an interior point's loss over the chord between the endpoint losses.
inline double loss_barrier(const std::vector<InterpolationPoint>& curve) {
    if (curve.size() < 3) return 0.0;
    const auto& a = curve.front();
    const auto& b = curve.back();
    std::optional<double> best;
    for (std::size_t i = 1; i + 1 < curve.size(); ++i) {
        const double t = (curve[i].alpha - a.alpha) / (b.alpha - a.alpha);
        const double excess = curve[i].loss - ((1.0 - t) * a.loss + t * b.loss);
        if (!best || excess > *best) best = excess;
    }
    return *best;
}

inline void write_curve_csv(std::ostream& out, const std::vector<InterpolationPoint>& curve) {
    out << "alpha,loss,metric\n";
    char buf[128];
    for (const auto& p : curve) {
        std::snprintf(buf, sizeof buf, "%.4f,%.17g,%.17g\n", p.alpha, p.loss, p.metric);
        out << buf;
    }
}

// ---------------------------------------------------------------------------------------------
// Layer collapse

struct TensorKeep {
    std::string name;
    std::size_t kept = 0;
    std::size_t total = 0;
    double kept_fraction = 0.0;
};

struct CollapseReport {
    std::vector<TensorKeep> tensors;
    std::vector<std::string> collapsed;
};

inline CollapseReport detect_layer_collapse(const prune::PruneMask& mask) {
    CollapseReport r;
    for (const auto& e : mask.entries) {
        const auto kept = e.kept();
        r.tensors.push_back({e.name, kept, e.keep.size(), e.keep.empty() ? 0.0 : double(kept) / double(e.keep.size())});
        if (kept == 0) r.collapsed.push_back(e.name);
    }
    return r;
}

inline nlohmann::json collapse_json(const CollapseReport& r) {
    nlohmann::json j;
    j["collapsed"] = r.collapsed;
    j["tensors"] = nlohmann::json::array();
    for (const auto& t : r.tensors)
        j["tensors"].push_back({{"name", t.name}, {"kept", t.kept}, {"total", t.total}, {"kept_fraction", t.kept_fraction}});
    return j;
}

// ---------------------------------------------------------------------------------------------
// Run records and dense normalization

struct RunRecord {
    std::string task;       // task family and knob, e.g. "subsample:r=0.10"
    std::string regime;     // "dense" for baselines
    std::string criterion;
    std::string pattern;    // "unstructured:global", "nm:2:8", "-" for dense
    double sparsity = 0.0;
    std::uint64_t seed = 0;
    double raw = 0.0;
    std::optional<double> normalized;
    std::string error;      // set when normalization failed
    std::string cell;       // content hash of the run

    bool is_dense() const { return regime == "dense"; }
};

using BaselineKey = std::pair<std::string, std::uint64_t>;  // (task, seed)

inline std::map<BaselineKey, double> dense_baselines(const std::vector<RunRecord>& records) {
    std::map<BaselineKey, double> out;
    for (const auto& r : records)
        if (r.is_dense()) out[{r.task, r.seed}] = r.raw;
    return out;
}

// normalized = 100 * raw / dense for the matching (task, seed) dense run. Records without a usable
// baseline keep no normalized value and carry an error message instead.
inline std::vector<RunRecord> normalize_records(std::vector<RunRecord> records,
                                                const std::map<BaselineKey, double>& baselines) {
    for (auto& r : records) {
        r.normalized.reset();
        r.error.clear();
        if (r.is_dense()) {
            if (r.raw == 0.0) r.error = "dense baseline is zero";
            else r.normalized = 100.0;
            continue;
        }
        auto it = baselines.find({r.task, r.seed});
        if (it == baselines.end()) r.error = "missing dense baseline";
        else if (it->second == 0.0) r.error = "dense baseline is zero";
        else r.normalized = 100.0 * (r.raw / it->second);
    }
    return records;
}

inline std::vector<RunRecord> normalize_records(std::vector<RunRecord> records) {
    const auto b = dense_baselines(records);
    return normalize_records(std::move(records), b);
}

inline constexpr const char* kRecordsHeader = "cell,task,regime,criterion,pattern,sparsity,seed,raw,normalized,error";

inline std::string record_csv_row(const RunRecord& r) {
    char num[64];
    std::string s = r.cell + ',' + r.task + ',' + r.regime + ',' + r.criterion + ',' + r.pattern + ',';
    std::snprintf(num, sizeof num, "%.4f", r.sparsity);
    s += num;
    s += ',' + std::to_string(r.seed) + ',';
    std::snprintf(num, sizeof num, "%.17g", r.raw);
    s += num;
    s += ',';
    if (r.normalized) {
        std::snprintf(num, sizeof num, "%.17g", *r.normalized);
        s += num;
    }
    s += ',' + r.error;
    return s;
}

// ---------------------------------------------------------------------------------------------
// Aggregation over seeds

struct GroupSummary {
    std::string task, regime, criterion, pattern;
    double sparsity = 0.0;
    std::size_t runs = 0;
    double mean_raw = 0.0;
    double mean_normalized = 0.0;
    std::size_t flagged = 0;
};

// Mean raw and normalized metric per (task, regime, criterion, pattern, sparsity), in first-seen order.
inline std::vector<GroupSummary> summarize(const std::vector<RunRecord>& records) {
    std::vector<GroupSummary> out;
    std::vector<std::size_t> counted;
    for (const auto& r : records) {
        auto it = std::find_if(out.begin(), out.end(), [&](const GroupSummary& g) {
            return g.task == r.task && g.regime == r.regime && g.criterion == r.criterion && g.pattern == r.pattern &&
                   g.sparsity == r.sparsity;
        });
        if (it == out.end()) {
            out.push_back({r.task, r.regime, r.criterion, r.pattern, r.sparsity, 0, 0.0, 0.0, 0});
            counted.push_back(0);
            it = out.end() - 1;
        }
        auto& c = counted[std::size_t(it - out.begin())];
        ++it->runs;
        it->mean_raw += r.raw;
        if (r.normalized) {
            it->mean_normalized += *r.normalized;
            ++c;
        } else {
            ++it->flagged;
        }
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].mean_raw /= double(out[i].runs);
        out[i].mean_normalized = counted[i] ? out[i].mean_normalized / double(counted[i]) : 0.0;
    }
    return out;
}

inline nlohmann::json summary_json(const std::vector<GroupSummary>& groups) {
    auto j = nlohmann::json::array();
    for (const auto& g : groups)
        j.push_back({{"task", g.task},
                     {"regime", g.regime},
                     {"criterion", g.criterion},
                     {"pattern", g.pattern},
                     {"sparsity", g.sparsity},
                     {"runs", g.runs},
                     {"mean_raw", g.mean_raw},
                     {"mean_normalized", g.mean_normalized},
                     {"flagged", g.flagged}});
    return j;
}

}  // namespace jdna::analysis
