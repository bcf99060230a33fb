#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "jdna/analysis/analysis.hpp"
#include "jdna/core/checkpoint.hpp"
#include "jdna/core/hash.hpp"
#include "jdna/lab/config.hpp"
#include "jdna/lab/pretrain.hpp"
#include "jdna/prune/builders.hpp"
#include "jdna/prune/calibration.hpp"
#include "jdna/prune/mask_io.hpp"
#include "jdna/task/tasks.hpp"
#include "jdna/task/world.hpp"
#include "jdna/transfer/regimes.hpp"

namespace jdna::lab {

// RNG streams derived from a cell's seed.
enum : std::uint64_t { stream_task_sample = 301, stream_recipe = 302 };

inline task::PretrainCorpus build_corpus(const ExperimentConfig& c, const task::World& w) {
    auto corpus = task::pretrain_corpus(w, c.world.corpus);
    corpus.weights = c.world.mix;
    return corpus;
}

inline std::string corpus_hash(const task::PretrainCorpus& corpus) {
    Fnv1a h;
    for (std::size_t f = 0; f < corpus.families.size(); ++f) {
        h.update("family" + std::to_string(f));
        for (const auto& seq : corpus.families[f]) {
            for (int t : seq) h.update(std::string_view(reinterpret_cast<const char*>(&t), sizeof t));
            h.update(";");
        }
    }
    return h.hex();
}

inline model::ModelConfig lm_config(const ExperimentConfig& c) {
    auto m = c.model;
    m.head = model::HeadKind::token_prediction;
    m.num_classes = 0;
    return m;
}

// ---------------------------------------------------------------------------------------------
// Difficulty knobs

struct TaskKnob {
    Family family = Family::subsample;
    double ratio = 1.0;
    task::Protocol protocol = task::Protocol::few_shot;
    task::Domain domain = task::Domain::minority;
    bool open_book = false;

    std::string label() const {
        char buf[64];
        switch (family) {
            case Family::subsample: std::snprintf(buf, sizeof buf, "subsample:r=%.2f", ratio); return buf;
            case Family::multidomain:
                return std::string("multidomain:") + task::to_string(protocol) + ":" + task::to_string(domain);
            case Family::contextqa: return std::string("contextqa:") + (open_book ? "open" : "closed");
        }
        return "?";
    }
};

inline std::vector<TaskKnob> task_knobs(const TaskConfig& t) {
    std::vector<TaskKnob> out;
    switch (t.family) {
        case Family::subsample:
            for (double r : t.ratios) out.push_back({Family::subsample, r, {}, {}, false});
            break;
        case Family::multidomain:
            for (auto p : t.protocols)
                for (auto d : t.domains) out.push_back({Family::multidomain, 1.0, p, d, false});
            break;
        case Family::contextqa:
            for (bool b : t.books) out.push_back({Family::contextqa, 1.0, {}, {}, b});
            break;
    }
    return out;
}

inline task::Task build_task(const ExperimentConfig& c, const task::World& w, const TaskKnob& k, std::uint64_t seed) {
    Rng rng(derive_seed(seed, stream_task_sample));
    task::Task t;
    t.name = k.label();
    switch (k.family) {
        case Family::subsample: {
            auto s = task::gen_subsample_task(w, c.task.base_size, k.ratio, rng, c.task.eval_items);
            t.head = model::HeadKind::classification;
            t.num_classes = task::kSubsampleClasses;
            t.train = std::move(s.train);
            t.evals.push_back({"eval", std::move(s.eval)});
            break;
        }
        case Family::multidomain: {
            auto m = task::world_multidomain_task(w, c.world.corpus, k.protocol, c.task.few_shot_n, c.task.eval_items);
            const auto d = std::size_t(k.domain);
            t.head = model::HeadKind::token_prediction;
            t.train = std::move(m.finetune[d]);
            t.evals.push_back({task::to_string(k.domain), std::move(m.eval[d])});
            t.evals.push_back({task::to_string(task::Domain(1 - int(d))), std::move(m.eval[1 - d])});
            break;
        }
        case Family::contextqa: {
            auto q = task::gen_contextqa_task(w, k.open_book, rng, c.task.finetune_n);
            t.head = model::HeadKind::token_prediction;
            t.train = std::move(q.train);
            t.evals.push_back({"eval", std::move(q.eval)});
            break;
        }
    }
    return t;
}

// Zero-shot cells train for zero steps.
inline transfer::Recipe cell_recipe(const ExperimentConfig& c, const TaskKnob& k, std::uint64_t seed) {
    auto r = c.recipe;
    r.seed = derive_seed(seed, stream_recipe);
    if (k.family == Family::multidomain && k.protocol == task::Protocol::zero_shot) r.steps = 0;
    return r;
}

// ---------------------------------------------------------------------------------------------
// Pruning

inline std::string pattern_label(const ExperimentConfig& c) {
    if (c.pattern.nm) return "nm:" + std::to_string(c.pattern.m);
    return std::string("unstructured:") + prune::to_string(c.pattern.scope.value_or(prune::default_scope(c.criterion)));
}

inline prune::ImportanceScores compute_scores(const ExperimentConfig& c, const ParamSet& pre, const task::World& w,
                                              const task::PretrainCorpus& corpus) {
    const auto cfg = lm_config(c);
    if (c.criterion == prune::Criterion::magnitude) return prune::score_magnitude(pre);
    const auto calib =
        prune::make_calibration_set(corpus, w.seed, c.calibration.batches, c.calibration.batch_size);
    if (c.criterion == prune::Criterion::wanda) return prune::score_wanda(pre, cfg, calib);
    return prune::score_second_order(pre, cfg, calib, c.calibration.damping);
}

inline prune::PruneMask mask_for(const ExperimentConfig& c, const prune::ImportanceScores& scores, double s) {
    if (c.pattern.nm) {
        const int n = int(std::lround(double(c.pattern.m) * (1.0 - s)));
        return prune::build_mask_nm(scores, n, c.pattern.m);
    }
    return prune::build_mask_unstructured(scores, s, c.pattern.scope.value_or(prune::default_scope(c.criterion)));
}

// ---------------------------------------------------------------------------------------------
// Pre-training command

struct CheckpointMeta {
    json identity;
    std::string corpus_hash;
    std::uint64_t seed = 0;
    int steps = 0;
    double final_loss = 0.0;
};

inline std::filesystem::path meta_path(const std::filesystem::path& ckpt) {
    return std::filesystem::path(ckpt.string() + ".json");
}

inline void save_meta(const CheckpointMeta& m, const std::filesystem::path& ckpt) {
    json j{{"identity", m.identity},
           {"corpus_hash", m.corpus_hash},
           {"seed", m.seed},
           {"steps", m.steps},
           {"final_loss", m.final_loss},
           {"version", kVersion}};
    io::write_file(meta_path(ckpt), j.dump(2) + "\n");
}

inline std::optional<json> load_meta(const std::filesystem::path& ckpt) {
    const auto p = meta_path(ckpt);
    if (!std::filesystem::exists(p)) return std::nullopt;
    try {
        return json::parse(io::read_file(p));
    } catch (const json::parse_error&) {
        throw FormatError("checkpoint metadata " + p.string() + " is not valid JSON", 0);
    }
}

struct PretrainOutput {
    std::filesystem::path checkpoint;
    std::vector<double> losses;
};

// Trains the masked-token model and writes <checkpoint>, <checkpoint>.json (metadata) and
// <checkpoint>.loss.jsonl (one loss per step).
inline PretrainOutput cmd_pretrain(const ExperimentConfig& c, const ProgressFn& progress = {}) {
    const auto world = task::World::generate(c.world.seed);
    const auto corpus = build_corpus(c, world);
    auto res = pretrain(lm_config(c), corpus, c.pretrain, progress);
    const auto path = checkpoint_path(c);
    save_checkpoint(res.params, path);
    save_meta({pretrain_identity(c), corpus_hash(corpus), c.pretrain.seed, c.pretrain.steps,
               res.losses.empty() ? 0.0 : res.losses.back()},
              path);
    std::ostringstream trace;
    for (std::size_t i = 0; i < res.losses.size(); ++i) trace << json{{"step", i}, {"loss", res.losses[i]}}.dump() << '\n';
    io::write_file(path.string() + ".loss.jsonl", trace.str());
    return {path, std::move(res.losses)};
}

// Loads the configured checkpoint, checking it against the config that is about to use it.
inline ParamSet load_pretrained(const ExperimentConfig& c) {
    const auto path = checkpoint_path(c);
    if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path.string() + " (run pretrain first)");
    auto params = load_checkpoint(path);
    if (auto meta = load_meta(path); meta && meta->contains("identity") && (*meta)["identity"] != pretrain_identity(c))
        throw ValidationError("checkpoint " + path.string() + " was produced by a different model/world/pretrain config");
    Rng rng(0);
    if (!params.same_layout(model::init_params(lm_config(c), rng)))
        throw AlignmentError("checkpoint " + path.string() + " does not match the configured model shape");
    return params;
}

// ---------------------------------------------------------------------------------------------
// Prune command

struct PruneOutput {
    prune::PruneMask mask;
    analysis::CollapseReport collapse;
};

inline PruneOutput cmd_prune(const ExperimentConfig& c, double sparsity, const std::filesystem::path& out) {
    const auto pre = load_pretrained(c);
    const auto world = task::World::generate(c.world.seed);
    const auto corpus = build_corpus(c, world);
    PruneOutput r{mask_for(c, compute_scores(c, pre, world, corpus), sparsity), {}};
    r.collapse = analysis::detect_layer_collapse(r.mask);
    prune::save_mask(r.mask, out);
    json report{{"provenance", {{"version", kVersion}, {"config", config_hash(c)}}},
                {"criterion", prune::to_string(c.criterion)},
                {"pattern", pattern_label(c)},
                {"sparsity", sparsity},
                {"achieved_sparsity", r.mask.sparsity()},
                {"collapse", analysis::collapse_json(r.collapse)}};
    io::write_file(out.string() + ".json", report.dump(2) + "\n");
    return r;
}

// ---------------------------------------------------------------------------------------------
// Sweep

struct Cell {
    TaskKnob knob;
    std::size_t knob_index = 0;
    transfer::RegimeKind regime = transfer::RegimeKind::dense;
    double sparsity = 0.0;  // 0 for dense baselines
    std::size_t mask_index = 0;
    std::uint64_t seed = 0;
    std::string hash;
};

inline double freeze_q_for(const ExperimentConfig& c, double sparsity) { return c.freeze_q.value_or(sparsity); }

inline std::string cell_hash(const ExperimentConfig& c, const std::string& ckpt_hash, const Cell& cell) {
    const bool dense = cell.regime == transfer::RegimeKind::dense;
    json j{{"checkpoint", ckpt_hash},
           {"world", world_json(c.world)},
           {"task", to_json(c).at("task")},
           {"knob", cell.knob.label()},
           {"regime", transfer::to_string(cell.regime)},
           {"seed", cell.seed},
           {"recipe", recipe_json(c.recipe)}};
    if (!dense) {
        j["sparsity"] = cell.sparsity;
        j["criterion"] = prune::to_string(c.criterion);
        j["pattern"] = pattern_label(c);
        if (c.criterion != prune::Criterion::magnitude)
            j["calibration"] = to_json(c).at("calibration");
        if (cell.regime == transfer::RegimeKind::dense_freeze) j["freeze_q"] = freeze_q_for(c, cell.sparsity);
    }
    return hash_hex(j.dump());
}

// Cells in output order: per knob, the dense baselines, then sparsity x regime, each over seeds.
inline std::vector<Cell> plan_cells(const ExperimentConfig& c, const std::string& ckpt_hash) {
    std::vector<Cell> out;
    const auto knobs = task_knobs(c.task);
    for (std::size_t k = 0; k < knobs.size(); ++k) {
        for (auto seed : c.seeds) out.push_back({knobs[k], k, transfer::RegimeKind::dense, 0.0, 0, seed, {}});
        for (std::size_t si = 0; si < c.sparsities.size(); ++si)
            for (auto regime : c.regimes) {
                if (regime == transfer::RegimeKind::dense) continue;
                for (auto seed : c.seeds) out.push_back({knobs[k], k, regime, c.sparsities[si], si, seed, {}});
            }
    }
    for (auto& cell : out) cell.hash = cell_hash(c, ckpt_hash, cell);
    return out;
}

inline std::string provenance_line(const ExperimentConfig& c) {
    std::string seeds;
    for (auto s : c.seeds) seeds += (seeds.empty() ? "" : " ") + std::to_string(s);
    return std::string("# jdna ") + kVersion + " config=" + config_hash(c) + " seeds=" + seeds;
}

// Parses a records CSV written by a sweep; rows keyed by cell hash.
struct ExistingRecords {
    std::string provenance;
    std::map<std::string, analysis::RunRecord> rows;
};

inline analysis::RunRecord parse_record_row(const std::string& line, std::size_t line_no) {
    std::vector<std::string> f;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 10) throw ValidationError("records row has " + std::to_string(f.size()) + " fields, expected 10", line_no);
    analysis::RunRecord r;
    r.cell = f[0];
    r.task = f[1];
    r.regime = f[2];
    r.criterion = f[3];
    r.pattern = f[4];
    try {
        r.sparsity = std::stod(f[5]);
        r.seed = std::stoull(f[6]);
        r.raw = std::stod(f[7]);
        if (!f[8].empty()) r.normalized = std::stod(f[8]);
    } catch (const std::exception&) {
        throw ValidationError("records row has a non-numeric field", line_no);
    }
    r.error = f[9];
    return r;
}

inline ExistingRecords read_records(const std::filesystem::path& path) {
    ExistingRecords out;
    std::istringstream in(io::read_file(path));
    std::string line;
    std::size_t n = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (out.provenance.empty()) out.provenance = line;
            continue;
        }
        if (!header) {
            if (line != analysis::kRecordsHeader) throw ValidationError("unexpected records header", n);
            header = true;
            continue;
        }
        auto r = parse_record_row(line, n);
        out.rows[r.cell] = std::move(r);
    }
    return out;
}

struct SweepResult {
    std::vector<analysis::RunRecord> records;
    std::size_t computed = 0;  // cells run in this invocation
    std::size_t reused = 0;    // cells taken from an existing records file
};

using CellDone = std::function<void(const Cell&, const analysis::RunRecord&)>;

inline analysis::RunRecord record_for(const ExperimentConfig& c, const Cell& cell, double raw) {
    analysis::RunRecord r;
    r.cell = cell.hash;
    r.task = cell.knob.label();
    r.regime = transfer::to_string(cell.regime);
    const bool dense = cell.regime == transfer::RegimeKind::dense;
    r.criterion = dense ? "-" : prune::to_string(c.criterion);
    r.pattern = dense ? "-" : pattern_label(c);
    r.sparsity = cell.sparsity;
    r.seed = cell.seed;
    r.raw = raw;
    return r;
}

// Runs one cell from scratch; exposed so a single cell can be reproduced outside a sweep.
inline transfer::TrainTrace run_cell(const ExperimentConfig& c, const ParamSet& pre, const task::World& w,
                                     const std::vector<prune::PruneMask>& masks, const Cell& cell) {
    const auto t = build_task(c, w, cell.knob, cell.seed);
    transfer::RegimeSpec spec;
    spec.kind = cell.regime;
    spec.recipe = cell_recipe(c, cell.knob, cell.seed);
    if (cell.regime == transfer::RegimeKind::dense_freeze) spec.freeze_q = freeze_q_for(c, cell.sparsity);
    if (cell.regime == transfer::RegimeKind::sparse || cell.regime == transfer::RegimeKind::sparse_to_dense)
        spec.mask = masks.at(cell.mask_index);
    return transfer::run_regime(pre, c.model, t, spec);
}

inline void write_records(const ExperimentConfig& c, const std::filesystem::path& path,
                          const std::vector<analysis::RunRecord>& records) {
    std::string text = provenance_line(c) + "\n" + analysis::kRecordsHeader + "\n";
    for (const auto& r : records) text += analysis::record_csv_row(r) + "\n";
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    io::write_file(tmp, text);
    std::filesystem::rename(tmp, path);
}

// Full cross product of knob x sparsity x regime x seed plus dense baselines. Cells already present
// in <output_dir>/records.csv (matched by content hash) are not rerun; the file is rewritten after
// every finished cell and once more, normalized, at the end.
inline SweepResult cmd_sweep(const ExperimentConfig& c, const CellDone& on_cell = {}) {
    const auto pre = load_pretrained(c);
    const auto ckpt_hash = hash_hex(io::read_file(checkpoint_path(c)));
    const auto cells = plan_cells(c, ckpt_hash);
    const auto records_path = output_path(c, "records.csv");

    std::map<std::string, analysis::RunRecord> existing;
    if (std::filesystem::exists(records_path)) {
        auto prev = read_records(records_path);
        if (!prev.provenance.empty() && prev.provenance != provenance_line(c))
            throw ValidationError(records_path.string() + " belongs to a different configuration (" + prev.provenance +
                                  "); use another output_dir");
        existing = std::move(prev.rows);
    }

    SweepResult result;
    std::vector<std::optional<analysis::RunRecord>> slots(cells.size());
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (auto it = existing.find(cells[i].hash); it != existing.end()) {
            slots[i] = record_for(c, cells[i], it->second.raw);
            ++result.reused;
        } else {
            todo.push_back(i);
        }
    }

    std::vector<prune::PruneMask> masks;
    const bool need_masks = std::any_of(todo.begin(), todo.end(), [&](std::size_t i) {
        return cells[i].regime == transfer::RegimeKind::sparse || cells[i].regime == transfer::RegimeKind::sparse_to_dense;
    });
    const auto world = task::World::generate(c.world.seed);
    if (need_masks) {
        const auto corpus = build_corpus(c, world);
        const auto scores = compute_scores(c, pre, world, corpus);
        for (double s : c.sparsities) masks.push_back(mask_for(c, scores, s));
    }

    std::mutex mu;
    auto snapshot = [&] {
        std::vector<analysis::RunRecord> done;
        for (const auto& s : slots)
            if (s) done.push_back(*s);
        write_records(c, records_path, done);
    };
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    auto worker = [&] {
        for (;;) {
            const auto k = next.fetch_add(1);
            if (k >= todo.size()) return;
            {
                std::lock_guard lock(mu);
                if (failure) return;
            }
            const auto& cell = cells[todo[k]];
            try {
                auto trace = run_cell(c, pre, world, masks, cell);
                auto rec = record_for(c, cell, trace.metrics.accuracy);
                if (c.save_checkpoints) {
                    const auto dir = output_path(c, "cells");
                    save_checkpoint(trace.final_params, dir / (cell.hash + ".ckpt"));
                    std::ostringstream os;
                    transfer::write_trace_jsonl(os, trace);
                    io::write_file(dir / (cell.hash + ".jsonl"), os.str());
                }
                std::lock_guard lock(mu);
                slots[todo[k]] = rec;
                ++result.computed;
                snapshot();
                if (on_cell) on_cell(cell, rec);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    const int jobs = std::max(1, std::min<int>(c.jobs, int(todo.size())));
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    for (auto& s : slots) result.records.push_back(*s);
    result.records = analysis::normalize_records(std::move(result.records));
    write_records(c, records_path, result.records);
    const auto summary = analysis::summarize(result.records);
    json j{{"provenance", {{"version", kVersion}, {"config", config_hash(c)}, {"seeds", c.seeds}}},
           {"groups", analysis::summary_json(summary)}};
    io::write_file(output_path(c, "summary.json"), j.dump(2) + "\n");
    return result;
}

// ---------------------------------------------------------------------------------------------
// LMC command: interpolate two fine-tuned checkpoints and evaluate on the first knob's task.

inline std::vector<analysis::InterpolationPoint> cmd_lmc(const ExperimentConfig& c, const std::filesystem::path& dense,
                                                         const std::filesystem::path& sparse, int n_points,
                                                         const std::filesystem::path& out) {
    const auto theta_d = load_checkpoint(dense);
    const auto theta_s = load_checkpoint(sparse);
    if (!theta_d.same_layout(theta_s)) throw AlignmentError("checkpoints differ in tensor names or shapes");
    const auto world = task::World::generate(c.world.seed);
    const auto knob = task_knobs(c.task).front();
    const auto t = build_task(c, world, knob, c.seeds.front());
    const auto cfg = task::config_for(c.model, t);
    auto curve = analysis::lmc_curve(
        theta_d, theta_s,
        [&](const ParamSet& p) {
            auto m = transfer::evaluate(cfg, p, t);
            return std::pair{m.loss, m.accuracy};
        },
        n_points);
    std::ostringstream os;
    os << "# jdna " << kVersion << " config=" << config_hash(c) << " task=" << knob.label()
       << " dense=" << hash_hex(io::read_file(dense)) << " sparse=" << hash_hex(io::read_file(sparse)) << '\n';
    analysis::write_curve_csv(os, curve);
    io::write_file(out, os.str());
    json j{{"task", knob.label()}, {"points", curve.size()}, {"loss_barrier", analysis::loss_barrier(curve)}};
    io::write_file(out.string() + ".json", j.dump(2) + "\n");
    return curve;
}

// ---------------------------------------------------------------------------------------------
// Difficulty and report commands

inline std::string cmd_difficulty(const std::filesystem::path& scores) {
    const auto text = io::read_file(scores);
    const auto table = task::parse_score_table(text);
    std::ostringstream os;
    os << "# jdna " << kVersion << " input=" << hash_hex(text) << '\n';
    analysis::write_difficulty_csv(os, table);
    return os.str();
}

// Group means over seeds from a records file: CSV text plus a JSON summary.
inline std::pair<std::string, json> cmd_report(const std::filesystem::path& records) {
    const auto prev = read_records(records);
    std::vector<analysis::RunRecord> rows;
    for (const auto& [k, r] : prev.rows) rows.push_back(r);
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        return std::tie(a.task, a.regime, a.sparsity, a.seed) < std::tie(b.task, b.regime, b.sparsity, b.seed);
    });
    rows = analysis::normalize_records(std::move(rows));
    const auto groups = analysis::summarize(rows);
    std::ostringstream os;
    os << (prev.provenance.empty() ? "# jdna report" : prev.provenance) << '\n';
    os << "task,regime,criterion,pattern,sparsity,runs,mean_raw,mean_normalized,flagged\n";
    char buf[256];
    for (const auto& g : groups) {
        std::snprintf(buf, sizeof buf, "%s,%s,%s,%s,%.4f,%zu,%.6f,%.6f,%zu\n", g.task.c_str(), g.regime.c_str(),
                      g.criterion.c_str(), g.pattern.c_str(), g.sparsity, g.runs, g.mean_raw, g.mean_normalized, g.flagged);
        os << buf;
    }
    return {os.str(), json{{"provenance", prev.provenance}, {"groups", analysis::summary_json(groups)}}};
}

}  // namespace jdna::lab
