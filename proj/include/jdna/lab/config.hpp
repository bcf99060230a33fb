#pragma once

// Experiment configuration: one JSON document, every key optional, unknown keys rejected.
//
// {
//   "model":       {"d_model": 64, "n_blocks": 2, "n_heads": 4, "ff_mult": 2, "max_seq_len": 32},
//   "world":       {"seed": 7, "majority_n": 10000, "minority_n": 100, "definition_sequences": 2000,
//                   "fact_sequences": 4000, "mix": [0.2, 0.5, 0.3]},
//   "pretrain":    {"steps": 4000, "batch_size": 32, "lr": 0.003, "warmup": 100, "seed": 0},
//   "checkpoint":  "pretrained.ckpt",
//   "task":        {"family": "subsample", "ratios": [...], "base_size": 2000, "eval_items": 2000}
//                  {"family": "multidomain", "protocols": ["few_shot"], "domains": ["minority"], "few_shot_n": 64}
//                  {"family": "contextqa", "books": ["closed", "open"], "finetune_n": 128},
//   "criterion":   "magnitude" | "wanda" | "second_order",
//   "pattern":     {"kind": "unstructured", "scope": "global" | "layerwise" | "rowwise"} | {"kind": "nm", "m": 8},
//   "sparsities":  [0.5],
//   "regimes":     ["sparse", "dense_freeze", "sparse_to_dense"],
//   "freeze_q":    0.7,
//   "seeds":       [0, 1, 2, 3, 4],
//   "recipe":      {"lr": 0.005, "momentum": 0.9, "steps": 600, "batch_size": 16},
//   "calibration": {"batches": 8, "batch_size": 32, "damping": 0.01},
//   "output_dir":  "out",
//   "jobs":        1,
//   "save_checkpoints": false
// }

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "jdna/core/binary_io.hpp"
#include "jdna/core/error.hpp"
#include "jdna/core/hash.hpp"
#include "jdna/lab/pretrain.hpp"
#include "jdna/model/config.hpp"
#include "jdna/prune/builders.hpp"
#include "jdna/task/tasks.hpp"
#include "jdna/transfer/regimes.hpp"

namespace jdna::lab {

using json = nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

enum class Family { subsample, multidomain, contextqa };

inline const char* to_string(Family f) {
    switch (f) {
        case Family::subsample: return "subsample";
        case Family::multidomain: return "multidomain";
        case Family::contextqa: return "contextqa";
    }
    return "?";
}

struct WorldConfig {
    std::uint64_t seed = 7;
    task::PretrainCorpusSpec corpus;
    std::array<double, 3> mix = task::PretrainCorpus{}.weights;
};

struct TaskConfig {
    Family family = Family::subsample;
    std::vector<double> ratios{0.10, 0.25, 0.40, 0.55, 0.70, 1.00};
    int base_size = 2000;
    int eval_items = task::kDefaultEvalItems;
    std::vector<task::Protocol> protocols{task::Protocol::few_shot};
    std::vector<task::Domain> domains{task::Domain::minority};
    int few_shot_n = 64;
    std::vector<bool> books{false, true};  // open_book flags
    int finetune_n = 128;
};

struct PatternConfig {
    bool nm = false;
    std::optional<prune::Scope> scope;  // unstructured; criterion default when unset
    int m = 8;
};

struct CalibrationConfig {
    int batches = 8;
    int batch_size = 32;
    double damping = 1e-2;
};

struct ExperimentConfig {
    model::ModelConfig model;
    WorldConfig world;
    PretrainRecipe pretrain;
    std::string checkpoint = "pretrained.ckpt";
    TaskConfig task;
    prune::Criterion criterion = prune::Criterion::magnitude;
    PatternConfig pattern;
    std::vector<double> sparsities{0.5};
    std::vector<transfer::RegimeKind> regimes{transfer::RegimeKind::sparse};
    std::optional<double> freeze_q;  // defaults to each cell's sparsity
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    transfer::Recipe recipe;
    CalibrationConfig calibration;
    std::string output_dir = "out";
    int jobs = 1;
    bool save_checkpoints = false;
};

namespace detail {

// Reads the keys of one JSON object, remembering which were seen so leftovers can be reported.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where("") + " must be an object", path_.empty() ? "<root>" : path_);
    }

    std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

    const json* find(const std::string& k) {
        seen_.insert(k);
        auto it = j_.find(k);
        return it == j_.end() ? nullptr : &*it;
    }

    template <typename T>
    void get(const std::string& k, T& out) {
        if (const auto* v = find(k)) {
            try {
                out = v->get<T>();
            } catch (const json::exception&) {
                throw ConfigError(key(k) + " has the wrong type", key(k));
            }
        }
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + key(it.key()) + "'", key(it.key()));
    }

private:
    std::string where(const std::string& k) const { return path_.empty() ? (k.empty() ? "config" : k) : key(k); }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <typename E>
E parse_enum(const json& v, const std::string& key, std::initializer_list<std::pair<const char*, E>> names) {
    if (v.is_string())
        for (const auto& [n, e] : names)
            if (v.get<std::string>() == n) return e;
    std::string allowed;
    for (const auto& [n, e] : names) allowed += (allowed.empty() ? "" : ", ") + std::string(n);
    throw ConfigError(key + " must be one of: " + allowed, key);
}

template <typename E>
std::vector<E> parse_enum_list(const json& v, const std::string& key,
                               std::initializer_list<std::pair<const char*, E>> names) {
    if (!v.is_array() || v.empty()) throw ConfigError(key + " must be a non-empty array", key);
    std::vector<E> out;
    for (const auto& x : v) out.push_back(parse_enum(x, key, names));
    return out;
}

inline const std::initializer_list<std::pair<const char*, transfer::RegimeKind>> kRegimeNames{
    {"dense", transfer::RegimeKind::dense},
    {"dense_freeze", transfer::RegimeKind::dense_freeze},
    {"sparse", transfer::RegimeKind::sparse},
    {"sparse_to_dense", transfer::RegimeKind::sparse_to_dense}};
inline const std::initializer_list<std::pair<const char*, prune::Criterion>> kCriterionNames{
    {"magnitude", prune::Criterion::magnitude},
    {"wanda", prune::Criterion::wanda},
    {"second_order", prune::Criterion::second_order}};
inline const std::initializer_list<std::pair<const char*, prune::Scope>> kScopeNames{
    {"global", prune::Scope::global}, {"layerwise", prune::Scope::layerwise}, {"rowwise", prune::Scope::rowwise}};
inline const std::initializer_list<std::pair<const char*, Family>> kFamilyNames{
    {"subsample", Family::subsample}, {"multidomain", Family::multidomain}, {"contextqa", Family::contextqa}};
inline const std::initializer_list<std::pair<const char*, task::Protocol>> kProtocolNames{
    {"zero_shot", task::Protocol::zero_shot}, {"few_shot", task::Protocol::few_shot}};
inline const std::initializer_list<std::pair<const char*, task::Domain>> kDomainNames{
    {"majority", task::Domain::majority}, {"minority", task::Domain::minority}};
inline const std::initializer_list<std::pair<const char*, bool>> kBookNames{{"closed", false}, {"open", true}};

inline void require(bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError(key + " " + what, key);
}

}  // namespace detail

// Rejects inconsistent settings, naming the offending key.
inline void validate(const ExperimentConfig& c) {
    using detail::require;
    try {
        model::validate(c.model);
    } catch (const ConfigError& e) {
        throw ConfigError(e.what(), "model." + e.key());
    }
    require(c.world.corpus.majority_n > c.world.corpus.minority_n && c.world.corpus.minority_n > 0, "world.minority_n",
            "must satisfy 0 < minority_n < majority_n");
    require(c.world.corpus.definition_sequences > 0, "world.definition_sequences", "must be positive");
    require(c.world.corpus.fact_sequences > 0, "world.fact_sequences", "must be positive");
    double mix = 0.0;
    for (double w : c.world.mix) {
        require(w >= 0.0, "world.mix", "entries must be non-negative");
        mix += w;
    }
    require(std::abs(mix - 1.0) < 1e-9, "world.mix", "must sum to 1");
    require(c.pretrain.steps >= 0, "pretrain.steps", "must be >= 0");
    require(c.pretrain.batch_size > 0, "pretrain.batch_size", "must be positive");
    require(c.pretrain.lr > 0.0, "pretrain.lr", "must be positive");
    require(c.pretrain.warmup >= 0, "pretrain.warmup", "must be >= 0");
    require(!c.checkpoint.empty(), "checkpoint", "must not be empty");

    const auto& t = c.task;
    require(!t.ratios.empty(), "task.ratios", "must not be empty");
    for (double r : t.ratios) require(r > 0.0 && r <= 1.0, "task.ratios", "entries must be in (0, 1]");
    require(t.base_size > 0, "task.base_size", "must be positive");
    require(t.eval_items > 0, "task.eval_items", "must be positive");
    require(t.few_shot_n >= 0, "task.few_shot_n", "must be >= 0");
    require(t.finetune_n >= 0 && t.finetune_n <= task::kSubjects * task::kRelations / 2, "task.finetune_n",
            "must be in [0, " + std::to_string(task::kSubjects * task::kRelations / 2) + "]");

    require(!c.sparsities.empty(), "sparsities", "must not be empty");
    for (double s : c.sparsities) require(s >= 0.0 && s < 1.0, "sparsities", "entries must be in [0, 1)");
    if (c.pattern.nm) {
        require(c.pattern.m >= 2 && c.model.d_model % c.pattern.m == 0 && c.model.d_ff() % c.pattern.m == 0,
                "pattern.m", "must be >= 2 and divide every prunable row length");
        for (double s : c.sparsities) {
            const double n = double(c.pattern.m) * (1.0 - s);
            require(std::abs(n - std::round(n)) < 1e-9 && std::round(n) >= 1.0, "sparsities",
                    "must be 1 - N/M for an integer N >= 1 under the N:M pattern");
        }
    }
    require(!c.regimes.empty(), "regimes", "must not be empty");
    if (c.freeze_q) require(*c.freeze_q >= 0.0 && *c.freeze_q < 1.0, "freeze_q", "must be in [0, 1)");
    require(!c.seeds.empty(), "seeds", "must not be empty");
    require(c.recipe.lr >= 0.0, "recipe.lr", "must be >= 0");
    require(c.recipe.momentum >= 0.0 && c.recipe.momentum < 1.0, "recipe.momentum", "must be in [0, 1)");
    require(c.recipe.steps >= 0, "recipe.steps", "must be >= 0");
    require(c.recipe.batch_size > 0, "recipe.batch_size", "must be positive");
    require(c.calibration.batches > 0, "calibration.batches", "must be positive");
    require(c.calibration.batch_size > 0, "calibration.batch_size", "must be positive");
    require(c.calibration.damping > 0.0, "calibration.damping", "must be positive");
    require(!c.output_dir.empty(), "output_dir", "must not be empty");
    require(c.jobs >= 1, "jobs", "must be >= 1");
}

inline ExperimentConfig parse_config(const json& root) {
    using detail::parse_enum;
    using detail::parse_enum_list;
    ExperimentConfig c;
    detail::Section top(root, "");

    if (const auto* m = top.find("model")) {
        detail::Section s(*m, "model");
        s.get("d_model", c.model.d_model);
        s.get("n_blocks", c.model.n_blocks);
        s.get("n_heads", c.model.n_heads);
        s.get("ff_mult", c.model.ff_mult);
        s.get("max_seq_len", c.model.max_seq_len);
        s.finish();
    }
    if (const auto* w = top.find("world")) {
        detail::Section s(*w, "world");
        s.get("seed", c.world.seed);
        s.get("majority_n", c.world.corpus.majority_n);
        s.get("minority_n", c.world.corpus.minority_n);
        s.get("definition_sequences", c.world.corpus.definition_sequences);
        s.get("fact_sequences", c.world.corpus.fact_sequences);
        s.get("mix", c.world.mix);
        s.finish();
    }
    if (const auto* p = top.find("pretrain")) {
        detail::Section s(*p, "pretrain");
        s.get("steps", c.pretrain.steps);
        s.get("batch_size", c.pretrain.batch_size);
        s.get("lr", c.pretrain.lr);
        s.get("warmup", c.pretrain.warmup);
        s.get("seed", c.pretrain.seed);
        s.finish();
    }
    top.get("checkpoint", c.checkpoint);
    if (const auto* t = top.find("task")) {
        detail::Section s(*t, "task");
        if (const auto* f = s.find("family")) c.task.family = parse_enum(*f, "task.family", detail::kFamilyNames);
        s.get("ratios", c.task.ratios);
        s.get("base_size", c.task.base_size);
        s.get("eval_items", c.task.eval_items);
        if (const auto* v = s.find("protocols"))
            c.task.protocols = parse_enum_list(*v, "task.protocols", detail::kProtocolNames);
        if (const auto* v = s.find("domains")) c.task.domains = parse_enum_list(*v, "task.domains", detail::kDomainNames);
        s.get("few_shot_n", c.task.few_shot_n);
        if (const auto* v = s.find("books")) c.task.books = parse_enum_list(*v, "task.books", detail::kBookNames);
        s.get("finetune_n", c.task.finetune_n);
        s.finish();
    }
    if (const auto* v = top.find("criterion")) c.criterion = parse_enum(*v, "criterion", detail::kCriterionNames);
    if (const auto* p = top.find("pattern")) {
        detail::Section s(*p, "pattern");
        std::string kind = "unstructured";
        s.get("kind", kind);
        if (kind != "unstructured" && kind != "nm") throw ConfigError("pattern.kind must be unstructured or nm", "pattern.kind");
        c.pattern.nm = kind == "nm";
        if (const auto* v = s.find("scope")) {
            if (c.pattern.nm) throw ConfigError("pattern.scope applies to unstructured patterns only", "pattern.scope");
            c.pattern.scope = parse_enum(*v, "pattern.scope", detail::kScopeNames);
        }
        if (const auto* v = s.find("m")) {
            if (!c.pattern.nm) throw ConfigError("pattern.m applies to the nm pattern only", "pattern.m");
            if (!v->is_number_integer()) throw ConfigError("pattern.m has the wrong type", "pattern.m");
            c.pattern.m = v->get<int>();
        }
        s.finish();
    }
    top.get("sparsities", c.sparsities);
    if (const auto* v = top.find("regimes")) c.regimes = parse_enum_list(*v, "regimes", detail::kRegimeNames);
    if (const auto* v = top.find("freeze_q"); v && !v->is_null()) {
        if (!v->is_number()) throw ConfigError("freeze_q has the wrong type", "freeze_q");
        c.freeze_q = v->get<double>();
    }
    top.get("seeds", c.seeds);
    if (const auto* r = top.find("recipe")) {
        detail::Section s(*r, "recipe");
        s.get("lr", c.recipe.lr);
        s.get("momentum", c.recipe.momentum);
        s.get("steps", c.recipe.steps);
        s.get("batch_size", c.recipe.batch_size);
        s.finish();
    }
    if (const auto* cal = top.find("calibration")) {
        detail::Section s(*cal, "calibration");
        s.get("batches", c.calibration.batches);
        s.get("batch_size", c.calibration.batch_size);
        s.get("damping", c.calibration.damping);
        s.finish();
    }
    top.get("output_dir", c.output_dir);
    top.get("jobs", c.jobs);
    top.get("save_checkpoints", c.save_checkpoints);
    top.finish();
    validate(c);
    return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what(), "<root>");
    }
    return parse_config(j);
}

// Reads a config file; JDNA_OUTPUT_DIR, when set, replaces output_dir.
inline ExperimentConfig load_config(const std::filesystem::path& path) {
    auto c = parse_config_text(io::read_file(path));
    if (const char* dir = std::getenv("JDNA_OUTPUT_DIR"); dir && *dir) c.output_dir = dir;
    return c;
}

// ---------------------------------------------------------------------------------------------
// Canonical JSON (every field, defaults filled in) and hashes derived from it

inline json model_json(const model::ModelConfig& m) {
    return {{"d_model", m.d_model}, {"n_blocks", m.n_blocks}, {"n_heads", m.n_heads}, {"ff_mult", m.ff_mult},
            {"max_seq_len", m.max_seq_len}};
}

inline json world_json(const WorldConfig& w) {
    return {{"seed", w.seed},
            {"majority_n", w.corpus.majority_n},
            {"minority_n", w.corpus.minority_n},
            {"definition_sequences", w.corpus.definition_sequences},
            {"fact_sequences", w.corpus.fact_sequences},
            {"mix", w.mix}};
}

inline json pretrain_json(const PretrainRecipe& p) {
    return {{"steps", p.steps}, {"batch_size", p.batch_size}, {"lr", p.lr}, {"warmup", p.warmup}, {"seed", p.seed}};
}

inline json recipe_json(const transfer::Recipe& r) {
    return {{"lr", r.lr}, {"momentum", r.momentum}, {"steps", r.steps}, {"batch_size", r.batch_size}};
}

inline json to_json(const ExperimentConfig& c) {
    json task{{"family", to_string(c.task.family)}};
    switch (c.task.family) {
        case Family::subsample:
            task["ratios"] = c.task.ratios;
            task["base_size"] = c.task.base_size;
            task["eval_items"] = c.task.eval_items;
            break;
        case Family::multidomain: {
            task["protocols"] = json::array();
            for (auto p : c.task.protocols) task["protocols"].push_back(to_string(p));
            task["domains"] = json::array();
            for (auto d : c.task.domains) task["domains"].push_back(task::to_string(d));
            task["few_shot_n"] = c.task.few_shot_n;
            task["eval_items"] = c.task.eval_items;
            break;
        }
        case Family::contextqa:
            task["books"] = json::array();
            for (bool b : c.task.books) task["books"].push_back(b ? "open" : "closed");
            task["finetune_n"] = c.task.finetune_n;
            break;
    }
    json pattern{{"kind", c.pattern.nm ? "nm" : "unstructured"}};
    if (c.pattern.nm) pattern["m"] = c.pattern.m;
    else pattern["scope"] = prune::to_string(c.pattern.scope.value_or(prune::default_scope(c.criterion)));
    json regimes = json::array();
    for (auto r : c.regimes) regimes.push_back(transfer::to_string(r));
    return {{"model", model_json(c.model)},
            {"world", world_json(c.world)},
            {"pretrain", pretrain_json(c.pretrain)},
            {"checkpoint", c.checkpoint},
            {"task", task},
            {"criterion", prune::to_string(c.criterion)},
            {"pattern", pattern},
            {"sparsities", c.sparsities},
            {"regimes", regimes},
            {"freeze_q", c.freeze_q ? json(*c.freeze_q) : json(nullptr)},
            {"seeds", c.seeds},
            {"recipe", recipe_json(c.recipe)},
            {"calibration",
             {{"batches", c.calibration.batches},
              {"batch_size", c.calibration.batch_size},
              {"damping", c.calibration.damping}}},
            {"output_dir", c.output_dir},
            {"jobs", c.jobs},
            {"save_checkpoints", c.save_checkpoints}};
}

// Hash of everything that can change results (output location and parallelism excluded).
inline std::string config_hash(const ExperimentConfig& c) {
    auto j = to_json(c);
    j.erase("output_dir");
    j.erase("jobs");
    j.erase("save_checkpoints");
    return hash_hex(j.dump());
}

// Identity of a pre-trained checkpoint: what produced it.
inline json pretrain_identity(const ExperimentConfig& c) {
    return {{"model", model_json(c.model)}, {"world", world_json(c.world)}, {"pretrain", pretrain_json(c.pretrain)}};
}

inline std::filesystem::path output_path(const ExperimentConfig& c, const std::filesystem::path& p) {
    return p.is_absolute() ? p : (std::filesystem::path(c.output_dir) / p).lexically_normal();
}

inline std::filesystem::path checkpoint_path(const ExperimentConfig& c) { return output_path(c, c.checkpoint); }

}  // namespace jdna::lab
