// jdna: pre-train the toy model, build masks, run regime sweeps and emit report data.
//
// Exit codes: 0 success, 1 invalid config/input, 2 runtime or numeric failure.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "jdna/lab/experiment.hpp"

namespace {

using namespace jdna;

int run(int argc, char** argv) {
    CLI::App app{"jdna: pruning vs. downstream difficulty on a desk-scale transformer"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(lab::kVersion));

    std::string config_path;
    bool quiet = false;

    auto* pre = app.add_subcommand("pretrain", "Masked-token pre-training; writes the checkpoint and its metadata");
    pre->add_option("-c,--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    pre->add_flag("-q,--quiet", quiet, "No progress output");

    double sparsity = -1.0;
    std::string out_path;
    auto* prn = app.add_subcommand("prune", "Score the pre-trained checkpoint and write a mask plus a collapse report");
    prn->add_option("-c,--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    prn->add_option("-s,--sparsity", sparsity, "Target sparsity (default: first entry of 'sparsities')");
    prn->add_option("-o,--out", out_path, "Mask file; the report goes to <out>.json")->required();

    int jobs = 0;
    auto* swp = app.add_subcommand("sweep", "Run every (knob, sparsity, regime, seed) cell; resumable");
    swp->add_option("-c,--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    swp->add_option("-j,--jobs", jobs, "Concurrent cells (default: config 'jobs')");
    swp->add_flag("-q,--quiet", quiet, "No progress output");

    std::string dense_path, sparse_path;
    int points = 11;
    auto* lmc = app.add_subcommand("lmc", "Loss/accuracy along the line between two fine-tuned checkpoints");
    lmc->add_option("-c,--config", config_path, "Experiment config (JSON); first knob and seed pick the task")
        ->required()
        ->check(CLI::ExistingFile);
    lmc->add_option("--dense", dense_path, "Dense-transfer checkpoint (alpha = 0)")->required()->check(CLI::ExistingFile);
    lmc->add_option("--sparse", sparse_path, "Sparse-transfer checkpoint (alpha = 1)")->required()->check(CLI::ExistingFile);
    lmc->add_option("-n,--points", points, "Grid points including both endpoints")->capture_default_str();
    lmc->add_option("-o,--out", out_path, "Curve CSV; barrier summary goes to <out>.json")->required();

    std::string scores_path;
    auto* dif = app.add_subcommand("difficulty", "100 * (human - model) / human for each row of a score table");
    dif->add_option("scores", scores_path, "CSV with header task,human,model")->required()->check(CLI::ExistingFile);
    dif->add_option("-o,--out", out_path, "Output CSV (default: stdout)");

    std::string records_path;
    auto* rep = app.add_subcommand("report", "Seed-averaged raw and dense-normalized metrics from a sweep");
    rep->add_option("records", records_path, "records.csv written by sweep")->required()->check(CLI::ExistingFile);
    rep->add_option("-o,--out", out_path, "Output CSV (default: stdout); JSON goes to <out>.json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (*pre) {
        const auto cfg = lab::load_config(config_path);
        const int every = std::max(1, cfg.pretrain.steps / 20);
        const auto res = lab::cmd_pretrain(cfg, [&](int step, double loss) {
            if (!quiet && (step + 1) % every == 0) std::cerr << "step " << step + 1 << " loss " << loss << '\n';
        });
        std::cout << res.checkpoint.string() << '\n';
    } else if (*prn) {
        const auto cfg = lab::load_config(config_path);
        const double s = sparsity >= 0.0 ? sparsity : cfg.sparsities.front();
        const auto r = lab::cmd_prune(cfg, s, out_path);
        std::cout << "sparsity " << r.mask.sparsity() << ", collapsed tensors " << r.collapse.collapsed.size() << '\n';
    } else if (*swp) {
        auto cfg = lab::load_config(config_path);
        if (jobs > 0) cfg.jobs = jobs;
        const auto res = lab::cmd_sweep(cfg, [&](const lab::Cell& cell, const analysis::RunRecord& r) {
            if (!quiet)
                std::cerr << cell.knob.label() << ' ' << r.regime << " s=" << r.sparsity << " seed=" << r.seed << " -> "
                          << r.raw << '\n';
        });
        std::cout << res.records.size() << " records (" << res.computed << " computed, " << res.reused << " reused) in "
                  << lab::output_path(cfg, "records.csv").string() << '\n';
    } else if (*lmc) {
        const auto cfg = lab::load_config(config_path);
        const auto curve = lab::cmd_lmc(cfg, dense_path, sparse_path, points, out_path);
        std::cout << "loss barrier " << analysis::loss_barrier(curve) << '\n';
    } else if (*dif) {
        const auto text = lab::cmd_difficulty(scores_path);
        if (out_path.empty()) std::cout << text;
        else io::write_file(out_path, text);
    } else if (*rep) {
        const auto [csv, j] = lab::cmd_report(records_path);
        if (out_path.empty()) {
            std::cout << csv;
        } else {
            io::write_file(out_path, csv);
            io::write_file(out_path + ".json", j.dump(2) + "\n");
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const jdna::ConfigError& e) {
        std::cerr << "config error";
        if (!e.key().empty()) std::cerr << " [" << e.key() << "]";
        std::cerr << ": " << e.what() << '\n';
        return 1;
    } catch (const jdna::ValidationError& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
