// Copyright 2026 The prunevis Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end of the experiment harness.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "prunevis/errors.hpp"
#include "prunevis/harness.hpp"

namespace fs = std::filesystem;
using namespace prunevis;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string checkpoint;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "Experiment config (JSON)");
    cmd->add_option("--seed", c.seed, "Global seed, overrides the config");
    cmd->add_option("--out", c.out, "Output directory, overrides the config");
    cmd->add_option("--checkpoint", c.checkpoint, "Checkpoint path, overrides the config");
}

ExperimentConfig resolve(const Common& o) {
    ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
    if (o.seed) c.apply_seed(*o.seed);
    if (!o.out.empty()) c.out_dir = o.out;
    if (!o.checkpoint.empty()) c.checkpoint = o.checkpoint;
    if (c.checkpoint.empty()) c.checkpoint = (fs::path(c.out_dir) / "model.ckpt").string();
    c.validate();
    std::error_code ec;
    fs::create_directories(c.out_dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" + c.out_dir + "': " + ec.message());
    return c;
}

std::string out_path(const ExperimentConfig& c, const std::string& name) {
    return (fs::path(c.out_dir) / name).string();
}

void write_table(const ExperimentConfig& c, const std::string& name, const CsvTable& t) {
    const auto path = out_path(c, name);
    write_text(path, to_csv(t));
    std::cout << "wrote " << path << "\n";
}

ModelParams load_model(const ExperimentConfig& c) { return load_checkpoint(c.checkpoint, c.model); }

PruneConfig primary_prune(const ExperimentConfig& c) { return c.prunes.empty() ? c.sweep_base : c.prunes.front(); }

EvalOptions eval_options(const ExperimentConfig& c) {
    EvalOptions o;
    o.attention_report = c.metrics.attention_report;
    o.measure_time = c.metrics.timing;
    o.threads = c.threads;
    return o;
}

void cmd_train(const ExperimentConfig& c) {
    const auto outcome = train_model(c, [](const TrainLogRow& r) {
        if (r.eval_accuracy >= 0.0)
            std::cout << "step " << r.step << " loss " << r.loss << " accuracy " << r.eval_accuracy << std::endl;
    });
    write_table(c, "train_log.csv", train_log_table(outcome.log));
    save_checkpoint(c.checkpoint, outcome.params);
    std::cout << "wrote " << c.checkpoint << "\n";
    if (!outcome.reached_target)
        throw TrainingError("step cap reached at shortest-bin accuracy " + fmt(outcome.final_accuracy) + " < " +
                            fmt(c.train.target_accuracy) + "; see " + out_path(c, "train_log.csv"));
}

void cmd_eval(const ExperimentConfig& c) {
    const auto params = load_model(c);
    const auto manifest = eval_manifest(c);
    const auto rows = evaluate(params, manifest, c.prunes, eval_options(c));
    write_table(c, "eval.csv", results_table(rows));
    if (c.metrics.timing) write_table(c, "eval_timing.csv", results_timing_table(rows));
    if (c.metrics.attention_report) write_table(c, "attention_buckets.csv", attention_buckets(params, manifest, c.threads));
    if (c.metrics.flow) {
        const auto run = flow_analysis(params, manifest, c.flow_ids, primary_prune(c), c.threads);
        write_table(c, "flow.csv", flow_table(run.mean));
    }
    if (c.metrics.category_retention || c.metrics.position_retention) {
        const auto r = retention(params, manifest, primary_prune(c), c.threads);
        if (c.metrics.category_retention) write_table(c, "retention_category.csv", retention_category_table(r));
        if (c.metrics.position_retention) write_table(c, "retention_position.csv", retention_position_table(r));
    }
}

void cmd_probe(const ExperimentConfig& c) {
    const auto params = load_model(c);
    write_table(c, "probe_priors.csv", probe_table(probe_priors(params, eval_manifest(c), c.threads)));
}

void cmd_flow(const ExperimentConfig& c, const std::vector<std::size_t>& ids) {
    const auto params = load_model(c);
    const auto run = flow_analysis(params, eval_manifest(c), ids.empty() ? c.flow_ids : ids, primary_prune(c), c.threads);
    write_table(c, "flow.csv", flow_table(run.mean));
    write_table(c, "flow_samples.csv", flow_sample_table(run));
    if (c.dump_saliency) write_table(c, "saliency.csv", saliency_table(run));
    nlohmann::json parts = nlohmann::json::array();
    for (std::size_t i = 0; i < run.samples.size(); ++i) {
        const auto& p = run.samples[i].partition;
        parts.push_back({{"sample", run.ids[i]},
                         {"visual", p.visual},
                         {"preserved", p.preserved},
                         {"pruned", p.pruned},
                         {"target", p.target}});
    }
    write_text(out_path(c, "flow_partitions.json"), parts.dump(1) + "\n");
}

nlohmann::json default_grid(SweepAxis axis, int n_layers) {
    switch (axis) {
        case SweepAxis::Rate: return rate_grid();
        case SweepAxis::Layers: return {"shallow", "intermediate", "deep"};
        case SweepAxis::LayerCount: {
            auto g = nlohmann::json::array();
            for (int m = 1; m <= n_layers; ++m) g.push_back(m);
            return g;
        }
        case SweepAxis::Strategy: return {"maxpool", "meanpool", "random"};
    }
    return nlohmann::json::array();
}

void cmd_sweep(const ExperimentConfig& c, const std::string& axis_flag, const std::string& grid_flag) {
    const auto axis = parse_sweep_axis(axis_flag.empty() ? c.sweep_axis : axis_flag);
    nlohmann::json grid = c.sweep_grid;
    if (!grid_flag.empty()) {
        try {
            grid = nlohmann::json::parse(grid_flag);
        } catch (const nlohmann::json::exception& e) {
            throw UsageError(std::string("--grid is not JSON: ") + e.what());
        }
    }
    if (grid.empty()) grid = default_grid(axis, c.model.n_layers);
    const auto params = load_model(c);
    const auto rows = sweep(params, eval_manifest(c), axis, grid, c.sweep_base, eval_options(c));
    const auto name = "sweep_" + to_string(axis);
    write_table(c, name + ".csv", sweep_table(rows));
    nlohmann::json meta{{"axis", to_string(axis)}, {"grid", grid}, {"base", c.sweep_base}};
    if (axis == SweepAxis::Layers) {
        for (const char* g : {"shallow", "intermediate", "deep"})
            meta["layer_groups"][g] = layer_group(g, c.model.n_layers);
    }
    write_text(out_path(c, name + ".json"), meta.dump(1) + "\n");
}

void cmd_retention(const ExperimentConfig& c) {
    const auto params = load_model(c);
    const auto r = retention(params, eval_manifest(c), primary_prune(c), c.threads);
    write_table(c, "retention_category.csv", retention_category_table(r));
    write_table(c, "retention_position.csv", retention_position_table(r));
}

void cmd_timing(const ExperimentConfig& c) {
    const auto params = load_model(c);
    const auto rows = timing(params, eval_manifest(c), primary_prune(c), c.timing_repetitions, c.timing_samples);
    write_table(c, "timing.csv", timing_table(rows));
}

void cmd_fit_scaling(const ExperimentConfig& c, const std::string& input) {
    const auto path = input.empty() ? out_path(c, "sweep_rate.csv") : input;
    const auto t = parse_csv(read_text(path));
    std::vector<SweepRow> rows;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        SweepRow r;
        r.axis = t.cell(i, "axis");
        r.value = t.cell(i, "value");
        r.key = t.number(i, "rate");
        r.result.bin = static_cast<int>(t.number(i, "bin"));
        r.result.accuracy = t.number(i, "accuracy");
        rows.push_back(r);
    }
    const auto points = best_rates(rows);
    const auto fit = fit_scaling_law(points);
    write_table(c, "scaling_fit.csv", scaling_table(points, fit));
}

int exit_code(const std::exception& e) {
    if (dynamic_cast<const UsageError*>(&e)) return 1;
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return 2;
    if (dynamic_cast<const TrainingError*>(&e)) return 4;
    return 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Attention-based context pruning experiments on a toy vision-language model"};
    app.require_subcommand(1);
    Common common;
    std::vector<std::size_t> flow_ids;
    std::string axis, grid, input;

    auto* train = app.add_subcommand("train", "Train the model and write a checkpoint");
    auto* eval = app.add_subcommand("eval", "Evaluate the checkpoint under each prune config");
    auto* probe = app.add_subcommand("probe-priors", "Accuracy with and without the image");
    auto* flow = app.add_subcommand("flow", "Saliency flow scores, baseline vs pruned");
    auto* sweep_cmd = app.add_subcommand("sweep", "Sweep one pruning axis");
    auto* retention_cmd = app.add_subcommand("retention", "Retained tokens by category and position");
    auto* timing_cmd = app.add_subcommand("timing", "Wall time and flops, baseline vs pruned");
    auto* fit = app.add_subcommand("fit-scaling", "Fit best pruning rate against context length");
    for (auto* cmd : {train, eval, probe, flow, sweep_cmd, retention_cmd, timing_cmd, fit}) add_common(cmd, common);
    flow->add_option("--ids", flow_ids, "Eval manifest positions to analyse");
    sweep_cmd->add_option("--axis", axis, "rate, layers, layer_count or strategy");
    sweep_cmd->add_option("--grid", grid, "Grid values as a JSON array");
    fit->add_option("--input", input, "Rate sweep CSV (default: <out>/sweep_rate.csv)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        const auto c = resolve(common);
        if (*train) cmd_train(c);
        else if (*eval) cmd_eval(c);
        else if (*probe) cmd_probe(c);
        else if (*flow) cmd_flow(c, flow_ids);
        else if (*sweep_cmd) cmd_sweep(c, axis, grid);
        else if (*retention_cmd) cmd_retention(c);
        else if (*timing_cmd) cmd_timing(c);
        else if (*fit) cmd_fit_scaling(c, input);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e);
    }
    return 0;
}
