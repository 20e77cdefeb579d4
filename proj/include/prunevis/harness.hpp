// Copyright 2026 The prunevis Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment orchestration: training, evaluation under pruning, probes,
// sweeps, retention and timing tables, and the scaling-law fit.
//
// Every table is a CsvTable whose rows are produced in a canonical order, so
// equal inputs give byte-identical files. Timing columns are the exception
// and live in their own tables.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "prunevis/csv.hpp"
#include "prunevis/flow.hpp"
#include "prunevis/model.hpp"
#include "prunevis/task.hpp"

namespace prunevis {

struct TrainConfig {
    int max_steps = 6000;
    /// Steps always run before the accuracy target may stop training.
    int min_steps = 0;
    int batch = 8;
    double lr = 2e-3;
    int warmup = 100;
    /// After this fraction of max_steps the rate is multiplied by lr_decay.
    double decay_after = 0.8;
    double lr_decay = 0.3;
    double clip = 1.0;
    int eval_every = 250;
    std::size_t eval_samples = 120;
    double target_accuracy = 0.9;
    std::vector<int> bins{64};
    std::vector<double> priors{0.0, 0.5, 0.8, 1.0};
    /// Probability that a training sample has its image blanked.
    double blank_rate = 0.2;

    void validate() const;
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct MetricToggles {
    bool attention_report = true;
    bool category_retention = true;
    bool position_retention = true;
    bool flow = false;
    bool timing = false;
    friend bool operator==(const MetricToggles&, const MetricToggles&) = default;
};

struct ExperimentConfig {
    /// 200 eval samples per bin; sweeps default to MaxPool 0.3 over the
    /// first third of the layers.
    ExperimentConfig();

    ModelConfig model;
    SplitPlan split;
    /// Optional eval manifest; when empty the split plan generates one.
    std::string manifest;
    std::vector<PruneConfig> prunes;
    TrainConfig train;
    MetricToggles metrics;
    std::string out_dir = "out";
    std::string checkpoint;
    std::uint64_t seed = 0;
    int timing_repetitions = 5;
    /// Samples per bin used for timing; 0 means all.
    std::size_t timing_samples = 20;
    /// Positions in the eval manifest analysed by the flow command.
    std::vector<std::size_t> flow_ids{0, 1, 2, 3};
    /// Write the saliency matrices of the flow samples.
    bool dump_saliency = true;
    std::string sweep_axis = "rate";
    nlohmann::json sweep_grid = nlohmann::json::array();
    /// Base config of sweeps; the swept field is overwritten.
    PruneConfig sweep_base;
    /// Worker threads for evaluation; 0 uses the hardware concurrency.
    int threads = 0;

    /// Propagates the global seed into the model and split seeds.
    void apply_seed(std::uint64_t s);
    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const MetricToggles& c);
void from_json(const nlohmann::json& j, MetricToggles& c);
void to_json(nlohmann::json& j, const SplitPlan& c);
void from_json(const nlohmann::json& j, SplitPlan& c);
void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

/// Reads a JSON config; missing keys keep their defaults. Throws ConfigError.
ExperimentConfig load_config(const std::string& path);

/// Eval manifest named by the config, or the one generated by its split plan.
Manifest eval_manifest(const ExperimentConfig& c);

/// Index of the maximal logit; ties go to the smallest id.
int argmax(const Tensor& logits);

/// Runs fn(i) for i in [0, n) on `threads` workers and rethrows the first
/// error. Results must be written to per-index slots.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

// ---- training ----

struct TrainLogRow {
    int step = 0;
    double loss = 0.0;
    double lr = 0.0;
    /// Shortest-bin accuracy, or -1 on steps without evaluation.
    double eval_accuracy = -1.0;
};

struct TrainOutcome {
    ModelParams params;
    std::vector<TrainLogRow> log;
    double final_accuracy = 0.0;
    bool reached_target = false;
};

/// Trains from scratch. Training samples are generated from the split seed
/// at indices below the eval offset. Stops once the shortest-bin eval
/// accuracy reaches the target (after min_steps) or at max_steps.
TrainOutcome train_model(const ExperimentConfig& c, const std::function<void(const TrainLogRow&)>& on_log = {});
CsvTable train_log_table(const std::vector<TrainLogRow>& log);

// ---- evaluation ----

inline constexpr std::size_t kDeciles = 10;
inline constexpr std::size_t kCategories = 4;

struct ResultRow {
    int bin = 0;
    /// "none" for the unpruned baseline.
    std::string strategy = "none";
    double rate = 0.0;
    std::string layers;
    std::string label = "baseline";
    std::size_t samples = 0;
    double accuracy = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    double entropy_delta = 0.0;
    double wall_ms = 0.0;
    std::array<std::size_t, kCategories> pruned_by_category{};
    std::array<std::size_t, kDeciles> pruned_by_decile{};
    std::size_t text_tokens = 0;
};

struct EvalOptions {
    bool attention_report = true;
    bool measure_time = false;
    int threads = 0;
};

/// One row per bin for the baseline, then one per (bin, config) in the given
/// order. Bins ascend.
std::vector<ResultRow> evaluate(const ModelParams& params, const Manifest& manifest,
                                const std::vector<PruneConfig>& prunes, const EvalOptions& opt = {});
CsvTable results_table(const std::vector<ResultRow>& rows);
CsvTable results_timing_table(const std::vector<ResultRow>& rows);

/// Mean final-row attention mass per layer and 10-position bucket.
CsvTable attention_buckets(const ModelParams& params, const Manifest& manifest, int threads = 0);

// ---- language-prior probe ----

struct ProbeRow {
    int bin = 0;
    std::size_t samples = 0;
    double with_image = 0.0;
    double without_image = 0.0;
    double both = 0.0;
    double only_with = 0.0;
    double only_without = 0.0;
    double neither = 0.0;
};

std::vector<ProbeRow> probe_priors(const ModelParams& params, const Manifest& manifest, int threads = 0);
CsvTable probe_table(const std::vector<ProbeRow>& rows);

// ---- information flow ----

struct FlowRun {
    std::vector<std::size_t> ids;
    std::vector<FlowComparison> samples;
    /// Per-layer scores averaged over samples.
    std::vector<FlowLayer> mean;
};

FlowRun flow_analysis(const ModelParams& params, const Manifest& manifest, const std::vector<std::size_t>& ids,
                      const PruneConfig& prune, int threads = 0);
CsvTable flow_table(const std::vector<FlowLayer>& layers);
CsvTable flow_sample_table(const FlowRun& run);
/// Nonzero saliency cells: sample, layer, run, i, j, value.
CsvTable saliency_table(const FlowRun& run);

// ---- sweeps ----

enum class SweepAxis { Rate, Layers, LayerCount, Strategy };
std::string to_string(SweepAxis a);
/// Throws UsageError for unknown names.
SweepAxis parse_sweep_axis(const std::string& s);

/// Layer thirds of an L-layer model: shallow, intermediate, deep.
std::vector<int> layer_group(const std::string& name, int n_layers);

struct SweepPoint {
    std::string value;
    double key = 0.0;
    PruneConfig prune;
};

/// Expands a grid into prune configs. Throws UsageError on an empty grid or
/// a bad value.
std::vector<SweepPoint> sweep_points(SweepAxis axis, const nlohmann::json& grid, const PruneConfig& base,
                                     int n_layers);

struct SweepRow {
    std::string axis;
    std::string value;
    double key = 0.0;
    ResultRow result;
};

/// Rows sorted by (bin, key).
std::vector<SweepRow> sweep(const ModelParams& params, const Manifest& manifest, SweepAxis axis,
                            const nlohmann::json& grid, const PruneConfig& base, const EvalOptions& opt = {});
CsvTable sweep_table(const std::vector<SweepRow>& rows);

// ---- scaling law ----

/// The rate grid 0, 0.05, ..., 0.5.
std::vector<double> rate_grid();

/// Centre of the window of three adjacent grid rates with the highest mean
/// accuracy, i.e. the average of those three rates. Earlier windows win ties.
double best_rate(const std::vector<double>& rates, const std::vector<double>& accuracies);

struct ScalingFit {
    double intercept = 0.0;
    double linear = 0.0;
    double quadratic = 0.0;
    double r2 = 0.0;
    std::vector<double> residuals;
};

/// Least-squares y = intercept + linear x + quadratic x^2. Throws
/// ContractError with fewer than three distinct x.
ScalingFit fit_scaling_law(const std::vector<std::pair<double, double>>& points);

/// Best rate per bin from a rate sweep.
std::vector<std::pair<double, double>> best_rates(const std::vector<SweepRow>& rate_sweep);
CsvTable scaling_table(const std::vector<std::pair<double, double>>& points, const ScalingFit& fit);

// ---- retention ----

struct RetentionReport {
    /// [pruning layer][category]: tokens alive after that layer / tokens.
    std::vector<int> layers;
    std::vector<std::array<double, kCategories>> category_fraction;
    std::array<std::size_t, kCategories> category_tokens{};
    /// [bin index][decile] retained fraction after the last pruning layer;
    /// the last entry aggregates all bins.
    std::vector<int> bins;
    std::vector<std::array<double, kDeciles>> decile_fraction;
    double question_fraction = 0.0;
    double overall_fraction = 0.0;
};

/// Decile of text position t among m text positions.
std::size_t position_decile(std::size_t t, std::size_t m);

RetentionReport retention(const ModelParams& params, const Manifest& manifest, const PruneConfig& prune,
                          int threads = 0);
CsvTable retention_category_table(const RetentionReport& r);
CsvTable retention_position_table(const RetentionReport& r);

// ---- timing ----

struct TimingRow {
    int bin = 0;
    std::size_t samples = 0;
    double baseline_ms = 0.0;
    double pruned_ms = 0.0;
    double baseline_flops = 0.0;
    double pruned_flops = 0.0;
};

/// Median wall time per sample over `repetitions` runs after one warm-up,
/// and mean executed flops. Runs single-threaded.
std::vector<TimingRow> timing(const ModelParams& params, const Manifest& manifest, const PruneConfig& prune,
                              int repetitions, std::size_t per_bin = 0);
CsvTable timing_table(const std::vector<TimingRow>& rows);

/// Closed-form flops of an unpruned forward over n positions.
std::uint64_t unpruned_flops(const ModelConfig& c, std::uint64_t n);

}  // namespace prunevis
