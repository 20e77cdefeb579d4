// Copyright 2026 The prunevis Authors
// SPDX-License-Identifier: Apache-2.0

#include "prunevis/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include "prunevis/errors.hpp"
#include "prunevis/metrics.hpp"
#include "prunevis/rng.hpp"

namespace prunevis {

namespace {

SplitPlan default_split() {
    SplitPlan p;
    p.eval_counts.assign(p.bins.size(), 200);
    return p;
}

constexpr std::uint64_t kBlankStream = 0x626c616e6bULL;

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double ratio(std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; }

std::vector<int> sorted_bins(const Manifest& m) {
    std::set<int> s;
    for (const auto& e : m) s.insert(e.spec.length_bin);
    return {s.begin(), s.end()};
}

std::size_t bin_slot(const std::vector<int>& bins, int bin) {
    return static_cast<std::size_t>(std::lower_bound(bins.begin(), bins.end(), bin) - bins.begin());
}

}  // namespace

// ---- config ----

void TrainConfig::validate() const {
    if (max_steps < 1 || batch < 1) throw ConfigError("train: max_steps and batch must be positive");
    if (min_steps < 0 || min_steps > max_steps) throw ConfigError("train: min_steps must lie in [0, max_steps]");
    if (!(lr > 0.0) || warmup < 0 || eval_every < 1 || eval_samples < 1)
        throw ConfigError("train: lr, warmup, eval_every and eval_samples must be positive");
    if (!(decay_after >= 0.0 && decay_after <= 1.0) || !(lr_decay > 0.0)) throw ConfigError("train: bad lr decay");
    if (!(target_accuracy >= 0.0 && target_accuracy <= 1.0)) throw ConfigError("train: target accuracy outside [0, 1]");
    if (!(blank_rate >= 0.0 && blank_rate <= 1.0)) throw ConfigError("train: blank_rate outside [0, 1]");
    if (bins.empty() || priors.empty()) throw ConfigError("train: bins and priors must be non-empty");
    for (double p : priors)
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("train: prior strength outside [0, 1]");
}

ExperimentConfig::ExperimentConfig() : split(default_split()) {
    sweep_base.rate = 0.3;
    sweep_base.layers = PruneConfig::first_layers((model.n_layers + 2) / 3);
}

void ExperimentConfig::apply_seed(std::uint64_t s) {
    seed = s;
    model.seed = s;
    split.seed = s;
}

void ExperimentConfig::validate() const {
    model.validate();
    train.validate();
    for (const auto& p : prunes) p.validate(model.n_layers);
    sweep_base.validate(model.n_layers);
    if (!manifest.empty() && !std::filesystem::exists(manifest))
        throw ConfigError("manifest '" + manifest + "' does not exist");
    if (timing_repetitions < 5) throw ConfigError("timing needs at least 5 repetitions");
    const auto train_end = split.train_offset + static_cast<std::uint64_t>(train.max_steps) * train.batch;
    if (train_end > split.eval_offset) throw ConfigError("training indices would reach the eval range");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"max_steps", c.max_steps},
                       {"min_steps", c.min_steps},
                       {"batch", c.batch},
                       {"lr", c.lr},
                       {"warmup", c.warmup},
                       {"decay_after", c.decay_after},
                       {"lr_decay", c.lr_decay},
                       {"clip", c.clip},
                       {"eval_every", c.eval_every},
                       {"eval_samples", c.eval_samples},
                       {"target_accuracy", c.target_accuracy},
                       {"bins", c.bins},
                       {"priors", c.priors},
                       {"blank_rate", c.blank_rate}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    c = TrainConfig{};
    c.max_steps = j.value("max_steps", c.max_steps);
    c.min_steps = j.value("min_steps", c.min_steps);
    c.batch = j.value("batch", c.batch);
    c.lr = j.value("lr", c.lr);
    c.warmup = j.value("warmup", c.warmup);
    c.decay_after = j.value("decay_after", c.decay_after);
    c.lr_decay = j.value("lr_decay", c.lr_decay);
    c.clip = j.value("clip", c.clip);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.eval_samples = j.value("eval_samples", c.eval_samples);
    c.target_accuracy = j.value("target_accuracy", c.target_accuracy);
    c.bins = j.value("bins", c.bins);
    c.priors = j.value("priors", c.priors);
    c.blank_rate = j.value("blank_rate", c.blank_rate);
}

void to_json(nlohmann::json& j, const MetricToggles& c) {
    j = nlohmann::json{{"attention_report", c.attention_report},
                       {"category_retention", c.category_retention},
                       {"position_retention", c.position_retention},
                       {"flow", c.flow},
                       {"timing", c.timing}};
}

void from_json(const nlohmann::json& j, MetricToggles& c) {
    c = MetricToggles{};
    c.attention_report = j.value("attention_report", c.attention_report);
    c.category_retention = j.value("category_retention", c.category_retention);
    c.position_retention = j.value("position_retention", c.position_retention);
    c.flow = j.value("flow", c.flow);
    c.timing = j.value("timing", c.timing);
}

void to_json(nlohmann::json& j, const SplitPlan& c) {
    std::vector<std::string> sizes;
    for (auto s : c.sizes) sizes.push_back(to_string(s));
    j = nlohmann::json{{"bins", c.bins},
                       {"train_counts", c.train_counts},
                       {"eval_counts", c.eval_counts},
                       {"sizes", sizes},
                       {"train_priors", c.train_priors},
                       {"eval_prior", c.eval_prior},
                       {"seed", c.seed},
                       {"train_offset", c.train_offset},
                       {"eval_offset", c.eval_offset},
                       {"vocab", c.vocab},
                       {"generator", c.generator}};
}

void from_json(const nlohmann::json& j, SplitPlan& c) {
    c = default_split();
    c.bins = j.value("bins", c.bins);
    if (!j.contains("eval_counts") && c.bins.size() != c.eval_counts.size()) c.eval_counts.assign(c.bins.size(), 200);
    c.train_counts = j.value("train_counts", c.train_counts);
    c.eval_counts = j.value("eval_counts", c.eval_counts);
    if (j.contains("sizes")) {
        c.sizes.clear();
        for (const auto& s : j.at("sizes")) c.sizes.push_back(parse_target_size(s.get<std::string>()));
    }
    c.train_priors = j.value("train_priors", c.train_priors);
    c.eval_prior = j.value("eval_prior", c.eval_prior);
    c.seed = j.value("seed", c.seed);
    c.train_offset = j.value("train_offset", c.train_offset);
    c.eval_offset = j.value("eval_offset", c.eval_offset);
    if (j.contains("vocab")) c.vocab = j.at("vocab").get<VocabLayout>();
    if (j.contains("generator")) c.generator = j.at("generator").get<GeneratorConfig>();
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = nlohmann::json{{"model", c.model},
                       {"split", c.split},
                       {"manifest", c.manifest},
                       {"prunes", c.prunes},
                       {"train", c.train},
                       {"metrics", c.metrics},
                       {"out_dir", c.out_dir},
                       {"checkpoint", c.checkpoint},
                       {"seed", c.seed},
                       {"timing_repetitions", c.timing_repetitions},
                       {"timing_samples", c.timing_samples},
                       {"flow_ids", c.flow_ids},
                       {"dump_saliency", c.dump_saliency},
                       {"sweep_axis", c.sweep_axis},
                       {"sweep_grid", c.sweep_grid},
                       {"sweep_base", c.sweep_base},
                       {"threads", c.threads}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    try {
        c = ExperimentConfig{};
        if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
        if (j.contains("split")) c.split = j.at("split").get<SplitPlan>();
        c.manifest = j.value("manifest", c.manifest);
        if (j.contains("prunes")) c.prunes = j.at("prunes").get<std::vector<PruneConfig>>();
        if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
        if (j.contains("metrics")) c.metrics = j.at("metrics").get<MetricToggles>();
        c.out_dir = j.value("out_dir", c.out_dir);
        c.checkpoint = j.value("checkpoint", c.checkpoint);
        c.timing_repetitions = j.value("timing_repetitions", c.timing_repetitions);
        c.timing_samples = j.value("timing_samples", c.timing_samples);
        c.flow_ids = j.value("flow_ids", c.flow_ids);
        c.dump_saliency = j.value("dump_saliency", c.dump_saliency);
        c.sweep_axis = j.value("sweep_axis", c.sweep_axis);
        if (j.contains("sweep_grid")) c.sweep_grid = j.at("sweep_grid");
        if (j.contains("sweep_base")) {
            c.sweep_base = j.at("sweep_base").get<PruneConfig>();
        } else {
            c.sweep_base.rate = 0.3;
            c.sweep_base.layers = PruneConfig::first_layers((c.model.n_layers + 2) / 3);
        }
        c.threads = j.value("threads", c.threads);
        c.seed = j.value("seed", c.seed);
        if (j.contains("seed")) c.apply_seed(c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad experiment config: ") + e.what());
    }
}

ExperimentConfig load_config(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse '" + path + "': " + e.what());
    }
    auto c = j.get<ExperimentConfig>();
    c.validate();
    return c;
}

Manifest eval_manifest(const ExperimentConfig& c) {
    if (!c.manifest.empty()) return read_manifest(c.manifest);
    return make_split(c.split).eval;
}

int argmax(const Tensor& logits) {
    const auto d = logits.data();
    if (d.empty()) throw ContractError("argmax of an empty tensor");
    return static_cast<int>(std::max_element(d.begin(), d.end()) - d.begin());
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads) : std::thread::hardware_concurrency();
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mu);
                    if (!error) error = std::current_exception();
                    next = n;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

// ---- training ----

TrainOutcome train_model(const ExperimentConfig& c, const std::function<void(const TrainLogRow&)>& on_log) {
    c.validate();
    const auto& t = c.train;
    TrainOutcome out{ModelParams::init(c.model), {}, 0.0, false};
    AdamState state;
    AdamConfig opt;
    opt.clip = t.clip;

    const int shortest = *std::min_element(t.bins.begin(), t.bins.end());
    Manifest probe;
    for (const auto& e : eval_manifest(c))
        if (e.spec.length_bin == shortest && probe.size() < t.eval_samples) probe.push_back(e);
    if (probe.empty()) throw ConfigError("eval manifest has no samples of the shortest training bin");

    auto accuracy = [&] {
        std::vector<char> ok(probe.size());
        parallel_for(probe.size(), c.threads, [&](std::size_t i) {
            const auto s = regenerate(probe[i]);
            ok[i] = argmax(forward(out.params, s.stream()).logits) == s.answer;
        });
        return ratio(static_cast<std::size_t>(std::count(ok.begin(), ok.end(), 1)), ok.size());
    };

    const std::size_t nb = t.bins.size(), np = t.priors.size(), ns = c.split.sizes.size();
    for (int step = 0; step < t.max_steps; ++step) {
        std::vector<Example> batch;
        for (int i = 0; i < t.batch; ++i) {
            const std::uint64_t k = static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(t.batch) + i;
            TaskSpec spec;
            spec.length_bin = t.bins[k % nb];
            spec.prior_strength = t.priors[(k / nb) % np];
            spec.target_size = c.split.sizes[(k / (nb * np)) % ns];
            spec.seed = c.split.seed;
            spec.vocab = c.split.vocab;
            spec.generator = c.split.generator;
            auto s = generate_sample(spec, c.split.train_offset + k);
            Rng rng(mix_seed(mix_seed(c.split.seed, kBlankStream), k));
            if (rng.bernoulli(t.blank_rate)) s = blank_image_variant(s);
            batch.push_back({s.stream(), s.answer});
        }
        double lr = t.lr * std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(std::max(1, t.warmup)));
        if (step >= static_cast<int>(t.decay_after * t.max_steps)) lr *= t.lr_decay;
        opt.lr = lr;
        TrainLogRow row;
        row.step = step;
        row.lr = lr;
        row.loss = train_step(out.params, batch, state, opt);
        const bool last = step + 1 == t.max_steps;
        if ((step + 1) % t.eval_every == 0 || last) {
            row.eval_accuracy = accuracy();
            out.final_accuracy = row.eval_accuracy;
        }
        out.log.push_back(row);
        if (on_log) on_log(row);
        if (row.eval_accuracy >= t.target_accuracy && step + 1 >= t.min_steps) {
            out.reached_target = true;
            break;
        }
    }
    return out;
}

CsvTable train_log_table(const std::vector<TrainLogRow>& log) {
    CsvTable t;
    t.header = {"step", "loss", "lr", "eval_accuracy"};
    for (const auto& r : log)
        t.add({fmt(r.step), fmt(r.loss), fmt(r.lr), r.eval_accuracy < 0.0 ? "" : fmt(r.eval_accuracy)});
    return t;
}

// ---- evaluation ----

namespace {

struct ConfigOutcome {
    bool correct = false;
    double alpha = 0.0, beta = 0.0, entropy_delta = 0.0, ms = 0.0;
    std::array<std::size_t, kCategories> by_category{};
    std::array<std::size_t, kDeciles> by_decile{};
};

struct SampleOutcome {
    int bin = 0;
    std::size_t text = 0;
    std::vector<ConfigOutcome> configs;  // baseline first
};

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::size_t position_decile(std::size_t t, std::size_t m) {
    if (t >= m) throw ContractError("position_decile: position outside the text");
    return t * kDeciles / m;
}

std::vector<ResultRow> evaluate(const ModelParams& params, const Manifest& manifest,
                                const std::vector<PruneConfig>& prunes, const EvalOptions& opt) {
    for (const auto& p : prunes) p.validate(params.config.n_layers);
    const std::size_t nv = static_cast<std::size_t>(params.config.n_visual);
    std::vector<SampleOutcome> per(manifest.size());
    parallel_for(manifest.size(), opt.measure_time ? 1 : opt.threads, [&](std::size_t i) {
        const auto sample = regenerate(manifest[i]);
        const auto stream = sample.stream();
        auto& o = per[i];
        o.bin = manifest[i].spec.length_bin;
        o.text = stream.text_count();
        auto t0 = std::chrono::steady_clock::now();
        const auto base = forward(params, stream);
        ConfigOutcome b;
        b.ms = elapsed_ms(t0);
        b.correct = argmax(base.logits) == sample.answer;
        if (opt.attention_report) {
            const auto rep = attention_report(base.trace, base.trace, nv);
            b.alpha = rep.mean_post.alpha;
            b.beta = rep.mean_post.beta;
        }
        o.configs.push_back(b);
        for (const auto& pc : prunes) {
            t0 = std::chrono::steady_clock::now();
            const auto run = forward(params, stream, pc);
            ConfigOutcome c;
            c.ms = elapsed_ms(t0);
            c.correct = argmax(run.logits) == sample.answer;
            if (opt.attention_report) {
                const auto rep = attention_report(base.trace, run.trace, nv);
                c.alpha = rep.mean_post.alpha;
                c.beta = rep.mean_post.beta;
                c.entropy_delta = rep.mean_post.entropy - rep.mean_pre.entropy;
            }
            for (auto p : run.record.pruned_positions()) {
                const std::size_t t = p - nv;
                ++c.by_category[static_cast<std::size_t>(stream.categories[t])];
                ++c.by_decile[position_decile(t, o.text)];
            }
            o.configs.push_back(c);
        }
    });

    const auto bins = sorted_bins(manifest);
    std::vector<ResultRow> rows;
    for (int bin : bins) {
        for (std::size_t k = 0; k <= prunes.size(); ++k) {
            ResultRow r;
            r.bin = bin;
            if (k > 0) {
                const auto& pc = prunes[k - 1];
                r.strategy = to_string(pc.strategy);
                r.rate = pc.rate;
                std::string layers;
                for (std::size_t i = 0; i < pc.layers.size(); ++i) layers += (i ? " " : "") + std::to_string(pc.layers[i]);
                r.layers = layers;
                r.label = pc.label();
            }
            std::size_t correct = 0;
            std::vector<double> times;
            for (const auto& o : per) {
                if (o.bin != bin) continue;
                const auto& c = o.configs[k];
                ++r.samples;
                correct += c.correct;
                r.alpha += c.alpha;
                r.beta += c.beta;
                r.entropy_delta += c.entropy_delta;
                times.push_back(c.ms);
                r.text_tokens += o.text;
                for (std::size_t i = 0; i < kCategories; ++i) r.pruned_by_category[i] += c.by_category[i];
                for (std::size_t i = 0; i < kDeciles; ++i) r.pruned_by_decile[i] += c.by_decile[i];
            }
            const double n = static_cast<double>(r.samples);
            r.accuracy = ratio(correct, r.samples);
            r.alpha /= n;
            r.beta /= n;
            r.entropy_delta /= n;
            r.wall_ms = median(times);
            rows.push_back(r);
        }
    }
    return rows;
}

namespace {

const char* kCategoryNames[kCategories] = {"entity", "attribute", "relation", "filler"};

std::vector<std::string> result_header() {
    std::vector<std::string> h = {"bin",   "strategy", "rate", "layers", "label", "samples", "accuracy",
                                  "alpha", "beta",     "entropy_delta"};
    for (auto c : kCategoryNames) h.push_back(std::string("pruned_") + c);
    for (std::size_t d = 0; d < kDeciles; ++d) h.push_back("pruned_d" + std::to_string(d));
    h.push_back("text_tokens");
    return h;
}

std::vector<std::string> result_cells(const ResultRow& r) {
    std::vector<std::string> v = {fmt(r.bin),   r.strategy, fmt(r.rate),          r.layers, r.label, fmt(r.samples),
                                  fmt(r.accuracy), fmt(r.alpha), fmt(r.beta), fmt(r.entropy_delta)};
    for (auto c : r.pruned_by_category) v.push_back(fmt(c));
    for (auto c : r.pruned_by_decile) v.push_back(fmt(c));
    v.push_back(fmt(r.text_tokens));
    return v;
}

}  // namespace

CsvTable results_table(const std::vector<ResultRow>& rows) {
    CsvTable t;
    t.header = result_header();
    for (const auto& r : rows) t.add(result_cells(r));
    return t;
}

CsvTable results_timing_table(const std::vector<ResultRow>& rows) {
    CsvTable t;
    t.header = {"bin", "label", "median_ms"};
    for (const auto& r : rows) t.add({fmt(r.bin), r.label, fmt(r.wall_ms)});
    return t;
}

CsvTable attention_buckets(const ModelParams& params, const Manifest& manifest, int threads) {
    const std::size_t L = static_cast<std::size_t>(params.config.n_layers);
    // per sample: [layer][bucket] mass of the final query row, head-averaged
    std::vector<std::vector<std::vector<double>>> per(manifest.size());
    parallel_for(manifest.size(), threads, [&](std::size_t i) {
        const auto stream = regenerate(manifest[i]).stream();
        const auto r = forward(params, stream);
        const std::size_t n = stream.size();
        auto& m = per[i];
        m.assign(L, std::vector<double>((n + 9) / 10, 0.0));
        for (std::size_t l = 0; l < L; ++l) {
            const auto& heads = r.trace.attention[l];
            for (const auto& A : heads) {
                const auto d = A.data();
                for (std::size_t j = 0; j < n; ++j)
                    m[l][j / 10] += d[(n - 1) * n + j] / static_cast<double>(heads.size());
            }
        }
    });
    CsvTable t;
    t.header = {"bin", "layer", "bucket", "mass", "samples"};
    for (int bin : sorted_bins(manifest)) {
        std::vector<std::vector<double>> sum(L);
        std::vector<std::vector<std::size_t>> cnt(L);
        for (std::size_t i = 0; i < manifest.size(); ++i) {
            if (manifest[i].spec.length_bin != bin) continue;
            for (std::size_t l = 0; l < L; ++l) {
                if (sum[l].size() < per[i][l].size()) {
                    sum[l].resize(per[i][l].size(), 0.0);
                    cnt[l].resize(per[i][l].size(), 0);
                }
                for (std::size_t b = 0; b < per[i][l].size(); ++b) {
                    sum[l][b] += per[i][l][b];
                    ++cnt[l][b];
                }
            }
        }
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t b = 0; b < sum[l].size(); ++b)
                t.add({fmt(bin), fmt(static_cast<int>(l)), fmt(static_cast<int>(b)),
                       fmt(sum[l][b] / static_cast<double>(cnt[l][b])), fmt(cnt[l][b])});
    }
    return t;
}

// ---- probe ----

std::vector<ProbeRow> probe_priors(const ModelParams& params, const Manifest& manifest, int threads) {
    std::vector<std::pair<char, char>> per(manifest.size());
    parallel_for(manifest.size(), threads, [&](std::size_t i) {
        const auto s = regenerate(manifest[i]);
        const bool with = argmax(forward(params, s.stream()).logits) == s.answer;
        const bool without = argmax(forward(params, blank_image_variant(s).stream()).logits) == s.answer;
        per[i] = {with, without};
    });
    std::vector<ProbeRow> rows;
    for (int bin : sorted_bins(manifest)) {
        std::size_t n = 0, w = 0, wo = 0, both = 0, only_w = 0, only_wo = 0, neither = 0;
        for (std::size_t i = 0; i < manifest.size(); ++i) {
            if (manifest[i].spec.length_bin != bin) continue;
            const auto [a, b] = per[i];
            ++n;
            w += a;
            wo += b;
            both += a && b;
            only_w += a && !b;
            only_wo += !a && b;
            neither += !a && !b;
        }
        rows.push_back({bin, n, ratio(w, n), ratio(wo, n), ratio(both, n), ratio(only_w, n), ratio(only_wo, n),
                        ratio(neither, n)});
    }
    return rows;
}

CsvTable probe_table(const std::vector<ProbeRow>& rows) {
    CsvTable t;
    t.header = {"bin", "samples", "with_image", "without_image", "both", "only_with", "only_without", "neither"};
    for (const auto& r : rows)
        t.add({fmt(r.bin), fmt(r.samples), fmt(r.with_image), fmt(r.without_image), fmt(r.both), fmt(r.only_with),
               fmt(r.only_without), fmt(r.neither)});
    return t;
}

// ---- flow ----

FlowRun flow_analysis(const ModelParams& params, const Manifest& manifest, const std::vector<std::size_t>& ids,
                      const PruneConfig& prune, int threads) {
    prune.validate(params.config.n_layers);
    for (auto id : ids)
        if (id >= manifest.size()) throw ConfigError("flow sample id " + std::to_string(id) + " is not in the manifest");
    FlowRun run;
    run.ids = ids;
    run.samples.resize(ids.size());
    parallel_for(ids.size(), threads, [&](std::size_t i) {
        const auto s = regenerate(manifest[ids[i]]);
        run.samples[i] = flow_compare(params, s.stream(), s.answer, prune);
    });
    const std::size_t L = static_cast<std::size_t>(params.config.n_layers);
    run.mean.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
        auto& m = run.mean[l];
        m.layer = static_cast<int>(l);
        for (std::size_t k = 0; k < kFlowScoreCount; ++k) {
            m.baseline.empty[k] = m.pruned.empty[k] = true;
        }
        for (const auto& s : run.samples) {
            const auto& x = s.layers[l];
            for (std::size_t k = 0; k < kFlowScoreCount; ++k) {
                m.baseline.s[k] += x.baseline.s[k];
                m.pruned.s[k] += x.pruned.s[k];
                m.baseline.pairs[k] += x.baseline.pairs[k];
                m.pruned.pairs[k] += x.pruned.pairs[k];
                m.baseline.empty[k] = m.baseline.empty[k] && x.baseline.empty[k];
                m.pruned.empty[k] = m.pruned.empty[k] && x.pruned.empty[k];
            }
        }
        const double n = static_cast<double>(std::max<std::size_t>(1, run.samples.size()));
        for (std::size_t k = 0; k < kFlowScoreCount; ++k) {
            m.baseline.s[k] /= n;
            m.pruned.s[k] /= n;
        }
    }
    return run;
}

CsvTable flow_table(const std::vector<FlowLayer>& layers) {
    return parse_csv([&] {
        FlowComparison c;
        c.layers = layers;
        return flow_to_csv(c);
    }());
}

CsvTable flow_sample_table(const FlowRun& run) {
    CsvTable t;
    t.header = {"sample", "layer", "score", "baseline", "pruned", "delta", "empty"};
    for (std::size_t i = 0; i < run.samples.size(); ++i) {
        const auto part = flow_table(run.samples[i].layers);
        for (const auto& r : part.rows) {
            std::vector<std::string> row{fmt(run.ids[i])};
            row.insert(row.end(), r.begin(), r.end());
            t.add(std::move(row));
        }
    }
    return t;
}

CsvTable saliency_table(const FlowRun& run) {
    CsvTable t;
    t.header = {"sample", "layer", "run", "i", "j", "value"};
    for (std::size_t s = 0; s < run.samples.size(); ++s) {
        const auto& c = run.samples[s];
        for (std::size_t l = 0; l < c.baseline_saliency.size(); ++l) {
            for (int which = 0; which < 2; ++which) {
                const Tensor& I = which == 0 ? c.baseline_saliency[l] : c.pruned_saliency[l];
                const std::size_t n = I.rows();
                const auto d = I.data();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j <= i; ++j)
                        if (d[i * n + j] != 0.0)
                            t.add({fmt(run.ids[s]), fmt(static_cast<int>(l)), which == 0 ? "baseline" : "pruned",
                                   fmt(i), fmt(j), fmt(d[i * n + j])});
            }
        }
    }
    return t;
}

// ---- sweeps ----

std::string to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::Rate: return "rate";
        case SweepAxis::Layers: return "layers";
        case SweepAxis::LayerCount: return "layer_count";
        case SweepAxis::Strategy: return "strategy";
    }
    return "?";
}

SweepAxis parse_sweep_axis(const std::string& s) {
    if (s == "rate") return SweepAxis::Rate;
    if (s == "layers") return SweepAxis::Layers;
    if (s == "layer_count") return SweepAxis::LayerCount;
    if (s == "strategy") return SweepAxis::Strategy;
    throw UsageError("unknown sweep axis '" + s + "' (rate, layers, layer_count, strategy)");
}

std::vector<int> layer_group(const std::string& name, int n_layers) {
    const int third = (n_layers + 2) / 3;
    int begin = 0;
    if (name == "shallow") begin = 0;
    else if (name == "intermediate") begin = third;
    else if (name == "deep") begin = 2 * third;
    else throw UsageError("unknown layer group '" + name + "' (shallow, intermediate, deep)");
    std::vector<int> out;
    for (int l = begin; l < std::min(n_layers, begin + third); ++l) out.push_back(l);
    if (out.empty()) throw UsageError("layer group '" + name + "' is empty for this model");
    return out;
}

std::vector<SweepPoint> sweep_points(SweepAxis axis, const nlohmann::json& grid, const PruneConfig& base,
                                     int n_layers) {
    if (!grid.is_array() || grid.empty()) throw UsageError("sweep grid must be a non-empty array");
    std::vector<SweepPoint> out;
    try {
        for (const auto& v : grid) {
            SweepPoint p;
            p.prune = base;
            switch (axis) {
                case SweepAxis::Rate:
                    p.prune.rate = v.get<double>();
                    p.key = p.prune.rate;
                    p.value = fmt(p.prune.rate);
                    break;
                case SweepAxis::LayerCount: {
                    const int m = v.get<int>();
                    p.prune.layers = PruneConfig::first_layers(m);
                    p.key = m;
                    p.value = fmt(m);
                    break;
                }
                case SweepAxis::Layers:
                    if (v.is_string()) {
                        p.value = v.get<std::string>();
                        p.prune.layers = layer_group(p.value, n_layers);
                    } else {
                        p.prune.layers = v.get<std::vector<int>>();
                        for (std::size_t i = 0; i < p.prune.layers.size(); ++i)
                            p.value += (i ? " " : "") + std::to_string(p.prune.layers[i]);
                    }
                    p.key = p.prune.layers.empty() ? -1.0 : p.prune.layers.front();
                    break;
                case SweepAxis::Strategy:
                    p.value = v.get<std::string>();
                    p.prune.strategy = parse_strategy(p.value);
                    p.key = static_cast<double>(p.prune.strategy);
                    break;
            }
            p.prune.validate(n_layers);
            out.push_back(std::move(p));
        }
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("bad sweep grid value: ") + e.what());
    } catch (const ContractError& e) {
        throw UsageError(std::string("bad sweep grid value: ") + e.what());
    } catch (const ConfigError& e) {
        throw UsageError(std::string("bad sweep grid value: ") + e.what());
    }
    return out;
}

std::vector<SweepRow> sweep(const ModelParams& params, const Manifest& manifest, SweepAxis axis,
                            const nlohmann::json& grid, const PruneConfig& base, const EvalOptions& opt) {
    const auto points = sweep_points(axis, grid, base, params.config.n_layers);
    std::vector<PruneConfig> configs;
    for (const auto& p : points) configs.push_back(p.prune);
    const auto rows = evaluate(params, manifest, configs, opt);
    const std::size_t per_bin = configs.size() + 1;
    std::vector<SweepRow> out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::size_t k = i % per_bin;
        if (k == 0) continue;
        out.push_back({to_string(axis), points[k - 1].value, points[k - 1].key, rows[i]});
    }
    std::stable_sort(out.begin(), out.end(), [](const SweepRow& a, const SweepRow& b) {
        if (a.result.bin != b.result.bin) return a.result.bin < b.result.bin;
        return a.key < b.key;
    });
    return out;
}

CsvTable sweep_table(const std::vector<SweepRow>& rows) {
    CsvTable t;
    t.header = {"axis", "value"};
    const auto h = result_header();
    t.header.insert(t.header.end(), h.begin(), h.end());
    for (const auto& r : rows) {
        std::vector<std::string> row{r.axis, r.value};
        const auto c = result_cells(r.result);
        row.insert(row.end(), c.begin(), c.end());
        t.add(std::move(row));
    }
    return t;
}

// ---- scaling law ----

std::vector<double> rate_grid() {
    std::vector<double> g;
    for (int i = 0; i <= 10; ++i) g.push_back(i / 20.0);
    return g;
}

double best_rate(const std::vector<double>& rates, const std::vector<double>& accuracies) {
    if (rates.size() != accuracies.size()) throw ContractError("best_rate: one accuracy per rate required");
    if (rates.size() < 3) throw ContractError("best_rate: need at least three rates");
    for (std::size_t i = 1; i < rates.size(); ++i)
        if (!(rates[i] > rates[i - 1])) throw ContractError("best_rate: rates must ascend");
    std::size_t best = 0;
    double best_sum = -1.0;
    for (std::size_t i = 0; i + 2 < rates.size(); ++i) {
        const double s = accuracies[i] + accuracies[i + 1] + accuracies[i + 2];
        if (s > best_sum) {
            best_sum = s;
            best = i;
        }
    }
    return (rates[best] + rates[best + 1] + rates[best + 2]) / 3.0;
}

ScalingFit fit_scaling_law(const std::vector<std::pair<double, double>>& points) {
    std::set<double> xs;
    double scale = 0.0;
    for (const auto& [x, y] : points) {
        if (!std::isfinite(x) || !std::isfinite(y)) throw NumericError("fit_scaling_law: non-finite point");
        xs.insert(x);
        scale = std::max(scale, std::abs(x));
    }
    if (xs.size() < 3) throw ContractError("fit_scaling_law: need at least three distinct lengths");

    // Householder QR of the scaled design matrix [1, u, u^2].
    const std::size_t n = points.size();
    std::vector<std::array<double, 3>> A(n);
    std::vector<double> b(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = points[i].first / scale;
        A[i] = {1.0, u, u * u};
        b[i] = points[i].second;
    }
    for (std::size_t k = 0; k < 3; ++k) {
        double norm = 0.0;
        for (std::size_t i = k; i < n; ++i) norm += A[i][k] * A[i][k];
        norm = std::sqrt(norm);
        const double alpha = A[k][k] > 0 ? -norm : norm;
        std::vector<double> v(n, 0.0);
        for (std::size_t i = k; i < n; ++i) v[i] = A[i][k];
        v[k] -= alpha;
        double vv = 0.0;
        for (std::size_t i = k; i < n; ++i) vv += v[i] * v[i];
        if (vv == 0.0) continue;
        for (std::size_t c = k; c < 3; ++c) {
            double dot = 0.0;
            for (std::size_t i = k; i < n; ++i) dot += v[i] * A[i][c];
            const double f = 2.0 * dot / vv;
            for (std::size_t i = k; i < n; ++i) A[i][c] -= f * v[i];
        }
        double dot = 0.0;
        for (std::size_t i = k; i < n; ++i) dot += v[i] * b[i];
        const double f = 2.0 * dot / vv;
        for (std::size_t i = k; i < n; ++i) b[i] -= f * v[i];
    }
    double beta[3];
    for (int k = 2; k >= 0; --k) {
        double s = b[static_cast<std::size_t>(k)];
        for (std::size_t c = static_cast<std::size_t>(k) + 1; c < 3; ++c) s -= A[static_cast<std::size_t>(k)][c] * beta[c];
        beta[k] = s / A[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)];
    }
    ScalingFit fit;
    fit.intercept = beta[0];
    fit.linear = beta[1] / scale;
    fit.quadratic = beta[2] / (scale * scale);
    double mean = 0.0;
    for (const auto& p : points) mean += p.second;
    mean /= static_cast<double>(n);
    double ss_res = 0.0, ss_tot = 0.0;
    for (const auto& [x, y] : points) {
        const double r = y - (fit.intercept + fit.linear * x + fit.quadratic * x * x);
        fit.residuals.push_back(r);
        ss_res += r * r;
        ss_tot += (y - mean) * (y - mean);
    }
    fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res < 1e-24 ? 1.0 : 0.0);
    return fit;
}

std::vector<std::pair<double, double>> best_rates(const std::vector<SweepRow>& rate_sweep) {
    std::map<int, std::vector<std::pair<double, double>>> by_bin;
    for (const auto& r : rate_sweep) {
        if (r.axis != "rate") throw ContractError("best_rates: sweep is not over the rate axis");
        by_bin[r.result.bin].emplace_back(r.key, r.result.accuracy);
    }
    std::vector<std::pair<double, double>> out;
    for (auto& [bin, pts] : by_bin) {
        std::sort(pts.begin(), pts.end());
        std::vector<double> rates, acc;
        for (const auto& [r, a] : pts) {
            rates.push_back(r);
            acc.push_back(a);
        }
        out.emplace_back(static_cast<double>(bin), best_rate(rates, acc));
    }
    return out;
}

CsvTable scaling_table(const std::vector<std::pair<double, double>>& points, const ScalingFit& fit) {
    CsvTable t;
    t.header = {"kind", "x", "y", "residual"};
    for (std::size_t i = 0; i < points.size(); ++i)
        t.add({"point", fmt(points[i].first), fmt(points[i].second),
               i < fit.residuals.size() ? fmt(fit.residuals[i]) : ""});
    t.add({"intercept", "", fmt(fit.intercept), ""});
    t.add({"linear", "", fmt(fit.linear), ""});
    t.add({"quadratic", "", fmt(fit.quadratic), ""});
    t.add({"r2", "", fmt(fit.r2), ""});
    return t;
}

// ---- retention ----

RetentionReport retention(const ModelParams& params, const Manifest& manifest, const PruneConfig& prune,
                          int threads) {
    prune.validate(params.config.n_layers);
    const std::size_t nv = static_cast<std::size_t>(params.config.n_visual);
    struct Per {
        std::vector<Category> cats;
        std::vector<std::size_t> removed_at;  // index into layers, or layers.size() if kept
        std::pair<std::size_t, std::size_t> question;
        int bin = 0;
    };
    auto layers = prune.layers;
    std::sort(layers.begin(), layers.end());
    std::vector<Per> per(manifest.size());
    parallel_for(manifest.size(), threads, [&](std::size_t i) {
        const auto stream = regenerate(manifest[i]).stream();
        const auto r = forward(params, stream, prune);
        auto& p = per[i];
        p.bin = manifest[i].spec.length_bin;
        p.cats = stream.categories;
        const auto [qb, qe] = stream.question_span();
        p.question = {qb - nv, qe - nv};
        p.removed_at.assign(stream.text_count(), layers.size());
        for (const auto& log : r.record.layers) {
            const auto li = static_cast<std::size_t>(std::lower_bound(layers.begin(), layers.end(), log.layer) - layers.begin());
            for (const auto& tok : log.pruned) p.removed_at[tok.position - nv] = li;
        }
    });

    RetentionReport rep;
    rep.layers = layers;
    rep.bins = sorted_bins(manifest);
    std::vector<std::array<std::size_t, kCategories>> alive(layers.size());
    for (auto& a : alive) a.fill(0);
    std::vector<std::array<std::size_t, kDeciles>> kept(rep.bins.size() + 1), total(rep.bins.size() + 1);
    for (auto& a : kept) a.fill(0);
    for (auto& a : total) a.fill(0);
    std::size_t q_kept = 0, q_total = 0, all_kept = 0, all_total = 0;
    for (const auto& p : per) {
        const std::size_t m = p.cats.size();
        const std::size_t b = bin_slot(rep.bins, p.bin);
        for (std::size_t t = 0; t < m; ++t) {
            const auto c = static_cast<std::size_t>(p.cats[t]);
            ++rep.category_tokens[c];
            for (std::size_t li = 0; li < layers.size(); ++li)
                if (p.removed_at[t] > li) ++alive[li][c];
            const bool k = p.removed_at[t] == layers.size();
            const std::size_t d = position_decile(t, m);
            for (std::size_t slot : {b, rep.bins.size()}) {
                ++total[slot][d];
                kept[slot][d] += k;
            }
            ++all_total;
            all_kept += k;
            if (t >= p.question.first && t < p.question.second) {
                ++q_total;
                q_kept += k;
            }
        }
    }
    for (std::size_t li = 0; li < layers.size(); ++li) {
        std::array<double, kCategories> f{};
        for (std::size_t c = 0; c < kCategories; ++c) f[c] = ratio(alive[li][c], rep.category_tokens[c]);
        rep.category_fraction.push_back(f);
    }
    for (std::size_t s = 0; s < kept.size(); ++s) {
        std::array<double, kDeciles> f{};
        for (std::size_t d = 0; d < kDeciles; ++d) f[d] = ratio(kept[s][d], total[s][d]);
        rep.decile_fraction.push_back(f);
    }
    rep.question_fraction = ratio(q_kept, q_total);
    rep.overall_fraction = ratio(all_kept, all_total);
    return rep;
}

CsvTable retention_category_table(const RetentionReport& r) {
    CsvTable t;
    t.header = {"layer", "category", "tokens", "retained_fraction"};
    for (std::size_t li = 0; li < r.layers.size(); ++li)
        for (std::size_t c = 0; c < kCategories; ++c)
            t.add({fmt(r.layers[li]), kCategoryNames[c], fmt(r.category_tokens[c]), fmt(r.category_fraction[li][c])});
    return t;
}

CsvTable retention_position_table(const RetentionReport& r) {
    CsvTable t;
    t.header = {"bin", "decile", "retained_fraction"};
    for (std::size_t s = 0; s < r.decile_fraction.size(); ++s)
        for (std::size_t d = 0; d < kDeciles; ++d)
            t.add({s < r.bins.size() ? fmt(r.bins[s]) : "all", fmt(d), fmt(r.decile_fraction[s][d])});
    t.add({"all", "question", fmt(r.question_fraction)});
    t.add({"all", "overall", fmt(r.overall_fraction)});
    return t;
}

// ---- timing ----

std::uint64_t unpruned_flops(const ModelConfig& c, std::uint64_t n) {
    return static_cast<std::uint64_t>(c.n_layers) * layer_flops(c, n);
}

std::vector<TimingRow> timing(const ModelParams& params, const Manifest& manifest, const PruneConfig& prune,
                              int repetitions, std::size_t per_bin) {
    if (repetitions < 5) throw ContractError("timing: at least 5 repetitions required");
    prune.validate(params.config.n_layers);
    std::vector<TimingRow> rows;
    for (int bin : sorted_bins(manifest)) {
        TimingRow row;
        row.bin = bin;
        std::vector<double> base_ms, pruned_ms;
        for (const auto& e : manifest) {
            if (e.spec.length_bin != bin) continue;
            if (per_bin && row.samples >= per_bin) break;
            const auto stream = regenerate(e).stream();
            const auto b = forward(params, stream);
            const auto p = forward(params, stream, prune);
            row.baseline_flops += static_cast<double>(b.trace.flops);
            row.pruned_flops += static_cast<double>(p.trace.flops);
            std::vector<double> tb, tp;
            for (int r = 0; r < repetitions; ++r) {
                auto t0 = std::chrono::steady_clock::now();
                (void)forward(params, stream);
                tb.push_back(elapsed_ms(t0));
                t0 = std::chrono::steady_clock::now();
                (void)forward(params, stream, prune);
                tp.push_back(elapsed_ms(t0));
            }
            base_ms.push_back(median(tb));
            pruned_ms.push_back(median(tp));
            ++row.samples;
        }
        const double n = static_cast<double>(std::max<std::size_t>(1, row.samples));
        row.baseline_flops /= n;
        row.pruned_flops /= n;
        row.baseline_ms = median(base_ms);
        row.pruned_ms = median(pruned_ms);
        rows.push_back(row);
    }
    return rows;
}

CsvTable timing_table(const std::vector<TimingRow>& rows) {
    CsvTable t;
    t.header = {"bin",          "samples",        "baseline_ms", "pruned_ms", "time_ratio", "baseline_flops",
                "pruned_flops", "flop_ratio"};
    for (const auto& r : rows)
        t.add({fmt(r.bin), fmt(r.samples), fmt(r.baseline_ms), fmt(r.pruned_ms),
               fmt(r.baseline_ms > 0 ? r.pruned_ms / r.baseline_ms : 0.0), fmt(r.baseline_flops), fmt(r.pruned_flops),
               fmt(r.baseline_flops > 0 ? r.pruned_flops / r.baseline_flops : 0.0)});
    return t;
}

}  // namespace prunevis
