// Copyright 2026 The prunevis Authors
// SPDX-License-Identifier: Apache-2.0

#include "prunevis/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "prunevis/csv.hpp"
#include "prunevis/errors.hpp"

namespace prunevis {

namespace {

void require_distribution(std::span<const double> row, const char* op) {
    double s = 0.0;
    for (double x : row) s += x;
    if (std::abs(s - 1.0) > 1e-9) throw ContractError(std::string(op) + ": row does not sum to 1");
}

}  // namespace

double visual_dependency(std::span<const double> row, std::span<const std::size_t> visual, bool* degenerate) {
    require_distribution(row, "visual_dependency");
    if (degenerate) *degenerate = visual.empty();
    double s = 0.0;
    for (auto i : visual) {
        if (i >= row.size()) throw ContractError("visual_dependency: position outside the row");
        s += row[i];
    }
    return s;
}

double attention_entropy(std::span<const double> row) {
    double h = 0.0;
    for (double p : row) {
        if (p < 0.0) throw DomainError("attention_entropy: negative probability");
        if (p < 1e-15) continue;
        h -= p * std::log(p);
    }
    return h;
}

std::vector<double> renormalized_prune(std::span<const double> row, std::span<const std::size_t> pruned) {
    std::vector<bool> drop(row.size(), false);
    for (auto i : pruned) {
        if (i >= row.size()) throw ContractError("renormalized_prune: position outside the row");
        drop[i] = true;
    }
    std::vector<double> out;
    double mass = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (drop[i]) continue;
        out.push_back(row[i]);
        mass += row[i];
    }
    if (out.empty()) throw ContractError("renormalized_prune: nothing survives");
    if (mass < 1e-12) throw NumericError("renormalized_prune: surviving mass below 1e-12");
    if (out.size() == row.size()) return out;
    for (auto& x : out) x /= mass;
    return out;
}

double attention_variance(std::span<const double> row) {
    if (row.empty()) throw ContractError("attention_variance: empty row");
    // Welford
    double mean = 0.0, m2 = 0.0;
    std::size_t n = 0;
    for (double x : row) {
        ++n;
        const double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }
    return m2 / static_cast<double>(n);
}

std::pair<double, double> modality_allocation(std::span<const double> row, std::span<const std::size_t> visual,
                                              std::span<const std::size_t> text) {
    std::vector<int> owner(row.size(), 0);
    for (auto i : visual) {
        if (i >= row.size()) throw ContractError("modality_allocation: position outside the row");
        owner[i] = 1;
    }
    for (auto i : text) {
        if (i >= row.size()) throw ContractError("modality_allocation: position outside the row");
        if (owner[i] == 1) throw ContractError("modality_allocation: visual and text sets overlap");
        owner[i] = 2;
    }
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (owner[i] == 1) a += row[i];
        else if (owner[i] == 2) b += row[i];
        else if (row[i] != 0.0) throw ContractError("modality_allocation: sets do not cover the row's support");
    }
    return {a, b};
}

namespace {

struct Acc {
    double entropy = 0, variance = 0, alpha = 0, beta = 0;
    std::size_t rows = 0;

    void add(std::span<const double> row, std::size_t n_visual) {
        entropy += attention_entropy(row);
        variance += attention_variance(row);
        double a = 0.0, b = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j) (j < n_visual ? a : b) += row[j];
        alpha += a;
        beta += b;
        ++rows;
    }

    RowStats stats() const {
        RowStats s;
        if (rows == 0) return s;
        const double n = static_cast<double>(rows);
        s.entropy = entropy / n;
        s.variance = variance / n;
        s.alpha = alpha / n;
        s.beta = beta / n;
        s.dvis = s.alpha;
        s.rows = rows;
        return s;
    }
};

RowStats average(const std::vector<RowStats>& xs) {
    RowStats out;
    std::size_t k = 0;
    for (const auto& x : xs) {
        if (x.rows == 0) continue;
        out.entropy += x.entropy;
        out.variance += x.variance;
        out.alpha += x.alpha;
        out.beta += x.beta;
        out.rows += x.rows;
        ++k;
    }
    if (k == 0) return out;
    const double n = static_cast<double>(k);
    out.entropy /= n;
    out.variance /= n;
    out.alpha /= n;
    out.beta /= n;
    out.dvis = out.alpha;
    return out;
}

}  // namespace

AttentionReport attention_report(const ForwardTrace& pre, const ForwardTrace& post, std::size_t n_visual) {
    if (pre.attention.size() != post.attention.size() || pre.alive.empty() || pre.alive[0] != post.alive[0])
        throw ContractError("attention_report: traces come from different streams");
    for (const auto& a : pre.alive)
        if (a != pre.alive[0]) throw ContractError("attention_report: reference trace must be unpruned");
    const std::size_t L = pre.attention.size();
    const std::size_t N = pre.alive[0].size();
    AttentionReport rep;
    std::vector<RowStats> pres, posts;
    for (std::size_t l = 0; l < L; ++l) {
        const auto& after = l + 1 < L ? post.alive[l + 1] : post.alive[l];
        std::vector<bool> gone(N, true);
        for (auto p : after) gone[p] = false;
        std::vector<std::size_t> removed;
        for (std::size_t p = 0; p < N; ++p)
            if (gone[p]) removed.push_back(p);

        Acc a_pre, a_post, a_run;
        std::size_t up = 0, compared = 0;
        for (const auto& A : pre.attention[l]) {
            const auto d = A.data();
            for (auto q : after) {
                const std::span<const double> row(d.data() + q * N, q + 1);
                std::vector<std::size_t> drop;
                for (auto p : removed) {
                    if (p > q) break;
                    drop.push_back(p);
                }
                std::vector<double> reduced;
                try {
                    reduced = renormalized_prune(row, drop);
                } catch (const NumericError&) {
                    continue;
                }
                a_pre.add(row, n_visual);
                a_post.add(reduced, n_visual);
                ++compared;
                if (attention_variance(reduced) >= attention_variance(row)) ++up;
            }
        }
        for (const auto& A : post.attention[l]) {
            const std::size_t T = A.rows();
            const auto d = A.data();
            for (std::size_t q = 0; q < T; ++q) a_run.add(std::span<const double>(d.data() + q * T, q + 1), n_visual);
        }
        LayerReport lr;
        lr.layer = static_cast<int>(l);
        lr.pre = a_pre.stats();
        lr.post = a_post.stats();
        lr.run = a_run.stats();
        lr.removed = removed.size();
        lr.variance_up_rate = compared ? static_cast<double>(up) / static_cast<double>(compared) : 0.0;
        pres.push_back(lr.pre);
        posts.push_back(lr.post);
        rep.layers.push_back(lr);
    }
    rep.mean_pre = average(pres);
    rep.mean_post = average(posts);
    return rep;
}

namespace {

const char* kPhases[] = {"pre", "post", "run"};

void put_stats(CsvTable& t, const std::string& layer, const char* phase, const RowStats& s) {
    t.add({layer, "entropy", phase, fmt(s.entropy)});
    t.add({layer, "variance", phase, fmt(s.variance)});
    t.add({layer, "alpha", phase, fmt(s.alpha)});
    t.add({layer, "beta", phase, fmt(s.beta)});
    t.add({layer, "dvis", phase, fmt(s.dvis)});
    t.add({layer, "rows", phase, fmt(s.rows)});
}

void set_stat(RowStats& s, const std::string& metric, double v) {
    if (metric == "entropy") s.entropy = v;
    else if (metric == "variance") s.variance = v;
    else if (metric == "alpha") s.alpha = v;
    else if (metric == "beta") s.beta = v;
    else if (metric == "dvis") s.dvis = v;
    else if (metric == "rows") s.rows = static_cast<std::size_t>(v);
    else throw ConfigError("unknown report metric '" + metric + "'");
}

}  // namespace

std::string report_to_csv(const AttentionReport& r) {
    CsvTable t;
    t.header = {"layer", "metric", "phase", "value"};
    for (const auto& l : r.layers) {
        const auto layer = fmt(l.layer);
        put_stats(t, layer, "pre", l.pre);
        put_stats(t, layer, "post", l.post);
        put_stats(t, layer, "run", l.run);
        t.add({layer, "removed", "post", fmt(l.removed)});
        t.add({layer, "variance_up_rate", "post", fmt(l.variance_up_rate)});
    }
    put_stats(t, "mean", "pre", r.mean_pre);
    put_stats(t, "mean", "post", r.mean_post);
    return to_csv(t);
}

AttentionReport report_from_csv(const std::string& text) {
    const auto t = parse_csv(text);
    AttentionReport r;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& layer = t.cell(i, "layer");
        const auto& metric = t.cell(i, "metric");
        const auto& phase = t.cell(i, "phase");
        const double v = t.number(i, "value");
        if (layer == "mean") {
            set_stat(phase == "pre" ? r.mean_pre : r.mean_post, metric, v);
            continue;
        }
        const int l = std::stoi(layer);
        if (r.layers.empty() || r.layers.back().layer != l) {
            r.layers.emplace_back();
            r.layers.back().layer = l;
        }
        auto& lr = r.layers.back();
        if (metric == "removed") lr.removed = static_cast<std::size_t>(v);
        else if (metric == "variance_up_rate") lr.variance_up_rate = v;
        else if (phase == kPhases[0]) set_stat(lr.pre, metric, v);
        else if (phase == kPhases[1]) set_stat(lr.post, metric, v);
        else if (phase == kPhases[2]) set_stat(lr.run, metric, v);
        else throw ConfigError("unknown report phase '" + phase + "'");
    }
    return r;
}

}  // namespace prunevis
