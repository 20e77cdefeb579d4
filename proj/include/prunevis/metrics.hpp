// Copyright 2026 The prunevis Authors
// SPDX-License-Identifier: Apache-2.0

// Per-row attention statistics and their pre/post-pruning comparison.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prunevis/model.hpp"

namespace prunevis {

/// Mass of `row` on the positions in `visual`. An empty visual set gives 0
/// and sets `*degenerate` when provided.
double visual_dependency(std::span<const double> row, std::span<const std::size_t> visual,
                         bool* degenerate = nullptr);

/// Shannon entropy in nats; entries below 1e-15 contribute nothing.
double attention_entropy(std::span<const double> row);

/// Row without the `pruned` indices, rescaled to sum to one.
std::vector<double> renormalized_prune(std::span<const double> row, std::span<const std::size_t> pruned);

/// Population variance of the entries.
double attention_variance(std::span<const double> row);

/// (visual mass, text mass). The two sets must be disjoint and cover every
/// nonzero entry.
std::pair<double, double> modality_allocation(std::span<const double> row, std::span<const std::size_t> visual,
                                              std::span<const std::size_t> text);

struct RowStats {
    double entropy = 0.0;
    double variance = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    double dvis = 0.0;
    std::size_t rows = 0;

    friend bool operator==(const RowStats&, const RowStats&) = default;
};

struct LayerReport {
    int layer = 0;
    /// Unpruned run, over the query positions that survive this layer.
    RowStats pre;
    /// Same rows with the removed keys dropped and the rest renormalised.
    RowStats post;
    /// Attention actually computed by the pruned run at this layer.
    RowStats run;
    /// Keys removed up to and including this layer.
    std::size_t removed = 0;
    /// Share of rows whose variance did not decrease after renormalising.
    double variance_up_rate = 0.0;

    friend bool operator==(const LayerReport&, const LayerReport&) = default;
};

struct AttentionReport {
    std::vector<LayerReport> layers;
    RowStats mean_pre;
    RowStats mean_post;

    friend bool operator==(const AttentionReport&, const AttentionReport&) = default;
};

/// Rows are averaged over heads and over query positions.
/// `pre` must be an unpruned trace of the same stream as `post`.
AttentionReport attention_report(const ForwardTrace& pre, const ForwardTrace& post, std::size_t n_visual);

/// Long format: layer, metric, phase, value.
std::string report_to_csv(const AttentionReport& r);
AttentionReport report_from_csv(const std::string& text);

}  // namespace prunevis
