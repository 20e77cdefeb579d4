// Copyright 2026 The prunevis Authors
// SPDX-License-Identifier: Apache-2.0

// Saliency-based information flow between the visual prefix, preserved text,
// pruned text and the target position.
//
// Cell I[i, j] is flow from key j to query i.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "prunevis/model.hpp"

namespace prunevis {

/// I = sum over heads of |A .* dL/dA|.
Tensor saliency_matrix(std::span<const Tensor> attention, std::span<const Tensor> grads);

struct FlowPartition {
    std::vector<std::size_t> visual;
    std::vector<std::size_t> preserved;
    std::vector<std::size_t> pruned;
    std::size_t target = 0;

    /// Throws ContractError unless the sets are disjoint, lie in [0, n) and
    /// leave at least one preserved token. Uncovered positions count as WW.
    void validate(std::size_t n) const;
};

enum class FlowScore { VR, VC, RT, CT, VT, WW };
inline constexpr std::size_t kFlowScoreCount = 6;
std::string to_string(FlowScore s);

struct FlowScores {
    double s[kFlowScoreCount] = {};
    /// Scores whose pair set is empty (reported as 0).
    bool empty[kFlowScoreCount] = {};
    /// Size of each pair set.
    std::size_t pairs[kFlowScoreCount] = {};

    double operator[](FlowScore k) const { return s[static_cast<std::size_t>(k)]; }
};

/// Mean saliency over each pair set; the remaining causal cells form WW.
FlowScores flow_scores(const Tensor& saliency, const FlowPartition& p);

/// Places a saliency matrix over `alive` rows back into an n x n matrix over
/// original positions, with zeros for absent tokens.
Tensor expand_saliency(const Tensor& saliency, std::span<const std::size_t> alive, std::size_t n);

struct FlowLayer {
    int layer = 0;
    FlowScores baseline;
    FlowScores pruned;
    FlowScores delta() const;
};

struct FlowComparison {
    FlowPartition partition;
    std::vector<FlowLayer> layers;
    /// Per-layer saliency matrices in original coordinates.
    std::vector<Tensor> baseline_saliency;
    std::vector<Tensor> pruned_saliency;
};

/// Flow of an unpruned and a pruned run of the same stream. The partition
/// comes from the pruned run's record.
FlowComparison flow_compare(const AttentionGradients& baseline, const AttentionGradients& pruned,
                            const PruneRecord& record, const TokenStream& stream);

/// Runs both passes of `stream` with answer cross-entropy as the loss.
FlowComparison flow_compare(const ModelParams& params, const TokenStream& stream, int answer,
                            const PruneConfig& prune);

/// Long-format table: layer, score, baseline, pruned, delta, empty.
std::string flow_to_csv(const FlowComparison& c);

/// Partition implied by a prune record.
FlowPartition partition_from_record(const PruneRecord& record, const TokenStream& stream);

}  // namespace prunevis
