// Copyright 2026 The prunevis Authors
// SPDX-License-Identifier: Apache-2.0

// Attention-based textual context pruning.
//
// A token's importance at a layer is the attention it receives, summed over
// every query row and pooled over heads. At each pruning layer the lowest
// scoring text tokens are physically removed from the hidden sequence; visual
// tokens are never candidates.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "prunevis/tensor.hpp"

namespace prunevis {

enum class PruneStrategy { MaxPool, MeanPool, Random };
enum class Apportioning { EvenPerLayer, AllAtFirstLayer };
/// Cumulative: `rate` is the total fraction removed over all pruning layers.
/// PerLayer: each pruning layer removes `rate` of the text tokens still alive.
enum class RateMode { Cumulative, PerLayer };

std::string to_string(PruneStrategy s);
std::string to_string(Apportioning a);
std::string to_string(RateMode m);
PruneStrategy parse_strategy(const std::string& s);
Apportioning parse_apportioning(const std::string& s);
RateMode parse_rate_mode(const std::string& s);

struct PruneConfig {
    PruneStrategy strategy = PruneStrategy::MaxPool;
    /// Fraction of the original text tokens removed in total, in [0, 1).
    double rate = 0.0;
    /// Layers after which pruning happens, ascending.
    std::vector<int> layers;
    /// Keep the question span out of the candidate set. Always on for Random.
    bool protect_question = false;
    Apportioning apportioning = Apportioning::EvenPerLayer;
    RateMode rate_mode = RateMode::Cumulative;
    /// Mixed with the stream contents to draw Random prune sets.
    std::uint64_t seed = 0;

    /// The first `m` layers (0..m-1).
    static std::vector<int> first_layers(int m);

    bool effective_protect_question() const {
        return protect_question || strategy == PruneStrategy::Random;
    }
    /// Throws ContractError when the invariants do not hold for a model with
    /// `n_layers` layers.
    void validate(int n_layers) const;
    /// Short label such as "maxpool@0.30[0,1]".
    std::string label() const;

    friend bool operator==(const PruneConfig&, const PruneConfig&) = default;
};

void to_json(nlohmann::json& j, const PruneConfig& c);
void from_json(const nlohmann::json& j, PruneConfig& c);

struct PrunedToken {
    std::size_t position;  ///< original position in the stream
    double score;
};

struct LayerPruneLog {
    int layer = 0;
    std::vector<PrunedToken> pruned;
};

struct PruneRecord {
    std::vector<LayerPruneLog> layers;
    std::size_t cumulative = 0;
    /// Per original position: false once the token has been pruned.
    std::vector<bool> retained;

    /// Every pruned original position, ascending.
    std::vector<std::size_t> pruned_positions() const;
};

/// Per-position importance from one layer's head attention matrices.
/// score_i = pool_h sum_q A_h[q, i]; pool is max (MaxPool) or mean (MeanPool).
std::vector<double> token_scores(std::span<const Tensor> heads, PruneStrategy strategy);

/// The `k` smallest-scoring positions that are neither below `n_visual` nor in
/// `protected_positions`. Ties go to the smaller position. Result ascending.
std::vector<std::size_t> select_prune_set(std::span<const double> scores, std::size_t k,
                                          std::span<const std::size_t> protected_positions,
                                          std::size_t n_visual = 0);

/// Uniform sample of `k` positions without replacement from `candidates`.
/// Result ascending.
std::vector<std::size_t> random_prune_set(std::uint64_t seed, std::size_t k,
                                          std::span<const std::size_t> candidates);

/// Row indices (into the alive sequence) that survive removing `prune_set`
/// (original positions) from `alive`.
std::vector<std::size_t> surviving_rows(std::span<const std::size_t> alive,
                                        std::span<const std::size_t> prune_set, std::size_t n_visual);

/// Removes the rows of `prune_set` (original positions) from `hidden`, whose
/// rows correspond to `alive`. Returns the reduced rows and the updated map.
std::pair<Tensor, std::vector<std::size_t>> apply_prune(const Tensor& hidden,
                                                        std::span<const std::size_t> alive,
                                                        std::span<const std::size_t> prune_set,
                                                        std::size_t n_visual);

/// Removal counts for each configured pruning layer.
std::vector<std::size_t> plan_layer_budget(const PruneConfig& config, std::size_t text_count);

}  // namespace prunevis
