// Copyright 2026 The prunevis Authors
// SPDX-License-Identifier: Apache-2.0

// Decoder-only transformer over a [visual | text] sequence.
//
// Pre-LN blocks with a fused QKV projection, causal attention over the
// concatenated sequence and a GELU MLP. Visual rows are a linear projection of
// the visual features. Text rows are a token embedding plus a learned
// position vector: context tokens are indexed by their distance to the
// question (clipped), question and answer tokens by their slot in the span.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "prunevis/autodiff.hpp"
#include "prunevis/pruning.hpp"
#include "prunevis/stream.hpp"
#include "prunevis/tensor.hpp"

namespace prunevis {

struct ModelConfig {
    int n_layers = 6;
    int n_heads = 4;
    int d_model = 64;
    int d_head = 16;
    int mlp_ratio = 4;
    int vocab_size = 512;
    int n_visual = 16;
    int visual_dim = 32;
    int max_text = 400;
    /// Distance buckets for context tokens; farther tokens share the last one.
    int context_positions = 32;
    /// Slots for question and answer tokens.
    int span_positions = 16;
    double init_std = 0.02;
    std::uint64_t seed = 0;

    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Named parameter tensors in a fixed order.
struct ModelParams {
    ModelConfig config;
    std::vector<std::string> names;
    std::vector<Tensor> values;

    static ModelParams init(const ModelConfig& config);

    std::size_t index_of(const std::string& name) const;
    const Tensor& get(const std::string& name) const { return values[index_of(name)]; }
    void set(const std::string& name, Tensor t);
    std::size_t count() const;

    bool bit_equal(const ModelParams& other) const;
};

/// Attention and alive maps of one forward pass.
struct ForwardTrace {
    /// attention[l][h]: post-softmax matrix over the rows alive at layer l.
    std::vector<std::vector<Tensor>> attention;
    /// alive[l]: original position of every row at layer l, ascending.
    std::vector<std::vector<std::size_t>> alive;
    Tensor logits;
    /// Attention and MLP floating-point operations actually executed.
    std::uint64_t flops = 0;
};

struct ForwardResult {
    Tensor logits;  ///< vocab_size logits at the final alive position
    ForwardTrace trace;
    PruneRecord record;
};

/// Hidden states before the first layer, one row per position.
Tensor embed(const ModelParams& params, const TokenStream& stream);

/// Learned-position index of each text position.
std::vector<int> position_ids(const ModelConfig& config, const TokenStream& stream);

ForwardResult forward(const ModelParams& params, const TokenStream& stream,
                      const std::optional<PruneConfig>& prune = std::nullopt);

/// Replaces attention matrix (layer, head) during a forward pass.
using AttentionHook = std::function<Var(int layer, int head, Var attention)>;

/// Answer cross-entropy of one forward pass, with an optional hook.
double answer_loss(const ModelParams& params, const TokenStream& stream, int answer,
                   const std::optional<PruneConfig>& prune = std::nullopt, const AttentionHook& hook = {});

/// Attention + MLP flops of one layer run over `t` rows.
std::uint64_t layer_flops(const ModelConfig& c, std::uint64_t t);

/// Greedy generation. Pruning decisions from the first pass are replayed in
/// later steps, so pruned positions never return. Stops after emitting
/// `stop_token` or after `max_steps` tokens.
std::vector<int> greedy_decode(const ModelParams& params, const TokenStream& stream,
                               const std::optional<PruneConfig>& prune, int max_steps, int stop_token = -1);

struct Example {
    TokenStream stream;
    int answer = 0;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-8;
    double weight_decay = 0.0;
    /// Global gradient-norm clip; 0 disables it.
    double clip = 1.0;
};

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t step = 0;
};

/// Answer cross-entropy summed into per-parameter gradients, averaged over
/// the batch. Returns the mean loss.
double loss_and_gradients(const ModelParams& params, std::span<const Example> batch,
                          std::vector<std::vector<double>>& grads);

/// One Adam update on the batch. Returns the loss before the update; throws
/// TrainingError if it is not finite.
double train_step(ModelParams& params, std::span<const Example> batch, AdamState& state, const AdamConfig& opt);

struct AttentionGradients {
    ForwardTrace trace;
    /// grads[l][h] has the shape of trace.attention[l][h].
    std::vector<std::vector<Tensor>> grads;
    double loss = 0.0;
};

/// d(answer cross-entropy)/dA for every attention matrix, optionally under
/// pruning.
AttentionGradients attention_gradients(const ModelParams& params, const TokenStream& stream, int answer,
                                       const std::optional<PruneConfig>& prune = std::nullopt);

/// Binary checkpoint: config JSON followed by the named tensors.
void save_checkpoint(const std::string& path, const ModelParams& params);
/// Throws ConfigError on I/O or format problems, or when `expected` is given
/// and differs from the stored config.
ModelParams load_checkpoint(const std::string& path, const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace prunevis
