// Copyright 2026 The prunevis Authors
// SPDX-License-Identifier: Apache-2.0

// Reverse-mode differentiation over dense tensors.
//
// A Tape records every operation applied to Vars created on it. Operations on
// inputs that do not require gradients are evaluated eagerly and recorded
// without a backward rule, so the same code path serves inference and
// training. Attention matrices are ordinary tape nodes: after backward() their
// gradients can be read like any parameter's.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "prunevis/tensor.hpp"

namespace prunevis {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;
};

/// Gradients produced by Tape::backward, indexed by node id.
class Gradients {
public:
    Gradients() = default;
    Gradients(std::vector<std::vector<double>> grads, std::vector<Shape> shapes);

    /// True if the node requires gradients (reachable or not).
    bool has(Var v) const;
    /// Gradient of the loss with respect to `v`; zeros if `v` was not reached.
    Tensor of(Var v) const;
    std::span<const double> raw(Var v) const;

private:
    std::vector<std::vector<double>> grads_;
    std::vector<Shape> shapes_;
};

class Tape {
public:
    /// Backward rule: receives the upstream gradient of the node's output and
    /// accumulates into its inputs via Tape::grad_of.
    using BackwardFn = std::function<void(std::span<const double> upstream, Tape& tape)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value, bool requires_grad = false);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    /// Appends an op node. When no input requires gradients the backward rule
    /// is dropped and the node is a constant.
    Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    /// Runs the reverse sweep from a scalar loss. Each node with a backward
    /// rule is visited once, in reverse recording order.
    Gradients backward(Var loss);

    /// Gradient accumulator for node `id` during backward (zero-initialised).
    std::vector<double>& grad_of(std::size_t id);

private:
    struct Node {
        Tensor value;
        bool requires_grad = false;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;
    bool in_backward_ = false;
};

enum class MaskKind {
    None,
    /// Query i may attend to key j iff j <= i + (keys - queries).
    Causal,
};

namespace ad {

Var matmul(Var a, Var b);
/// a [m x k] times the transpose of b [n x k].
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// Adds a length-n bias to every row of an m x n matrix.
Var add_row_bias(Var x, Var bias);
Var sum(Var x);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var gelu(Var x);
Var tanh(Var x);
/// Rows of `table` selected by `ids`.
Var embedding(Var table, std::span<const int> ids);
Var masked_row_softmax(Var scores, MaskKind mask);
/// Explicit mask: allowed[i * cols + j] != 0 admits position (i, j).
Var masked_row_softmax(Var scores, std::span<const std::uint8_t> allowed);
/// Mean over rows of -log softmax(logits)[row, target].
Var cross_entropy(Var logits, std::span<const int> targets);
Var gather_rows(Var x, std::span<const std::size_t> rows);
Var concat_rows(Var a, Var b);
/// Columns [begin, begin + count) of a matrix.
Var slice_cols(Var x, std::size_t begin, std::size_t count);
/// Side-by-side concatenation of matrices with equal row counts.
Var concat_cols(std::span<const Var> parts);

}  // namespace ad

/// Central-difference gradient check of `f` at `point`.
///
/// Vector-valued outputs are reduced to a scalar with fixed pseudo-random
/// weights drawn from `seed`. Returns the maximum over coordinates of
/// |analytic - numeric| / (|analytic| + 1e-12).
double grad_check(const std::function<Var(Var)>& f, const Tensor& point, double eps,
                  std::uint64_t seed = 0);

namespace kernels {
// Raw dense kernels, shared by the tape ops and by test oracles that need a
// fast product. All are accumulate-free: `out` is overwritten.
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> out,
               std::size_t m, std::size_t k, std::size_t n);
}  // namespace kernels

}  // namespace prunevis
