// Copyright 2026 The prunevis Authors
// SPDX-License-Identifier: Apache-2.0

#include "prunevis/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <utility>

#include "prunevis/errors.hpp"

namespace prunevis {

const Tensor& Var::value() const { return tape->value(id); }
bool Var::requires_grad() const { return tape->requires_grad(id); }

Gradients::Gradients(std::vector<std::vector<double>> grads, std::vector<Shape> shapes)
    : grads_(std::move(grads)), shapes_(std::move(shapes)) {}

bool Gradients::has(Var v) const { return v.id < grads_.size() && v.requires_grad(); }

Tensor Gradients::of(Var v) const {
    if (v.id >= grads_.size()) throw ContractError("gradient requested for unknown node");
    if (grads_[v.id].empty()) return Tensor::zeros(shapes_[v.id]);
    return Tensor(shapes_[v.id], grads_[v.id]);
}

std::span<const double> Gradients::raw(Var v) const {
    if (v.id >= grads_.size()) throw ContractError("gradient requested for unknown node");
    return grads_[v.id];
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), requires_grad, {}});
    return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
    bool any = false;
    for (const auto& v : inputs) {
        if (v.tape != this) throw ContractError("op mixes vars from different tapes");
        any = any || nodes_[v.id].requires_grad;
    }
    check_finite(value.data(), "op output");
    nodes_.push_back(Node{std::move(value), any, any ? std::move(backward) : BackwardFn{}});
    return Var{this, nodes_.size() - 1};
}

std::vector<double>& Tape::grad_of(std::size_t id) {
    auto& g = grads_[id];
    if (g.empty()) g.assign(nodes_[id].value.numel(), 0.0);
    return g;
}

Gradients Tape::backward(Var loss) {
    if (loss.tape != this) throw ContractError("loss belongs to another tape");
    if (nodes_[loss.id].value.numel() != 1) {
        throw ContractError("backward requires a scalar loss, got " +
                            shape_str(nodes_[loss.id].value.shape()));
    }
    grads_.assign(nodes_.size(), {});
    grad_of(loss.id)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        auto& node = nodes_[i];
        if (!node.backward || grads_[i].empty()) continue;
        node.backward(grads_[i], *this);
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (!nodes_[i].requires_grad) grads_[i].clear();
        else check_finite(grads_[i], "gradient");
    }
    std::vector<Shape> shapes;
    shapes.reserve(nodes_.size());
    for (const auto& n : nodes_) shapes.push_back(n.value.shape());
    return Gradients(std::exchange(grads_, {}), std::move(shapes));
}

namespace kernels {

namespace {

using Vec4 = double __attribute__((vector_size(32), aligned(8)));
constexpr std::size_t kRowBlock = 6;
constexpr std::size_t kColVecs = 2;
constexpr std::size_t kColBlock = 4 * kColVecs;

// out[i0:i0+R, j0:j0+kColBlock] of a * b with the sum over p in increasing order.
template <std::size_t R>
void matmul_tile(const double* a, const double* b, double* out, std::size_t k, std::size_t n, std::size_t i0,
                 std::size_t j0) {
    Vec4 acc[R][kColVecs] = {};
    for (std::size_t p = 0; p < k; ++p) {
        const auto* bv = reinterpret_cast<const Vec4*>(b + p * n + j0);
        for (std::size_t r = 0; r < R; ++r) {
            const double av = a[(i0 + r) * k + p];
            for (std::size_t c = 0; c < kColVecs; ++c) acc[r][c] += av * bv[c];
        }
    }
    for (std::size_t r = 0; r < R; ++r) {
        auto* o = reinterpret_cast<Vec4*>(out + (i0 + r) * n + j0);
        for (std::size_t c = 0; c < kColVecs; ++c) o[c] = acc[r][c];
    }
}

void matmul_edge(const double* a, const double* b, double* out, std::size_t k, std::size_t n, std::size_t i0,
                 std::size_t i1, std::size_t j0, std::size_t j1) {
    for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = j0; j < j1; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            out[i * n + j] = acc;
        }
}

}  // namespace

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n) {
    const std::size_t mb = m - m % kRowBlock, nb = n - n % kColBlock;
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < mb; i += kRowBlock) {
        for (std::size_t j = 0; j < nb; j += kColBlock) matmul_tile<kRowBlock>(pa, pb, po, k, n, i, j);
        matmul_edge(pa, pb, po, k, n, i, i + kRowBlock, nb, n);
    }
    for (std::size_t j = 0; j < nb; j += kColBlock)
        for (std::size_t i = mb; i < m; ++i) matmul_tile<1>(pa, pb, po, k, n, i, j);
    matmul_edge(pa, pb, po, k, n, mb, m, nb, n);
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> out,
               std::size_t m, std::size_t k, std::size_t n) {
    std::vector<double> bt(k * n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
    matmul(a, bt, out, m, k, n);
}

// out[k x n] = a[m x k]^T * b[m x n]
static void matmul_tn(std::span<const double> a, std::span<const double> b,
                      std::span<double> out, std::size_t m, std::size_t k, std::size_t n) {
    std::vector<double> at(k * m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];
    matmul(at, b, out, k, m, n);
}

}  // namespace kernels

namespace ad {
namespace {

void require_matrix(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

void accumulate(std::vector<double>& dst, std::span<const double> src) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

}  // namespace

Var matmul(Var a, Var b) {
    const auto& av = a.value();
    const auto& bv = b.value();
    require_matrix(av, "matmul");
    require_matrix(bv, "matmul");
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    if (bv.rows() != k) {
        throw ShapeError("matmul: inner dimensions differ: " + shape_str(av.shape()) + " x " +
                         shape_str(bv.shape()));
    }
    std::vector<double> out(m * n);
    kernels::matmul(av.data(), bv.data(), out, m, k, n);
    Var inputs[] = {a, b};
    return a.tape->record(Tensor({m, n}, std::move(out)), inputs,
                          [a, b, m, k, n](std::span<const double> g, Tape& t) {
                              if (a.requires_grad()) {
                                  std::vector<double> da(m * k);
                                  kernels::matmul_nt(g, b.value().data(), da, m, n, k);
                                  accumulate(t.grad_of(a.id), da);
                              }
                              if (b.requires_grad()) {
                                  std::vector<double> db(k * n);
                                  kernels::matmul_tn(a.value().data(), g, db, m, k, n);
                                  accumulate(t.grad_of(b.id), db);
                              }
                          });
}

Var matmul_nt(Var a, Var b) {
    const auto& av = a.value();
    const auto& bv = b.value();
    require_matrix(av, "matmul_nt");
    require_matrix(bv, "matmul_nt");
    const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
    if (bv.cols() != k) {
        throw ShapeError("matmul_nt: inner dimensions differ: " + shape_str(av.shape()) + " x " +
                         shape_str(bv.shape()) + "^T");
    }
    std::vector<double> out(m * n);
    kernels::matmul_nt(av.data(), bv.data(), out, m, k, n);
    Var inputs[] = {a, b};
    return a.tape->record(Tensor({m, n}, std::move(out)), inputs,
                          [a, b, m, k, n](std::span<const double> g, Tape& t) {
                              // C = A B^T: dA = G B, dB = G^T A
                              if (a.requires_grad()) {
                                  std::vector<double> da(m * k);
                                  kernels::matmul(g, b.value().data(), da, m, n, k);
                                  accumulate(t.grad_of(a.id), da);
                              }
                              if (b.requires_grad()) {
                                  std::vector<double> db(n * k);
                                  kernels::matmul_tn(g, a.value().data(), db, m, n, k);
                                  accumulate(t.grad_of(b.id), db);
                              }
                          });
}

namespace {

template <class Fwd>
Var binary_same_shape(Var a, Var b, const char* op, Fwd fwd, Tape::BackwardFn bwd) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shapes differ: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    const auto x = a.value().data();
    const auto y = b.value().data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i], y[i]);
    Var inputs[] = {a, b};
    return a.tape->record(Tensor(a.shape(), std::move(out)), inputs, std::move(bwd));
}

}  // namespace

Var add(Var a, Var b) {
    return binary_same_shape(a, b, "add", [](double x, double y) { return x + y; },
                             [a, b](std::span<const double> g, Tape& t) {
                                 if (a.requires_grad()) accumulate(t.grad_of(a.id), g);
                                 if (b.requires_grad()) accumulate(t.grad_of(b.id), g);
                             });
}

Var sub(Var a, Var b) {
    return binary_same_shape(a, b, "sub", [](double x, double y) { return x - y; },
                             [a, b](std::span<const double> g, Tape& t) {
                                 if (a.requires_grad()) accumulate(t.grad_of(a.id), g);
                                 if (b.requires_grad()) {
                                     auto& gb = t.grad_of(b.id);
                                     for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                                 }
                             });
}

Var mul(Var a, Var b) {
    return binary_same_shape(a, b, "mul", [](double x, double y) { return x * y; },
                             [a, b](std::span<const double> g, Tape& t) {
                                 const auto x = a.value().data();
                                 const auto y = b.value().data();
                                 if (a.requires_grad()) {
                                     auto& ga = t.grad_of(a.id);
                                     for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
                                 }
                                 if (b.requires_grad()) {
                                     auto& gb = t.grad_of(b.id);
                                     for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
                                 }
                             });
}

Var scale(Var a, double s) {
    const auto x = a.value().data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * s;
    Var inputs[] = {a};
    return a.tape->record(Tensor(a.shape(), std::move(out)), inputs,
                          [a, s](std::span<const double> g, Tape& t) {
                              auto& ga = t.grad_of(a.id);
                              for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
                          });
}

Var add_row_bias(Var x, Var bias) {
    const auto& xv = x.value();
    require_matrix(xv, "add_row_bias");
    const std::size_t m = xv.rows(), n = xv.cols();
    if (bias.value().numel() != n) {
        throw ShapeError("add_row_bias: bias " + shape_str(bias.shape()) + " vs rows of width " +
                         std::to_string(n));
    }
    const auto xs = xv.data();
    const auto bs = bias.value().data();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xs[i * n + j] + bs[j];
    Var inputs[] = {x, bias};
    return x.tape->record(Tensor({m, n}, std::move(out)), inputs,
                          [x, bias, m, n](std::span<const double> g, Tape& t) {
                              if (x.requires_grad()) accumulate(t.grad_of(x.id), g);
                              if (bias.requires_grad()) {
                                  auto& gb = t.grad_of(bias.id);
                                  for (std::size_t i = 0; i < m; ++i)
                                      for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                              }
                          });
}

Var sum(Var x) {
    double s = 0.0;
    for (double v : x.value().data()) s += v;
    Var inputs[] = {x};
    return x.tape->record(Tensor::scalar(s), inputs, [x](std::span<const double> g, Tape& t) {
        auto& gx = t.grad_of(x.id);
        for (auto& v : gx) v += g[0];
    });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    const auto& xv = x.value();
    require_matrix(xv, "layer_norm");
    const std::size_t m = xv.rows(), n = xv.cols();
    if (gain.value().numel() != n || bias.value().numel() != n) {
        throw ShapeError("layer_norm: gain/bias width mismatch");
    }
    const auto xs = xv.data();
    const auto gs = gain.value().data();
    const auto bs = bias.value().data();
    std::vector<double> out(m * n), xhat(m * n), inv_std(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = xs.data() + i * n;
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += row[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= static_cast<double>(n);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            xhat[i * n + j] = (row[j] - mean) * inv_std[i];
            out[i * n + j] = xhat[i * n + j] * gs[j] + bs[j];
        }
    }
    Var inputs[] = {x, gain, bias};
    return x.tape->record(
        Tensor({m, n}, std::move(out)), inputs,
        [x, gain, bias, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](
            std::span<const double> g, Tape& t) {
            const auto gs = gain.value().data();
            if (gain.requires_grad() || bias.requires_grad()) {
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        if (gain.requires_grad()) t.grad_of(gain.id)[j] += g[i * n + j] * xhat[i * n + j];
                        if (bias.requires_grad()) t.grad_of(bias.id)[j] += g[i * n + j];
                    }
                }
            }
            if (!x.requires_grad()) return;
            auto& gx = t.grad_of(x.id);
            const double inv_n = 1.0 / static_cast<double>(n);
            for (std::size_t i = 0; i < m; ++i) {
                double s1 = 0.0, s2 = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double dxh = g[i * n + j] * gs[j];
                    s1 += dxh;
                    s2 += dxh * xhat[i * n + j];
                }
                for (std::size_t j = 0; j < n; ++j) {
                    const double dxh = g[i * n + j] * gs[j];
                    gx[i * n + j] += inv_std[i] * (dxh - s1 * inv_n - xhat[i * n + j] * s2 * inv_n);
                }
            }
        });
}

Var gelu(Var x) {
    // tanh approximation, written as v * sigmoid(2u) with u = c (v + 0.044715 v^3)
    constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
    const auto xs = x.value().data();
    std::vector<double> out(xs.size()), sig(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double v = xs[i];
        sig[i] = 1.0 / (1.0 + std::exp(-2.0 * c * (v + 0.044715 * v * v * v)));
        out[i] = v * sig[i];
    }
    Var inputs[] = {x};
    return x.tape->record(Tensor(x.shape(), std::move(out)), inputs,
                          [x, sig = std::move(sig)](std::span<const double> g, Tape& t) {
                              const auto xs = x.value().data();
                              auto& gx = t.grad_of(x.id);
                              for (std::size_t i = 0; i < xs.size(); ++i) {
                                  const double v = xs[i];
                                  const double s = sig[i];
                                  const double du = c * (1.0 + 3.0 * 0.044715 * v * v);
                                  gx[i] += g[i] * (s + 2.0 * v * s * (1.0 - s) * du);
                              }
                          });
}

Var tanh(Var x) {
    const auto xs = x.value().data();
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = std::tanh(xs[i]);
    Var inputs[] = {x};
    Tensor result(x.shape(), out);
    return x.tape->record(std::move(result), inputs,
                          [x, y = std::move(out)](std::span<const double> g, Tape& t) {
                              auto& gx = t.grad_of(x.id);
                              for (std::size_t i = 0; i < y.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
                          });
}

Var embedding(Var table, std::span<const int> ids) {
    const auto& tv = table.value();
    require_matrix(tv, "embedding");
    const std::size_t vocab = tv.rows(), d = tv.cols();
    std::vector<int> idv(ids.begin(), ids.end());
    std::vector<double> out(idv.size() * d);
    const auto ts = tv.data();
    for (std::size_t i = 0; i < idv.size(); ++i) {
        if (idv[i] < 0 || static_cast<std::size_t>(idv[i]) >= vocab) {
            throw DomainError("embedding: id " + std::to_string(idv[i]) + " outside vocabulary of " +
                              std::to_string(vocab));
        }
        std::copy_n(ts.data() + static_cast<std::size_t>(idv[i]) * d, d, out.data() + i * d);
    }
    Var inputs[] = {table};
    Tensor result({idv.size(), d}, std::move(out));
    return table.tape->record(std::move(result), inputs,
                              [table, d, idv = std::move(idv)](std::span<const double> g, Tape& t) {
                                  auto& gt = t.grad_of(table.id);
                                  for (std::size_t i = 0; i < idv.size(); ++i) {
                                      double* dst = gt.data() + static_cast<std::size_t>(idv[i]) * d;
                                      for (std::size_t j = 0; j < d; ++j) dst[j] += g[i * d + j];
                                  }
                              });
}

namespace {

template <class Allowed>
Var softmax_impl(Var scores, Allowed allowed) {
    const auto& sv = scores.value();
    require_matrix(sv, "masked_row_softmax");
    const std::size_t q = sv.rows(), k = sv.cols();
    const auto s = sv.data();
    std::vector<double> out(q * k, 0.0);
    for (std::size_t i = 0; i < q; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j)
            if (allowed(i, j)) mx = std::max(mx, s[i * k + j]);
        if (mx == -std::numeric_limits<double>::infinity()) {
            throw ContractError("masked_row_softmax: row " + std::to_string(i) + " is fully masked");
        }
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (!allowed(i, j)) continue;
            out[i * k + j] = std::exp(s[i * k + j] - mx);
            z += out[i * k + j];
        }
        const double inv = 1.0 / z;
        for (std::size_t j = 0; j < k; ++j) out[i * k + j] *= inv;
    }
    Var inputs[] = {scores};
    Tensor result({q, k}, out);
    return scores.tape->record(std::move(result), inputs,
                               [scores, q, k, y = std::move(out)](std::span<const double> g, Tape& t) {
                                   auto& gs = t.grad_of(scores.id);
                                   for (std::size_t i = 0; i < q; ++i) {
                                       double dot = 0.0;
                                       for (std::size_t j = 0; j < k; ++j) dot += y[i * k + j] * g[i * k + j];
                                       for (std::size_t j = 0; j < k; ++j)
                                           gs[i * k + j] += y[i * k + j] * (g[i * k + j] - dot);
                                   }
                               });
}

}  // namespace

Var masked_row_softmax(Var scores, MaskKind mask) {
    const auto& sv = scores.value();
    require_matrix(sv, "masked_row_softmax");
    const std::size_t q = sv.rows(), k = sv.cols();
    if (mask == MaskKind::None) return softmax_impl(scores, [](std::size_t, std::size_t) { return true; });
    if (k < q) throw ShapeError("masked_row_softmax: causal mask needs keys >= queries");
    const std::size_t offset = k - q;
    return softmax_impl(scores, [offset](std::size_t i, std::size_t j) { return j <= i + offset; });
}

Var masked_row_softmax(Var scores, std::span<const std::uint8_t> allowed) {
    if (allowed.size() != scores.value().numel()) throw ShapeError("masked_row_softmax: mask size mismatch");
    const std::size_t k = scores.value().cols();
    std::vector<std::uint8_t> m(allowed.begin(), allowed.end());
    return softmax_impl(scores, [m = std::move(m), k](std::size_t i, std::size_t j) { return m[i * k + j] != 0; });
}

Var cross_entropy(Var logits, std::span<const int> targets) {
    const auto& lv = logits.value();
    require_matrix(lv, "cross_entropy");
    const std::size_t m = lv.rows(), v = lv.cols();
    if (targets.size() != m) throw ShapeError("cross_entropy: one target per row required");
    const auto ls = lv.data();
    std::vector<double> probs(m * v);
    std::vector<int> tg(targets.begin(), targets.end());
    double loss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (tg[i] < 0 || static_cast<std::size_t>(tg[i]) >= v) throw DomainError("cross_entropy: target out of range");
        const double* row = ls.data() + i * v;
        const double mx = *std::max_element(row, row + v);
        double z = 0.0;
        for (std::size_t j = 0; j < v; ++j) {
            probs[i * v + j] = std::exp(row[j] - mx);
            z += probs[i * v + j];
        }
        for (std::size_t j = 0; j < v; ++j) probs[i * v + j] /= z;
        loss += -(row[tg[i]] - mx - std::log(z));
    }
    loss /= static_cast<double>(m);
    Var inputs[] = {logits};
    return logits.tape->record(Tensor::scalar(loss), inputs,
                               [logits, m, v, probs = std::move(probs), tg = std::move(tg)](
                                   std::span<const double> g, Tape& t) {
                                   auto& gl = t.grad_of(logits.id);
                                   const double s = g[0] / static_cast<double>(m);
                                   for (std::size_t i = 0; i < m; ++i) {
                                       for (std::size_t j = 0; j < v; ++j) {
                                           const double onehot = (static_cast<int>(j) == tg[i]) ? 1.0 : 0.0;
                                           gl[i * v + j] += s * (probs[i * v + j] - onehot);
                                       }
                                   }
                               });
}

Var gather_rows(Var x, std::span<const std::size_t> rows) {
    const auto& xv = x.value();
    require_matrix(xv, "gather_rows");
    const std::size_t n = xv.cols();
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    std::vector<double> out(idx.size() * n);
    const auto xs = xv.data();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= xv.rows()) throw ShapeError("gather_rows: row index out of range");
        std::copy_n(xs.data() + idx[i] * n, n, out.data() + i * n);
    }
    Var inputs[] = {x};
    Tensor result({idx.size(), n}, std::move(out));
    return x.tape->record(std::move(result), inputs,
                          [x, n, idx = std::move(idx)](std::span<const double> g, Tape& t) {
                              auto& gx = t.grad_of(x.id);
                              for (std::size_t i = 0; i < idx.size(); ++i)
                                  for (std::size_t j = 0; j < n; ++j) gx[idx[i] * n + j] += g[i * n + j];
                          });
}

Var concat_rows(Var a, Var b) {
    const auto& av = a.value();
    const auto& bv = b.value();
    require_matrix(av, "concat_rows");
    require_matrix(bv, "concat_rows");
    if (av.cols() != bv.cols()) throw ShapeError("concat_rows: column counts differ");
    std::vector<double> out(av.numel() + bv.numel());
    std::copy(av.data().begin(), av.data().end(), out.begin());
    std::copy(bv.data().begin(), bv.data().end(), out.begin() + static_cast<std::ptrdiff_t>(av.numel()));
    const std::size_t na = av.numel();
    Var inputs[] = {a, b};
    return a.tape->record(Tensor({av.rows() + bv.rows(), av.cols()}, std::move(out)), inputs,
                          [a, b, na](std::span<const double> g, Tape& t) {
                              if (a.requires_grad()) accumulate(t.grad_of(a.id), g.first(na));
                              if (b.requires_grad()) accumulate(t.grad_of(b.id), g.subspan(na));
                          });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
    const auto& xv = x.value();
    require_matrix(xv, "slice_cols");
    const std::size_t m = xv.rows(), n = xv.cols();
    if (begin + count > n) throw ShapeError("slice_cols: columns out of range");
    std::vector<double> out(m * count);
    const auto xs = xv.data();
    for (std::size_t i = 0; i < m; ++i) std::copy_n(xs.data() + i * n + begin, count, out.data() + i * count);
    Var inputs[] = {x};
    return x.tape->record(Tensor({m, count}, std::move(out)), inputs,
                          [x, m, n, begin, count](std::span<const double> g, Tape& t) {
                              auto& gx = t.grad_of(x.id);
                              for (std::size_t i = 0; i < m; ++i)
                                  for (std::size_t j = 0; j < count; ++j) gx[i * n + begin + j] += g[i * count + j];
                          });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t m = parts.front().value().rows();
    std::vector<std::size_t> widths;
    std::size_t n = 0;
    for (const auto& p : parts) {
        require_matrix(p.value(), "concat_cols");
        if (p.value().rows() != m) throw ShapeError("concat_cols: row counts differ");
        widths.push_back(p.value().cols());
        n += widths.back();
    }
    std::vector<double> out(m * n);
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto ps = parts[k].value().data();
        for (std::size_t i = 0; i < m; ++i) std::copy_n(ps.data() + i * widths[k], widths[k], out.data() + i * n + off);
        off += widths[k];
    }
    std::vector<Var> in(parts.begin(), parts.end());
    Tape* tape = parts.front().tape;
    return tape->record(Tensor({m, n}, std::move(out)), in,
                        [in, widths = std::move(widths), m, n](std::span<const double> g, Tape& t) {
                            std::size_t off = 0;
                            for (std::size_t k = 0; k < in.size(); ++k) {
                                if (in[k].requires_grad()) {
                                    auto& gp = t.grad_of(in[k].id);
                                    for (std::size_t i = 0; i < m; ++i)
                                        for (std::size_t j = 0; j < widths[k]; ++j)
                                            gp[i * widths[k] + j] += g[i * n + off + j];
                                }
                                off += widths[k];
                            }
                        });
}

}  // namespace ad

double grad_check(const std::function<Var(Var)>& f, const Tensor& point, double eps, std::uint64_t seed) {
    if (!(eps > 0.0)) throw ContractError("grad_check: eps must be positive");
    std::vector<double> weights;
    auto reduce = [&](const Tensor& y) {
        if (weights.empty()) {
            weights.resize(y.numel());
            if (y.numel() == 1) {
                weights[0] = 1.0;
            } else {
                std::mt19937_64 rng(seed);
                std::uniform_real_distribution<double> dist(-1.0, 1.0);
                for (auto& w : weights) w = dist(rng);
            }
        }
        double s = 0.0;
        for (std::size_t i = 0; i < y.numel(); ++i) s += weights[i] * y[i];
        return s;
    };

    Tape tape;
    Var x = tape.leaf(point, true);
    Var y = f(x);
    reduce(y.value());
    Var w = tape.constant(Tensor(y.shape(), weights));
    Var loss = ad::sum(ad::mul(y, w));
    const auto grads = tape.backward(loss);
    const auto analytic = grads.of(x);

    auto eval = [&](std::vector<double> pt) {
        Tape t;
        Var xv = t.leaf(Tensor(point.shape(), std::move(pt)), false);
        const double v = reduce(f(xv).value());
        if (!std::isfinite(v)) throw NumericError("grad_check: non-finite evaluation");
        return v;
    };

    double worst = 0.0;
    auto base = point.to_vector();
    for (std::size_t i = 0; i < base.size(); ++i) {
        auto at = [&](double offset) {
            auto pt = base;
            pt[i] += offset;
            return eval(std::move(pt));
        };
        // Fourth-order central stencil.
        const double numeric =
            (8.0 * (at(eps) - at(-eps)) - (at(2.0 * eps) - at(-2.0 * eps))) / (12.0 * eps);
        const double err = std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + 1e-12);
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace prunevis
