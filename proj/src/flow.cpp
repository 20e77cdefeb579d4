// Copyright 2026 The prunevis Authors
// SPDX-License-Identifier: Apache-2.0

#include "prunevis/flow.hpp"

#include <cmath>

#include "prunevis/csv.hpp"
#include "prunevis/errors.hpp"

namespace prunevis {

Tensor saliency_matrix(std::span<const Tensor> attention, std::span<const Tensor> grads) {
    if (attention.size() != grads.size() || attention.empty())
        throw ContractError("saliency_matrix: need one gradient per attention head");
    const auto& shape = attention.front().shape();
    std::vector<double> out(attention.front().numel(), 0.0);
    for (std::size_t h = 0; h < attention.size(); ++h) {
        if (attention[h].shape() != shape || grads[h].shape() != shape)
            throw ContractError("saliency_matrix: head shapes differ");
        const auto a = attention[h].data();
        const auto g = grads[h].data();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += std::abs(a[i] * g[i]);
    }
    return Tensor(shape, std::move(out));
}

void FlowPartition::validate(std::size_t n) const {
    std::vector<int> seen(n, 0);
    auto mark = [&](std::size_t p) {
        if (p >= n) throw ContractError("flow partition: position outside the sequence");
        if (seen[p]++) throw ContractError("flow partition: sets overlap");
    };
    for (auto p : visual) mark(p);
    for (auto p : preserved) mark(p);
    for (auto p : pruned) mark(p);
    mark(target);
    if (preserved.empty()) throw ContractError("flow partition: no preserved tokens");
}

std::string to_string(FlowScore s) {
    static const char* names[] = {"S_vr", "S_vc", "S_rt", "S_ct", "S_vt", "S_ww"};
    return names[static_cast<std::size_t>(s)];
}

FlowScores flow_scores(const Tensor& saliency, const FlowPartition& p) {
    if (saliency.rank() != 2 || saliency.rows() != saliency.cols()) throw ContractError("flow_scores: saliency must be square");
    const std::size_t n = saliency.rows();
    p.validate(n);
    // role: 0 visual, 1 preserved, 2 pruned, 3 target, -1 other
    std::vector<int> role(n, -1);
    for (auto q : p.visual) role[q] = 0;
    for (auto q : p.preserved) role[q] = 1;
    for (auto q : p.pruned) role[q] = 2;
    role[p.target] = 3;

    double sum[kFlowScoreCount] = {};
    std::size_t cnt[kFlowScoreCount] = {};
    const auto I = saliency.data();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            const int qi = role[i], kj = role[j];
            FlowScore k = FlowScore::WW;
            if (kj == 0 && qi == 1) k = FlowScore::VR;
            else if (kj == 0 && qi == 2) k = FlowScore::VC;
            else if (kj == 1 && qi == 3) k = FlowScore::RT;
            else if (kj == 2 && qi == 3) k = FlowScore::CT;
            else if (kj == 0 && qi == 3) k = FlowScore::VT;
            sum[static_cast<std::size_t>(k)] += I[i * n + j];
            ++cnt[static_cast<std::size_t>(k)];
        }
    }
    FlowScores out;
    for (std::size_t k = 0; k < kFlowScoreCount; ++k) {
        out.pairs[k] = cnt[k];
        out.empty[k] = cnt[k] == 0;
        out.s[k] = out.empty[k] ? 0.0 : sum[k] / static_cast<double>(cnt[k]);
    }
    return out;
}

Tensor expand_saliency(const Tensor& saliency, std::span<const std::size_t> alive, std::size_t n) {
    const std::size_t t = alive.size();
    if (saliency.rank() != 2 || saliency.rows() != t || saliency.cols() != t)
        throw ContractError("expand_saliency: matrix does not match the alive map");
    std::vector<double> out(n * n, 0.0);
    const auto s = saliency.data();
    for (std::size_t i = 0; i < t; ++i) {
        if (alive[i] >= n) throw ContractError("expand_saliency: position outside the sequence");
        for (std::size_t j = 0; j < t; ++j) out[alive[i] * n + alive[j]] = s[i * t + j];
    }
    return Tensor({n, n}, std::move(out));
}

FlowScores FlowLayer::delta() const {
    FlowScores d;
    for (std::size_t k = 0; k < kFlowScoreCount; ++k) {
        d.s[k] = pruned.s[k] - baseline.s[k];
        d.empty[k] = pruned.empty[k] || baseline.empty[k];
        d.pairs[k] = pruned.pairs[k];
    }
    return d;
}

FlowPartition partition_from_record(const PruneRecord& record, const TokenStream& stream) {
    const std::size_t n = stream.size();
    FlowPartition p;
    p.target = stream.target_position();
    std::vector<bool> cut(n, false);
    for (auto q : record.pruned_positions()) {
        if (q >= n) throw ContractError("prune record does not belong to this stream");
        cut[q] = true;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (i == p.target) continue;
        if (i < stream.n_visual()) p.visual.push_back(i);
        else if (cut[i]) p.pruned.push_back(i);
        else p.preserved.push_back(i);
    }
    return p;
}

FlowComparison flow_compare(const AttentionGradients& baseline, const AttentionGradients& pruned,
                            const PruneRecord& record, const TokenStream& stream) {
    const std::size_t n = stream.size();
    if (baseline.trace.attention.size() != pruned.trace.attention.size() || baseline.trace.alive.empty() ||
        baseline.trace.alive[0].size() != n || pruned.trace.alive[0].size() != n)
        throw ContractError("flow_compare: runs do not belong to the same stream");
    FlowComparison out;
    out.partition = partition_from_record(record, stream);
    for (std::size_t l = 0; l < baseline.trace.attention.size(); ++l) {
        if (baseline.trace.alive[l].size() != n) throw ContractError("flow_compare: baseline run must be unpruned");
        const Tensor ib = saliency_matrix(baseline.trace.attention[l], baseline.grads[l]);
        const Tensor ip = expand_saliency(saliency_matrix(pruned.trace.attention[l], pruned.grads[l]),
                                          pruned.trace.alive[l], n);
        FlowLayer fl;
        fl.layer = static_cast<int>(l);
        fl.baseline = flow_scores(ib, out.partition);
        fl.pruned = flow_scores(ip, out.partition);
        out.layers.push_back(fl);
        out.baseline_saliency.push_back(ib);
        out.pruned_saliency.push_back(ip);
    }
    return out;
}

FlowComparison flow_compare(const ModelParams& params, const TokenStream& stream, int answer,
                            const PruneConfig& prune) {
    const auto base = attention_gradients(params, stream, answer);
    const auto cut = attention_gradients(params, stream, answer, prune);
    const auto record = forward(params, stream, prune).record;
    return flow_compare(base, cut, record, stream);
}

std::string flow_to_csv(const FlowComparison& c) {
    CsvTable t;
    t.header = {"layer", "score", "baseline", "pruned", "delta", "empty"};
    for (const auto& l : c.layers) {
        const auto d = l.delta();
        for (std::size_t k = 0; k < kFlowScoreCount; ++k)
            t.add({fmt(l.layer), to_string(static_cast<FlowScore>(k)), fmt(l.baseline.s[k]), fmt(l.pruned.s[k]),
                   fmt(d.s[k]), d.empty[k] ? "1" : "0"});
    }
    return to_csv(t);
}

}  // namespace prunevis
