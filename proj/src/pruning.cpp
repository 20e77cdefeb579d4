// Copyright 2026 The prunevis Authors
// SPDX-License-Identifier: Apache-2.0

#include "prunevis/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "prunevis/errors.hpp"
#include "prunevis/rng.hpp"

namespace prunevis {

std::string to_string(PruneStrategy s) {
    switch (s) {
        case PruneStrategy::MaxPool: return "maxpool";
        case PruneStrategy::MeanPool: return "meanpool";
        case PruneStrategy::Random: return "random";
    }
    return "?";
}

std::string to_string(Apportioning a) {
    return a == Apportioning::EvenPerLayer ? "even" : "first";
}

std::string to_string(RateMode m) {
    return m == RateMode::Cumulative ? "cumulative" : "per_layer";
}

RateMode parse_rate_mode(const std::string& s) {
    if (s == "cumulative") return RateMode::Cumulative;
    if (s == "per_layer") return RateMode::PerLayer;
    throw ConfigError("unknown rate mode '" + s + "'");
}

PruneStrategy parse_strategy(const std::string& s) {
    if (s == "maxpool" || s == "MaxPool") return PruneStrategy::MaxPool;
    if (s == "meanpool" || s == "MeanPool") return PruneStrategy::MeanPool;
    if (s == "random" || s == "Random") return PruneStrategy::Random;
    throw ConfigError("unknown pruning strategy '" + s + "'");
}

Apportioning parse_apportioning(const std::string& s) {
    if (s == "even" || s == "EvenPerLayer") return Apportioning::EvenPerLayer;
    if (s == "first" || s == "AllAtFirstLayer") return Apportioning::AllAtFirstLayer;
    throw ConfigError("unknown apportioning '" + s + "'");
}

std::vector<int> PruneConfig::first_layers(int m) {
    std::vector<int> out(static_cast<std::size_t>(std::max(m, 0)));
    std::iota(out.begin(), out.end(), 0);
    return out;
}

void PruneConfig::validate(int n_layers) const {
    if (!(rate >= 0.0 && rate < 1.0)) throw ContractError("prune rate must lie in [0, 1)");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i] < 0 || layers[i] >= n_layers) {
            throw ContractError("pruning layer " + std::to_string(layers[i]) + " outside [0, " +
                                std::to_string(n_layers) + ")");
        }
        if (i > 0 && layers[i] <= layers[i - 1]) throw ContractError("pruning layers must be strictly ascending");
    }
    if (rate > 0.0 && layers.empty()) throw ContractError("nonzero prune rate needs at least one pruning layer");
}

std::string PruneConfig::label() const {
    std::ostringstream os;
    os << to_string(strategy) << "@";
    os.setf(std::ios::fixed);
    os.precision(2);
    os << rate << "[";
    for (std::size_t i = 0; i < layers.size(); ++i) os << (i ? "," : "") << layers[i];
    os << "]";
    if (protect_question && strategy != PruneStrategy::Random) os << "+q";
    if (apportioning == Apportioning::AllAtFirstLayer) os << "/first";
    if (rate_mode == RateMode::PerLayer) os << "/per-layer";
    return os.str();
}

void to_json(nlohmann::json& j, const PruneConfig& c) {
    j = nlohmann::json{{"strategy", to_string(c.strategy)},
                       {"rate", c.rate},
                       {"layers", c.layers},
                       {"protect_question", c.protect_question},
                       {"apportioning", to_string(c.apportioning)},
                       {"rate_mode", to_string(c.rate_mode)},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, PruneConfig& c) {
    try {
        c = PruneConfig{};
        c.strategy = parse_strategy(j.at("strategy").get<std::string>());
        c.rate = j.at("rate").get<double>();
        c.layers = j.at("layers").get<std::vector<int>>();
        c.protect_question = j.value("protect_question", false);
        c.apportioning = parse_apportioning(j.value("apportioning", std::string("even")));
        c.rate_mode = parse_rate_mode(j.value("rate_mode", std::string("cumulative")));
        c.seed = j.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad prune config: ") + e.what());
    }
}

std::vector<std::size_t> PruneRecord::pruned_positions() const {
    std::vector<std::size_t> out;
    for (const auto& l : layers)
        for (const auto& p : l.pruned) out.push_back(p.position);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<double> token_scores(std::span<const Tensor> heads, PruneStrategy strategy) {
    if (heads.empty()) throw ContractError("token_scores: no attention heads given");
    if (strategy == PruneStrategy::Random) throw ContractError("token_scores: Random has no attention score");
    const auto& shape = heads.front().shape();
    if (shape.size() != 2) throw ShapeError("token_scores: attention must be a matrix");
    const std::size_t q = shape[0], k = shape[1];
    std::vector<double> pooled(k, strategy == PruneStrategy::MaxPool ? -1.0 : 0.0);
    std::vector<double> col(k);
    for (const auto& a : heads) {
        if (a.shape() != shape) throw ShapeError("token_scores: head shapes differ");
        std::fill(col.begin(), col.end(), 0.0);
        const auto d = a.data();
        for (std::size_t i = 0; i < q; ++i)
            for (std::size_t j = 0; j < k; ++j) col[j] += d[i * k + j];
        for (std::size_t j = 0; j < k; ++j) {
            if (strategy == PruneStrategy::MaxPool) pooled[j] = std::max(pooled[j], col[j]);
            else pooled[j] += col[j];
        }
    }
    if (strategy == PruneStrategy::MeanPool)
        for (auto& v : pooled) v /= static_cast<double>(heads.size());
    return pooled;
}

std::vector<std::size_t> select_prune_set(std::span<const double> scores, std::size_t k,
                                          std::span<const std::size_t> protected_positions,
                                          std::size_t n_visual) {
    std::vector<bool> blocked(scores.size(), false);
    for (std::size_t i = 0; i < std::min(n_visual, scores.size()); ++i) blocked[i] = true;
    for (auto p : protected_positions)
        if (p < blocked.size()) blocked[p] = true;
    std::vector<std::size_t> cand;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (!blocked[i]) cand.push_back(i);
    if (k > cand.size()) {
        throw ContractError("select_prune_set: asked to remove " + std::to_string(k) + " of " +
                            std::to_string(cand.size()) + " unprotected text positions");
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (scores[a] != scores[b]) return scores[a] < scores[b];
                          return a < b;
                      });
    cand.resize(k);
    std::sort(cand.begin(), cand.end());
    return cand;
}

std::vector<std::size_t> random_prune_set(std::uint64_t seed, std::size_t k,
                                          std::span<const std::size_t> candidates) {
    if (k > candidates.size()) {
        throw ContractError("random_prune_set: asked to remove " + std::to_string(k) + " of " +
                            std::to_string(candidates.size()) + " candidates");
    }
    std::vector<std::size_t> pool(candidates.begin(), candidates.end());
    Rng rng(seed);
    for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

std::vector<std::size_t> surviving_rows(std::span<const std::size_t> alive,
                                        std::span<const std::size_t> prune_set, std::size_t n_visual) {
    std::vector<bool> drop(alive.size(), false);
    for (auto p : prune_set) {
        if (p < n_visual) throw ContractError("apply_prune: visual position " + std::to_string(p) + " cannot be pruned");
        auto it = std::lower_bound(alive.begin(), alive.end(), p);
        if (it == alive.end() || *it != p) {
            throw ContractError("apply_prune: position " + std::to_string(p) + " is not alive");
        }
        drop[static_cast<std::size_t>(it - alive.begin())] = true;
    }
    std::vector<std::size_t> keep;
    keep.reserve(alive.size());
    for (std::size_t i = 0; i < alive.size(); ++i)
        if (!drop[i]) keep.push_back(i);
    return keep;
}

std::pair<Tensor, std::vector<std::size_t>> apply_prune(const Tensor& hidden,
                                                        std::span<const std::size_t> alive,
                                                        std::span<const std::size_t> prune_set,
                                                        std::size_t n_visual) {
    if (hidden.rank() != 2 || hidden.rows() != alive.size()) {
        throw ShapeError("apply_prune: hidden rows do not match the alive map");
    }
    const auto keep = surviving_rows(alive, prune_set, n_visual);
    const std::size_t d = hidden.cols();
    std::vector<double> out(keep.size() * d);
    std::vector<std::size_t> map(keep.size());
    const auto src = hidden.data();
    for (std::size_t i = 0; i < keep.size(); ++i) {
        std::copy_n(src.data() + keep[i] * d, d, out.data() + i * d);
        map[i] = alive[keep[i]];
    }
    return {Tensor({keep.size(), d}, std::move(out)), std::move(map)};
}

std::vector<std::size_t> plan_layer_budget(const PruneConfig& config, std::size_t text_count) {
    const std::size_t m = config.layers.size();
    std::vector<std::size_t> out(m, 0);
    if (m == 0) return out;
    if (config.rate_mode == RateMode::PerLayer) {
        std::size_t alive = text_count;
        for (std::size_t i = 0; i < m; ++i) {
            out[i] = static_cast<std::size_t>(std::llround(config.rate * static_cast<double>(alive)));
            alive -= out[i];
        }
        return out;
    }
    const auto total = static_cast<std::size_t>(std::llround(config.rate * static_cast<double>(text_count)));
    if (config.apportioning == Apportioning::AllAtFirstLayer) {
        out[0] = total;
        return out;
    }
    for (std::size_t i = 0; i < m; ++i) out[i] = total / m + (i < total % m ? 1 : 0);
    return out;
}

}  // namespace prunevis
