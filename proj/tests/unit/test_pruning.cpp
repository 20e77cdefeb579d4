// Copyright 2026 The prunevis Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cstring>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "prunevis/errors.hpp"
#include "prunevis/pruning.hpp"
#include "prunevis/rng.hpp"

using namespace prunevis;

namespace {

std::vector<double> column_sums(const std::vector<std::vector<double>>& a) {
    std::vector<double> out(a.front().size(), 0.0);
    for (const auto& row : a)
        for (std::size_t j = 0; j < row.size(); ++j) out[j] += row[j];
    return out;
}

Tensor uniform_causal(std::size_t n) {
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) v[i * n + j] = 1.0 / static_cast<double>(i + 1);
    return Tensor({n, n}, std::move(v));
}

Tensor random_attention(Rng& rng, std::size_t n) {
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j <= i; ++j) s += (v[i * n + j] = rng.uniform() + 1e-3);
        for (std::size_t j = 0; j <= i; ++j) v[i * n + j] /= s;
    }
    return Tensor({n, n}, std::move(v));
}

}  // namespace

TEST_CASE("token scores are attention received") {
    const std::vector<std::vector<double>> a = {{1, 0, 0}, {0.6, 0.4, 0}, {0.2, 0.3, 0.5}};
    const Tensor t = Tensor::matrix({{1, 0, 0}, {0.6, 0.4, 0}, {0.2, 0.3, 0.5}});
    const std::vector<Tensor> heads{t};
    const auto s = token_scores(heads, PruneStrategy::MaxPool);
    const auto oracle = column_sums(a);
    REQUIRE(s.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(s[i] == doctest::Approx(oracle[i]).epsilon(1e-12));
    CHECK(s[0] == doctest::Approx(1.8));
    CHECK(s[1] == doctest::Approx(0.7));
    CHECK(s[2] == doctest::Approx(0.5));

    const std::vector<Tensor> twin{t, t};
    CHECK(token_scores(twin, PruneStrategy::MaxPool) == token_scores(twin, PruneStrategy::MeanPool));

    const std::vector<Tensor> uc{uniform_causal(12)};
    const auto u = token_scores(uc, PruneStrategy::MeanPool);
    for (std::size_t i = 1; i < u.size(); ++i) {
        double h = 0.0;
        for (std::size_t q = i; q < 12; ++q) h += 1.0 / static_cast<double>(q + 1);
        CHECK(u[i] == doctest::Approx(h).epsilon(1e-12));
        CHECK(u[i] < u[i - 1]);
    }
}

TEST_CASE("token score errors") {
    const std::vector<Tensor> none;
    CHECK_THROWS_AS(token_scores(none, PruneStrategy::MaxPool), ContractError);
    const std::vector<Tensor> mixed{Tensor::zeros({2, 2}), Tensor::zeros({3, 3})};
    CHECK_THROWS_AS(token_scores(mixed, PruneStrategy::MaxPool), ShapeError);
}

TEST_CASE("maxpool dominates meanpool") {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.below(30);
        std::vector<Tensor> heads;
        for (int h = 0; h < 4; ++h) heads.push_back(random_attention(rng, n));
        const auto mx = token_scores(heads, PruneStrategy::MaxPool);
        const auto mn = token_scores(heads, PruneStrategy::MeanPool);
        for (std::size_t i = 0; i < n; ++i) CHECK(mx[i] >= mn[i]);
    }
}

TEST_CASE("select_prune_set examples") {
    const std::vector<std::size_t> none;
    const std::vector<double> s1{1.8, 0.7, 0.5};
    CHECK(select_prune_set(s1, 1, none) == std::vector<std::size_t>{2});
    const std::vector<double> s2{1.0, 1.0, 2.0};
    CHECK(select_prune_set(s2, 1, none) == std::vector<std::size_t>{0});
    CHECK(select_prune_set(s2, 0, none).empty());
    CHECK_THROWS_AS(select_prune_set(s2, 4, none), ContractError);

    const std::vector<std::size_t> prot{2};
    CHECK(select_prune_set(s1, 1, prot) == std::vector<std::size_t>{1});
    CHECK_THROWS_AS(select_prune_set(s1, 3, prot), ContractError);
    // visual prefix is never a candidate, however low its score
    const std::vector<double> s3{0.0, 0.0, 3.0, 1.0, 2.0};
    CHECK(select_prune_set(s3, 2, none, 2) == std::vector<std::size_t>{3, 4});
    CHECK_THROWS_AS(select_prune_set(s3, 4, none, 2), ContractError);
}

TEST_CASE("select_prune_set matches a full-sort oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.below(60);
        const std::size_t nv = rng.below(std::min<std::size_t>(n, 5));
        std::vector<double> s(n);
        // coarse values so that ties occur often
        for (auto& x : s) x = static_cast<double>(rng.below(8)) * 0.25;
        std::vector<std::size_t> prot;
        for (std::size_t i = nv; i < n; ++i)
            if (rng.bernoulli(0.15)) prot.push_back(i);
        const std::size_t cand = n - nv - prot.size();
        const std::size_t k = rng.below(cand + 1);

        std::vector<std::size_t> order;
        for (std::size_t i = nv; i < n; ++i)
            if (std::find(prot.begin(), prot.end(), i) == prot.end()) order.push_back(i);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });
        order.resize(k);
        std::sort(order.begin(), order.end());

        CHECK(select_prune_set(s, k, prot, nv) == order);
    }
}

TEST_CASE("random_prune_set") {
    const std::vector<std::size_t> cand{3, 5, 8, 9, 12};
    CHECK(random_prune_set(1, cand.size(), cand) == cand);
    CHECK(random_prune_set(42, 2, cand) == random_prune_set(42, 2, cand));
    CHECK(random_prune_set(42, 0, cand).empty());
    CHECK_THROWS_AS(random_prune_set(1, 6, cand), ContractError);

    std::vector<std::size_t> big(20);
    std::iota(big.begin(), big.end(), 0);
    const std::size_t k = 6, draws = 100000;
    std::vector<double> hits(big.size(), 0.0);
    for (std::size_t d = 0; d < draws; ++d)
        for (auto p : random_prune_set(mix_seed(99, d), k, big)) hits[p] += 1.0;
    const double p = static_cast<double>(k) / static_cast<double>(big.size());
    const double sigma = std::sqrt(static_cast<double>(draws) * p * (1.0 - p));
    for (double h : hits) CHECK(std::abs(h - static_cast<double>(draws) * p) <= 3.0 * sigma);
}

TEST_CASE("apply_prune") {
    const Tensor h = Tensor::matrix({{1, 1}, {2, 2}, {3, 3}, {4, 4}, {5, 5}});
    const std::vector<std::size_t> alive{0, 1, 2, 3, 4};
    const std::vector<std::size_t> t1{3};
    const auto [r, map] = apply_prune(h, alive, t1, 2);
    CHECK(map == std::vector<std::size_t>{0, 1, 2, 4});
    CHECK(r.bit_equal(Tensor::matrix({{1, 1}, {2, 2}, {3, 3}, {5, 5}})));

    const std::vector<std::size_t> none;
    const auto [same, id] = apply_prune(h, alive, none, 2);
    CHECK(same.bit_equal(h));
    CHECK(id == alive);

    const std::vector<std::size_t> vis{1};
    CHECK_THROWS_AS(apply_prune(h, alive, vis, 2), ContractError);
    const std::vector<std::size_t> gone{7};
    CHECK_THROWS_AS(apply_prune(h, alive, gone, 2), ContractError);

    // composition: a second prune works on the reduced map
    const std::vector<std::size_t> t2{4};
    const auto [r2, map2] = apply_prune(r, map, t2, 2);
    CHECK(map2 == std::vector<std::size_t>{0, 1, 2});
    CHECK(r2.bit_equal(Tensor::matrix({{1, 1}, {2, 2}, {3, 3}})));
}

TEST_CASE("apply_prune copies rows bitwise") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t nv = 1 + rng.below(4), nt = 1 + rng.below(30), d = 1 + rng.below(8);
        const std::size_t n = nv + nt;
        std::vector<double> v(n * d);
        for (auto& x : v) x = rng.normal();
        const Tensor h({n, d}, v);
        std::vector<std::size_t> alive(n);
        std::iota(alive.begin(), alive.end(), 0);
        std::vector<std::size_t> cand(alive.begin() + static_cast<std::ptrdiff_t>(nv), alive.end());
        const auto ps = random_prune_set(rng.next(), rng.below(nt + 1), cand);
        const auto [r, map] = apply_prune(h, alive, ps, nv);
        REQUIRE(r.rows() == n - ps.size());
        CHECK(std::is_sorted(map.begin(), map.end()));
        for (std::size_t i = 0; i < nv; ++i) CHECK(map[i] == i);
        for (std::size_t i = 0; i < map.size(); ++i)
            for (std::size_t c = 0; c < d; ++c) {
                const double a = r.at(i, c), b = h.at(map[i], c);
                CHECK(std::memcmp(&a, &b, sizeof a) == 0);
            }
    }
}

TEST_CASE("plan_layer_budget") {
    PruneConfig c;
    c.rate = 0.3;
    c.layers = PruneConfig::first_layers(10);
    CHECK(plan_layer_budget(c, 100) == std::vector<std::size_t>(10, 3));
    const auto b = plan_layer_budget(c, 101);
    CHECK(std::accumulate(b.begin(), b.end(), std::size_t{0}) == 30);
    CHECK(b == std::vector<std::size_t>(10, 3));
    CHECK(plan_layer_budget(c, 101) == b);

    c.rate = 0.0;
    CHECK(plan_layer_budget(c, 100) == std::vector<std::size_t>(10, 0));

    Rng rng(3);
    for (int trial = 0; trial < 500; ++trial) {
        c.rate = rng.uniform(0.0, 0.95);
        c.layers = PruneConfig::first_layers(1 + static_cast<int>(rng.below(12)));
        const std::size_t count = rng.below(400);
        const auto p = plan_layer_budget(c, count);
        const auto total = std::accumulate(p.begin(), p.end(), std::size_t{0});
        CHECK(total == static_cast<std::size_t>(std::llround(c.rate * static_cast<double>(count))));
        const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
        CHECK(*hi - *lo <= 1);
        CHECK(std::is_sorted(p.rbegin(), p.rend()));
    }

    c.rate = 0.35;
    c.layers = {1, 3};
    c.apportioning = Apportioning::AllAtFirstLayer;
    CHECK(plan_layer_budget(c, 40) == std::vector<std::size_t>{14, 0});

    c.apportioning = Apportioning::EvenPerLayer;
    c.rate_mode = RateMode::PerLayer;
    c.rate = 0.5;
    CHECK(plan_layer_budget(c, 40) == std::vector<std::size_t>{20, 10});
}

TEST_CASE("prune config validation and json") {
    PruneConfig c;
    c.rate = 1.0;
    CHECK_THROWS_AS(c.validate(6), ContractError);
    c.rate = 0.3;
    CHECK_THROWS_AS(c.validate(6), ContractError);
    c.layers = {0, 6};
    CHECK_THROWS_AS(c.validate(6), ContractError);
    c.layers = {1, 0};
    CHECK_THROWS_AS(c.validate(6), ContractError);
    c.layers = {0, 1};
    CHECK_NOTHROW(c.validate(6));

    c.strategy = PruneStrategy::Random;
    CHECK(c.effective_protect_question());
    c.strategy = PruneStrategy::MeanPool;
    CHECK_FALSE(c.effective_protect_question());

    c.seed = 17;
    c.apportioning = Apportioning::AllAtFirstLayer;
    const nlohmann::json j = c;
    CHECK(j.at("strategy") == "meanpool");
    CHECK(j.get<PruneConfig>() == c);
    CHECK_THROWS_AS(nlohmann::json::parse(R"({"strategy":"topk","rate":0.1,"layers":[0]})").get<PruneConfig>(),
                    ConfigError);
    CHECK(c.label() == "meanpool@0.30[0,1]/first");
}
