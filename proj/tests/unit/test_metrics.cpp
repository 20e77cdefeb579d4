// Copyright 2026 The prunevis Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "prunevis/errors.hpp"
#include "prunevis/metrics.hpp"
#include "prunevis/rng.hpp"

using namespace prunevis;

namespace {

std::vector<double> random_row(Rng& rng, std::size_t n) {
    std::vector<double> r(n);
    double s = 0.0;
    for (auto& x : r) s += (x = std::pow(rng.uniform(), 3.0) + 1e-9);
    for (auto& x : r) x /= s;
    return r;
}

std::vector<std::size_t> smallest(const std::vector<double>& row, std::size_t k) {
    std::vector<std::size_t> idx(row.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return row[a] < row[b]; });
    idx.resize(k);
    return idx;
}

}  // namespace

TEST_CASE("visual dependency") {
    const std::vector<double> row{0.25, 0.25, 0.25, 0.25};
    const std::vector<std::size_t> v2{0, 1};
    CHECK(visual_dependency(row, v2) == doctest::Approx(0.5));
    const std::vector<double> text_only{0, 0, 1, 0};
    CHECK(visual_dependency(text_only, v2) == 0.0);
    bool flag = false;
    const std::vector<std::size_t> none;
    CHECK(visual_dependency(row, none, &flag) == 0.0);
    CHECK(flag);
    const std::vector<double> bad{0.5, 0.2};
    CHECK_THROWS_AS(visual_dependency(bad, v2), ContractError);

    Rng rng(1);
    for (int t = 0; t < 500; ++t) {
        const auto r = random_row(rng, 2 + rng.below(60));
        std::vector<std::size_t> vis;
        double oracle = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i)
            if (rng.bernoulli(0.4)) {
                vis.push_back(i);
                oracle += r[i];
            }
        CHECK(std::abs(visual_dependency(r, vis) - oracle) < 1e-12);
    }
}

TEST_CASE("entropy") {
    const std::vector<double> half{0.5, 0.5};
    CHECK(attention_entropy(half) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    const std::vector<double> one{0, 1, 0};
    CHECK(attention_entropy(one) == 0.0);
    const std::vector<double> r{0.7, 0.2, 0.1};
    CHECK(std::abs(attention_entropy(r) - 0.801819) < 1e-5);
    const std::vector<double> neg{1.2, -0.2};
    CHECK_THROWS_AS(attention_entropy(neg), DomainError);
}

TEST_CASE("renormalized prune") {
    const std::vector<double> r{0.7, 0.2, 0.1};
    const std::vector<std::size_t> p{2};
    const auto out = renormalized_prune(r, p);
    REQUIRE(out.size() == 2);
    CHECK(out[0] == doctest::Approx(7.0 / 9.0));
    CHECK(out[1] == doctest::Approx(2.0 / 9.0));
    CHECK(std::abs(attention_entropy(out) - 0.529706) < 1e-5);
    const std::vector<std::size_t> none;
    CHECK(renormalized_prune(r, none) == r);
    const std::vector<double> z{1.0, 0.0, 0.0};
    const std::vector<std::size_t> p0{0};
    CHECK_THROWS_AS(renormalized_prune(z, p0), NumericError);
    const std::vector<std::size_t> all{0, 1, 2};
    CHECK_THROWS_AS(renormalized_prune(r, all), ContractError);
}

TEST_CASE("variance") {
    const std::vector<double> u(7, 1.0 / 7.0);
    CHECK(std::abs(attention_variance(u)) < 1e-18);
    const std::vector<double> two{1, 0};
    CHECK(attention_variance(two) == doctest::Approx(0.25));
    Rng rng(2);
    for (int t = 0; t < 500; ++t) {
        const auto r = random_row(rng, 1 + rng.below(300));
        double mean = 0.0;
        for (double x : r) mean += x;
        mean /= static_cast<double>(r.size());
        double ss = 0.0;
        for (double x : r) ss += (x - mean) * (x - mean);
        CHECK(std::abs(attention_variance(r) - ss / static_cast<double>(r.size())) < 1e-12);
    }
    // pruning can lower the variance; the comparison is only reported
    const std::vector<double> c{0.4, 0.35, 0.25};
    const std::vector<std::size_t> p{2};
    CHECK(attention_variance(renormalized_prune(c, p)) < attention_variance(c));
}

TEST_CASE("modality allocation") {
    const std::vector<double> vis_only{0.5, 0.5};
    const std::vector<std::size_t> v01{0, 1}, none, t23{2, 3};
    CHECK(modality_allocation(vis_only, v01, none) == std::pair<double, double>{1.0, 0.0});
    const std::vector<double> r{0.3, 0.2, 0.4, 0.1};
    const auto [a, b] = modality_allocation(r, v01, t23);
    CHECK(a == doctest::Approx(0.5));
    CHECK(b == doctest::Approx(0.5));
    const std::vector<std::size_t> p{3};
    const auto reduced = renormalized_prune(r, p);
    const std::vector<std::size_t> t2{2};
    const auto [a2, b2] = modality_allocation(reduced, v01, t2);
    CHECK(a2 == doctest::Approx(0.5 / 0.9));
    CHECK(a2 + b2 == doctest::Approx(1.0));
    const std::vector<std::size_t> overlap{1, 2, 3};
    CHECK_THROWS_AS(modality_allocation(r, v01, overlap), ContractError);
    CHECK_THROWS_AS(modality_allocation(r, v01, t2), ContractError);
}

TEST_CASE("pruning the smallest entries never raises entropy") {
    Rng rng(3);
    for (int t = 0; t < 10000; ++t) {
        const auto r = random_row(rng, 8 + rng.below(505));
        const double h = attention_entropy(r);
        for (double rate : {0.1, 0.2, 0.3}) {
            const auto k = static_cast<std::size_t>(std::llround(rate * static_cast<double>(r.size())));
            const auto reduced = renormalized_prune(r, smallest(r, k));
            CHECK(attention_entropy(reduced) <= h + 1e-9);
        }
    }
}

TEST_CASE("pruning text raises the visual share") {
    Rng rng(4);
    for (int t = 0; t < 10000; ++t) {
        const std::size_t n = 2 + rng.below(200);
        const auto r = random_row(rng, n);
        const std::size_t nv = 1 + rng.below(n - 1);
        std::vector<std::size_t> vis(nv), text;
        std::iota(vis.begin(), vis.end(), 0);
        for (std::size_t i = nv; i < n; ++i) text.push_back(i);
        std::vector<std::size_t> cut;
        double cut_mass = 0.0;
        for (auto i : text)
            if (rng.bernoulli(0.3) && cut.size() + 1 < text.size()) {
                cut.push_back(i);
                cut_mass += r[i];
            }
        const double alpha = modality_allocation(r, vis, text).first;
        const auto reduced = renormalized_prune(r, cut);
        double alpha2 = 0.0;
        for (std::size_t i = 0; i < nv; ++i) alpha2 += reduced[i];
        CHECK(alpha2 >= alpha - 1e-12);
        if (cut_mass > 1e-9) CHECK(alpha2 > alpha);
    }
}

TEST_CASE("attention report") {
    ModelConfig c;
    c.n_layers = 3;
    c.n_visual = 4;
    c.visual_dim = 5;
    c.init_std = 0.3;
    const auto p = ModelParams::init(c);
    Rng rng(5);
    TokenStream s;
    std::vector<double> f(20);
    for (auto& x : f) x = rng.normal();
    s.visual = Tensor({4, 5}, f);
    for (int i = 0; i < 40; ++i) s.text_ids.push_back(static_cast<int>(rng.below(512)));
    s.segments.assign(4, Segment::Visual);
    s.segments.insert(s.segments.end(), 37, Segment::Context);
    s.segments.insert(s.segments.end(), 3, Segment::Question);
    s.categories.assign(40, Category::Filler);

    const auto base = forward(p, s).trace;
    const auto same = attention_report(base, base, 4);
    for (const auto& l : same.layers) {
        CHECK(l.pre == l.post);
        CHECK(l.removed == 0);
        CHECK(l.pre.entropy >= 0.0);
        CHECK(std::abs(l.pre.alpha + l.pre.beta - 1.0) < 1e-9);
    }

    PruneConfig pc;
    pc.rate = 0.3;
    pc.layers = {0, 1};
    const auto pruned = forward(p, s, pc).trace;
    const auto rep = attention_report(base, pruned, 4);
    REQUIRE(rep.layers.size() == 3);
    CHECK(rep.layers[0].removed == 6);
    CHECK(rep.layers[1].removed == 12);
    for (int l : pc.layers) {
        CHECK(rep.layers[static_cast<std::size_t>(l)].post.alpha >= rep.layers[static_cast<std::size_t>(l)].pre.alpha);
        CHECK(rep.layers[static_cast<std::size_t>(l)].post.entropy <= rep.layers[static_cast<std::size_t>(l)].pre.entropy + 1e-9);
    }
    CHECK(rep.layers[2].run.rows == 4 * (44 - 12));

    const auto back = report_from_csv(report_to_csv(rep));
    CHECK(back == rep);

    auto other = s;
    other.text_ids.pop_back();
    other.segments.pop_back();
    other.categories.pop_back();
    CHECK_THROWS_AS(attention_report(base, forward(p, other).trace, 4), ContractError);
    CHECK_THROWS_AS(attention_report(pruned, base, 4), ContractError);
}
