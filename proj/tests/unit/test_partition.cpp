// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <set>

#include "doctest.h"
#include "test_support.hpp"
#include "vtm/errors.hpp"
#include "vtm/partition.hpp"

using namespace vtm;
using namespace vtm::testing;

namespace {

bool valid_targets(const std::vector<std::size_t>& t, std::size_t n) {
    if (!std::is_sorted(t.begin(), t.end())) return false;
    if (std::adjacent_find(t.begin(), t.end()) != t.end()) return false;
    return t.empty() || t.back() < n;
}

}  // namespace

TEST_CASE("every strategy yields floor(N / gamma) distinct targets") {
    Rng rng(12);
    for (int trial = 0; trial < 60; ++trial) {
        const GridShape grid{1 + static_cast<int>(rng.below(3)), 2 + static_cast<int>(rng.below(7)),
                             2 + static_cast<int>(rng.below(7)), 2};
        const TokenTensor t = random_token_set(rng, grid, 1);
        const int gamma = 2 + static_cast<int>(rng.below(9));
        if (t.count() < static_cast<std::size_t>(gamma)) continue;
        std::vector<double> sal(t.count());
        for (double& s : sal) s = std::tanh(rng.normal());
        for (Strategy s : {Strategy::naive, Strategy::center, Strategy::boundary, Strategy::motion,
                           Strategy::learnable}) {
            const auto targets = select_targets(t, s, gamma, sal, 77);
            INFO(to_string(s) << " gamma " << gamma << " n " << t.count());
            CHECK(targets.size() == t.count() / static_cast<std::size_t>(gamma));
            CHECK(valid_targets(targets, t.count()));
        }
    }
}

TEST_CASE("center and boundary rules concentrate targets") {
    Rng rng(2);
    const GridShape grid{1, 16, 16, 2};
    const TokenTensor t = random_tokens(rng, grid);
    const int gamma = 6;
    auto center_share = [&](const std::vector<std::size_t>& targets) {
        std::size_t c = 0;
        for (std::size_t i : targets) c += in_center_region(t.coords[i], grid);
        return static_cast<double>(c) / static_cast<double>(targets.size());
    };
    const auto center = targets_center(t, gamma), boundary = targets_boundary(t, gamma);
    CHECK(center.size() == 42);
    // half of the targets come from a region holding a quarter of the tokens
    CHECK(center_share(center) == doctest::Approx(0.5).epsilon(0.03));
    CHECK(center_share(boundary) == doctest::Approx(0.5).epsilon(0.03));
    CHECK(center_share(targets_naive(t, gamma)) < 0.35);
    CHECK(dense_factor(6) == 3);
    CHECK(sparse_factor(6) == 9);
    CHECK(dense_factor(2) == 1);
    CHECK(sparse_factor(3) == 5);
}

TEST_CASE("center region geometry") {
    const GridShape g{1, 8, 8, 1};
    CHECK(in_center_region({0, 2, 2}, g));
    CHECK(in_center_region({0, 5, 5}, g));
    CHECK_FALSE(in_center_region({0, 6, 5}, g));
    CHECK_FALSE(in_center_region({0, 1, 4}, g));
    Rng rng(1);
    const TokenTensor thin = random_tokens(rng, {4, 1, 8, 1});
    CHECK_THROWS_AS(targets_center(thin, 2), ValidationError);
}

TEST_CASE("weighted sampling is reproducible and without replacement") {
    const std::vector<double> w{0.0, 1.0, 2.0, 0.5, -1.0};
    const auto a = sample_targets_weighted(w, 3, 42), b = sample_targets_weighted(w, 3, 42);
    CHECK(a == b);
    CHECK(valid_targets(a, w.size()));
    CHECK(sample_targets_weighted(w, 5, 1).size() == 5);
    CHECK_THROWS_AS(sample_targets_weighted(w, 6, 1), ValidationError);
}

TEST_CASE("first pick follows softmax probabilities") {
    const std::vector<double> w{1.0, 0.0, -0.5, 2.0};
    double z = 0.0;
    for (double v : w) z += std::exp(v);
    std::vector<int> hits(w.size(), 0);
    const int draws = 20000;
    for (int d = 0; d < draws; ++d) hits[sample_targets_weighted(w, 1, mix_seed(d, 5)).front()]++;
    for (std::size_t i = 0; i < w.size(); ++i)
        CHECK(std::abs(hits[i] / double(draws) - std::exp(w[i]) / z) < 0.02);
}

TEST_CASE("motion sampling prefers moving tokens") {
    Rng rng(8);
    TokenTensor t = random_tokens(rng, {1, 6, 6, 2});
    for (std::size_t i = 0; i < t.count(); ++i) t.motion[i] = t.coords[i].col < 2 ? 10.0f : 0.0f;
    const auto targets = targets_motion(t, 6, 3);
    CHECK(targets.size() == 6);
    for (std::size_t i : targets) CHECK(t.coords[i].col < 2);
}

TEST_CASE("learnable selection needs one score per token") {
    Rng rng(8);
    const TokenTensor t = random_tokens(rng, {1, 4, 4, 2});
    const std::vector<double> sal(3, 0.0);
    CHECK_THROWS_AS(select_targets(t, Strategy::learnable, 2, sal, 0), ShapeError);
}
