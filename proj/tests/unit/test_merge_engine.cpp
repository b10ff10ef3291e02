// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#include <numeric>
#include <set>

#include "doctest.h"
#include "test_support.hpp"
#include "vtm/errors.hpp"
#include "vtm/merge_engine.hpp"

using namespace vtm;
using namespace vtm::testing;

TEST_CASE("count law examples") {
    CHECK(merged_count(100, 6, 0.8) == 100 - 67);
    CHECK(merged_count(100, 2, 1.0) == 50);
    CHECK(merged_count(5, 6, 1.0) == 5);
    CHECK(merged_count(6, 6, 1.0) == 1);
    CHECK(merged_count(100, 6, 0.0) == 100);
    MergeConfig cfg;
    cfg.r_fraction = 0.29;
    CHECK(cfg.merge_count(100) == 29);
    cfg.gamma = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.gamma = 2;
    cfg.r_fraction = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("uniform partition keeps one target per complete group") {
    for (std::size_t n : {6u, 7u, 13u, 64u}) {
        for (int g : {2, 3, 6}) {
            const PartitionResult p = partition_uniform(n, g);
            CHECK(p.target_idx.size() == n / static_cast<std::size_t>(g));
            std::vector<std::size_t> all = p.target_idx;
            all.insert(all.end(), p.source_idx.begin(), p.source_idx.end());
            std::sort(all.begin(), all.end());
            std::vector<std::size_t> expect(n);
            std::iota(expect.begin(), expect.end(), 0u);
            CHECK(all == expect);
        }
    }
    CHECK_THROWS_AS(partition_uniform(3, 6), ValidationError);
    CHECK_THROWS_AS(partition_uniform(10, 1), ConfigError);
}

TEST_CASE("partition from targets validates indices") {
    const std::vector<std::size_t> t{1, 4};
    const PartitionResult p = partition_from_targets(6, t);
    CHECK(p.source_idx == std::vector<std::size_t>{0, 2, 3, 5});
    const std::vector<std::size_t> dup{1, 1}, out{7};
    CHECK_THROWS_AS(partition_from_targets(6, dup), ValidationError);
    CHECK_THROWS_AS(partition_from_targets(6, out), IndexError);
}

TEST_CASE("matching equals the exhaustive oracle") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.below(40), d = 1 + rng.below(6);
        const DenseArray keys = trial % 2 ? random_matrix(rng, n, d) : tied_keys(rng, n, d);
        const int gamma = 2 + static_cast<int>(rng.below(std::min<std::size_t>(n - 1, 8)));
        const PartitionResult p = partition_uniform(n, gamma);
        const MatchResult got = match_sources(keys, p), want = brute_force_match(keys, p);
        CHECK(got.match_of == want.match_of);
        for (std::size_t s = 0; s < got.score_of.size(); ++s)
            CHECK(std::abs(got.score_of[s] - want.score_of[s]) < 1e-12);
    }
}

TEST_CASE("ties go to the lowest target index") {
    const DenseArray keys = DenseArray::from_rows({{1, 0}, {1, 0}, {1, 0}, {0, 1}});
    const std::vector<std::size_t> t{1, 2};
    const MatchResult m = match_sources(keys, partition_from_targets(4, t));
    CHECK(m.match_of == std::vector<std::int64_t>{1, 1});
}

TEST_CASE("matching rejects zero keys") {
    const DenseArray keys = DenseArray::from_rows({{1, 0}, {0, 0}});
    CHECK_THROWS_AS(match_sources(keys, partition_uniform(2, 2)), DomainError);
}

TEST_CASE("limit_matches keeps the best r, earliest on ties") {
    MatchResult m;
    m.match_of = {0, 0, 0, 0};
    m.score_of = {0.5, 0.9, 0.5, 0.1};
    const MatchResult l = limit_matches(m, 2);
    CHECK(l.match_of == std::vector<std::int64_t>{0, 0, MatchResult::kUnmatched, MatchResult::kUnmatched});
    CHECK(l.matched_count() == 2);
    CHECK_THROWS_AS(limit_matches(m, 5), ValidationError);
}

TEST_CASE("merge plans partition the input and conserve size") {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const GridShape grid{1 + static_cast<int>(rng.below(3)), 2 + static_cast<int>(rng.below(4)),
                             2 + static_cast<int>(rng.below(4)), 3};
        const TokenTensor t = random_token_set(rng, grid, 4);
        MergeConfig cfg;
        cfg.gamma = 2 + static_cast<int>(rng.below(4));
        cfg.r_fraction = rng.uniform();
        cfg.pooling = Pooling::size_weighted;
        if (t.count() < static_cast<std::size_t>(cfg.gamma)) continue;
        const auto targets = partition_uniform(t, cfg.gamma).target_idx;
        const MergePlan plan = plan_merge_step(t, t.features, cfg, targets);
        CHECK(plan.num_outputs == merged_count(t.count(), cfg.gamma, cfg.r_fraction));
        std::vector<int> seen(t.count(), 0);
        for (std::size_t o = 0; o < plan.num_outputs; ++o)
            for (std::size_t i : plan.constituents[o]) {
                ++seen[i];
                CHECK(plan.segment_of[i] == o);
            }
        CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
        const TokenTensor out = apply_plan(t, plan);
        CHECK(out.total_size() == t.total_size());
        validate(out);
        for (std::size_t c = 0; c < t.features.cols(); ++c) {
            double a = 0.0, b = 0.0, scale = 0.0;
            for (std::size_t i = 0; i < t.count(); ++i) {
                a += static_cast<double>(t.sizes[i]) * t.features(i, c);
                scale += std::abs(static_cast<double>(t.sizes[i]) * t.features(i, c));
            }
            for (std::size_t o = 0; o < out.count(); ++o) b += static_cast<double>(out.sizes[o]) * out.features(o, c);
            CHECK(std::abs(a - b) <= 1e-5 * std::max(1.0, scale));
        }
    }
}

TEST_CASE("r = 0 leaves tokens untouched") {
    Rng rng(4);
    const TokenTensor t = random_token_set(rng, {2, 3, 3, 4}, 3);
    MergeConfig cfg;
    cfg.r_fraction = 0.0;
    const TokenTensor out = merge_step(t, t.features, cfg, partition_uniform(t, cfg.gamma).target_idx);
    CHECK(max_abs_diff(out.features, t.features) == 0.0);
    CHECK(out.sizes == t.sizes);
    CHECK(out.coords == t.coords);
}

TEST_CASE("pooling modes") {
    TokenTensor t = TokenTensor::from_grid(DenseArray::from_rows({{0, 0}, {4, 8}}), {1, 1, 2, 2});
    t.sizes = {1, 3};
    t.motion = {2.0f, 0.0f};
    const PartitionResult p = partition_uniform(2, 2);
    MatchResult m;
    m.match_of = {0};
    m.score_of = {1.0};
    CHECK(merge(t, p, m, Pooling::average).features(0, 1) == doctest::Approx(4.0));
    CHECK(merge(t, p, m, Pooling::size_weighted).features(0, 1) == doctest::Approx(6.0));
    const TokenTensor mw = merge(t, p, m, Pooling::motion_weighted);
    CHECK(mw.features(0, 1) == doctest::Approx(8.0 * kMotionEpsilon / (2.0 + kMotionEpsilon)));
    CHECK(mw.sizes[0] == 4);
    CHECK(mw.motion[0] == doctest::Approx(0.5));
    CHECK(mw.coords[0] == Coord{0, 0, 0});
}

TEST_CASE("inconsistent partitions are rejected") {
    Rng rng(1);
    const TokenTensor t = random_token_set(rng, {1, 2, 2, 2}, 1);
    PartitionResult p = partition_uniform(4, 2);
    MatchResult m;
    m.match_of = {1, 2};
    m.score_of = {0, 0};
    CHECK_THROWS_AS(plan_merge(t, p, m, Pooling::average), ValidationError);
    m.match_of = {0};
    CHECK_THROWS_AS(plan_merge(t, p, m, Pooling::average), ValidationError);
}

TEST_CASE("token validation names the broken invariant") {
    Rng rng(1);
    TokenTensor t = random_tokens(rng, {1, 2, 2, 3});
    validate(t);
    TokenTensor bad = t;
    bad.sizes[1] = 0;
    CHECK_THROWS_WITH_AS(validate(bad), doctest::Contains("sizes"), ValidationError);
    bad = t;
    bad.coords[0].row = 5;
    CHECK_THROWS_WITH_AS(validate(bad), doctest::Contains("coords"), ValidationError);
    bad = t;
    bad.motion[0] = -1.0f;
    CHECK_THROWS_WITH_AS(validate(bad), doctest::Contains("motion"), ValidationError);
    bad = t;
    bad.coords.pop_back();
    CHECK_THROWS_AS(validate(bad), ValidationError);
    CHECK(parse_pooling("size_weighted") == Pooling::size_weighted);
    CHECK(to_string(parse_strategy("boundary")) == "boundary");
    CHECK_THROWS_AS(parse_strategy("random"), ConfigError);
}
