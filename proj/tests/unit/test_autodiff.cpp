// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "primitive_cases.hpp"
#include "vtm/errors.hpp"
#include "vtm/kernels.hpp"

using namespace vtm;
using namespace vtm::testing;

TEST_CASE("finite differences agree for every primitive") {
    for (const PrimitiveCase& pc : primitive_cases()) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            Rng rng(mix_seed(seed, 11));
            const GradCheck r = check_gradients(pc.build, pc.inputs(rng), seed);
            INFO(pc.name << " seed " << seed << " rel " << r.rel_error);
            CHECK(r.checked > 0);
            CHECK(r.rel_error < 1e-3);
        }
    }
}

TEST_CASE("fused attention matches a composition of primitives") {
    Rng rng(5);
    const DenseArray q = random_matrix(rng, 6, 8), k = random_matrix(rng, 6, 8), v = random_matrix(rng, 6, 8);
    const DenseArray bias = random_matrix(rng, 1, 6);
    const int heads = 2;
    const double sc = 0.5;
    auto fused = [&](ad::Graph&, const std::vector<ad::Var>& x) {
        return Built{ad::multi_head_attention(x[0], x[1], x[2], heads, sc, &x[3]), {}};
    };
    auto composite = [&](ad::Graph& g, const std::vector<ad::Var>& x) {
        std::vector<ad::Var> outs;
        const std::size_t dh = 8 / heads;
        ad::Var ones = g.constant(DenseArray::matrix(6, 1, 1.0f));
        for (int h = 0; h < heads; ++h) {
            ad::Var qh = ad::slice_cols(x[0], h * dh, dh), kh = ad::slice_cols(x[1], h * dh, dh);
            ad::Var vh = ad::slice_cols(x[2], h * dh, dh);
            ad::Var logits = ad::add(ad::matmul(qh, ad::transpose(kh)), ad::matmul(ones, x[3]));
            outs.push_back(ad::matmul(ad::softmax_rows(ad::scale(logits, sc)), vh));
        }
        return Built{ad::concat_cols(outs), {}};
    };
    ad::Graph g1, g2;
    std::vector<ad::Var> x1{g1.variable(q), g1.variable(k), g1.variable(v), g1.variable(bias)};
    std::vector<ad::Var> x2{g2.variable(q), g2.variable(k), g2.variable(v), g2.variable(bias)};
    ad::Var o1 = fused(g1, x1).out, o2 = composite(g2, x2).out;
    CHECK(max_abs_diff(o1.value(), o2.value()) < 1e-5);
    const DenseArray w = random_matrix(rng, 6, 8);
    g1.backward(ad::sum(ad::mul(o1, g1.constant(w))));
    g2.backward(ad::sum(ad::mul(o2, g2.constant(w))));
    for (int i = 0; i < 4; ++i) CHECK(max_abs_diff(x1[i].grad(), x2[i].grad()) < 1e-5);
}

TEST_CASE("gradients accumulate over reused nodes") {
    ad::Graph g;
    ad::Var x = g.variable(DenseArray::from_rows({{2.0f}}));
    ad::Var y = ad::mul(x, ad::add(x, x));  // 2 x^2
    g.backward(ad::sum(y));
    CHECK(x.grad()(0, 0) == doctest::Approx(8.0));
}

TEST_CASE("constants receive no gradient and backward needs a scalar") {
    ad::Graph g;
    ad::Var c = g.constant(DenseArray::from_rows({{1.0f, 2.0f}}));
    ad::Var x = g.variable(DenseArray::from_rows({{3.0f, 4.0f}}));
    CHECK_THROWS_AS(g.backward(ad::mul(c, x)), ShapeError);
    g.backward(ad::sum(ad::mul(c, x)));
    CHECK(x.grad()(0, 1) == 2.0f);
}

TEST_CASE("primitive argument errors") {
    ad::Graph g;
    ad::Var a = g.variable(DenseArray::matrix(2, 3, 1.0f));
    ad::Var b = g.variable(DenseArray::matrix(2, 4, 1.0f));
    CHECK_THROWS_AS(ad::matmul(a, b), ShapeError);
    CHECK_THROWS_AS(ad::add(a, b), ShapeError);
    CHECK_THROWS_AS(ad::add_row(a, b), ShapeError);
    const std::vector<std::size_t> bad_idx{0, 5};
    CHECK_THROWS_AS(ad::gather_rows(a, bad_idx), IndexError);
    CHECK_THROWS_AS(ad::slice_cols(a, 2, 2), IndexError);
    const std::vector<std::size_t> seg{0, 2};
    const std::vector<double> w{1.0, 1.0};
    CHECK_THROWS_AS(ad::segment_mean(a, seg, w, 3), DomainError);
    const std::vector<double> neg{1.0, -1.0};
    const std::vector<std::size_t> seg2{0, 1};
    CHECK_THROWS_AS(ad::segment_mean(a, seg2, neg, 2), DomainError);
    const std::vector<std::size_t> labels{0, 3};
    CHECK_THROWS_AS(ad::softmax_cross_entropy(a, labels), IndexError);
    CHECK_THROWS_AS(ad::multi_head_attention(a, a, a, 2, 1.0), ShapeError);
    ad::Graph other;
    ad::Var c = other.variable(DenseArray::matrix(2, 3));
    CHECK_THROWS_AS(ad::add(a, c), ShapeError);
}

TEST_CASE("attention weights are exposed on request") {
    Rng rng(2);
    ad::Graph g;
    ad::Var q = g.variable(random_matrix(rng, 4, 4));
    std::vector<DenseArray> w;
    ad::multi_head_attention(q, q, q, 2, 1.0, nullptr, &w);
    REQUIRE(w.size() == 2);
    for (const DenseArray& p : w)
        for (std::size_t i = 0; i < 4; ++i) {
            double s = 0.0;
            for (float f : p.row(i)) s += f;
            CHECK(s == doctest::Approx(1.0));
        }
}
