// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>

#include "doctest.h"
#include "test_support.hpp"
#include "vtm/errors.hpp"
#include "vtm/kernels.hpp"

using namespace vtm;
using vtm::testing::random_matrix;

namespace {

DenseArray naive_matmul(const DenseArray& a, const DenseArray& b) {
    DenseArray c = DenseArray::matrix(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += static_cast<double>(a(i, k)) * b(k, j);
            c(i, j) = static_cast<float>(s);
        }
    return c;
}

}  // namespace

TEST_CASE("dense array shape and access") {
    DenseArray a = DenseArray::from_rows({{1, 2, 3}, {4, 5, 6}});
    CHECK(a.rows() == 2);
    CHECK(a.cols() == 3);
    CHECK(a(1, 2) == 6.0f);
    CHECK(a.shape_string() == "[2x3]");
    DenseArray r = a.reshaped({3, 2});
    CHECK(r(2, 1) == 6.0f);
    CHECK_THROWS_AS(a.reshaped({4, 2}), ShapeError);
    CHECK_THROWS_AS(DenseArray({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
    CHECK(max_abs_diff(a, a) == 0.0);
    CHECK(all_finite(a));
    a(0, 0) = std::nanf("");
    CHECK_FALSE(all_finite(a));
}

TEST_CASE("rng is reproducible and seeds differ") {
    Rng a(7), b(7), c(8);
    for (int i = 0; i < 10; ++i) {
        const auto x = a.bits();
        CHECK(x == b.bits());
        (void)c.bits();
    }
    Rng d(7), e(8);
    CHECK(d.bits() != e.bits());
    Rng u(3);
    double mean = 0.0;
    for (int i = 0; i < 20000; ++i) mean += u.normal();
    CHECK(std::abs(mean / 20000) < 0.05);
}

TEST_CASE("matmul variants agree with a naive double oracle") {
    Rng rng(1);
    for (auto [m, k, n] : {std::tuple{1, 1, 1}, {3, 5, 2}, {17, 33, 9}, {64, 64, 64}}) {
        DenseArray a = random_matrix(rng, m, k), b = random_matrix(rng, k, n);
        const DenseArray ref = naive_matmul(a, b);
        CHECK(max_abs_diff(kernels::matmul(a, b), ref) < 1e-4);
        CHECK(max_abs_diff(kernels::matmul_nt(a, kernels::transpose(b)), ref) < 1e-4);
        CHECK(max_abs_diff(kernels::matmul_tn(kernels::transpose(a), b), ref) < 1e-4);
    }
    CHECK_THROWS_AS(kernels::matmul(DenseArray::matrix(2, 3), DenseArray::matrix(2, 3)), ShapeError);
}

TEST_CASE("exp and dot kernels") {
    std::vector<float> x{-3.0f, 0.0f, 1.5f, -80.0f, 2.0f, 0.25f, -1.0f, 4.0f, 0.5f};
    std::vector<float> ref = x;
    const double s = kernels::exp_shifted_inplace(x, 4.0f);
    double expect = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = std::exp(static_cast<double>(ref[i]) - 4.0);
        CHECK(std::abs(x[i] - e) <= 1e-6 * std::max(1.0, e));
        expect += e;
    }
    CHECK(std::abs(s - expect) < 1e-5);
    std::vector<float> a(37), b(37);
    std::iota(a.begin(), a.end(), 0.0f);
    std::fill(b.begin(), b.end(), 0.5f);
    CHECK(kernels::dot_f32(a.data(), b.data(), a.size()) == doctest::Approx(333.0));
}

TEST_CASE("softmax, layer norm and linear") {
    DenseArray a = DenseArray::from_rows({{1, 2, 3}, {1000, 1000, 1000}});
    kernels::softmax_rows_inplace(a);
    CHECK(a(0, 2) == doctest::Approx(std::exp(3.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0))));
    CHECK(a(1, 0) == doctest::Approx(1.0 / 3.0));
    DenseArray x = DenseArray::from_rows({{1, 2, 3, 4}});
    DenseArray y = kernels::layer_norm_rows(x, DenseArray(), DenseArray(), 0.0);
    double m = 0.0, v = 0.0;
    for (float f : y.data()) m += f;
    for (float f : y.data()) v += f * f;
    CHECK(std::abs(m) < 1e-6);
    CHECK(v / 4 == doctest::Approx(1.0));
    DenseArray w = DenseArray::from_rows({{1, 0}, {0, 1}, {1, 1}, {0, 0}});
    DenseArray lin = kernels::linear(x, w, DenseArray::from_rows({{10, 20}}));
    CHECK(lin(0, 0) == 14.0f);
    CHECK(lin(0, 1) == 25.0f);
}
