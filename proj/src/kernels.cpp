// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#include "vtm/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "vtm/errors.hpp"

namespace vtm::kernels {

namespace {

void require(bool ok, const char* op, const DenseArray& a, const DenseArray& b) {
    if (!ok) {
        throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                         b.shape_string());
    }
}

}  // namespace

namespace {

// out[m x n] = a[m x k] * b[k x n] with b given row-major; inner loop over n.
void gemm_rows(const float* a, const float* b, float* out, std::size_t m, std::size_t k,
               std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        float* orow = out + i * n;
        std::fill(orow, orow + n, 0.0f);
        const float* ar = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const float av = ar[p];
            const float* br = b + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * br[j];
        }
    }
}

}  // namespace

DenseArray matmul(const DenseArray& a, const DenseArray& b) {
    require(a.rank() == 2 && b.rank() == 2 && a.cols() == b.rows(), "matmul", a, b);
    DenseArray out = DenseArray::matrix(a.rows(), b.cols());
    gemm_rows(a.data().data(), b.data().data(), out.data().data(), a.rows(), a.cols(), b.cols());
    return out;
}

DenseArray matmul_nt(const DenseArray& a, const DenseArray& b) {
    require(a.rank() == 2 && b.rank() == 2 && a.cols() == b.cols(), "matmul_nt", a, b);
    const DenseArray bt = transpose(b);
    DenseArray out = DenseArray::matrix(a.rows(), b.rows());
    gemm_rows(a.data().data(), bt.data().data(), out.data().data(), a.rows(), a.cols(), b.rows());
    return out;
}

DenseArray matmul_tn(const DenseArray& a, const DenseArray& b) {
    require(a.rank() == 2 && b.rank() == 2 && a.rows() == b.rows(), "matmul_tn", a, b);
    const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
    DenseArray out = DenseArray::matrix(m, n);
    float* op = out.data().data();
    const float* ap = a.data().data();
    const float* bp = b.data().data();
    for (std::size_t p = 0; p < k; ++p) {
        const float* ar = ap + p * m;
        const float* br = bp + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const float av = ar[i];
            float* orow = op + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * br[j];
        }
    }
    return out;
}

DenseArray transpose(const DenseArray& a) {
    const std::size_t m = a.rows(), n = a.cols();
    DenseArray out = DenseArray::matrix(n, m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out(j, i) = a(i, j);
    return out;
}

void softmax_rows_inplace(DenseArray& a) {
    const std::size_t m = a.rows(), n = a.cols();
    for (std::size_t i = 0; i < m; ++i) {
        auto row = a.row(i);
        float mx = row[0];
        for (float v : row) mx = std::max(mx, v);
        const auto inv = static_cast<float>(1.0 / exp_shifted_inplace(row, mx));
        for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
    }
}

DenseArray layer_norm_rows(const DenseArray& x, const DenseArray& gamma, const DenseArray& beta,
                           double eps) {
    const std::size_t m = x.rows(), n = x.cols();
    DenseArray out = DenseArray::matrix(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        auto row = x.row(i);
        double mean = 0.0;
        for (float v : row) mean += v;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (float v : row) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            double y = (row[j] - mean) * inv;
            if (!gamma.empty()) y = y * gamma[j] + beta[j];
            out(i, j) = static_cast<float>(y);
        }
    }
    return out;
}

DenseArray linear(const DenseArray& x, const DenseArray& w, const DenseArray& bias) {
    DenseArray out = matmul(x, w);
    if (!bias.empty()) {
        for (std::size_t i = 0; i < out.rows(); ++i)
            for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bias[j];
    }
    return out;
}

}  // namespace vtm::kernels
