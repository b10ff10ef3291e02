// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "vtm/dense_array.hpp"

// Plain (non-differentiable) dense kernels shared by the autodiff graph and
// the inference path. Matrix products accumulate in float in a fixed order;
// row statistics accumulate in double.
namespace vtm::kernels {

/// a[M x K] * b[K x N]
DenseArray matmul(const DenseArray& a, const DenseArray& b);
/// a[M x K] * b[N x K]^T
DenseArray matmul_nt(const DenseArray& a, const DenseArray& b);
/// a[K x M]^T * b[K x N]
DenseArray matmul_tn(const DenseArray& a, const DenseArray& b);

DenseArray transpose(const DenseArray& a);

/// x[j] = exp(x[j] - shift); returns the sum. Vectorized where the
/// platform provides a SIMD exp.
double exp_shifted_inplace(std::span<float> x, float shift);

/// Float dot product with reassociated (vectorized) accumulation.
float dot_f32(const float* a, const float* b, std::size_t n);

/// Row-wise softmax with max subtraction.
void softmax_rows_inplace(DenseArray& a);

/// y = layer_norm(x) * gamma + beta per row; gamma/beta may be empty.
DenseArray layer_norm_rows(const DenseArray& x, const DenseArray& gamma, const DenseArray& beta,
                           double eps);

/// x * w + bias (bias is 1 x N or empty).
DenseArray linear(const DenseArray& x, const DenseArray& w, const DenseArray& bias);

}  // namespace vtm::kernels
