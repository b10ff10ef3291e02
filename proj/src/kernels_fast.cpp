// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

// Built with relaxed floating-point flags so the loop vectorizes (see
// src/CMakeLists.txt). Only element-wise loops and
// float reductions live here.

#include <cmath>

#include "vtm/kernels.hpp"

namespace vtm::kernels {

double exp_shifted_inplace(std::span<float> x, float shift) {
    double total = 0.0;
    const std::size_t n = x.size();
    float* p = x.data();
    for (std::size_t j = 0; j < n; ++j) {
        p[j] = std::exp(p[j] - shift);
        total += static_cast<double>(p[j]);
    }
    return total;
}

float dot_f32(const float* a, const float* b, std::size_t n) {
    float s = 0.0f;
    for (std::size_t j = 0; j < n; ++j) s += a[j] * b[j];
    return s;
}

}  // namespace vtm::kernels
