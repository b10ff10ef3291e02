// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#include "vtm/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "vtm/errors.hpp"
#include "vtm/kernels.hpp"

namespace vtm {

namespace {

void check_params(const ad::Var& x, const AttentionParams& p) {
    const std::size_t c = x.cols();
    const DenseArray& uq = p.u_q.value();
    if (uq.rows() != c || p.u_k.value().shape() != uq.shape() || p.u_v.value().shape() != uq.shape()) {
        throw ShapeError("attention: projections " + uq.shape_string() + "/" +
                         p.u_k.value().shape_string() + "/" + p.u_v.value().shape_string() +
                         " do not fit input " + x.value().shape_string());
    }
    if (p.heads < 1 || uq.cols() % static_cast<std::size_t>(p.heads) != 0) {
        throw ShapeError("attention: width " + std::to_string(uq.cols()) + " not divisible by " +
                         std::to_string(p.heads) + " heads");
    }
}

AttentionResult attend(ad::Var x, const AttentionParams& p, const ad::Var* bias_row) {
    check_params(x, p);
    ad::Var q = ad::matmul(x, p.u_q);
    ad::Var k = ad::matmul(x, p.u_k);
    ad::Var v = ad::matmul(x, p.u_v);
    const std::size_t dh = q.cols() / static_cast<std::size_t>(p.heads);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    AttentionResult r;
    r.out = ad::multi_head_attention(q, k, v, p.heads, inv_sqrt, bias_row,
                                     p.keep_weights ? &r.weights : nullptr);
    r.keys = k;
    r.merge_keys = head_average(k.value(), p.heads);
    return r;
}

}  // namespace

AttentionResult self_attention(ad::Var x, const AttentionParams& p) { return attend(x, p, nullptr); }

ad::Var saliency_scores(ad::Var keys, ad::Var u_s) {
    if (u_s.value().rank() != 2 || u_s.cols() != 1 || u_s.rows() != keys.cols()) {
        throw ShapeError("saliency_scores: U_s " + u_s.value().shape_string() +
                         " does not fit keys " + keys.value().shape_string());
    }
    return ad::tanh_elem(ad::matmul(keys, u_s));
}

AttentionResult saliency_guided_attention(ad::Var x_aux, const AttentionParams& p, ad::Var s) {
    if (s.value().rank() != 2 || s.cols() != 1 || s.rows() != x_aux.rows()) {
        throw ShapeError("saliency_guided_attention: scores " + s.value().shape_string() +
                         " do not fit " + std::to_string(x_aux.rows()) + " tokens");
    }
    ad::Var bias = ad::transpose(s);
    return attend(x_aux, p, &bias);
}

DenseArray head_average(const DenseArray& keys, int heads) {
    const std::size_t n = keys.rows(), d = keys.cols();
    const auto hc = static_cast<std::size_t>(heads);
    if (heads < 1 || d % hc != 0) throw ShapeError("head_average: width not divisible by heads");
    const std::size_t dh = d / hc;
    if (hc == 1) return keys;
    DenseArray out = DenseArray::matrix(n, dh);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < dh; ++c) {
            double acc = 0.0;
            for (std::size_t h = 0; h < hc; ++h) acc += keys(i, h * dh + c);
            out(i, c) = static_cast<float>(acc / static_cast<double>(hc));
        }
    return out;
}

InferenceAttention attention_inference(const DenseArray& x, const DenseArray& u_q,
                                       const DenseArray& u_k, const DenseArray& u_v, int heads,
                                       const std::vector<float>* key_bias) {
    const DenseArray q = kernels::matmul(x, u_q);
    DenseArray k = kernels::matmul(x, u_k);
    const DenseArray v = kernels::matmul(x, u_v);
    const std::size_t n = x.rows(), d = q.cols();
    const auto hc = static_cast<std::size_t>(heads);
    if (heads < 1 || d % hc != 0) throw ShapeError("attention_inference: width not divisible by heads");
    if (key_bias != nullptr && key_bias->size() != n) {
        throw ShapeError("attention_inference: bias length differs from token count");
    }
    const std::size_t dh = d / hc;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    DenseArray out = DenseArray::matrix(n, d);
    // Keys and values transposed per head (dh x n) so inner loops run over tokens.
    std::vector<float> kt(dh * n), vt(dh * n);
    std::vector<float> logits(n);
    for (std::size_t h = 0; h < hc; ++h) {
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t c = 0; c < dh; ++c) {
                kt[c * n + j] = k(j, h * dh + c);
                vt[c * n + j] = v(j, h * dh + c);
            }
        for (std::size_t i = 0; i < n; ++i) {
            std::fill(logits.begin(), logits.end(), 0.0f);
            for (std::size_t c = 0; c < dh; ++c) {
                const float qc = q(i, h * dh + c);
                const float* kr = kt.data() + c * n;
                for (std::size_t j = 0; j < n; ++j) logits[j] += qc * kr[j];
            }
            if (key_bias != nullptr) {
                for (std::size_t j = 0; j < n; ++j) logits[j] += (*key_bias)[j];
            }
            const auto scale = static_cast<float>(inv_sqrt);
            float mx = -std::numeric_limits<float>::infinity();
            for (std::size_t j = 0; j < n; ++j) {
                logits[j] *= scale;
                mx = std::max(mx, logits[j]);
            }
            const double total = kernels::exp_shifted_inplace(logits, mx);
            const auto inv_total = static_cast<float>(1.0 / total);
            for (std::size_t c = 0; c < dh; ++c) {
                out(i, h * dh + c) = kernels::dot_f32(logits.data(), vt.data() + c * n, n) * inv_total;
            }
        }
    }
    return {std::move(out), std::move(k)};
}

std::vector<double> saliency_inference(const DenseArray& keys, const DenseArray& u_s) {
    const DenseArray z = kernels::matmul(keys, u_s);
    std::vector<double> s(z.rows());
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = static_cast<float>(std::tanh(static_cast<double>(z(i, 0))));
    }
    return s;
}

}  // namespace vtm
