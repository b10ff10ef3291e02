// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "vtm/autodiff.hpp"
#include "vtm/dense_array.hpp"

namespace vtm {

/// Graph-bound attention parameters: projections C x D and the saliency
/// projection D x 1. D must be divisible by heads.
struct AttentionParams {
    ad::Var u_q;
    ad::Var u_k;
    ad::Var u_v;
    ad::Var u_s;
    int heads = 1;
    /// Copy the per-head attention matrices into AttentionResult::weights.
    bool keep_weights = false;
};

struct AttentionResult {
    ad::Var out;                   // N x D, heads concatenated
    ad::Var keys;                  // N x D, differentiable
    DenseArray merge_keys;         // N x D/heads, head-averaged keys
    std::vector<DenseArray> weights;  // per-head N x N, only with keep_weights
};

/// softmax(Q K^T / sqrt(d_h)) V per head with Q, K, V = x U_{q,k,v}.
AttentionResult self_attention(ad::Var x, const AttentionParams& p);

/// tanh(K U_s), one score per token in (-1, 1).
ad::Var saliency_scores(ad::Var keys, ad::Var u_s);

/// Attention whose logits gain s_j for every query attending to token j:
/// softmax((Q K^T + 1 s^T) / sqrt(d_h)) V per head.
AttentionResult saliency_guided_attention(ad::Var x_aux, const AttentionParams& p, ad::Var s);

/// Averages per-head key blocks: N x D -> N x D/heads.
DenseArray head_average(const DenseArray& keys, int heads);

/// Graph-free attention for inference. Processes queries row by row so
/// memory stays linear in the token count. `key_bias` (optional, one value
/// per token) plays the role of the saliency bias.
struct InferenceAttention {
    DenseArray out;   // N x D
    DenseArray keys;  // N x D
};
InferenceAttention attention_inference(const DenseArray& x, const DenseArray& u_q,
                                       const DenseArray& u_k, const DenseArray& u_v, int heads,
                                       const std::vector<float>* key_bias = nullptr);

/// Saliency without a graph: tanh(keys * u_s).
std::vector<double> saliency_inference(const DenseArray& keys, const DenseArray& u_s);

}  // namespace vtm
