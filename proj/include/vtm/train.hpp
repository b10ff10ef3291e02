// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "vtm/network.hpp"
#include "vtm/token_types.hpp"

namespace vtm {

struct Sample {
    TokenTensor tokens;
    std::size_t label = 0;       // class index (classification)
    float target = 0.0f;         // regression target
    std::vector<std::uint8_t> mask;  // planted-saliency mask per token, may be empty
};

struct TrainHyper {
    double lr = 1e-3;
    int epochs = 70;
    int batch = 8;
    std::uint64_t seed = 0;
    double weight_decay = 0.01;
    double warmup_fraction = 1.0 / 7.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    /// Worker threads for batch items; gradients are reduced in item order.
    int threads = 1;
};

struct EpochMetrics {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_metric = 0.0;  // accuracy or MSE
    double val_metric = 0.0;
    double saliency_signal = 0.0;
    double saliency_background = 0.0;
};

struct EvalResult {
    double accuracy = 0.0;
    double mse = 0.0;
    double saliency_signal = 0.0;      // mean block-1 saliency on masked tokens
    double saliency_background = 0.0;  // and on the rest
    bool has_masks = false;
    TokenCountTrace trace;             // from the first sample
    std::vector<std::size_t> predictions;
};

struct TrainResult {
    NetworkParams params;
    std::vector<EpochMetrics> log;
};

/// Learning rate at optimizer step `step` of `total`: linear warm-up then cosine decay.
double scheduled_lr(const TrainHyper& h, std::size_t step, std::size_t total);

/// Decoupled-weight-decay Adam over NetworkParams. Layer-norm and bias
/// parameters are not decayed.
class AdamW {
public:
    AdamW(const NetworkParams& params, const TrainHyper& hyper);
    void step(NetworkParams& params, const std::vector<DenseArray>& grads, double lr);

private:
    TrainHyper hyper_;
    std::vector<DenseArray> m_, v_;
    std::vector<bool> decay_;
    std::size_t t_ = 0;
};

struct SampleGradient {
    double loss = 0.0;
    double main_loss = 0.0;
    std::vector<float> prediction;
    std::vector<DenseArray> grads;  // NetworkParams::named() order
};

/// One train-mode forward/backward on a single sample: main-path task loss
/// plus aux_loss_weight times the auxiliary-path task loss.
SampleGradient sample_gradient(const NetworkParams& params, const NetworkConfig& cfg,
                               const Sample& sample, std::uint64_t seed);

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Throws DivergenceError when the loss becomes non-finite.
TrainResult train(const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const NetworkConfig& cfg, const TrainHyper& hyper,
                  const EpochCallback& on_epoch = {});

EvalResult evaluate(const std::vector<Sample>& data, const NetworkParams& params,
                    const NetworkConfig& cfg, std::uint64_t seed);

/// Reads VTM_THREADS; defaults to 1.
int env_thread_cap();

}  // namespace vtm
