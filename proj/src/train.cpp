// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#include "vtm/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <string>
#include <thread>

#include "vtm/errors.hpp"
#include "vtm/rng.hpp"

namespace vtm {

namespace {

void add_into(std::vector<DenseArray>& acc, const std::vector<DenseArray>& g) {
    for (std::size_t k = 0; k < acc.size(); ++k)
        for (std::size_t i = 0; i < acc[k].numel(); ++i) acc[k][i] += g[k][i];
}

std::size_t argmax(const std::vector<float>& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace

int env_thread_cap() {
    if (const char* v = std::getenv("VTM_THREADS")) {
        const int n = std::atoi(v);
        if (n > 0) return n;
    }
    return 1;
}

double scheduled_lr(const TrainHyper& h, std::size_t step, std::size_t total) {
    const auto warm = static_cast<std::size_t>(std::llround(h.warmup_fraction * static_cast<double>(total)));
    if (step < warm) return h.lr * static_cast<double>(step + 1) / static_cast<double>(warm);
    if (total <= warm) return h.lr;
    const double progress = static_cast<double>(step - warm) / static_cast<double>(total - warm);
    return 0.5 * h.lr * (1.0 + std::cos(3.141592653589793 * progress));
}

AdamW::AdamW(const NetworkParams& params, const TrainHyper& hyper) : hyper_(hyper) {
    for (const auto& [name, arr] : params.named()) {
        m_.emplace_back(arr->shape(), 0.0f);
        v_.emplace_back(arr->shape(), 0.0f);
        const bool norm_or_bias = name.find("ln") != std::string::npos || name.ends_with(".b");
        decay_.push_back(!norm_or_bias);
    }
}

void AdamW::step(NetworkParams& params, const std::vector<DenseArray>& grads, double lr) {
    ++t_;
    const double b1 = hyper_.beta1, b2 = hyper_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    auto named = params.named();
    for (std::size_t k = 0; k < named.size(); ++k) {
        DenseArray& p = *named[k].second;
        const DenseArray& g = grads[k];
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double gi = g[i];
            const double mi = b1 * m_[k][i] + (1.0 - b1) * gi;
            const double vi = b2 * v_[k][i] + (1.0 - b2) * gi * gi;
            m_[k][i] = static_cast<float>(mi);
            v_[k][i] = static_cast<float>(vi);
            double pi = p[i];
            if (decay_[k]) pi -= lr * hyper_.weight_decay * pi;
            pi -= lr * (mi / c1) / (std::sqrt(vi / c2) + hyper_.adam_eps);
            p[i] = static_cast<float>(pi);
        }
    }
}

SampleGradient sample_gradient(const NetworkParams& params, const NetworkConfig& cfg,
                               const Sample& sample, std::uint64_t seed) {
    ad::Graph g;
    const BoundNetwork net = bind(g, params, cfg.heads);
    const GraphForward fw = network_forward_graph(g, net, sample.tokens, cfg, Mode::train, seed);
    auto task_loss = [&](ad::Var pred) {
        if (cfg.head_type == HeadType::classify) {
            const std::size_t label = sample.label;
            return ad::softmax_cross_entropy(pred, std::span<const std::size_t>(&label, 1));
        }
        return ad::mse(pred, DenseArray::scalar(sample.target));
    };
    ad::Var main = task_loss(fw.prediction);
    ad::Var loss = main;
    if (fw.aux_prediction && cfg.aux_loss_weight > 0.0) {
        loss = ad::add(main, ad::scale(task_loss(*fw.aux_prediction), cfg.aux_loss_weight));
    }
    g.backward(loss);

    SampleGradient out;
    out.loss = loss.value()[0];
    out.main_loss = main.value()[0];
    out.prediction.assign(fw.prediction.value().data().begin(), fw.prediction.value().data().end());
    for (const ad::Var& v : net.all) out.grads.push_back(v.grad());
    return out;
}

TrainResult train(const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const NetworkConfig& cfg, const TrainHyper& hyper, const EpochCallback& on_epoch) {
    if (train_set.empty()) throw DataError("train: empty training set");
    if (hyper.batch < 1 || hyper.epochs < 0) throw ConfigError("train: batch must be >= 1 and epochs >= 0");
    cfg.validate();

    TrainResult result;
    result.params = NetworkParams::init(cfg, hyper.seed);
    AdamW opt(result.params, hyper);
    const std::size_t n = train_set.size();
    const auto batch = static_cast<std::size_t>(hyper.batch);
    const std::size_t steps_per_epoch = (n + batch - 1) / batch;
    const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(hyper.epochs);
    std::size_t step = 0;

    std::vector<std::size_t> order(n);
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle(mix_seed(hyper.seed, 0x5eed0000ULL + static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

        EpochMetrics m;
        m.epoch = epoch + 1;
        double loss_sum = 0.0, metric_sum = 0.0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t count = std::min(batch, n - start);
            std::vector<SampleGradient> items(count);
            parallel_for(count, hyper.threads, [&](std::size_t j) {
                const std::size_t idx = order[start + j];
                const std::uint64_t s = mix_seed(mix_seed(hyper.seed, static_cast<std::uint64_t>(epoch) + 1),
                                                 idx);
                items[j] = sample_gradient(result.params, cfg, train_set[idx], s);
            });
            std::vector<DenseArray> grads = std::move(items[0].grads);
            for (std::size_t j = 1; j < count; ++j) add_into(grads, items[j].grads);
            const float inv = 1.0f / static_cast<float>(count);
            for (auto& gk : grads)
                for (float& v : gk.data()) v *= inv;
            for (std::size_t j = 0; j < count; ++j) {
                if (!std::isfinite(items[j].loss)) {
                    throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                                          ", step " + std::to_string(step + 1));
                }
                loss_sum += items[j].loss;
                const Sample& s = train_set[order[start + j]];
                if (cfg.head_type == HeadType::classify) {
                    metric_sum += argmax(items[j].prediction) == s.label ? 1.0 : 0.0;
                } else {
                    const double d = items[j].prediction[0] - s.target;
                    metric_sum += d * d;
                }
            }
            for (const auto& gk : grads) {
                if (!all_finite(gk)) throw DivergenceError("train: non-finite gradient");
            }
            const double lr = scheduled_lr(hyper, step, total_steps);
            m.lr = lr;
            opt.step(result.params, grads, lr);
            ++step;
        }
        m.train_loss = loss_sum / static_cast<double>(n);
        m.train_metric = metric_sum / static_cast<double>(n);
        if (!val_set.empty()) {
            const EvalResult ev = evaluate(val_set, result.params, cfg, hyper.seed);
            m.val_metric = cfg.head_type == HeadType::classify ? ev.accuracy : ev.mse;
            m.saliency_signal = ev.saliency_signal;
            m.saliency_background = ev.saliency_background;
        }
        result.log.push_back(m);
        if (on_epoch) on_epoch(m);
    }
    return result;
}

EvalResult evaluate(const std::vector<Sample>& data, const NetworkParams& params,
                    const NetworkConfig& cfg, std::uint64_t seed) {
    EvalResult r;
    if (data.empty()) return r;
    double correct = 0.0, sq = 0.0;
    double sig_sum = 0.0, bg_sum = 0.0;
    std::size_t sig_n = 0, bg_n = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Sample& s = data[i];
        const Prediction p = network_forward(s.tokens, cfg, params, mix_seed(seed, 0xe0a1 + i));
        if (i == 0) r.trace = p.trace;
        if (cfg.head_type == HeadType::classify) {
            const std::size_t pred = argmax(p.values);
            r.predictions.push_back(pred);
            correct += pred == s.label ? 1.0 : 0.0;
        } else {
            const double d = p.values[0] - s.target;
            sq += d * d;
        }
        if (!s.mask.empty()) {
            r.has_masks = true;
            for (std::size_t t = 0; t < s.mask.size(); ++t) {
                if (s.mask[t]) {
                    sig_sum += p.saliency[t];
                    ++sig_n;
                } else {
                    bg_sum += p.saliency[t];
                    ++bg_n;
                }
            }
        }
    }
    r.accuracy = correct / static_cast<double>(data.size());
    r.mse = sq / static_cast<double>(data.size());
    r.saliency_signal = sig_n ? sig_sum / static_cast<double>(sig_n) : 0.0;
    r.saliency_background = bg_n ? bg_sum / static_cast<double>(bg_n) : 0.0;
    return r;
}

}  // namespace vtm
