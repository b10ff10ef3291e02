// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#include "vtm/merge_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "vtm/errors.hpp"

namespace vtm {

PartitionResult partition_uniform(std::size_t n, int gamma) {
    if (gamma < 2) throw ConfigError("partition_uniform: gamma must be >= 2");
    const auto g = static_cast<std::size_t>(gamma);
    if (n < g) {
        throw ValidationError("partition_uniform: too few tokens (" + std::to_string(n) +
                              " < gamma " + std::to_string(gamma) + ")");
    }
    const std::size_t full = (n / g) * g;
    PartitionResult p;
    p.target_idx.reserve(n / g);
    p.source_idx.reserve(n - n / g);
    for (std::size_t i = 0; i < n; ++i) {
        if (i < full && i % g == 0) {
            p.target_idx.push_back(i);
        } else {
            p.source_idx.push_back(i);
        }
    }
    return p;
}

PartitionResult partition_uniform(const TokenTensor& t, int gamma) {
    return partition_uniform(t.count(), gamma);
}

PartitionResult partition_from_targets(std::size_t n, std::span<const std::size_t> targets) {
    std::vector<char> is_target(n, 0);
    for (std::size_t i : targets) {
        if (i >= n) {
            throw IndexError("target index " + std::to_string(i) + " out of range for " +
                             std::to_string(n) + " tokens");
        }
        if (is_target[i]) throw ValidationError("duplicate target index " + std::to_string(i));
        is_target[i] = 1;
    }
    PartitionResult p;
    for (std::size_t i = 0; i < n; ++i) (is_target[i] ? p.target_idx : p.source_idx).push_back(i);
    return p;
}

MatchResult match_sources(const DenseArray& keys, const PartitionResult& part) {
    if (part.target_idx.empty()) throw ValidationError("match_sources: no target tokens");
    const std::size_t n = keys.rows(), d = keys.cols();
    std::vector<double> norm(n, 0.0);
    auto check_row = [&](std::size_t i) {
        if (i >= n) {
            throw IndexError("match_sources: token " + std::to_string(i) + " has no key row");
        }
        double s = 0.0;
        for (float v : keys.row(i)) s += static_cast<double>(v) * v;
        if (s == 0.0) {
            throw DomainError("match_sources: key row " + std::to_string(i) + " has zero norm");
        }
        norm[i] = std::sqrt(s);
    };
    for (std::size_t i : part.target_idx) check_row(i);
    for (std::size_t j : part.source_idx) check_row(j);

    MatchResult m;
    m.match_of.resize(part.source_idx.size());
    m.score_of.resize(part.source_idx.size());
    for (std::size_t s = 0; s < part.source_idx.size(); ++s) {
        const std::size_t j = part.source_idx[s];
        const float* kj = keys.data().data() + j * d;
        double best = -2.0;
        std::size_t best_i = part.target_idx.front();
        for (std::size_t i : part.target_idx) {
            const float* ki = keys.data().data() + i * d;
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) dot += static_cast<double>(ki[c]) * kj[c];
            const double cos = dot / (norm[i] * norm[j]);
            if (cos > best) {
                best = cos;
                best_i = i;
            }
        }
        m.match_of[s] = static_cast<std::int64_t>(best_i);
        m.score_of[s] = std::clamp(best, -1.0, 1.0);
    }
    return m;
}

MatchResult limit_matches(const MatchResult& m, std::size_t r) {
    std::vector<std::size_t> matched;
    for (std::size_t s = 0; s < m.match_of.size(); ++s) {
        if (m.match_of[s] != MatchResult::kUnmatched) matched.push_back(s);
    }
    if (r > matched.size()) {
        throw ValidationError("limit_matches: r = " + std::to_string(r) + " exceeds " +
                              std::to_string(matched.size()) + " matched sources");
    }
    std::stable_sort(matched.begin(), matched.end(), [&](std::size_t a, std::size_t b) {
        return m.score_of[a] > m.score_of[b];
    });
    MatchResult out = m;
    for (std::size_t k = r; k < matched.size(); ++k) out.match_of[matched[k]] = MatchResult::kUnmatched;
    return out;
}

MergePlan plan_merge(const TokenTensor& t, const PartitionResult& part, const MatchResult& m,
                     Pooling pooling) {
    const std::size_t n = t.count();
    if (m.match_of.size() != part.source_idx.size()) {
        throw ValidationError("merge: inconsistent match/partition (" +
                              std::to_string(m.match_of.size()) + " matches for " +
                              std::to_string(part.source_idx.size()) + " sources)");
    }
    if (part.target_idx.size() + part.source_idx.size() != n) {
        throw ValidationError("merge: partition does not cover " + std::to_string(n) + " tokens");
    }
    // representative input index of each input token
    std::vector<std::size_t> rep(n);
    std::vector<char> is_target(n, 0);
    for (std::size_t i : part.target_idx) {
        if (i >= n) throw ValidationError("merge: inconsistent match/partition (target out of range)");
        is_target[i] = 1;
        rep[i] = i;
    }
    for (std::size_t s = 0; s < part.source_idx.size(); ++s) {
        const std::size_t j = part.source_idx[s];
        if (j >= n || is_target[j]) {
            throw ValidationError("merge: inconsistent match/partition (bad source index)");
        }
        const std::int64_t mj = m.match_of[s];
        if (mj == MatchResult::kUnmatched) {
            rep[j] = j;
        } else {
            if (mj < 0 || static_cast<std::size_t>(mj) >= n || !is_target[static_cast<std::size_t>(mj)]) {
                throw ValidationError("merge: inconsistent match/partition (source " + std::to_string(j) +
                                      " matched to non-target " + std::to_string(mj) + ")");
            }
            rep[j] = static_cast<std::size_t>(mj);
        }
    }

    MergePlan plan;
    std::vector<std::size_t> out_of_rep(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        if (rep[i] == i) out_of_rep[i] = plan.num_outputs++;
    }
    plan.segment_of.resize(n);
    plan.weights.resize(n);
    plan.constituents.assign(plan.num_outputs, {});
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t o = out_of_rep[rep[i]];
        plan.segment_of[i] = o;
        plan.constituents[o].push_back(i);
        switch (pooling) {
            case Pooling::average: plan.weights[i] = 1.0; break;
            case Pooling::size_weighted: plan.weights[i] = static_cast<double>(t.sizes[i]); break;
            case Pooling::motion_weighted:
                plan.weights[i] = static_cast<double>(t.motion[i]) + kMotionEpsilon;
                break;
        }
    }
    plan.coords.resize(plan.num_outputs);
    plan.sizes.assign(plan.num_outputs, 0);
    plan.motion.resize(plan.num_outputs);
    std::vector<double> motion_mass(plan.num_outputs, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t o = plan.segment_of[i];
        if (rep[i] == i) plan.coords[o] = t.coords[i];
        plan.sizes[o] += t.sizes[i];
        motion_mass[o] += static_cast<double>(t.sizes[i]) * t.motion[i];
    }
    for (std::size_t o = 0; o < plan.num_outputs; ++o) {
        plan.motion[o] = static_cast<float>(motion_mass[o] / static_cast<double>(plan.sizes[o]));
    }
    return plan;
}

DenseArray pool_features(const DenseArray& features, const MergePlan& plan) {
    const std::size_t n = features.rows(), c = features.cols();
    if (plan.segment_of.size() != n) {
        throw ShapeError("pool_features: plan covers " + std::to_string(plan.segment_of.size()) +
                         " tokens, features have " + std::to_string(n));
    }
    std::vector<double> acc(plan.num_outputs * c, 0.0);
    std::vector<double> total(plan.num_outputs, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t o = plan.segment_of[i];
        const double w = plan.weights[i];
        total[o] += w;
        auto row = features.row(i);
        for (std::size_t k = 0; k < c; ++k) acc[o * c + k] += w * row[k];
    }
    DenseArray out = DenseArray::matrix(plan.num_outputs, c);
    for (std::size_t o = 0; o < plan.num_outputs; ++o)
        for (std::size_t k = 0; k < c; ++k) out(o, k) = static_cast<float>(acc[o * c + k] / total[o]);
    return out;
}

TokenTensor apply_plan(const TokenTensor& t, const MergePlan& plan) {
    TokenTensor out;
    out.features = pool_features(t.features, plan);
    out.coords = plan.coords;
    out.sizes = plan.sizes;
    out.motion = plan.motion;
    out.grid = t.grid;
    return out;
}

TokenTensor merge(const TokenTensor& t, const PartitionResult& part, const MatchResult& m,
                  Pooling pooling) {
    return apply_plan(t, plan_merge(t, part, m, pooling));
}

MergePlan plan_merge_step(const TokenTensor& t, const DenseArray& keys, const MergeConfig& cfg,
                          std::span<const std::size_t> targets) {
    cfg.validate();
    if (targets.empty()) throw ValidationError("merge_step: no target tokens");
    if (keys.rows() != t.count()) {
        throw ShapeError("merge_step: " + std::to_string(keys.rows()) + " key rows for " +
                         std::to_string(t.count()) + " tokens");
    }
    const PartitionResult part = partition_from_targets(t.count(), targets);
    const std::size_t r = cfg.merge_count(part.source_idx.size());
    MatchResult m;
    if (r == 0) {
        m.match_of.assign(part.source_idx.size(), MatchResult::kUnmatched);
        m.score_of.assign(part.source_idx.size(), 0.0);
    } else {
        m = limit_matches(match_sources(keys, part), r);
    }
    return plan_merge(t, part, m, cfg.pooling);
}

TokenTensor merge_step(const TokenTensor& t, const DenseArray& keys, const MergeConfig& cfg,
                       std::span<const std::size_t> targets) {
    return apply_plan(t, plan_merge_step(t, keys, cfg, targets));
}

}  // namespace vtm
