// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vtm/dense_array.hpp"
#include "vtm/token_types.hpp"

namespace vtm {

/// Every gamma-th token is a target. Only complete groups of gamma tokens
/// contribute a target, so |targets| == floor(n / gamma).
PartitionResult partition_uniform(std::size_t n, int gamma);
PartitionResult partition_uniform(const TokenTensor& t, int gamma);

/// Partition with the given targets; sources are the ascending complement.
PartitionResult partition_from_targets(std::size_t n, std::span<const std::size_t> targets);

/// Each source picks the target with the highest key cosine similarity
/// (lowest target index wins ties).
MatchResult match_sources(const DenseArray& keys, const PartitionResult& part);

/// Keeps the r matched sources with the highest scores (lower source
/// position wins ties at the cutoff) and unmatches the rest.
MatchResult limit_matches(const MatchResult& m, std::size_t r);

/// How a merge maps input tokens onto output tokens.
struct MergePlan {
    std::size_t num_outputs = 0;
    std::vector<std::size_t> segment_of;  // input token -> output token
    std::vector<double> weights;          // pooling weight per input token
    /// Input indices per output token, representative first then ascending.
    std::vector<std::vector<std::size_t>> constituents;
    std::vector<Coord> coords;
    std::vector<std::int64_t> sizes;
    std::vector<float> motion;
};

/// Output tokens are ordered by their representative's input index: the
/// target for merged groups, the token itself otherwise.
MergePlan plan_merge(const TokenTensor& t, const PartitionResult& part, const MatchResult& m,
                     Pooling pooling);

/// Applies the plan's pooling to a feature matrix (double accumulation).
DenseArray pool_features(const DenseArray& features, const MergePlan& plan);

TokenTensor apply_plan(const TokenTensor& t, const MergePlan& plan);

TokenTensor merge(const TokenTensor& t, const PartitionResult& part, const MatchResult& m,
                  Pooling pooling);

/// Partition with `targets`, match on `keys`, keep R = floor(r_fraction * |S|)
/// matches and merge.
MergePlan plan_merge_step(const TokenTensor& t, const DenseArray& keys, const MergeConfig& cfg,
                          std::span<const std::size_t> targets);
TokenTensor merge_step(const TokenTensor& t, const DenseArray& keys, const MergeConfig& cfg,
                       std::span<const std::size_t> targets);

/// Motion weights are floored by this to keep static scenes well defined.
inline constexpr double kMotionEpsilon = 1e-6;

}  // namespace vtm
