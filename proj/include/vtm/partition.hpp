// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "vtm/token_types.hpp"

// Target-token selection rules. Every function returns exactly
// floor(N / gamma) distinct indices in ascending order.
namespace vtm {

std::vector<std::size_t> targets_naive(const TokenTensor& t, int gamma);

/// Center region: the floor(H/2) x floor(W/2) block at offset
/// (floor(H/4), floor(W/4)) of every frame.
bool in_center_region(const Coord& c, const GridShape& grid);

/// Half of the targets (rounded up) come from the center region, picked by a
/// mod-gamma/2 rule; the rest from the boundary by a mod-ceil(3 gamma/2) rule.
std::vector<std::size_t> targets_center(const TokenTensor& t, int gamma);
/// Mirror of targets_center: the dense rule runs over the boundary.
std::vector<std::size_t> targets_boundary(const TokenTensor& t, int gamma);

/// Region factors used by the center/boundary rules.
int dense_factor(int gamma);
int sparse_factor(int gamma);

/// Draws `count` distinct indices without replacement with successive
/// softmax(weights) probabilities (Gumbel-top-k).
std::vector<std::size_t> sample_targets_weighted(std::span<const double> weights, std::size_t count,
                                                 std::uint64_t seed);

std::vector<std::size_t> targets_motion(const TokenTensor& t, int gamma, std::uint64_t seed);
std::vector<std::size_t> targets_saliency(std::span<const double> saliency, int gamma,
                                          std::uint64_t seed);

/// Dispatch for the non-learnable strategies; `saliency` is used only by the
/// learnable strategy.
std::vector<std::size_t> select_targets(const TokenTensor& t, Strategy strategy, int gamma,
                                        std::span<const double> saliency, std::uint64_t seed);

}  // namespace vtm
