// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "vtm/dense_array.hpp"

namespace vtm {

struct Coord {
    int frame = 0;
    int row = 0;
    int col = 0;
    bool operator==(const Coord&) const = default;
};

/// Spatiotemporal token grid: L frames of H x W patches with C channels.
struct GridShape {
    int frames = 0;
    int rows = 0;
    int cols = 0;
    int channels = 0;

    std::size_t tokens() const noexcept {
        return static_cast<std::size_t>(frames) * static_cast<std::size_t>(rows) *
               static_cast<std::size_t>(cols);
    }
    bool operator==(const GridShape&) const = default;
};

/// A set of N tokens (features N x C) plus per-token bookkeeping.
///
/// Tokens are stored flat in frame-major (frame, row, col) order. A token's
/// size counts the original patches it represents; merged tokens keep the
/// coordinates of their target token. Motion is a non-negative magnitude per
/// token and is all zeros when no motion source was attached.
struct TokenTensor {
    DenseArray features;
    std::vector<Coord> coords;
    std::vector<std::int64_t> sizes;
    std::vector<float> motion;
    GridShape grid;

    std::size_t count() const noexcept { return coords.size(); }
    std::int64_t total_size() const noexcept;

    /// Fresh token set for a full grid: every size 1, motion zero.
    static TokenTensor from_grid(DenseArray features, GridShape grid);
};

/// Throws ValidationError naming the first violated invariant.
void validate(const TokenTensor& t);

/// Target/source split of token indices (both ascending).
struct PartitionResult {
    std::vector<std::size_t> target_idx;
    std::vector<std::size_t> source_idx;
};

/// One entry per source (aligned with PartitionResult::source_idx). match_of
/// holds the matched target's token index, or kUnmatched.
struct MatchResult {
    static constexpr std::int64_t kUnmatched = -1;
    std::vector<std::int64_t> match_of;
    std::vector<double> score_of;

    std::size_t matched_count() const noexcept;
};

enum class Pooling { average, size_weighted, motion_weighted };
enum class Strategy { naive, center, boundary, motion, learnable };

Pooling parse_pooling(std::string_view s);
Strategy parse_strategy(std::string_view s);
std::string_view to_string(Pooling p);
std::string_view to_string(Strategy s);

struct MergeConfig {
    int gamma = 6;
    double r_fraction = 0.8;
    Pooling pooling = Pooling::average;
    Strategy strategy = Strategy::learnable;

    /// R = floor(r_fraction * sources). A 1e-9 guard absorbs binary
    /// representation error (0.29 * 100 must give 29).
    std::size_t merge_count(std::size_t sources) const;
    void validate() const;
};

/// Output token count of one merge step on n tokens: n - floor(r * (n - floor(n / gamma))).
/// Chunks with fewer than gamma tokens are left unmerged.
std::size_t merged_count(std::size_t n, int gamma, double r_fraction);

}  // namespace vtm
