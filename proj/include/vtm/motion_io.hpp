// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "vtm/token_types.hpp"

namespace vtm {

/// Per-cell motion magnitudes for L frames of H x W, frame-major row-major.
struct MotionGrid {
    int frames = 0;
    int rows = 0;
    int cols = 0;
    std::vector<float> values;

    float at(int l, int h, int w) const {
        return values[(static_cast<std::size_t>(l) * static_cast<std::size_t>(rows) +
                       static_cast<std::size_t>(h)) *
                          static_cast<std::size_t>(cols) +
                      static_cast<std::size_t>(w)];
    }
    float& at(int l, int h, int w) {
        return values[(static_cast<std::size_t>(l) * static_cast<std::size_t>(rows) +
                       static_cast<std::size_t>(h)) *
                          static_cast<std::size_t>(cols) +
                      static_cast<std::size_t>(w)];
    }
    static MotionGrid zeros(int frames, int rows, int cols);
    bool operator==(const MotionGrid&) const = default;
};

// File layout: "VTMM1\0", u32 L, u32 H, u32 W (little-endian), then L*H*W
// little-endian f32 magnitudes.
MotionGrid load_motion(const std::filesystem::path& path);
void save_motion(const std::filesystem::path& path, const MotionGrid& grid);

enum class MotionKind { static_scene, moving_box, camera_pan };

struct MotionSynthParams {
    int box_rows = 2;
    int box_cols = 2;
    /// Box top-left in the first frame and per-frame displacement.
    int start_row = 0;
    int start_col = 0;
    int step_row = 0;
    int step_col = 1;
    float box_magnitude = 10.0f;
    float background_magnitude = 0.0f;
    /// Uniform magnitude added everywhere by camera_pan.
    float pan_magnitude = 5.0f;
    /// Randomize the starting position from the seed.
    bool random_start = false;
};

/// static: zeros. moving_box: box_magnitude on a rectangle translating by
/// (step_row, step_col) per frame (wrapping at the grid edges),
/// background_magnitude elsewhere. camera_pan: moving_box plus
/// pan_magnitude on every cell.
MotionGrid synth_motion(MotionKind kind, const GridShape& grid, const MotionSynthParams& params,
                        std::uint64_t seed);

/// Copies the grid value at each token's coordinates into its motion field.
TokenTensor attach_motion(const TokenTensor& t, const MotionGrid& grid);

}  // namespace vtm
