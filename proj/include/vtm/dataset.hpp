// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "vtm/train.hpp"

namespace vtm {

enum class MotionMode { none, aligned, adversarial };

MotionMode parse_motion_mode(std::string_view s);
std::string_view to_string(MotionMode m);

/// Planted-saliency video classification task. Every token is iid
/// N(0, sigma^2) noise; k_sig tokens per frame form a small object moving
/// along a straight wrapping trajectory and additionally carry the class
/// pattern (amplitude `signal_amplitude` per channel on average).
struct SynthConfig {
    int classes = 4;
    int samples_per_class = 32;
    GridShape grid{16, 8, 8, 64};
    int k_sig = 6;
    double sigma = 0.5;
    double signal_amplitude = 1.0;
    /// Amplitude of a class-independent direction added to every object
    /// token (0 disables it).
    double objectness = 0.0;
    /// Adds a second object (same size and velocity, never overlapping)
    /// carrying the pattern of a different class and no objectness. It
    /// counts as background for masks and motion.
    bool distractor = false;
    /// aligned: motion_magnitude on the object, 0 elsewhere.
    /// adversarial: motion_magnitude on the background, 0 on the object.
    MotionMode motion = MotionMode::none;
    float motion_magnitude = 10.0f;
    /// Fraction of each class held out for validation.
    double val_fraction = 0.25;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticDataset {
    std::vector<Sample> train;
    std::vector<Sample> val;
};

/// Deterministic given cfg.seed. Classes are balanced in both splits.
SyntheticDataset synthesize(const SynthConfig& cfg);

/// Object cells of frame `frame` for a trajectory starting at (r0, c0) with
/// per-frame velocity (vr, vc): the first k cells, row-major, of a block
/// ceil(sqrt(k)) wide, wrapped at the grid edges.
std::vector<Coord> object_cells(const GridShape& grid, int k, int frame, int r0, int c0, int vr, int vc);

/// One archive per split: "features" (S, L, H, W, C), "labels" (S),
/// "masks" (S, L, H, W), "motion" (S, L, H, W).
void save_split(const std::filesystem::path& path, const std::vector<Sample>& samples);
std::vector<Sample> load_split(const std::filesystem::path& path);

}  // namespace vtm
