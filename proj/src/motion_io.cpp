// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#include "vtm/motion_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "vtm/array_io.hpp"
#include "vtm/errors.hpp"
#include "vtm/rng.hpp"

namespace vtm {

namespace {

constexpr char kMotionMagic[6] = {'V', 'T', 'M', 'M', '1', '\0'};

}  // namespace

MotionGrid MotionGrid::zeros(int frames, int rows, int cols) {
    MotionGrid g{frames, rows, cols, {}};
    g.values.assign(static_cast<std::size_t>(frames) * static_cast<std::size_t>(rows) *
                        static_cast<std::size_t>(cols),
                    0.0f);
    return g;
}

MotionGrid load_motion(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open motion file " + path.string());
    char magic[sizeof kMotionMagic];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMotionMagic, sizeof magic) != 0) {
        throw FormatError("bad magic: " + path.string() + " is not a VTMM1 motion file");
    }
    const std::uint32_t l = io::read_u32(is);
    const std::uint32_t h = io::read_u32(is);
    const std::uint32_t w = io::read_u32(is);
    if (l == 0 || h == 0 || w == 0 || static_cast<std::uint64_t>(l) * h * w > (1ULL << 32)) {
        throw FormatError("motion file " + path.string() + " has invalid dims");
    }
    MotionGrid g = MotionGrid::zeros(static_cast<int>(l), static_cast<int>(h), static_cast<int>(w));
    try {
        io::read_f32s(is, g.values);
    } catch (const FormatError&) {
        throw FormatError("motion file " + path.string() + ": dim mismatch (payload shorter than " +
                          std::to_string(l) + "x" + std::to_string(h) + "x" + std::to_string(w) + ")");
    }
    if (is.peek() != std::char_traits<char>::eof()) {
        throw FormatError("motion file " + path.string() + ": dim mismatch (trailing bytes)");
    }
    for (float v : g.values) {
        if (!(v >= 0.0f) || !std::isfinite(v)) {
            throw FormatError("motion file " + path.string() + " contains a negative or non-finite magnitude");
        }
    }
    return g;
}

void save_motion(const std::filesystem::path& path, const MotionGrid& grid) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os.write(kMotionMagic, sizeof kMotionMagic);
    io::write_u32(os, static_cast<std::uint32_t>(grid.frames));
    io::write_u32(os, static_cast<std::uint32_t>(grid.rows));
    io::write_u32(os, static_cast<std::uint32_t>(grid.cols));
    io::write_f32s(os, grid.values);
    if (!os) throw DataError("write failed: " + path.string());
}

MotionGrid synth_motion(MotionKind kind, const GridShape& grid, const MotionSynthParams& params,
                        std::uint64_t seed) {
    if (grid.frames < 1 || grid.rows < 1 || grid.cols < 1) throw ValidationError("synth_motion: empty grid");
    MotionGrid g = MotionGrid::zeros(grid.frames, grid.rows, grid.cols);
    if (kind == MotionKind::static_scene) return g;

    if (params.box_rows < 1 || params.box_cols < 1 || params.box_rows > grid.rows ||
        params.box_cols > grid.cols) {
        throw ValidationError("synth_motion: box " + std::to_string(params.box_rows) + "x" +
                              std::to_string(params.box_cols) + " out of bounds for grid " +
                              std::to_string(grid.rows) + "x" + std::to_string(grid.cols));
    }
    int r0 = params.start_row, c0 = params.start_col;
    if (params.random_start) {
        Rng rng(seed);
        r0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(grid.rows)));
        c0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(grid.cols)));
    }
    if (r0 < 0 || r0 >= grid.rows || c0 < 0 || c0 >= grid.cols) {
        throw ValidationError("synth_motion: box start out of bounds");
    }
    const float base = params.background_magnitude + (kind == MotionKind::camera_pan ? params.pan_magnitude : 0.0f);
    for (int l = 0; l < grid.frames; ++l) {
        for (int h = 0; h < grid.rows; ++h)
            for (int w = 0; w < grid.cols; ++w) g.at(l, h, w) = base;
        const int top = ((r0 + l * params.step_row) % grid.rows + grid.rows) % grid.rows;
        const int left = ((c0 + l * params.step_col) % grid.cols + grid.cols) % grid.cols;
        for (int dr = 0; dr < params.box_rows; ++dr)
            for (int dc = 0; dc < params.box_cols; ++dc) {
                const int h = (top + dr) % grid.rows;
                const int w = (left + dc) % grid.cols;
                g.at(l, h, w) = params.box_magnitude +
                                (kind == MotionKind::camera_pan ? params.pan_magnitude : 0.0f);
            }
    }
    return g;
}

TokenTensor attach_motion(const TokenTensor& t, const MotionGrid& grid) {
    if (grid.frames != t.grid.frames || grid.rows != t.grid.rows || grid.cols != t.grid.cols) {
        throw ValidationError("motion grid mismatch: motion is " + std::to_string(grid.frames) + "x" +
                              std::to_string(grid.rows) + "x" + std::to_string(grid.cols) +
                              ", tokens are " + std::to_string(t.grid.frames) + "x" +
                              std::to_string(t.grid.rows) + "x" + std::to_string(t.grid.cols));
    }
    TokenTensor out = t;
    out.motion.resize(t.count());
    for (std::size_t i = 0; i < t.count(); ++i) {
        const Coord& c = t.coords[i];
        out.motion[i] = grid.at(c.frame, c.row, c.col);
    }
    return out;
}

}  // namespace vtm
