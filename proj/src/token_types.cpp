// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#include "vtm/token_types.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "vtm/errors.hpp"

namespace vtm {

std::int64_t TokenTensor::total_size() const noexcept {
    return std::accumulate(sizes.begin(), sizes.end(), std::int64_t{0});
}

TokenTensor TokenTensor::from_grid(DenseArray features, GridShape grid) {
    TokenTensor t;
    const std::size_t n = grid.tokens();
    t.coords.reserve(n);
    for (int l = 0; l < grid.frames; ++l)
        for (int h = 0; h < grid.rows; ++h)
            for (int w = 0; w < grid.cols; ++w) t.coords.push_back({l, h, w});
    t.sizes.assign(n, 1);
    t.motion.assign(n, 0.0f);
    t.features = std::move(features);
    t.grid = grid;
    return t;
}

void validate(const TokenTensor& t) {
    if (t.features.rank() != 2) {
        throw ValidationError("features: expected a matrix, got shape " + t.features.shape_string());
    }
    const std::size_t n = t.features.rows();
    if (t.coords.size() != n) {
        throw ValidationError("coords: coordinate count mismatch (" + std::to_string(t.coords.size()) +
                              " coords for " + std::to_string(n) + " tokens)");
    }
    if (t.sizes.size() != n) {
        throw ValidationError("sizes: size count mismatch (" + std::to_string(t.sizes.size()) +
                              " sizes for " + std::to_string(n) + " tokens)");
    }
    if (t.motion.size() != n) {
        throw ValidationError("motion: motion count mismatch (" + std::to_string(t.motion.size()) +
                              " values for " + std::to_string(n) + " tokens)");
    }
    if (t.grid.channels > 0 && t.features.cols() != static_cast<std::size_t>(t.grid.channels)) {
        throw ValidationError("features: channel count " + std::to_string(t.features.cols()) +
                              " differs from grid channels " + std::to_string(t.grid.channels));
    }
    for (std::size_t i = 0; i < n; ++i) {
        const Coord& c = t.coords[i];
        if (c.frame < 0 || c.frame >= t.grid.frames || c.row < 0 || c.row >= t.grid.rows ||
            c.col < 0 || c.col >= t.grid.cols) {
            throw ValidationError("coords: coordinate out of grid at token " + std::to_string(i));
        }
        if (t.sizes[i] < 1) {
            throw ValidationError("sizes: non-positive size at token " + std::to_string(i));
        }
        if (!(t.motion[i] >= 0.0f) || !std::isfinite(t.motion[i])) {
            throw ValidationError("motion: negative or non-finite magnitude at token " +
                                  std::to_string(i));
        }
    }
    if (!all_finite(t.features)) throw ValidationError("features: non-finite value");
}

std::size_t MatchResult::matched_count() const noexcept {
    std::size_t n = 0;
    for (auto m : match_of) n += m != kUnmatched;
    return n;
}

Pooling parse_pooling(std::string_view s) {
    if (s == "average") return Pooling::average;
    if (s == "size_weighted") return Pooling::size_weighted;
    if (s == "motion_weighted") return Pooling::motion_weighted;
    throw ConfigError("unknown pooling mode '" + std::string(s) + "'");
}

Strategy parse_strategy(std::string_view s) {
    if (s == "naive") return Strategy::naive;
    if (s == "center") return Strategy::center;
    if (s == "boundary") return Strategy::boundary;
    if (s == "motion") return Strategy::motion;
    if (s == "learnable") return Strategy::learnable;
    throw ConfigError("unknown strategy '" + std::string(s) + "'");
}

std::string_view to_string(Pooling p) {
    switch (p) {
        case Pooling::average: return "average";
        case Pooling::size_weighted: return "size_weighted";
        case Pooling::motion_weighted: return "motion_weighted";
    }
    return "?";
}

std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::naive: return "naive";
        case Strategy::center: return "center";
        case Strategy::boundary: return "boundary";
        case Strategy::motion: return "motion";
        case Strategy::learnable: return "learnable";
    }
    return "?";
}

std::size_t MergeConfig::merge_count(std::size_t sources) const {
    return static_cast<std::size_t>(std::floor(r_fraction * static_cast<double>(sources) + 1e-9));
}

void MergeConfig::validate() const {
    if (gamma < 2) throw ConfigError("merge.gamma must be >= 2, got " + std::to_string(gamma));
    if (!(r_fraction >= 0.0 && r_fraction <= 1.0)) {
        throw ConfigError("merge.r_fraction must lie in [0, 1], got " + std::to_string(r_fraction));
    }
}

std::size_t merged_count(std::size_t n, int gamma, double r_fraction) {
    const auto g = static_cast<std::size_t>(gamma);
    if (n < g) return n;
    const std::size_t sources = n - n / g;
    MergeConfig cfg;
    cfg.gamma = gamma;
    cfg.r_fraction = r_fraction;
    return n - cfg.merge_count(sources);
}

}  // namespace vtm
