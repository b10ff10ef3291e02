// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#include "vtm/partition.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "vtm/errors.hpp"
#include "vtm/merge_engine.hpp"
#include "vtm/rng.hpp"

namespace vtm {

namespace {

std::size_t target_count(std::size_t n, int gamma) {
    if (gamma < 2) throw ConfigError("gamma must be >= 2, got " + std::to_string(gamma));
    return n / static_cast<std::size_t>(gamma);
}

// Mod-rule candidates in a region, trimmed or extended to `want` tokens.
// Trimming drops the highest indices; extension adds the lowest unused ones.
std::vector<std::size_t> pick_in_region(const std::vector<std::size_t>& region, int factor,
                                        std::size_t want) {
    want = std::min(want, region.size());
    std::vector<std::size_t> picked;
    std::vector<char> used(region.size(), 0);
    for (std::size_t p = 0; p < region.size(); p += static_cast<std::size_t>(factor)) {
        picked.push_back(region[p]);
        used[p] = 1;
    }
    if (picked.size() > want) {
        picked.resize(want);
    } else {
        for (std::size_t p = 0; p < region.size() && picked.size() < want; ++p) {
            if (!used[p]) picked.push_back(region[p]);
        }
        std::sort(picked.begin(), picked.end());
    }
    return picked;
}

std::vector<std::size_t> region_concentrated(const TokenTensor& t, int gamma, bool center_dense) {
    if (t.grid.rows < 2 || t.grid.cols < 2) {
        throw ValidationError("region rule: grid too small (" + std::to_string(t.grid.rows) + "x" +
                              std::to_string(t.grid.cols) + ", need at least 2x2)");
    }
    const std::size_t total = target_count(t.count(), gamma);
    std::vector<std::size_t> center, boundary;
    for (std::size_t i = 0; i < t.count(); ++i) {
        (in_center_region(t.coords[i], t.grid) ? center : boundary).push_back(i);
    }
    const std::vector<std::size_t>& dense = center_dense ? center : boundary;
    const std::vector<std::size_t>& sparse = center_dense ? boundary : center;

    std::size_t want_dense = (total + 1) / 2;
    std::size_t want_sparse = total - want_dense;
    // Shift any shortfall to the other region so the count stays exact.
    if (want_dense > dense.size()) {
        want_sparse += want_dense - dense.size();
        want_dense = dense.size();
    }
    if (want_sparse > sparse.size()) {
        want_dense += want_sparse - sparse.size();
        want_sparse = sparse.size();
    }
    std::vector<std::size_t> out = pick_in_region(dense, dense_factor(gamma), want_dense);
    std::vector<std::size_t> rest = pick_in_region(sparse, sparse_factor(gamma), want_sparse);
    out.insert(out.end(), rest.begin(), rest.end());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

std::vector<std::size_t> targets_naive(const TokenTensor& t, int gamma) {
    return partition_uniform(t, gamma).target_idx;
}

bool in_center_region(const Coord& c, const GridShape& grid) {
    const int r0 = grid.rows / 4, c0 = grid.cols / 4;
    return c.row >= r0 && c.row < r0 + grid.rows / 2 && c.col >= c0 && c.col < c0 + grid.cols / 2;
}

int dense_factor(int gamma) { return std::max(1, gamma / 2); }
int sparse_factor(int gamma) { return (3 * gamma + 1) / 2; }

std::vector<std::size_t> targets_center(const TokenTensor& t, int gamma) {
    return region_concentrated(t, gamma, true);
}

std::vector<std::size_t> targets_boundary(const TokenTensor& t, int gamma) {
    return region_concentrated(t, gamma, false);
}

std::vector<std::size_t> sample_targets_weighted(std::span<const double> weights, std::size_t count,
                                                 std::uint64_t seed) {
    const std::size_t n = weights.size();
    if (count > n) {
        throw ValidationError("sample_targets_weighted: count " + std::to_string(count) +
                              " exceeds " + std::to_string(n) + " tokens");
    }
    Rng rng(seed);
    std::vector<double> key(n);
    for (std::size_t i = 0; i < n; ++i) key[i] = weights[i] + rng.gumbel();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          return key[a] > key[b] || (key[a] == key[b] && a < b);
                      });
    order.resize(count);
    std::sort(order.begin(), order.end());
    return order;
}

std::vector<std::size_t> targets_motion(const TokenTensor& t, int gamma, std::uint64_t seed) {
    std::vector<double> w(t.count(), 0.0);
    for (std::size_t i = 0; i < t.motion.size() && i < w.size(); ++i) w[i] = t.motion[i];
    return sample_targets_weighted(w, target_count(t.count(), gamma), seed);
}

std::vector<std::size_t> targets_saliency(std::span<const double> saliency, int gamma,
                                          std::uint64_t seed) {
    return sample_targets_weighted(saliency, target_count(saliency.size(), gamma), seed);
}

std::vector<std::size_t> select_targets(const TokenTensor& t, Strategy strategy, int gamma,
                                        std::span<const double> saliency, std::uint64_t seed) {
    switch (strategy) {
        case Strategy::naive: return targets_naive(t, gamma);
        case Strategy::center: return targets_center(t, gamma);
        case Strategy::boundary: return targets_boundary(t, gamma);
        case Strategy::motion: return targets_motion(t, gamma, seed);
        case Strategy::learnable:
            if (saliency.size() != t.count()) {
                throw ShapeError("select_targets: " + std::to_string(saliency.size()) +
                                 " saliency scores for " + std::to_string(t.count()) + " tokens");
            }
            return targets_saliency(saliency, gamma, seed);
    }
    throw ConfigError("select_targets: unknown strategy");
}

}  // namespace vtm
