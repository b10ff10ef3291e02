// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "vtm/network.hpp"

namespace vtm {

/// Multiply-add = 2 ops; softmax = 5 ops per score (max-sub, exp, sum, divide
/// amortized). Projections are the three n x c_in by c_in x d products.
std::uint64_t attention_flops(std::uint64_t n, std::uint64_t c_in, std::uint64_t d,
                              std::uint64_t heads, bool include_projections = true);

struct CostRow {
    int block = 0;  // 1-based
    int chunk_len = 0;
    std::uint64_t n_in = 0;   // tokens entering the block, all chunks
    std::uint64_t n_out = 0;
    std::uint64_t flops = 0;  // attention only
    std::uint64_t peak_floats = 0;
};

struct CostReport {
    std::vector<CostRow> rows;
    TokenCountTrace trace;

    std::uint64_t total_flops() const;
    /// Largest per-block activation footprint.
    std::uint64_t peak_floats() const;
    void write_csv(std::ostream& os) const;
};

/// Traces the N - R count law through the chunk schedule for a clip of
/// grid.frames frames (padded like the network does). Per block the
/// footprint counts input and output features plus, for the largest chunk,
/// Q/K/V, the attention output and the heads x n x n score matrix.
CostReport schedule_cost(const NetworkConfig& cfg, const GridShape& grid);

struct Throughput {
    double mean = 0.0;    // samples per second
    double stddev = 0.0;
    std::vector<double> trials;
};

/// Times `trials` eval-mode forwards on one fixed random clip after
/// `warmup` discarded runs. Single-threaded.
Throughput measure_throughput(const NetworkConfig& cfg, const NetworkParams& params,
                              const GridShape& grid, int trials, std::uint64_t seed, int warmup = 3);

}  // namespace vtm
