// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#include "vtm/cost_model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

#include "vtm/errors.hpp"
#include "vtm/rng.hpp"

namespace vtm {

std::uint64_t attention_flops(std::uint64_t n, std::uint64_t c_in, std::uint64_t d,
                              std::uint64_t heads, bool include_projections) {
    const std::uint64_t proj = include_projections ? 2 * n * c_in * d * 3 : 0;
    return proj + 2 * n * n * d + n * n * heads * 5 + 2 * n * n * d;
}

std::uint64_t CostReport::total_flops() const {
    std::uint64_t t = 0;
    for (const CostRow& r : rows) t += r.flops;
    return t;
}

std::uint64_t CostReport::peak_floats() const {
    std::uint64_t m = 0;
    for (const CostRow& r : rows) m = std::max(m, r.peak_floats);
    return m;
}

void CostReport::write_csv(std::ostream& os) const {
    os << "block,chunk_len,n_in,n_out,flops,peak_floats\n";
    for (const CostRow& r : rows) {
        os << r.block << ',' << r.chunk_len << ',' << r.n_in << ',' << r.n_out << ',' << r.flops << ','
           << r.peak_floats << '\n';
    }
}

CostReport schedule_cost(const NetworkConfig& cfg, const GridShape& grid) {
    cfg.validate();
    if (grid.frames < 1 || grid.rows < 1 || grid.cols < 1) throw ValidationError("schedule_cost: empty grid");
    const int frames = cfg.padded_frames(grid.frames);
    const std::uint64_t per_frame = static_cast<std::uint64_t>(grid.rows) * static_cast<std::uint64_t>(grid.cols);
    const auto heads = static_cast<std::uint64_t>(cfg.heads);

    // Token count of each current chunk-of-previous-block, frame-ordered.
    std::vector<std::uint64_t> units(static_cast<std::size_t>(frames), per_frame);
    int unit_len = 1;

    CostReport report;
    for (int b = 0; b < kNumBlocks; ++b) {
        const int len = cfg.chunk_lengths[static_cast<std::size_t>(b)];
        const auto c = static_cast<std::uint64_t>(cfg.block_width(b));
        const int group = len / unit_len;
        BlockTrace& bt = report.trace[static_cast<std::size_t>(b)];
        bt.chunk_len = len;
        CostRow row;
        row.block = b + 1;
        row.chunk_len = len;
        std::uint64_t widest = 0;
        std::vector<std::uint64_t> next;
        for (std::size_t u = 0; u < units.size(); u += static_cast<std::size_t>(group)) {
            std::uint64_t n = 0;
            for (std::size_t k = u; k < u + static_cast<std::size_t>(group); ++k) n += units[k];
            const auto out = static_cast<std::uint64_t>(
                merged_count(static_cast<std::size_t>(n), cfg.merge.gamma, cfg.merge.r_fraction));
            bt.n_in.push_back(n);
            bt.n_out.push_back(out);
            row.n_in += n;
            row.n_out += out;
            row.flops += attention_flops(n, c, c, heads, true);
            widest = std::max(widest, n);
            next.push_back(out);
        }
        row.peak_floats = row.n_in * c + row.n_out * (c / 2) + 4 * widest * c + heads * widest * widest;
        report.rows.push_back(row);
        units = std::move(next);
        unit_len = len;
    }
    return report;
}

Throughput measure_throughput(const NetworkConfig& cfg, const NetworkParams& params,
                              const GridShape& grid, int trials, std::uint64_t seed, int warmup) {
    if (trials < 1) throw ConfigError("measure_throughput: trials must be >= 1");
    GridShape g = grid;
    g.channels = cfg.channels;
    DenseArray features = DenseArray::matrix(g.tokens(), static_cast<std::size_t>(g.channels));
    Rng rng(seed);
    for (float& v : features.data()) v = static_cast<float>(rng.normal());
    const TokenTensor clip = TokenTensor::from_grid(std::move(features), g);

    using clock = std::chrono::steady_clock;
    for (int i = 0; i < warmup; ++i) (void)network_forward(clip, cfg, params, seed);
    Throughput t;
    for (int i = 0; i < trials; ++i) {
        const auto start = clock::now();
        (void)network_forward(clip, cfg, params, seed);
        const double secs = std::chrono::duration<double>(clock::now() - start).count();
        t.trials.push_back(1.0 / std::max(secs, 1e-12));
    }
    double sum = 0.0;
    for (double v : t.trials) sum += v;
    t.mean = sum / static_cast<double>(t.trials.size());
    double ss = 0.0;
    for (double v : t.trials) ss += (v - t.mean) * (v - t.mean);
    t.stddev = t.trials.size() > 1 ? std::sqrt(ss / static_cast<double>(t.trials.size() - 1)) : 0.0;
    return t;
}

}  // namespace vtm
