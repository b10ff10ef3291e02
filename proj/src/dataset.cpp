// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#include "vtm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include "vtm/array_io.hpp"
#include "vtm/errors.hpp"
#include "vtm/rng.hpp"

namespace vtm {

namespace {

constexpr std::uint64_t kPatternStream = 0x9a77;
constexpr std::uint64_t kSampleStream = 0x5a3e;

std::size_t cell_index(const GridShape& g, const Coord& c) {
    return (static_cast<std::size_t>(c.frame) * static_cast<std::size_t>(g.rows) +
            static_cast<std::size_t>(c.row)) *
               static_cast<std::size_t>(g.cols) +
           static_cast<std::size_t>(c.col);
}

Sample make_sample(const SynthConfig& cfg, const std::vector<std::vector<float>>& patterns,
                   const std::vector<float>& objectness, std::size_t label, std::uint64_t seed) {
    const GridShape& g = cfg.grid;
    const std::size_t n = g.tokens();
    const auto c = static_cast<std::size_t>(g.channels);
    Rng rng(seed);
    const int r0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(g.rows)));
    const int c0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(g.cols)));
    const int vr = static_cast<int>(rng.below(3)) - 1;
    const int vc = static_cast<int>(rng.below(3)) - 1;

    DenseArray features = DenseArray::matrix(n, c);
    for (float& v : features.data()) v = static_cast<float>(rng.normal() * cfg.sigma);
    Sample s;
    s.label = label;
    s.target = static_cast<float>(label);
    s.mask.assign(n, 0);
    for (int f = 0; f < g.frames; ++f) {
        for (const Coord& cell : object_cells(g, cfg.k_sig, f, r0, c0, vr, vc)) {
            const std::size_t i = cell_index(g, cell);
            s.mask[i] = 1;
            auto row = features.row(i);
            for (std::size_t j = 0; j < c; ++j) row[j] += patterns[label][j] + objectness[j];
        }
    }
    if (cfg.distractor) {
        const auto k = static_cast<std::size_t>(cfg.classes);
        const std::size_t other = (label + 1 + rng.below(k - 1)) % k;
        // Same velocity as the object, so one non-overlapping start suffices.
        std::vector<std::uint8_t> first(n, 0);
        for (const Coord& cell : object_cells(g, cfg.k_sig, 0, r0, c0, vr, vc)) first[cell_index(g, cell)] = 1;
        int dr = 0, dc = 0;
        bool placed = false;
        for (int attempt = 0; attempt < 256 && !placed; ++attempt) {
            dr = static_cast<int>(rng.below(static_cast<std::uint64_t>(g.rows)));
            dc = static_cast<int>(rng.below(static_cast<std::uint64_t>(g.cols)));
            placed = true;
            for (const Coord& cell : object_cells(g, cfg.k_sig, 0, dr, dc, vr, vc))
                if (first[cell_index(g, cell)]) placed = false;
        }
        if (!placed) throw ConfigError("data.distractor: no room for a second object");
        for (int f = 0; f < g.frames; ++f) {
            for (const Coord& cell : object_cells(g, cfg.k_sig, f, dr, dc, vr, vc)) {
                auto row = features.row(cell_index(g, cell));
                for (std::size_t j = 0; j < c; ++j) row[j] += patterns[other][j];
            }
        }
    }
    s.tokens = TokenTensor::from_grid(std::move(features), g);
    if (cfg.motion != MotionMode::none) {
        for (std::size_t i = 0; i < n; ++i) {
            const bool on_object = s.mask[i] != 0;
            const bool moving = cfg.motion == MotionMode::aligned ? on_object : !on_object;
            s.tokens.motion[i] = moving ? cfg.motion_magnitude : 0.0f;
        }
    }
    return s;
}

}  // namespace

MotionMode parse_motion_mode(std::string_view s) {
    if (s == "none") return MotionMode::none;
    if (s == "aligned") return MotionMode::aligned;
    if (s == "adversarial") return MotionMode::adversarial;
    throw ConfigError("unknown motion mode '" + std::string(s) + "' (expected none, aligned or adversarial)");
}

std::string_view to_string(MotionMode m) {
    switch (m) {
        case MotionMode::none: return "none";
        case MotionMode::aligned: return "aligned";
        case MotionMode::adversarial: return "adversarial";
    }
    return "none";
}

void SynthConfig::validate() const {
    if (classes < 2) throw ConfigError("data.classes must be >= 2");
    if (samples_per_class < 2) throw ConfigError("data.samples_per_class must be >= 2");
    if (grid.frames < 1 || grid.rows < 1 || grid.cols < 1 || grid.channels < 1) {
        throw ConfigError("data grid dimensions must be positive");
    }
    const auto per_frame = static_cast<std::size_t>(grid.rows) * static_cast<std::size_t>(grid.cols);
    if (k_sig < 1) throw ConfigError("data.k_sig must be >= 1");
    if (static_cast<std::size_t>(k_sig) * static_cast<std::size_t>(grid.frames) > grid.tokens() ||
        static_cast<std::size_t>(k_sig) > per_frame) {
        throw ConfigError("data.k_sig = " + std::to_string(k_sig) + " exceeds the " +
                          std::to_string(per_frame) + " tokens of a frame");
    }
    if (!(sigma >= 0.0)) throw ConfigError("data.sigma must be >= 0");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("data.val_fraction must lie in (0, 1)");
    const int held = static_cast<int>(std::lround(val_fraction * samples_per_class));
    if (held < 1 || held >= samples_per_class) {
        throw ConfigError("data.val_fraction leaves an empty split for " + std::to_string(samples_per_class) +
                          " samples per class");
    }
    if (!(motion_magnitude >= 0.0f)) throw ConfigError("data.motion_magnitude must be >= 0");
    if (!(objectness >= 0.0)) throw ConfigError("data.objectness must be >= 0");
    if (distractor && 2 * static_cast<std::size_t>(k_sig) > per_frame) {
        throw ConfigError("data.distractor needs room for two objects of k_sig tokens per frame");
    }
}

std::vector<Coord> object_cells(const GridShape& grid, int k, int frame, int r0, int c0, int vr, int vc) {
    const int width = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(k))));
    const int top = ((r0 + frame * vr) % grid.rows + grid.rows) % grid.rows;
    const int left = ((c0 + frame * vc) % grid.cols + grid.cols) % grid.cols;
    std::vector<Coord> cells;
    cells.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        cells.push_back({frame, (top + i / width) % grid.rows, (left + i % width) % grid.cols});
    }
    // Small grids can wrap the block onto itself; keep the count exact.
    std::sort(cells.begin(), cells.end(), [](const Coord& a, const Coord& b) {
        return std::tie(a.row, a.col) < std::tie(b.row, b.col);
    });
    if (std::adjacent_find(cells.begin(), cells.end()) != cells.end()) {
        throw ConfigError("object of " + std::to_string(k) + " cells does not fit a " +
                          std::to_string(grid.rows) + "x" + std::to_string(grid.cols) + " frame");
    }
    return cells;
}

SyntheticDataset synthesize(const SynthConfig& cfg) {
    cfg.validate();
    const auto c = static_cast<std::size_t>(cfg.grid.channels);
    std::vector<std::vector<float>> patterns(static_cast<std::size_t>(cfg.classes), std::vector<float>(c));
    Rng prng(mix_seed(cfg.seed, kPatternStream));
    for (auto& p : patterns)
        for (float& v : p) v = static_cast<float>(prng.normal() * cfg.signal_amplitude);
    std::vector<float> objectness(c);
    for (float& v : objectness) v = static_cast<float>(prng.normal() * cfg.objectness);

    const int held = static_cast<int>(std::lround(cfg.val_fraction * cfg.samples_per_class));
    SyntheticDataset ds;
    std::uint64_t index = 0;
    for (int i = 0; i < cfg.samples_per_class; ++i) {
        for (int k = 0; k < cfg.classes; ++k) {
            Sample s = make_sample(cfg, patterns, objectness, static_cast<std::size_t>(k),
                                   mix_seed(mix_seed(cfg.seed, kSampleStream), index++));
            (i < cfg.samples_per_class - held ? ds.train : ds.val).push_back(std::move(s));
        }
    }
    return ds;
}

void save_split(const std::filesystem::path& path, const std::vector<Sample>& samples) {
    if (samples.empty()) throw DataError("save_split: no samples");
    const GridShape g = samples.front().tokens.grid;
    const std::size_t n = g.tokens(), c = static_cast<std::size_t>(g.channels);
    const std::size_t s = samples.size();
    const auto L = static_cast<std::size_t>(g.frames), H = static_cast<std::size_t>(g.rows),
               W = static_cast<std::size_t>(g.cols);
    std::vector<float> feats, labels, masks, motion;
    feats.reserve(s * n * c);
    for (const Sample& smp : samples) {
        const GridShape& sg = smp.tokens.grid;
        if (sg.frames != g.frames || sg.rows != g.rows || sg.cols != g.cols || sg.channels != g.channels ||
            smp.tokens.count() != n) {
            throw DataError("save_split: samples must share one full grid");
        }
        feats.insert(feats.end(), smp.tokens.features.data().begin(), smp.tokens.features.data().end());
        labels.push_back(static_cast<float>(smp.label));
        for (std::size_t i = 0; i < n; ++i) masks.push_back(smp.mask.empty() ? 0.0f : smp.mask[i]);
        motion.insert(motion.end(), smp.tokens.motion.begin(), smp.tokens.motion.end());
    }
    io::NamedArrays sections;
    sections.emplace_back("features", DenseArray({s, L, H, W, c}, std::move(feats)));
    sections.emplace_back("labels", DenseArray({s}, std::move(labels)));
    sections.emplace_back("masks", DenseArray({s, L, H, W}, std::move(masks)));
    sections.emplace_back("motion", DenseArray({s, L, H, W}, std::move(motion)));
    io::save_archive(path, sections);
}

std::vector<Sample> load_split(const std::filesystem::path& path) {
    const io::NamedArrays sections = io::load_archive(path);
    auto find = [&](const std::string& name) -> const DenseArray& {
        for (const auto& [k, a] : sections)
            if (k == name) return a;
        throw FormatError(path.string() + ": missing section '" + name + "'");
    };
    const DenseArray& feats = find("features");
    const DenseArray& labels = find("labels");
    const DenseArray& masks = find("masks");
    const DenseArray& motion = find("motion");
    if (feats.rank() != 5) throw FormatError(path.string() + ": features must have rank 5");
    const auto& d = feats.shape();
    const std::size_t s = d[0];
    const std::vector<std::size_t> grid_dims{s, d[1], d[2], d[3]};
    if (labels.shape() != std::vector<std::size_t>{s} || masks.shape() != grid_dims ||
        motion.shape() != grid_dims) {
        throw FormatError(path.string() + ": section shapes disagree with features " + feats.shape_string());
    }
    const GridShape g{static_cast<int>(d[1]), static_cast<int>(d[2]), static_cast<int>(d[3]),
                      static_cast<int>(d[4])};
    const std::size_t n = g.tokens(), c = d[4];
    std::vector<Sample> out;
    out.reserve(s);
    for (std::size_t k = 0; k < s; ++k) {
        Sample smp;
        const float lab = labels[k];
        if (!(lab >= 0.0f) || lab != std::floor(lab)) throw FormatError(path.string() + ": bad label");
        smp.label = static_cast<std::size_t>(lab);
        smp.target = lab;
        std::vector<float> f(feats.data().begin() + static_cast<std::ptrdiff_t>(k * n * c),
                             feats.data().begin() + static_cast<std::ptrdiff_t>((k + 1) * n * c));
        smp.tokens = TokenTensor::from_grid(DenseArray({n, c}, std::move(f)), g);
        smp.mask.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            smp.mask[i] = masks[k * n + i] != 0.0f ? 1 : 0;
            const float m = motion[k * n + i];
            if (!(m >= 0.0f)) throw FormatError(path.string() + ": negative motion magnitude");
            smp.tokens.motion[i] = m;
        }
        out.push_back(std::move(smp));
    }
    return out;
}

}  // namespace vtm
