// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "vtm/config.hpp"

namespace vtm {

/// Exit codes of the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitDivergence = 4;

/// A resolved configuration plus its JSON echo and hash.
struct Run {
    RunConfig cfg;
    nlohmann::json resolved;
    std::string hash;
};

Run make_run(const std::filesystem::path& config_path, const std::vector<std::string>& overrides);

void save_checkpoint(const std::filesystem::path& path, const NetworkParams& params);
NetworkParams load_checkpoint(const std::filesystem::path& path, const NetworkConfig& cfg);

/// Writes <data_dir>/train.vtma and <data_dir>/val.vtma.
void cmd_synth(const Run& run);
/// Reads the splits, trains, writes <out_dir>/checkpoint.vtma (+ .json echo)
/// and <out_dir>/train_metrics.csv.
void cmd_train(const Run& run);
/// Evaluates a checkpoint on the validation split; <out_dir>/eval_metrics.csv.
void cmd_eval(const Run& run, const std::filesystem::path& checkpoint);

struct MergeArgs {
    std::filesystem::path input;
    std::filesystem::path output;
    std::filesystem::path trace;       // CSV, one row per output token
    std::filesystem::path motion;      // optional VTMM1 file
    std::filesystem::path checkpoint;  // needed by the learnable strategy
};
/// One merge step over a whole (L, H, W, C) feature tensor, matching on the
/// features themselves. Unmerged inputs are written back unchanged.
void cmd_merge(const Run& run, const MergeArgs& args);

/// <out_dir>/bench_cost.csv (merged and baseline schedules) and, unless
/// analytic_only, <out_dir>/bench_throughput.csv.
void cmd_bench(const Run& run, bool analytic_only);

/// <out_dir>/sweep_<axis>.csv; axis is gamma, r_fraction, chunks or strategy.
void cmd_sweep(const Run& run, const std::string& axis);

/// Parses argv and dispatches; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace vtm
