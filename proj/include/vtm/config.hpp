// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "vtm/cost_model.hpp"
#include "vtm/dataset.hpp"
#include "vtm/network.hpp"
#include "vtm/train.hpp"

namespace vtm {

/// Everything a CLI run needs. Serialized as one JSON document whose keys
/// mirror these members (see default_config_json()).
struct RunConfig {
    std::uint64_t seed = 0;
    NetworkConfig network;
    TrainHyper train;
    SynthConfig data;
    /// Clip used by `bench`.
    GridShape bench_grid{60, 16, 16, 64};
    int bench_trials = 3;
    int bench_warmup = 3;
    /// Values swept by `sweep`, per axis.
    std::vector<int> sweep_gamma{2, 6, 10};
    std::vector<double> sweep_r_fraction{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    std::vector<std::array<int, kNumBlocks>> sweep_chunks{{6, 30, 60}, {6, 60, 60}, {30, 30, 60}, {6, 6, 60}};
    std::vector<Strategy> sweep_strategy{Strategy::naive, Strategy::center, Strategy::boundary, Strategy::motion,
                                         Strategy::learnable};
    /// Train and evaluate every sweep point (otherwise cost only).
    bool sweep_train = false;
    std::filesystem::path data_dir = "data";
    std::filesystem::path out_dir = "out";
};

/// The default configuration as JSON; doubles as the schema: a document may
/// only contain keys present here, with values of the same JSON type.
nlohmann::json default_config_json();

/// Throws ConfigError naming the offending JSON path.
void check_schema(const nlohmann::json& doc);

RunConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const RunConfig& cfg);

/// Applies "a.b.c=value" overrides. The value is parsed as JSON when possible
/// and taken as a string otherwise. Unknown paths are rejected.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Loads a JSON file (or the defaults when `path` is empty), merges it over
/// the defaults, applies overrides, validates. Throws ConfigError.
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides,
                      nlohmann::json* resolved = nullptr);

/// 16 hex digits of FNV-1a over the canonical dump of the resolved config
/// without its "paths" section.
std::string config_hash(const nlohmann::json& resolved);

}  // namespace vtm
