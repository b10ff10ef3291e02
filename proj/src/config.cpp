// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#include "vtm/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "vtm/errors.hpp"

namespace vtm {

using nlohmann::json;

namespace {

const char* type_name(const json& j) {
    if (j.is_number()) return "number";
    return j.type_name();
}

bool same_kind(const json& expected, const json& got) {
    if (expected.is_number_integer()) return got.is_number_integer();
    if (expected.is_number()) return got.is_number();
    return expected.type() == got.type();
}

void check_against(const json& schema, const json& doc, const std::string& path) {
    if (!same_kind(schema, doc)) {
        throw ConfigError("config: '" + path + "' must be " +
                          (schema.is_number_integer() ? std::string("an integer") : std::string(type_name(schema))) +
                          ", got " + type_name(doc));
    }
    if (schema.is_object()) {
        for (const auto& [key, value] : doc.items()) {
            const std::string sub = path.empty() ? key : path + "." + key;
            if (!schema.contains(key)) throw ConfigError("config: unknown key '" + sub + "'");
            check_against(schema.at(key), value, sub);
        }
    } else if (schema.is_array() && !schema.empty()) {
        for (std::size_t i = 0; i < doc.size(); ++i) {
            check_against(schema.front(), doc[i], path + "[" + std::to_string(i) + "]");
        }
    }
}

template <typename T>
T get(const json& doc, const char* section, const char* key) {
    return doc.at(section).at(key).get<T>();
}

std::array<int, kNumBlocks> chunk_triple(const json& j, const std::string& path) {
    if (!j.is_array() || j.size() != kNumBlocks) {
        throw ConfigError("config: '" + path + "' must list " + std::to_string(kNumBlocks) + " chunk lengths");
    }
    std::array<int, kNumBlocks> out{};
    for (int i = 0; i < kNumBlocks; ++i) out[static_cast<std::size_t>(i)] = j[static_cast<std::size_t>(i)].get<int>();
    return out;
}

json grid_json(const GridShape& g) {
    return {{"frames", g.frames}, {"rows", g.rows}, {"cols", g.cols}, {"channels", g.channels}};
}

GridShape grid_from(const json& j) {
    return {j.at("frames").get<int>(), j.at("rows").get<int>(), j.at("cols").get<int>(), j.at("channels").get<int>()};
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

json config_to_json(const RunConfig& c) {
    const NetworkConfig& n = c.network;
    json chunks = json::array();
    for (int v : n.chunk_lengths) chunks.push_back(v);
    json sweep_chunks = json::array();
    for (const auto& t : c.sweep_chunks) sweep_chunks.push_back(json::array({t[0], t[1], t[2]}));
    json strategies = json::array();
    for (Strategy s : c.sweep_strategy) strategies.push_back(std::string(to_string(s)));
    return {
        {"seed", c.seed},
        {"network",
         {{"chunk_lengths", chunks},
          {"channels", n.channels},
          {"heads", n.heads},
          {"head_type", std::string(to_string(n.head_type))},
          {"num_classes", n.num_classes},
          {"aux_loss_weight", n.aux_loss_weight},
          {"dropout", n.dropout}}},
        {"merge",
         {{"gamma", n.merge.gamma},
          {"r_fraction", n.merge.r_fraction},
          {"pooling", std::string(to_string(n.merge.pooling))},
          {"strategy", std::string(to_string(n.merge.strategy))}}},
        {"train",
         {{"lr", c.train.lr},
          {"epochs", c.train.epochs},
          {"batch", c.train.batch},
          {"weight_decay", c.train.weight_decay},
          {"warmup_fraction", c.train.warmup_fraction},
          {"beta1", c.train.beta1},
          {"beta2", c.train.beta2},
          {"adam_eps", c.train.adam_eps}}},
        {"data",
         {{"classes", c.data.classes},
          {"samples_per_class", c.data.samples_per_class},
          {"grid", grid_json(c.data.grid)},
          {"k_sig", c.data.k_sig},
          {"sigma", c.data.sigma},
          {"signal_amplitude", c.data.signal_amplitude},
          {"objectness", c.data.objectness},
          {"distractor", c.data.distractor},
          {"motion", std::string(to_string(c.data.motion))},
          {"motion_magnitude", c.data.motion_magnitude},
          {"val_fraction", c.data.val_fraction}}},
        {"bench", {{"grid", grid_json(c.bench_grid)}, {"trials", c.bench_trials}, {"warmup", c.bench_warmup}}},
        {"sweep",
         {{"gamma", c.sweep_gamma},
          {"r_fraction", c.sweep_r_fraction},
          {"chunks", sweep_chunks},
          {"strategy", strategies},
          {"train", c.sweep_train}}},
        {"paths", {{"data_dir", c.data_dir.string()}, {"out_dir", c.out_dir.string()}}},
    };
}

json default_config_json() {
    static const json defaults = config_to_json(RunConfig{});
    return defaults;
}

void check_schema(const json& doc) {
    if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
    check_against(default_config_json(), doc, "");
}

RunConfig config_from_json(const json& doc) {
    check_schema(doc);
    json full = default_config_json();
    full.merge_patch(doc);
    RunConfig c;
    try {
        c.seed = full.at("seed").get<std::uint64_t>();
        NetworkConfig& n = c.network;
        n.chunk_lengths = chunk_triple(full["network"]["chunk_lengths"], "network.chunk_lengths");
        n.channels = get<int>(full, "network", "channels");
        n.heads = get<int>(full, "network", "heads");
        n.head_type = parse_head_type(get<std::string>(full, "network", "head_type"));
        n.num_classes = get<int>(full, "network", "num_classes");
        n.aux_loss_weight = get<double>(full, "network", "aux_loss_weight");
        n.dropout = get<double>(full, "network", "dropout");
        n.merge.gamma = get<int>(full, "merge", "gamma");
        n.merge.r_fraction = get<double>(full, "merge", "r_fraction");
        n.merge.pooling = parse_pooling(get<std::string>(full, "merge", "pooling"));
        n.merge.strategy = parse_strategy(get<std::string>(full, "merge", "strategy"));

        c.train.lr = get<double>(full, "train", "lr");
        c.train.epochs = get<int>(full, "train", "epochs");
        c.train.batch = get<int>(full, "train", "batch");
        c.train.weight_decay = get<double>(full, "train", "weight_decay");
        c.train.warmup_fraction = get<double>(full, "train", "warmup_fraction");
        c.train.beta1 = get<double>(full, "train", "beta1");
        c.train.beta2 = get<double>(full, "train", "beta2");
        c.train.adam_eps = get<double>(full, "train", "adam_eps");
        c.train.seed = c.seed;

        c.data.classes = get<int>(full, "data", "classes");
        c.data.samples_per_class = get<int>(full, "data", "samples_per_class");
        c.data.grid = grid_from(full["data"]["grid"]);
        c.data.k_sig = get<int>(full, "data", "k_sig");
        c.data.sigma = get<double>(full, "data", "sigma");
        c.data.signal_amplitude = get<double>(full, "data", "signal_amplitude");
        c.data.objectness = get<double>(full, "data", "objectness");
        c.data.distractor = get<bool>(full, "data", "distractor");
        c.data.motion = parse_motion_mode(get<std::string>(full, "data", "motion"));
        c.data.motion_magnitude = get<float>(full, "data", "motion_magnitude");
        c.data.val_fraction = get<double>(full, "data", "val_fraction");
        c.data.seed = c.seed;

        c.bench_grid = grid_from(full["bench"]["grid"]);
        c.bench_trials = get<int>(full, "bench", "trials");
        c.bench_warmup = get<int>(full, "bench", "warmup");

        c.sweep_gamma = full["sweep"]["gamma"].get<std::vector<int>>();
        c.sweep_r_fraction = full["sweep"]["r_fraction"].get<std::vector<double>>();
        c.sweep_chunks.clear();
        for (std::size_t i = 0; i < full["sweep"]["chunks"].size(); ++i) {
            c.sweep_chunks.push_back(
                chunk_triple(full["sweep"]["chunks"][i], "sweep.chunks[" + std::to_string(i) + "]"));
        }
        c.sweep_strategy.clear();
        for (const auto& s : full["sweep"]["strategy"]) c.sweep_strategy.push_back(parse_strategy(s.get<std::string>()));
        c.sweep_train = full["sweep"]["train"].get<bool>();
        c.data_dir = get<std::string>(full, "paths", "data_dir");
        c.out_dir = get<std::string>(full, "paths", "out_dir");
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    // Keep the data grid's channels and class count consistent with the network.
    if (c.data.grid.channels != c.network.channels) {
        throw ConfigError("config: data.grid.channels (" + std::to_string(c.data.grid.channels) +
                          ") must equal network.channels (" + std::to_string(c.network.channels) + ")");
    }
    if (c.network.head_type == HeadType::classify && c.data.classes != c.network.num_classes) {
        throw ConfigError("config: data.classes must equal network.num_classes");
    }
    if (c.bench_trials < 1 || c.bench_warmup < 0) throw ConfigError("config: bench.trials >= 1, bench.warmup >= 0");
    try {
        c.network.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.data.validate();
    return c;
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + assignment + "' must look like key.path=value");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    const json schema = default_config_json();
    const json* node = &schema;
    json* target = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->is_object() || !node->contains(key)) throw ConfigError("config: unknown key '" + path + "'");
        node = &node->at(key);
        if (dot == std::string::npos) {
            (*target)[key] = value;
            break;
        }
        if (!target->contains(key)) (*target)[key] = json::object();
        target = &(*target)[key];
        start = dot + 1;
    }
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides,
                      json* resolved) {
    json doc = json::object();
    if (!path.empty()) {
        std::ifstream is(path);
        if (!is) throw ConfigError("config: cannot open " + path.string());
        doc = json::parse(is, nullptr, false);
        if (doc.is_discarded()) throw ConfigError("config: " + path.string() + " is not valid JSON");
    }
    check_schema(doc);
    for (const std::string& o : overrides) apply_override(doc, o);
    RunConfig cfg = config_from_json(doc);
    if (resolved != nullptr) *resolved = config_to_json(cfg);
    return cfg;
}

std::string config_hash(const json& resolved) {
    json copy = resolved;
    copy.erase("paths");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(copy.dump())));
    return buf;
}

}  // namespace vtm
