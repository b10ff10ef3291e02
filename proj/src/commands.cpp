// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#include "vtm/commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "vtm/array_io.hpp"
#include "vtm/errors.hpp"
#include "vtm/kernels.hpp"
#include "vtm/merge_engine.hpp"
#include "vtm/motion_io.hpp"
#include "vtm/partition.hpp"
#include "vtm/rng.hpp"

namespace vtm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

void ensure_parent(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

std::ofstream open_out(const fs::path& path) {
    ensure_parent(path);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    return os;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os = open_out(path);
    os << text;
    if (!os) throw DataError("write failed: " + path.string());
}

std::vector<Sample> load_required_split(const fs::path& path) {
    if (!fs::exists(path)) throw DataError("missing data file " + path.string() + " (run `vtm synth` first)");
    return load_split(path);
}

void check_samples(const std::vector<Sample>& samples, const RunConfig& cfg, const fs::path& path) {
    for (const Sample& s : samples) {
        if (s.tokens.grid.channels != cfg.network.channels) {
            throw DataError(path.string() + ": samples have " + std::to_string(s.tokens.grid.channels) +
                            " channels, network expects " + std::to_string(cfg.network.channels));
        }
        if (cfg.network.head_type == HeadType::classify &&
            s.label >= static_cast<std::size_t>(cfg.network.num_classes)) {
            throw DataError(path.string() + ": label " + std::to_string(s.label) + " out of range");
        }
    }
}

std::string strategy_csv_name(const std::array<int, kNumBlocks>& c) {
    return std::to_string(c[0]) + "-" + std::to_string(c[1]) + "-" + std::to_string(c[2]);
}

}  // namespace

Run make_run(const fs::path& config_path, const std::vector<std::string>& overrides) {
    Run r;
    r.cfg = load_config(config_path, overrides, &r.resolved);
    r.cfg.train.threads = env_thread_cap();
    r.hash = config_hash(r.resolved);
    return r;
}

void save_checkpoint(const fs::path& path, const NetworkParams& params) {
    io::NamedArrays sections;
    for (const auto& [name, arr] : params.named()) sections.emplace_back(name, *arr);
    ensure_parent(path);
    io::save_archive(path, sections);
}

NetworkParams load_checkpoint(const fs::path& path, const NetworkConfig& cfg) {
    if (!fs::exists(path)) throw DataError("missing checkpoint " + path.string());
    const io::NamedArrays sections = io::load_archive(path);
    NetworkParams params = NetworkParams::init(cfg, 0);
    auto named = params.named();
    if (sections.size() != named.size()) {
        throw FormatError(path.string() + ": expected " + std::to_string(named.size()) + " sections, found " +
                          std::to_string(sections.size()));
    }
    for (std::size_t k = 0; k < named.size(); ++k) {
        if (sections[k].first != named[k].first) {
            throw FormatError(path.string() + ": section " + std::to_string(k) + " is '" + sections[k].first +
                              "', expected '" + named[k].first + "'");
        }
        if (sections[k].second.shape() != named[k].second->shape()) {
            throw FormatError(path.string() + ": '" + named[k].first + "' has shape " +
                              sections[k].second.shape_string() + ", the configured network needs " +
                              named[k].second->shape_string());
        }
        *named[k].second = sections[k].second;
    }
    return params;
}

void cmd_synth(const Run& run) {
    const SyntheticDataset ds = synthesize(run.cfg.data);
    ensure_parent(run.cfg.data_dir / "train.vtma");
    save_split(run.cfg.data_dir / "train.vtma", ds.train);
    save_split(run.cfg.data_dir / "val.vtma", ds.val);
    write_text(run.cfg.data_dir / "dataset.json", run.resolved.dump(2) + "\n");
    std::cout << "synth: " << ds.train.size() << " train / " << ds.val.size() << " val samples -> "
              << run.cfg.data_dir.string() << "\n";
}

void cmd_train(const Run& run) {
    const fs::path train_path = run.cfg.data_dir / "train.vtma";
    const fs::path val_path = run.cfg.data_dir / "val.vtma";
    const std::vector<Sample> train_set = load_required_split(train_path);
    const std::vector<Sample> val_set = load_required_split(val_path);
    check_samples(train_set, run.cfg, train_path);
    check_samples(val_set, run.cfg, val_path);

    std::ostringstream csv;
    csv << "config_hash,epoch,lr,train_loss,train_metric,val_metric,saliency_signal,saliency_background\n";
    const TrainResult result = train(train_set, val_set, run.cfg.network, run.cfg.train, [&](const EpochMetrics& m) {
        csv << run.hash << ',' << m.epoch << ',' << num(m.lr) << ',' << num(m.train_loss) << ','
            << num(m.train_metric) << ',' << num(m.val_metric) << ',' << num(m.saliency_signal) << ','
            << num(m.saliency_background) << '\n';
        std::cerr << "epoch " << m.epoch << ": loss " << num(m.train_loss) << ", val " << num(m.val_metric) << "\n";
    });
    save_checkpoint(run.cfg.out_dir / "checkpoint.vtma", result.params);
    write_text(run.cfg.out_dir / "checkpoint.json", run.resolved.dump(2) + "\n");
    write_text(run.cfg.out_dir / "train_metrics.csv", csv.str());
}

void cmd_eval(const Run& run, const fs::path& checkpoint) {
    const fs::path val_path = run.cfg.data_dir / "val.vtma";
    const std::vector<Sample> val_set = load_required_split(val_path);
    check_samples(val_set, run.cfg, val_path);
    const NetworkParams params = load_checkpoint(checkpoint, run.cfg.network);
    const EvalResult ev = evaluate(val_set, params, run.cfg.network, run.cfg.seed);
    std::size_t final_tokens = 0;
    for (std::size_t n : ev.trace[kNumBlocks - 1].n_out) final_tokens += n;
    std::ostringstream csv;
    csv << "config_hash,split,samples,accuracy,mse,saliency_signal,saliency_background,final_tokens\n";
    csv << run.hash << ",val," << val_set.size() << ',' << num(ev.accuracy) << ',' << num(ev.mse) << ','
        << num(ev.saliency_signal) << ',' << num(ev.saliency_background) << ',' << final_tokens << '\n';
    write_text(run.cfg.out_dir / "eval_metrics.csv", csv.str());
    std::cout << "eval: accuracy " << num(ev.accuracy) << ", saliency signal " << num(ev.saliency_signal)
              << " vs background " << num(ev.saliency_background) << "\n";
}

void cmd_merge(const Run& run, const MergeArgs& args) {
    if (args.input.empty() || args.output.empty()) throw ConfigError("merge: --input and --output are required");
    if (!fs::exists(args.input)) throw DataError("missing input tensor " + args.input.string());
    const DenseArray input = io::load_array(args.input);
    if (input.rank() != 4) {
        throw FormatError(args.input.string() + ": expected an (L, H, W, C) tensor, got " + input.shape_string());
    }
    const auto& d = input.shape();
    const GridShape grid{static_cast<int>(d[0]), static_cast<int>(d[1]), static_cast<int>(d[2]),
                         static_cast<int>(d[3])};
    TokenTensor tokens = TokenTensor::from_grid(input.reshaped({grid.tokens(), d[3]}), grid);
    if (!args.motion.empty()) {
        if (!fs::exists(args.motion)) throw DataError("missing motion file " + args.motion.string());
        tokens = attach_motion(tokens, load_motion(args.motion));
    }
    const MergeConfig& mc = run.cfg.network.merge;
    if (mc.strategy == Strategy::motion && args.motion.empty()) {
        throw ConfigError("merge: the motion strategy needs --motion");
    }
    std::vector<double> saliency;
    if (mc.strategy == Strategy::learnable) {
        if (args.checkpoint.empty()) throw ConfigError("merge: the learnable strategy needs --checkpoint");
        if (static_cast<int>(d[3]) != run.cfg.network.channels) {
            throw DataError("merge: tensor has " + std::to_string(d[3]) + " channels, checkpoint expects " +
                            std::to_string(run.cfg.network.channels));
        }
        const NetworkParams params = load_checkpoint(args.checkpoint, run.cfg.network);
        const BlockParams& b = params.blocks[0];
        const DenseArray h = kernels::layer_norm_rows(tokens.features, b.ln1_gamma, b.ln1_beta, 1e-5);
        saliency = saliency_inference(kernels::matmul(h, b.u_k), b.u_s);
    }

    MergePlan plan;
    const std::size_t n = tokens.count();
    const auto gamma = static_cast<std::size_t>(mc.gamma);
    if (n < gamma || mc.merge_count(n - n / gamma) == 0) {
        plan.num_outputs = n;
        for (std::size_t i = 0; i < n; ++i) plan.constituents.push_back({i});
        plan.coords = tokens.coords;
        plan.sizes = tokens.sizes;
    } else {
        const auto targets = select_targets(tokens, mc.strategy, mc.gamma, saliency, mix_seed(run.cfg.seed, 0x3e26e));
        plan = plan_merge_step(tokens, tokens.features, mc, targets);
    }

    ensure_parent(args.output);
    if (plan.num_outputs == n) {
        io::save_array(args.output, input);
    } else {
        io::save_array(args.output, pool_features(tokens.features, plan));
    }
    if (!args.trace.empty()) {
        std::ostringstream csv;
        csv << "config_hash,output,size,frame,row,col,constituents\n";
        for (std::size_t o = 0; o < plan.num_outputs; ++o) {
            csv << run.hash << ',' << o << ',' << plan.sizes[o] << ',' << plan.coords[o].frame << ','
                << plan.coords[o].row << ',' << plan.coords[o].col << ',';
            for (std::size_t k = 0; k < plan.constituents[o].size(); ++k) {
                csv << (k ? " " : "") << plan.constituents[o][k];
            }
            csv << '\n';
        }
        write_text(args.trace, csv.str());
    }
    std::cout << "merge: " << n << " -> " << plan.num_outputs << " tokens\n";
}

void cmd_bench(const Run& run, bool analytic_only) {
    NetworkConfig merged = run.cfg.network;
    NetworkConfig baseline = merged;
    baseline.merge.r_fraction = 0.0;
    GridShape grid = run.cfg.bench_grid;
    grid.channels = merged.channels;

    std::ostringstream cost;
    cost << "config_hash,schedule,block,chunk_len,n_in,n_out,flops,peak_floats\n";
    for (const auto& [name, cfg] : {std::pair<const char*, const NetworkConfig*>{"merged", &merged},
                                    std::pair<const char*, const NetworkConfig*>{"baseline", &baseline}}) {
        const CostReport rep = schedule_cost(*cfg, grid);
        for (const CostRow& r : rep.rows) {
            cost << run.hash << ',' << name << ',' << r.block << ',' << r.chunk_len << ',' << r.n_in << ','
                 << r.n_out << ',' << r.flops << ',' << r.peak_floats << '\n';
        }
        std::cout << "bench: " << name << " attention flops " << rep.total_flops() << ", peak floats "
                  << rep.peak_floats() << "\n";
    }
    write_text(run.cfg.out_dir / "bench_cost.csv", cost.str());
    if (analytic_only) return;

    const NetworkParams params = NetworkParams::init(merged, run.cfg.seed);
    std::ostringstream tp;
    tp << "config_hash,schedule,tokens,trials,samples_per_sec,stddev\n";
    for (const auto& [name, cfg] : {std::pair<const char*, const NetworkConfig*>{"merged", &merged},
                                    std::pair<const char*, const NetworkConfig*>{"baseline", &baseline}}) {
        const Throughput t =
            measure_throughput(*cfg, params, grid, run.cfg.bench_trials, run.cfg.seed, run.cfg.bench_warmup);
        tp << run.hash << ',' << name << ',' << grid.tokens() << ',' << run.cfg.bench_trials << ',' << num(t.mean)
           << ',' << num(t.stddev) << '\n';
        std::cout << "bench: " << name << " " << num(t.mean) << " +- " << num(t.stddev) << " samples/s\n";
    }
    write_text(run.cfg.out_dir / "bench_throughput.csv", tp.str());
}

void cmd_sweep(const Run& run, const std::string& axis) {
    struct Point {
        std::string value;
        NetworkConfig net;
    };
    std::vector<Point> points;
    const NetworkConfig base = run.cfg.network;
    if (axis == "gamma") {
        for (int g : run.cfg.sweep_gamma) {
            Point p{std::to_string(g), base};
            p.net.merge.gamma = g;
            points.push_back(p);
        }
    } else if (axis == "r_fraction") {
        for (double r : run.cfg.sweep_r_fraction) {
            Point p{num(r), base};
            p.net.merge.r_fraction = r;
            points.push_back(p);
        }
    } else if (axis == "chunks") {
        for (const auto& c : run.cfg.sweep_chunks) {
            Point p{strategy_csv_name(c), base};
            p.net.chunk_lengths = c;
            points.push_back(p);
        }
    } else if (axis == "strategy") {
        for (Strategy s : run.cfg.sweep_strategy) {
            Point p{std::string(to_string(s)), base};
            p.net.merge.strategy = s;
            points.push_back(p);
        }
    } else {
        throw ConfigError("sweep: unknown axis '" + axis + "' (expected gamma, r_fraction, chunks or strategy)");
    }
    for (const Point& p : points) {
        try {
            p.net.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError("sweep " + axis + "=" + p.value + ": " + e.what());
        }
    }

    std::vector<Sample> train_set, val_set;
    if (run.cfg.sweep_train) {
        train_set = load_required_split(run.cfg.data_dir / "train.vtma");
        val_set = load_required_split(run.cfg.data_dir / "val.vtma");
        check_samples(train_set, run.cfg, run.cfg.data_dir / "train.vtma");
    }
    GridShape grid = run.cfg.bench_grid;
    grid.channels = base.channels;
    std::ostringstream csv;
    csv << "config_hash,axis,value,tokens_in,tokens_out,attention_flops,peak_floats";
    if (run.cfg.sweep_train) csv << ",accuracy,saliency_signal,saliency_background";
    csv << '\n';
    for (const Point& p : points) {
        const CostReport rep = schedule_cost(p.net, grid);
        csv << run.hash << ',' << axis << ',' << p.value << ',' << rep.rows.front().n_in << ','
            << rep.rows.back().n_out << ',' << rep.total_flops() << ',' << rep.peak_floats();
        if (run.cfg.sweep_train) {
            const TrainResult tr = train(train_set, {}, p.net, run.cfg.train);
            const EvalResult ev = evaluate(val_set, tr.params, p.net, run.cfg.seed);
            csv << ',' << num(ev.accuracy) << ',' << num(ev.saliency_signal) << ',' << num(ev.saliency_background);
        }
        csv << '\n';
        std::cout << "sweep: " << axis << "=" << p.value << " flops " << rep.total_flops() << "\n";
    }
    write_text(run.cfg.out_dir / ("sweep_" + axis + ".csv"), csv.str());
}

int run_cli(int argc, char** argv) {
    CLI::App app{"Video token merging: synthetic data, training, evaluation, merging and cost reports"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("-c,--config", config_path, "JSON run configuration (defaults when omitted)");
    app.allow_extras();
    app.footer("Any configuration key can be overridden as --section.key=value, e.g. --merge.gamma=2.");

    auto* synth = app.add_subcommand("synth", "generate the synthetic dataset");
    auto* train_cmd = app.add_subcommand("train", "train a network, write checkpoint and metrics");
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the validation split");
    std::string checkpoint;
    eval->add_option("--checkpoint", checkpoint, "checkpoint archive (default <out_dir>/checkpoint.vtma)");
    auto* merge = app.add_subcommand("merge", "merge one feature tensor file");
    MergeArgs margs;
    merge->add_option("--input", margs.input, "(L, H, W, C) feature tensor")->required();
    merge->add_option("--output", margs.output, "merged tensor file")->required();
    merge->add_option("--trace", margs.trace, "CSV listing the constituents of every output token");
    merge->add_option("--motion", margs.motion, "motion file for the motion strategy");
    merge->add_option("--checkpoint", margs.checkpoint, "checkpoint for the learnable strategy");
    auto* bench = app.add_subcommand("bench", "analytic cost report and measured throughput");
    bool analytic_only = false;
    bench->add_flag("--analytic-only", analytic_only, "skip the wall-clock measurement");
    auto* sweep = app.add_subcommand("sweep", "cost (and optionally accuracy) across one axis");
    std::string axis;
    sweep->add_option("--axis", axis, "gamma | r_fraction | chunks | strategy")->required();
    for (auto* sub : {synth, train_cmd, eval, merge, bench, sweep}) {
        sub->allow_extras();
        sub->add_option("-c,--config", config_path, "JSON run configuration");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        std::vector<std::string> overrides;
        std::vector<std::string> extras = app.remaining();
        for (auto* sub : app.get_subcommands()) {
            for (const std::string& x : sub->remaining()) extras.push_back(x);
        }
        for (const std::string& x : extras) {
            if (x.rfind("--", 0) != 0 || x.find('=') == std::string::npos) {
                throw ConfigError("unexpected argument '" + x + "' (overrides look like --section.key=value)");
            }
            overrides.push_back(x.substr(2));
        }
        const Run run = make_run(config_path, overrides);
        if (*synth) cmd_synth(run);
        if (*train_cmd) cmd_train(run);
        if (*eval) cmd_eval(run, checkpoint.empty() ? run.cfg.out_dir / "checkpoint.vtma" : fs::path(checkpoint));
        if (*merge) cmd_merge(run, margs);
        if (*bench) cmd_bench(run, analytic_only);
        if (*sweep) cmd_sweep(run, axis);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const DivergenceError& e) {
        std::cerr << "numerical divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const std::invalid_argument& e) {
        // Shape and validation failures on user-supplied files.
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::out_of_range& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::domain_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitOk;
}

}  // namespace vtm
