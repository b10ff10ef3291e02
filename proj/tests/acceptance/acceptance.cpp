// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

// Acceptance gate: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset. Exit status is non-zero if any run
// criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"
#include "primitive_cases.hpp"
#include "test_support.hpp"
#include "vtm/cost_model.hpp"
#include "vtm/dataset.hpp"
#include "vtm/merge_engine.hpp"
#include "vtm/partition.hpp"
#include "vtm/train.hpp"

using namespace vtm;
using namespace vtm::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

const std::vector<Strategy> kStrategies{Strategy::naive, Strategy::center, Strategy::boundary, Strategy::motion,
                                        Strategy::learnable};

// 1. Output count of one merge step for random (N, gamma, r) and every strategy.
Outcome count_law() {
    Rng rng(101);
    int checked = 0, wrong = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const GridShape grid{1 + static_cast<int>(rng.below(6)), 2 + static_cast<int>(rng.below(11)),
                             2 + static_cast<int>(rng.below(11)), 4};
        TokenTensor t = random_token_set(rng, grid, 3);
        const std::size_t n = t.count();
        MergeConfig cfg;
        cfg.gamma = 2 + static_cast<int>(rng.below(std::min<std::size_t>(n - 1, 15)));
        const std::uint64_t pct = rng.below(101);
        cfg.r_fraction = static_cast<double>(pct) / 100.0;
        cfg.pooling = static_cast<Pooling>(rng.below(3));
        std::vector<double> sal(n);
        for (double& s : sal) s = std::tanh(rng.normal());
        // exact integer oracle: N - floor(pct * (N - floor(N / gamma)) / 100)
        const std::size_t sources = n - n / static_cast<std::size_t>(cfg.gamma);
        const std::size_t expect = n - (pct * sources) / 100;
        for (Strategy s : kStrategies) {
            const auto targets = select_targets(t, s, cfg.gamma, sal, mix_seed(trial, 7));
            const TokenTensor out = merge_step(t, t.features, cfg, targets);
            ++checked;
            wrong += out.count() != expect || out.total_size() != t.total_size();
        }
    }
    return {wrong == 0, fmt("%d/%d configurations match", checked - wrong, checked)};
}

// 2. match_sources against the exhaustive oracle.
Outcome matching_oracle() {
    Rng rng(202);
    int wrong = 0;
    double worst_score = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng.below(63), d = 1 + rng.below(8);
        const DenseArray keys = trial % 3 == 0 ? tied_keys(rng, n, d) : random_matrix(rng, n, d);
        TokenTensor t = random_tokens(rng, {1, 1, static_cast<int>(n), 1});
        for (float& m : t.motion) m = static_cast<float>(3.0 * rng.uniform());
        const int gamma = 2 + static_cast<int>(rng.below(std::min<std::size_t>(n - 1, 10)));
        std::vector<double> sal(n);
        for (double& s : sal) s = std::tanh(rng.normal());
        const Strategy s = trial % 2 ? Strategy::naive : (trial % 4 == 0 ? Strategy::motion : Strategy::learnable);
        const PartitionResult part = partition_from_targets(n, select_targets(t, s, gamma, sal, trial));
        const MatchResult got = match_sources(keys, part), want = brute_force_match(keys, part);
        wrong += got.match_of != want.match_of;
        for (std::size_t k = 0; k < got.score_of.size(); ++k)
            worst_score = std::max(worst_score, std::abs(got.score_of[k] - want.score_of[k]));
    }
    return {wrong == 0 && worst_score <= 1e-12,
            fmt("%d/1000 instances differ in assignment, max score difference %.2e", wrong, worst_score)};
}

// 3. Size-weighted merging conserves sum(size * feature) and sum(size).
Outcome conservation() {
    Rng rng(303);
    double worst = 0.0;
    int size_errors = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const GridShape grid{1 + static_cast<int>(rng.below(4)), 2 + static_cast<int>(rng.below(7)),
                             2 + static_cast<int>(rng.below(7)), 1 + static_cast<int>(rng.below(16))};
        const TokenTensor t = random_token_set(rng, grid, 8);
        MergeConfig cfg;
        cfg.gamma = 2 + static_cast<int>(rng.below(std::min<std::size_t>(t.count() - 1, 8)));
        cfg.r_fraction = rng.uniform();
        cfg.pooling = Pooling::size_weighted;
        std::vector<double> sal(t.count(), 0.0);
        const auto targets = select_targets(t, kStrategies[trial % 5], cfg.gamma, sal, trial);
        const TokenTensor out = merge_step(t, t.features, cfg, targets);
        size_errors += out.total_size() != t.total_size();
        for (std::size_t c = 0; c < t.features.cols(); ++c) {
            double before = 0.0, after = 0.0, scale = 0.0;
            for (std::size_t i = 0; i < t.count(); ++i) {
                const double v = static_cast<double>(t.sizes[i]) * t.features(i, c);
                before += v;
                scale += std::abs(v);
            }
            for (std::size_t o = 0; o < out.count(); ++o) after += static_cast<double>(out.sizes[o]) * out.features(o, c);
            worst = std::max(worst, std::abs(before - after) / scale);
        }
    }
    return {size_errors == 0 && worst <= 1e-5,
            fmt("max relative mass error %.2e (vs sum |size*feature|), %d size mismatches", worst, size_errors)};
}

// 4. Central finite differences for every primitive and the learnable block.
Outcome gradient_suite() {
    double worst = 0.0;
    std::string worst_name;
    int cases = 0;
    std::size_t skipped = 0, checked = 0;
    for (const PrimitiveCase& pc : primitive_cases()) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            Rng rng(mix_seed(seed, 404));
            const GradCheck r = check_gradients(pc.build, pc.inputs(rng), seed);
            if (r.rel_error > worst) worst = r.rel_error, worst_name = pc.name;
            checked += r.checked;
            ++cases;
        }
    }
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const BlockCase bc = learnable_block_case(seed);
        const GradCheck r = check_gradients(bc.build, bc.inputs, seed);
        if (r.rel_error > worst) worst = r.rel_error, worst_name = "learnable_block";
        if (r.checked == 0) worst = 1.0;
        skipped += r.skipped;
        checked += r.checked;
        ++cases;
    }
    return {worst < 1e-3, fmt("%d cases (%zu primitives + block) x 20 seeds, worst rel error %.2e (%s), "
                              "%zu coordinates, %zu skipped on merge changes",
                              cases, primitive_cases().size(), worst, worst_name.c_str(), checked, skipped)};
}

// 5. s = 0 gives plain attention; constant shifts of s change nothing.
Outcome saliency_identity() {
    Rng rng(505);
    double worst_zero = 0.0, worst_shift = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.below(40);
        const int heads = 1 << rng.below(3);
        const std::size_t c = 4 * (1 + rng.below(4));
        ad::Graph g;
        const double sc = 1.0 / std::sqrt(static_cast<double>(c));
        AttentionParams p{g.variable(random_matrix(rng, c, c, sc)), g.variable(random_matrix(rng, c, c, sc)),
                          g.variable(random_matrix(rng, c, c, sc)), g.variable(random_matrix(rng, c, 1, sc)), heads};
        ad::Var x = g.variable(random_matrix(rng, n, c));
        const DenseArray plain = self_attention(x, p).out.value();
        const DenseArray zero = saliency_guided_attention(x, p, g.constant(DenseArray::matrix(n, 1))).out.value();
        worst_zero = std::max(worst_zero, max_abs_diff(plain, zero));
        DenseArray s = DenseArray::matrix(n, 1), shifted = DenseArray::matrix(n, 1);
        const double shift = 4.0 * rng.uniform() - 2.0;
        for (std::size_t i = 0; i < n; ++i) {
            s(i, 0) = static_cast<float>(std::tanh(rng.normal()));
            shifted(i, 0) = static_cast<float>(s(i, 0) + shift);
        }
        const DenseArray a = saliency_guided_attention(x, p, g.constant(s)).out.value();
        const DenseArray b = saliency_guided_attention(x, p, g.constant(shifted)).out.value();
        worst_shift = std::max(worst_shift, max_abs_diff(a, b));
    }
    return {worst_zero <= 1e-6 && worst_shift <= 1e-6,
            fmt("max |s=0 - plain| %.2e, max shift deviation %.2e over 100 instances", worst_zero, worst_shift)};
}

// 6. Gumbel-top-k first pick versus softmax probabilities.
Outcome sampling_fidelity() {
    Rng rng(606);
    double worst = 0.0;
    const std::vector<std::size_t> sizes{16, 9, 4};
    for (std::size_t n : sizes) {
        std::vector<double> w(n);
        for (double& v : w) v = n == 9 ? 3.0 * rng.uniform() : std::tanh(rng.normal());
        double z = 0.0;
        for (double v : w) z += std::exp(v);
        std::vector<int> hits(n, 0);
        const int draws = 100000;
        for (int d = 0; d < draws; ++d) ++hits[sample_targets_weighted(w, 1, mix_seed(d, n)).front()];
        for (std::size_t i = 0; i < n; ++i)
            worst = std::max(worst, std::abs(hits[i] / static_cast<double>(draws) - std::exp(w[i]) / z));
    }
    return {worst < 0.01, fmt("max |empirical - softmax| %.4f over 1e5 draws for N = 16, 9, 4", worst)};
}

SynthConfig planted(std::uint64_t seed) {
    SynthConfig d;  // K=4, 16x8x8, C=64, k_sig=6, sigma=0.5
    d.samples_per_class = 32;
    d.seed = seed;
    return d;
}

NetworkConfig desk_network(Strategy s) {
    NetworkConfig n;
    n.chunk_lengths = {4, 8, 16};
    n.merge.strategy = s;
    return n;
}

// 7. Learnable VTM learns the planted saliency.
Outcome saliency_learning() {
    int good = 0;
    std::string per_seed;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const SyntheticDataset ds = synthesize(planted(seed));
        TrainHyper h;
        h.epochs = 6;
        h.seed = seed;
        h.threads = env_thread_cap();
        const TrainResult r = train(ds.train, ds.val, desk_network(Strategy::learnable), h);
        const EpochMetrics& m = r.log.back();
        const double gap = m.saliency_signal - m.saliency_background;
        good += m.val_metric >= 0.9 && gap >= 0.2;
        per_seed += fmt(" [seed %d acc %.3f gap %.3f]", static_cast<int>(seed), m.val_metric, gap);
    }
    return {good >= 4, fmt("%d/5 seeds meet acc>=0.90 and gap>=0.2 after 6 epochs:", good) + per_seed};
}

// 8. Adversarial motion: learnable beats motion-based target sampling.
Outcome adversarial_motion() {
    double sum_l = 0.0, sum_m = 0.0;
    std::string per_seed;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SynthConfig d = planted(seed);
        d.motion = MotionMode::adversarial;
        d.signal_amplitude = 0.08;
        const SyntheticDataset ds = synthesize(d);
        double acc[2];
        for (int k = 0; k < 2; ++k) {
            NetworkConfig n = desk_network(k == 0 ? Strategy::learnable : Strategy::motion);
            n.merge.r_fraction = 1.0;
            TrainHyper h;
            h.epochs = 8;
            h.seed = seed;
            h.threads = env_thread_cap();
            acc[k] = train(ds.train, ds.val, n, h).log.back().val_metric;
        }
        sum_l += acc[0];
        sum_m += acc[1];
        per_seed += fmt(" [seed %d learnable %.3f motion %.3f]", static_cast<int>(seed), acc[0], acc[1]);
    }
    const double gap = 100.0 * (sum_l - sum_m) / 5.0;
    return {gap >= 5.0, fmt("mean learnable %.3f vs motion %.3f, gap %.1f points:", sum_l / 5, sum_m / 5, gap) +
                            per_seed};
}

// 9. Analytic FLOP reduction, cross-checked with the network, plus wall-clock speedup.
Outcome efficiency() {
    NetworkConfig merged;  // gamma 6, r 0.8, chunks (6, 30, 60), C = 64
    NetworkConfig baseline = merged;
    baseline.merge.r_fraction = 0.0;
    const GridShape grid{60, 16, 16, 64};
    const CostReport cm = schedule_cost(merged, grid), cb = schedule_cost(baseline, grid);
    const double ratio = static_cast<double>(cb.total_flops()) / static_cast<double>(cm.total_flops());

    // Recount FLOPs from the token counts the network itself reports.
    const NetworkParams params = NetworkParams::init(merged, 9);
    Rng rng(909);
    const TokenTensor clip = random_tokens(rng, grid);
    bool consistent = true;
    for (const auto& [cfg, rep] : {std::pair{&merged, &cm}, std::pair{&baseline, &cb}}) {
        const Prediction p = network_forward(clip, *cfg, params, 1);
        std::uint64_t flops = 0;
        for (int b = 0; b < kNumBlocks; ++b) {
            const auto c = static_cast<std::uint64_t>(cfg->block_width(b));
            for (std::size_t n : p.trace[b].n_in) flops += attention_flops(n, c, c, cfg->heads);
            consistent = consistent && p.trace[b].n_in == rep->trace[b].n_in && p.trace[b].n_out == rep->trace[b].n_out;
        }
        consistent = consistent && flops == rep->total_flops();
    }

    const Throughput tm = measure_throughput(merged, params, grid, 3, 1, 3);
    const Throughput tb = measure_throughput(baseline, params, grid, 3, 1, 3);
    const double speedup = tm.mean / tb.mean;
    return {ratio >= 4.0 && consistent && speedup >= 2.0,
            fmt("flops %llu -> %llu (%.2fx), network trace %s, peak floats %llu -> %llu, "
                "throughput %.3f -> %.3f clips/s (%.2fx) at N = %zu",
                static_cast<unsigned long long>(cb.total_flops()), static_cast<unsigned long long>(cm.total_flops()),
                ratio, consistent ? "agrees" : "DISAGREES", static_cast<unsigned long long>(cb.peak_floats()),
                static_cast<unsigned long long>(cm.peak_floats()), tb.mean, tm.mean, speedup, grid.tokens())};
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(VTM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

// 10. Two identical end-to-end runs produce identical artifacts.
Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / "vtm_acceptance_determinism";
    fs::remove_all(root);
    fs::create_directories(root);
    bool ok = true;
    for (const char* run : {"a", "b"}) {
        const nlohmann::json cfg = {
            {"seed", 11},
            {"network", {{"chunk_lengths", {2, 4, 8}}, {"channels", 32}, {"heads", 2}}},
            {"train", {{"epochs", 2}, {"batch", 4}}},
            {"data", {{"samples_per_class", 4}, {"grid", {{"frames", 8}, {"rows", 6}, {"cols", 6}, {"channels", 32}}}}},
            {"paths", {{"data_dir", (root / run / "data").string()}, {"out_dir", (root / run / "out").string()}}}};
        fs::create_directories(root / run);
        std::ofstream(root / run / "config.json") << cfg.dump(2);
        const std::string c = " -c " + (root / run / "config.json").string();
        ok = ok && run_cli("synth" + c) == 0 && run_cli("train" + c) == 0 && run_cli("eval" + c) == 0;
    }
    std::string detail = ok ? "" : "a CLI step failed; ";
    int identical = 0;
    const std::vector<std::string> files{"out/checkpoint.vtma", "out/train_metrics.csv", "out/eval_metrics.csv"};
    for (const std::string& f : files) {
        const std::string a = slurp(root / "a" / f), b = slurp(root / "b" / f);
        const bool same = !a.empty() && a == b;
        identical += same;
        detail += f + (same ? " identical; " : " DIFFERS; ");
    }
    fs::remove_all(root);
    return {ok && identical == static_cast<int>(files.size()), detail};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"count law", count_law},
        {"matching oracle", matching_oracle},
        {"conservation", conservation},
        {"gradient suite", gradient_suite},
        {"saliency-attention identity", saliency_identity},
        {"sampling fidelity", sampling_fidelity},
        {"saliency learning", saliency_learning},
        {"adversarial motion", adversarial_motion},
        {"efficiency scaling", efficiency},
        {"determinism", determinism},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    int failures = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const int id = static_cast<int>(k) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("criterion %2d %-28s %s (%.1fs) %s\n", id, criteria[k].first, o.pass ? "PASS" : "FAIL", secs,
                    o.detail.c_str());
        std::fflush(stdout);
        failures += !o.pass;
    }
    return failures == 0 ? 0 : 1;
}
