// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#include "vtm/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "vtm/errors.hpp"
#include "vtm/kernels.hpp"
#include "vtm/partition.hpp"
#include "vtm/rng.hpp"

namespace vtm {

namespace {

constexpr std::uint64_t kTargetStream = 0x7a11;
constexpr std::uint64_t kDropoutStream = 0xd0d0;
constexpr std::uint64_t kAuxDropoutStream = 0xa0a0;

DenseArray random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
    DenseArray a = DenseArray::matrix(rows, cols);
    for (float& v : a.data()) v = static_cast<float>(rng.normal() * stddev);
    return a;
}

DenseArray dropout_mask(std::size_t rows, std::size_t cols, double rate, std::uint64_t seed) {
    DenseArray m = DenseArray::matrix(rows, cols);
    Rng rng(seed);
    const auto keep = static_cast<float>(1.0 / (1.0 - rate));
    for (float& v : m.data()) v = rng.uniform() < rate ? 0.0f : keep;
    return m;
}

std::uint64_t chunk_seed(std::uint64_t seed, int block, std::size_t chunk) {
    return mix_seed(mix_seed(seed, static_cast<std::uint64_t>(block)), chunk);
}

MergePlan identity_plan(const TokenTensor& t) {
    MergePlan p;
    const std::size_t n = t.count();
    p.num_outputs = n;
    p.segment_of.resize(n);
    std::iota(p.segment_of.begin(), p.segment_of.end(), std::size_t{0});
    p.weights.assign(n, 1.0);
    p.constituents.resize(n);
    for (std::size_t i = 0; i < n; ++i) p.constituents[i] = {i};
    p.coords = t.coords;
    p.sizes = t.sizes;
    p.motion = t.motion;
    return p;
}

MergePlan plan_for_chunk(const TokenTensor& tokens, const DenseArray& merge_keys,
                         const NetworkConfig& cfg, std::span<const double> saliency,
                         std::uint64_t seed) {
    const auto gamma = static_cast<std::size_t>(cfg.merge.gamma);
    if (tokens.count() < gamma || cfg.merge.merge_count(tokens.count() - tokens.count() / gamma) == 0) {
        return identity_plan(tokens);
    }
    const std::vector<std::size_t> targets =
        select_targets(tokens, cfg.merge.strategy, cfg.merge.gamma, saliency,
                       mix_seed(seed, kTargetStream));
    return plan_merge_step(tokens, merge_keys, cfg.merge, targets);
}

TokenTensor subset(const TokenTensor& t, std::size_t begin, std::size_t end) {
    TokenTensor s;
    s.coords.assign(t.coords.begin() + static_cast<std::ptrdiff_t>(begin),
                    t.coords.begin() + static_cast<std::ptrdiff_t>(end));
    s.sizes.assign(t.sizes.begin() + static_cast<std::ptrdiff_t>(begin),
                   t.sizes.begin() + static_cast<std::ptrdiff_t>(end));
    s.motion.assign(t.motion.begin() + static_cast<std::ptrdiff_t>(begin),
                    t.motion.begin() + static_cast<std::ptrdiff_t>(end));
    s.grid = t.grid;
    return s;
}

void append_meta(TokenTensor& dst, const MergePlan& plan) {
    dst.coords.insert(dst.coords.end(), plan.coords.begin(), plan.coords.end());
    dst.sizes.insert(dst.sizes.end(), plan.sizes.begin(), plan.sizes.end());
    dst.motion.insert(dst.motion.end(), plan.motion.begin(), plan.motion.end());
}

DenseArray rows_of(const DenseArray& a, std::size_t begin, std::size_t end) {
    const std::size_t c = a.cols();
    std::vector<float> d(a.data().begin() + static_cast<std::ptrdiff_t>(begin * c),
                         a.data().begin() + static_cast<std::ptrdiff_t>(end * c));
    return DenseArray({end - begin, c}, std::move(d));
}

void check_width(std::size_t got, int expected, int stage) {
    if (got != static_cast<std::size_t>(expected)) {
        throw ShapeError("network: stage " + std::to_string(stage) + " has width " +
                         std::to_string(got) + ", expected " + std::to_string(expected));
    }
}

// Tracks which current main token each input token belongs to.
struct Ownership {
    std::vector<std::size_t> owner;

    explicit Ownership(std::size_t n) : owner(n) {
        std::iota(owner.begin(), owner.end(), std::size_t{0});
    }
    // Tokens [in_begin, in_end) of the original clip were in main chunk
    // starting at `main_begin`, which produced outputs starting at `out_begin`.
    void update(std::size_t in_begin, std::size_t in_end, std::size_t main_begin,
                std::size_t out_begin, const MergePlan& plan) {
        for (std::size_t o = in_begin; o < in_end; ++o) {
            owner[o] = out_begin + plan.segment_of[owner[o] - main_begin];
        }
    }
};

}  // namespace

HeadType parse_head_type(std::string_view s) {
    if (s == "classify") return HeadType::classify;
    if (s == "regress") return HeadType::regress;
    throw ConfigError("unknown head type '" + std::string(s) + "'");
}

std::string_view to_string(HeadType h) { return h == HeadType::classify ? "classify" : "regress"; }

void NetworkConfig::validate() const {
    merge.validate();
    for (int i = 0; i < kNumBlocks; ++i) {
        if (chunk_lengths[i] < 1) throw ConfigError("network.chunk_lengths must be positive");
        if (i > 0 && chunk_lengths[i] % chunk_lengths[i - 1] != 0) {
            throw ConfigError("network.chunk_lengths must be nested (each divides the next), got (" +
                              std::to_string(chunk_lengths[0]) + ", " + std::to_string(chunk_lengths[1]) +
                              ", " + std::to_string(chunk_lengths[2]) + ")");
        }
    }
    if (channels < 8 || channels % 8 != 0) {
        throw ConfigError("network.channels must be a positive multiple of 8, got " +
                          std::to_string(channels));
    }
    if (heads < 1) throw ConfigError("network.heads must be >= 1");
    for (int b = 0; b < kNumBlocks; ++b) {
        if (block_width(b) % heads != 0) {
            throw ConfigError("block " + std::to_string(b + 1) + " width " +
                              std::to_string(block_width(b)) + " is not divisible by " +
                              std::to_string(heads) + " heads");
        }
    }
    if (head_type == HeadType::classify && num_classes < 2) {
        throw ConfigError("network.num_classes must be >= 2 for classification");
    }
    if (aux_loss_weight < 0.0) throw ConfigError("network.aux_loss_weight must be >= 0");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("network.dropout must lie in [0, 1)");
}

int NetworkConfig::padded_frames(int frames) const {
    const int unit = chunk_lengths[kNumBlocks - 1];
    return ((frames + unit - 1) / unit) * unit;
}

NetworkParams NetworkParams::init(const NetworkConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(mix_seed(seed, 0x1417));
    NetworkParams p;
    for (int b = 0; b < kNumBlocks; ++b) {
        const auto c = static_cast<std::size_t>(cfg.block_width(b));
        BlockParams& bp = p.blocks[static_cast<std::size_t>(b)];
        const double s = 1.0 / std::sqrt(static_cast<double>(c));
        bp.ln1_gamma = DenseArray::matrix(1, c, 1.0f);
        bp.ln1_beta = DenseArray::matrix(1, c, 0.0f);
        bp.u_q = random_matrix(rng, c, c, s);
        bp.u_k = random_matrix(rng, c, c, s);
        bp.u_v = random_matrix(rng, c, c, s);
        bp.u_s = random_matrix(rng, c, 1, 0.1 * s);
        bp.ln2_gamma = DenseArray::matrix(1, c, 1.0f);
        bp.ln2_beta = DenseArray::matrix(1, c, 0.0f);
        bp.proj_w = random_matrix(rng, c, c / 2, s);
        bp.proj_b = DenseArray::matrix(1, c / 2, 0.0f);
    }
    const auto out = static_cast<std::size_t>(cfg.output_width());
    p.head_w = random_matrix(rng, out, static_cast<std::size_t>(cfg.head_outputs()),
                             1.0 / std::sqrt(static_cast<double>(out)));
    p.head_b = DenseArray::matrix(1, static_cast<std::size_t>(cfg.head_outputs()), 0.0f);
    return p;
}

std::vector<std::pair<std::string, DenseArray*>> NetworkParams::named() {
    std::vector<std::pair<std::string, DenseArray*>> out;
    for (int b = 0; b < kNumBlocks; ++b) {
        BlockParams& bp = blocks[static_cast<std::size_t>(b)];
        const std::string pre = "block" + std::to_string(b + 1) + ".";
        out.emplace_back(pre + "ln1.gamma", &bp.ln1_gamma);
        out.emplace_back(pre + "ln1.beta", &bp.ln1_beta);
        out.emplace_back(pre + "u_q", &bp.u_q);
        out.emplace_back(pre + "u_k", &bp.u_k);
        out.emplace_back(pre + "u_v", &bp.u_v);
        out.emplace_back(pre + "u_s", &bp.u_s);
        out.emplace_back(pre + "ln2.gamma", &bp.ln2_gamma);
        out.emplace_back(pre + "ln2.beta", &bp.ln2_beta);
        out.emplace_back(pre + "proj.w", &bp.proj_w);
        out.emplace_back(pre + "proj.b", &bp.proj_b);
    }
    out.emplace_back("head.w", &head_w);
    out.emplace_back("head.b", &head_b);
    return out;
}

std::vector<std::pair<std::string, const DenseArray*>> NetworkParams::named() const {
    std::vector<std::pair<std::string, const DenseArray*>> out;
    for (auto& [name, ptr] : const_cast<NetworkParams*>(this)->named()) out.emplace_back(name, ptr);
    return out;
}

TokenTensor pad_frames(const TokenTensor& t, int frames) {
    if (frames <= t.grid.frames) return t;
    const int last = t.grid.frames - 1;
    std::vector<std::size_t> last_frame;
    for (std::size_t i = 0; i < t.count(); ++i) {
        if (t.coords[i].frame == last) last_frame.push_back(i);
    }
    TokenTensor out = t;
    const std::size_t c = t.features.cols();
    std::vector<float> data(t.features.data().begin(), t.features.data().end());
    std::size_t n = t.count();
    for (int f = t.grid.frames; f < frames; ++f) {
        for (std::size_t i : last_frame) {
            auto row = t.features.row(i);
            data.insert(data.end(), row.begin(), row.end());
            Coord cc = t.coords[i];
            cc.frame = f;
            out.coords.push_back(cc);
            out.sizes.push_back(t.sizes[i]);
            out.motion.push_back(t.motion[i]);
            ++n;
        }
    }
    out.features = DenseArray({n, c}, std::move(data));
    out.grid.frames = frames;
    return out;
}

std::vector<std::pair<std::size_t, std::size_t>> chunk_ranges(std::span<const Coord> coords,
                                                              int chunk_len, int frames) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t i = 0;
    for (int start = 0; start < frames; start += chunk_len) {
        const std::size_t begin = i;
        while (i < coords.size() && coords[i].frame < start + chunk_len) {
            if (coords[i].frame < start) throw ValidationError("chunk_ranges: tokens are not frame-sorted");
            ++i;
        }
        out.emplace_back(begin, i);
    }
    if (i != coords.size()) throw ValidationError("chunk_ranges: token frame outside the clip");
    return out;
}

BlockOutput vtm_block_forward(ad::Var x, const TokenTensor& tokens, const BoundBlock& params,
                              const NetworkConfig& cfg, Mode mode, std::uint64_t seed,
                              std::optional<ad::Var> aux_in, std::span<const std::size_t> aux_owner) {
    if (x.rows() != tokens.count()) {
        throw ShapeError("vtm_block_forward: " + std::to_string(x.rows()) + " feature rows for " +
                         std::to_string(tokens.count()) + " tokens");
    }
    const bool train = mode == Mode::train;
    if (aux_in && !(train && cfg.merge.strategy == Strategy::learnable)) {
        throw ConfigError("vtm_block_forward: auxiliary input requires train mode and the learnable strategy");
    }
    ad::Var h = ad::layer_norm_rows(x, params.ln1_gamma, params.ln1_beta);
    AttentionResult att = self_attention(h, params.attn);
    ad::Var y = ad::add(x, att.out);
    ad::Var z = ad::linear(ad::layer_norm_rows(y, params.ln2_gamma, params.ln2_beta), params.proj_w,
                           params.proj_b);
    if (train && cfg.dropout > 0.0) {
        z = ad::mask_mul(z, dropout_mask(z.rows(), z.cols(), cfg.dropout, mix_seed(seed, kDropoutStream)));
    }

    BlockOutput out;
    out.saliency = saliency_scores(att.keys, params.attn.u_s);
    out.saliency_values.assign(out.saliency.value().data().begin(), out.saliency.value().data().end());
    out.plan = plan_for_chunk(tokens, att.merge_keys, cfg, out.saliency_values, seed);
    out.features = out.plan.num_outputs == tokens.count()
                       ? z
                       : ad::segment_mean(z, out.plan.segment_of, out.plan.weights, out.plan.num_outputs);
    out.tokens.coords = out.plan.coords;
    out.tokens.sizes = out.plan.sizes;
    out.tokens.motion = out.plan.motion;
    out.tokens.grid = tokens.grid;
    out.tokens.grid.channels = static_cast<int>(z.cols());

    if (aux_in) {
        ad::Var xa = *aux_in;
        if (aux_owner.size() != xa.rows()) {
            throw ShapeError("vtm_block_forward: auxiliary owner map has " +
                             std::to_string(aux_owner.size()) + " entries for " +
                             std::to_string(xa.rows()) + " auxiliary tokens");
        }
        ad::Var s_aux = ad::gather_rows(out.saliency, aux_owner);
        ad::Var ha = ad::layer_norm_rows(xa, params.ln1_gamma, params.ln1_beta);
        AttentionResult att_a = saliency_guided_attention(ha, params.attn, s_aux);
        ad::Var ya = ad::add(xa, att_a.out);
        ad::Var za = ad::linear(ad::layer_norm_rows(ya, params.ln2_gamma, params.ln2_beta),
                                params.proj_w, params.proj_b);
        if (cfg.dropout > 0.0) {
            za = ad::mask_mul(za, dropout_mask(za.rows(), za.cols(), cfg.dropout,
                                               mix_seed(seed, kAuxDropoutStream)));
        }
        out.aux = za;
    }
    return out;
}

BoundNetwork bind(ad::Graph& g, const NetworkParams& params, int heads) {
    BoundNetwork net;
    for (const auto& [name, arr] : params.named()) net.all.push_back(g.variable(*arr));
    std::size_t k = 0;
    for (int b = 0; b < kNumBlocks; ++b) {
        BoundBlock& bb = net.blocks[static_cast<std::size_t>(b)];
        bb.ln1_gamma = net.all[k++];
        bb.ln1_beta = net.all[k++];
        bb.attn.heads = heads;
        bb.attn.u_q = net.all[k++];
        bb.attn.u_k = net.all[k++];
        bb.attn.u_v = net.all[k++];
        bb.attn.u_s = net.all[k++];
        bb.ln2_gamma = net.all[k++];
        bb.ln2_beta = net.all[k++];
        bb.proj_w = net.all[k++];
        bb.proj_b = net.all[k++];
    }
    net.head_w = net.all[k++];
    net.head_b = net.all[k++];
    return net;
}

GraphForward network_forward_graph(ad::Graph& g, const BoundNetwork& net, const TokenTensor& video,
                                   const NetworkConfig& cfg, Mode mode, std::uint64_t seed,
                                   const AttentionProbe& probe) {
    cfg.validate();
    validate(video);
    const TokenTensor clip = pad_frames(video, cfg.padded_frames(video.grid.frames));
    const int frames = clip.grid.frames;
    const bool use_aux = mode == Mode::train && cfg.merge.strategy == Strategy::learnable;

    GraphForward result;
    ad::Var feats = g.constant(clip.features);
    std::optional<ad::Var> aux;
    if (use_aux) aux = feats;
    TokenTensor meta = clip;
    meta.features = DenseArray();
    Ownership own(clip.count());

    for (int b = 0; b < kNumBlocks; ++b) {
        const int chunk_len = cfg.chunk_lengths[static_cast<std::size_t>(b)];
        check_width(feats.cols(), cfg.block_width(b), b);
        result.widths[static_cast<std::size_t>(b)] = static_cast<int>(feats.cols());
        const auto main_ranges = chunk_ranges(meta.coords, chunk_len, frames);
        const auto orig_ranges = chunk_ranges(clip.coords, chunk_len, frames);
        BlockTrace& bt = result.trace[static_cast<std::size_t>(b)];
        bt.chunk_len = chunk_len;

        std::vector<ad::Var> main_parts, aux_parts;
        TokenTensor next_meta;
        next_meta.grid = meta.grid;
        std::size_t out_offset = 0;
        for (std::size_t k = 0; k < main_ranges.size(); ++k) {
            const auto [begin, end] = main_ranges[k];
            const auto [obegin, oend] = orig_ranges[k];
            if (begin == end) continue;
            const TokenTensor chunk_meta = subset(meta, begin, end);
            std::vector<std::size_t> rows(end - begin);
            std::iota(rows.begin(), rows.end(), begin);
            ad::Var x = ad::gather_rows(feats, rows);

            std::optional<ad::Var> xa;
            std::vector<std::size_t> owner_local;
            if (aux) {
                std::vector<std::size_t> arows(oend - obegin);
                std::iota(arows.begin(), arows.end(), obegin);
                xa = ad::gather_rows(*aux, arows);
                owner_local.reserve(arows.size());
                for (std::size_t o = obegin; o < oend; ++o) {
                    const std::size_t w = own.owner[o];
                    if (w < begin || w >= end) throw ValidationError("network: token owner left its chunk");
                    owner_local.push_back(w - begin);
                }
            }
            if (probe) {
                probe(b, false, chunk_meta.coords);
                if (aux) probe(b, true, std::span<const Coord>(clip.coords).subspan(obegin, oend - obegin));
            }
            BlockOutput bo = vtm_block_forward(x, chunk_meta, net.blocks[static_cast<std::size_t>(b)], cfg,
                                               mode, chunk_seed(seed, b, k), xa, owner_local);
            if (b == 0) {
                result.saliency.insert(result.saliency.end(), bo.saliency_values.begin(),
                                       bo.saliency_values.end());
            }
            own.update(obegin, oend, begin, out_offset, bo.plan);
            bt.n_in.push_back(end - begin);
            bt.n_out.push_back(bo.plan.num_outputs);
            out_offset += bo.plan.num_outputs;
            append_meta(next_meta, bo.plan);
            main_parts.push_back(bo.features);
            if (bo.aux) aux_parts.push_back(*bo.aux);
        }
        feats = main_parts.size() == 1 ? main_parts.front() : ad::concat_rows(main_parts);
        if (aux) aux = aux_parts.size() == 1 ? aux_parts.front() : ad::concat_rows(aux_parts);
        next_meta.grid.channels = static_cast<int>(feats.cols());
        meta = std::move(next_meta);
    }
    check_width(feats.cols(), cfg.output_width(), kNumBlocks);
    result.widths[kNumBlocks] = static_cast<int>(feats.cols());
    result.prediction = ad::linear(ad::mean_rows(feats), net.head_w, net.head_b);
    if (aux) result.aux_prediction = ad::linear(ad::mean_rows(*aux), net.head_w, net.head_b);
    result.saliency.resize(video.count());
    return result;
}

Prediction network_forward(const TokenTensor& video, const NetworkConfig& cfg,
                           const NetworkParams& params, std::uint64_t seed,
                           const AttentionProbe& probe) {
    cfg.validate();
    validate(video);
    const TokenTensor clip = pad_frames(video, cfg.padded_frames(video.grid.frames));
    const int frames = clip.grid.frames;

    Prediction result;
    DenseArray feats = clip.features;
    TokenTensor meta = clip;
    meta.features = DenseArray();
    Ownership own(clip.count());

    for (int b = 0; b < kNumBlocks; ++b) {
        const BlockParams& bp = params.blocks[static_cast<std::size_t>(b)];
        const int chunk_len = cfg.chunk_lengths[static_cast<std::size_t>(b)];
        check_width(feats.cols(), cfg.block_width(b), b);
        result.widths[static_cast<std::size_t>(b)] = static_cast<int>(feats.cols());
        const auto main_ranges = chunk_ranges(meta.coords, chunk_len, frames);
        const auto orig_ranges = chunk_ranges(clip.coords, chunk_len, frames);
        BlockTrace& bt = result.trace[static_cast<std::size_t>(b)];
        bt.chunk_len = chunk_len;

        std::vector<float> next_data;
        TokenTensor next_meta;
        next_meta.grid = meta.grid;
        std::size_t out_offset = 0;
        std::size_t width = 0;
        for (std::size_t k = 0; k < main_ranges.size(); ++k) {
            const auto [begin, end] = main_ranges[k];
            if (begin == end) continue;
            const TokenTensor chunk_meta = subset(meta, begin, end);
            if (probe) probe(b, false, chunk_meta.coords);
            const DenseArray x = rows_of(feats, begin, end);
            const DenseArray h = kernels::layer_norm_rows(x, bp.ln1_gamma, bp.ln1_beta, 1e-5);
            InferenceAttention att = attention_inference(h, bp.u_q, bp.u_k, bp.u_v, cfg.heads);
            DenseArray y = x;
            for (std::size_t i = 0; i < y.numel(); ++i) y[i] += att.out[i];
            const DenseArray z = kernels::linear(
                kernels::layer_norm_rows(y, bp.ln2_gamma, bp.ln2_beta, 1e-5), bp.proj_w, bp.proj_b);
            const std::vector<double> sal = saliency_inference(att.keys, bp.u_s);
            if (b == 0) result.saliency.insert(result.saliency.end(), sal.begin(), sal.end());
            const std::uint64_t cs = chunk_seed(seed, b, k);
            const MergePlan plan = plan_for_chunk(chunk_meta, head_average(att.keys, cfg.heads), cfg, sal, cs);
            const DenseArray merged = plan.num_outputs == chunk_meta.count() ? z : pool_features(z, plan);
            next_data.insert(next_data.end(), merged.data().begin(), merged.data().end());
            width = merged.cols();
            own.update(orig_ranges[k].first, orig_ranges[k].second, begin, out_offset, plan);
            bt.n_in.push_back(end - begin);
            bt.n_out.push_back(plan.num_outputs);
            out_offset += plan.num_outputs;
            append_meta(next_meta, plan);
        }
        feats = DenseArray({out_offset, width}, std::move(next_data));
        next_meta.grid.channels = static_cast<int>(width);
        meta = std::move(next_meta);
    }
    check_width(feats.cols(), cfg.output_width(), kNumBlocks);
    result.widths[kNumBlocks] = static_cast<int>(feats.cols());

    DenseArray pooled = DenseArray::matrix(1, feats.cols());
    for (std::size_t j = 0; j < feats.cols(); ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < feats.rows(); ++i) acc += feats(i, j);
        pooled[j] = static_cast<float>(acc / static_cast<double>(feats.rows()));
    }
    const DenseArray out = kernels::linear(pooled, params.head_w, params.head_b);
    result.values.assign(out.data().begin(), out.data().end());
    result.saliency.resize(video.count());

    result.final_constituents.assign(meta.count(), {});
    for (std::size_t o = 0; o < video.count(); ++o) result.final_constituents[own.owner[o]].push_back(o);
    return result;
}

}  // namespace vtm
