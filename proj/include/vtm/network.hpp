// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vtm/attention.hpp"
#include "vtm/autodiff.hpp"
#include "vtm/merge_engine.hpp"
#include "vtm/token_types.hpp"

namespace vtm {

inline constexpr int kNumBlocks = 3;

enum class HeadType { classify, regress };
enum class Mode { train, eval };

HeadType parse_head_type(std::string_view s);
std::string_view to_string(HeadType h);

struct NetworkConfig {
    /// Frames per chunk for each block; each must divide the next.
    std::array<int, kNumBlocks> chunk_lengths{6, 30, 60};
    MergeConfig merge;
    int channels = 64;
    int heads = 4;
    HeadType head_type = HeadType::classify;
    int num_classes = 4;
    double aux_loss_weight = 1.0;
    double dropout = 0.1;

    void validate() const;
    /// Input width of block b; each block halves it.
    int block_width(int block) const { return channels >> block; }
    int output_width() const { return channels >> kNumBlocks; }
    int head_outputs() const { return head_type == HeadType::classify ? num_classes : 1; }
    /// Frames after padding a clip of `frames` frames.
    int padded_frames(int frames) const;
};

/// Weights of one VTM block with input width c: attention c x c, saliency
/// c x 1, channel-halving projection c x c/2, two layer norms.
struct BlockParams {
    DenseArray ln1_gamma, ln1_beta;
    DenseArray u_q, u_k, u_v, u_s;
    DenseArray ln2_gamma, ln2_beta;
    DenseArray proj_w, proj_b;
};

struct NetworkParams {
    std::array<BlockParams, kNumBlocks> blocks;
    DenseArray head_w, head_b;

    static NetworkParams init(const NetworkConfig& cfg, std::uint64_t seed);

    /// Stable name/array listing used by checkpoints and the optimizer.
    std::vector<std::pair<std::string, DenseArray*>> named();
    std::vector<std::pair<std::string, const DenseArray*>> named() const;
};

/// Per-block token counts: one (n_in, n_out) pair per chunk.
struct BlockTrace {
    int chunk_len = 0;
    std::vector<std::size_t> n_in;
    std::vector<std::size_t> n_out;
};
using TokenCountTrace = std::array<BlockTrace, kNumBlocks>;

/// Called once per attention evaluation with the coordinates of the tokens
/// attending to each other. Used to check chunk isolation.
using AttentionProbe = std::function<void(int block, bool aux, std::span<const Coord> coords)>;

/// Pads a clip to `frames` frames by repeating its last frame.
TokenTensor pad_frames(const TokenTensor& t, int frames);

// --- single block (graph) -------------------------------------------------

/// Graph-bound block weights.
struct BoundBlock {
    ad::Var ln1_gamma, ln1_beta, ln2_gamma, ln2_beta, proj_w, proj_b;
    AttentionParams attn;
};

struct BlockOutput {
    ad::Var features;             // merged main-path tokens
    TokenTensor tokens;           // metadata of merged tokens (features left empty)
    MergePlan plan;               // how the block's input tokens were merged
    ad::Var saliency;             // N_in x 1, differentiable
    std::vector<double> saliency_values;
    std::optional<ad::Var> aux;   // auxiliary tokens, never merged
};

/// One VTM block on one chunk: layer-norm, self-attention, residual,
/// layer-norm, linear (width halving), dropout, target selection, merge.
///
/// With `aux_in` (train mode, learnable strategy) the auxiliary stream runs
/// the same block with saliency-guided attention and no merge. Auxiliary
/// token i is biased by the saliency of main token `aux_owner[i]`, the main
/// token it has been merged into so far (identity in the first block).
BlockOutput vtm_block_forward(ad::Var x, const TokenTensor& tokens, const BoundBlock& params,
                              const NetworkConfig& cfg, Mode mode, std::uint64_t seed,
                              std::optional<ad::Var> aux_in = std::nullopt,
                              std::span<const std::size_t> aux_owner = {});

// --- whole network ----------------------------------------------------------

struct BoundNetwork {
    std::array<BoundBlock, kNumBlocks> blocks;
    ad::Var head_w, head_b;
    /// Parameter variables in NetworkParams::named() order.
    std::vector<ad::Var> all;
};

BoundNetwork bind(ad::Graph& g, const NetworkParams& params, int heads);

struct GraphForward {
    ad::Var prediction;                 // 1 x K logits or 1 x 1
    std::optional<ad::Var> aux_prediction;
    std::vector<double> saliency;       // block-1 scores of the input tokens
    TokenCountTrace trace;
    std::array<int, kNumBlocks + 1> widths{};
};

/// Differentiable forward pass. In train mode with the learnable strategy the
/// auxiliary stream is evaluated as well.
GraphForward network_forward_graph(ad::Graph& g, const BoundNetwork& net, const TokenTensor& video,
                                   const NetworkConfig& cfg, Mode mode, std::uint64_t seed,
                                   const AttentionProbe& probe = {});

struct Prediction {
    std::vector<float> values;          // logits or the regressed scalar
    std::vector<double> saliency;       // block-1 scores of the input tokens
    TokenCountTrace trace;
    std::array<int, kNumBlocks + 1> widths{};
    /// Input token indices represented by each final token.
    std::vector<std::vector<std::size_t>> final_constituents;
};

/// Eval-mode forward without a graph; memory linear in the token count.
Prediction network_forward(const TokenTensor& video, const NetworkConfig& cfg,
                           const NetworkParams& params, std::uint64_t seed,
                           const AttentionProbe& probe = {});

/// Token ranges [begin, end) of consecutive `chunk_len`-frame windows over a
/// frame-sorted token list.
std::vector<std::pair<std::size_t, std::size_t>> chunk_ranges(std::span<const Coord> coords,
                                                              int chunk_len, int frames);

}  // namespace vtm
