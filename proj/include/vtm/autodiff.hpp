// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "vtm/dense_array.hpp"

/// Tape-based reverse-mode automatic differentiation over rank-2 arrays.
///
/// A Graph owns every node created while building one forward pass. Nodes are
/// appended in creation order, so the tape order is already a topological
/// order and backward() simply walks it in reverse. Graphs are not
/// thread-safe; independent graphs can be built concurrently.
namespace vtm::ad {

class Graph;

/// Lightweight handle to a node in a Graph.
class Var {
public:
    Var() = default;

    const DenseArray& value() const;
    /// Gradient after backward(); zeros if no gradient reached the node.
    const DenseArray& grad() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }

    Graph& graph() const { return *graph_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return graph_ != nullptr; }

private:
    friend class Graph;
    Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}
    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

class Graph {
public:
    using BackwardFn = std::function<void(Graph&, std::size_t self)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Leaf that never receives a gradient.
    Var constant(DenseArray value);
    /// Leaf that receives a gradient.
    Var variable(DenseArray value);

    /// Populates gradients of every node reachable from a scalar root.
    void backward(Var root);

    const DenseArray& value(std::size_t id) const { return nodes_[id].value; }
    const DenseArray& grad(std::size_t id);
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    // Used by primitives.
    Var record(DenseArray value, std::vector<std::size_t> parents, BackwardFn backward);
    std::size_t parent(std::size_t id, std::size_t k) const { return nodes_[id].parents[k]; }
    const DenseArray& upstream(std::size_t id) const { return nodes_[id].grad; }
    /// Gradient buffer of a parent, allocated on first use; null if the
    /// parent does not need a gradient.
    DenseArray* grad_sink(std::size_t id);

private:
    struct Node {
        DenseArray value;
        DenseArray grad;
        std::vector<std::size_t> parents;
        BackwardFn backward;
        bool requires_grad = false;
    };
    std::vector<Node> nodes_;
};

// Primitives. All inputs must belong to the same graph.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// a[M x N] + row[1 x N] broadcast over rows.
Var add_row(Var a, Var row);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var tanh_elem(Var a);
Var softmax_rows(Var a);
/// Mean over rows: [M x N] -> [1 x N].
Var mean_rows(Var a);
Var sum(Var a);
/// Per-row normalization to zero mean / unit variance.
Var layer_norm_rows(Var a, double eps = 1e-5);
/// Normalization followed by per-column affine gamma, beta ([1 x N] each).
Var layer_norm_rows(Var a, Var gamma, Var beta, double eps = 1e-5);
/// out[r] = a[idx[r]]; duplicate indices allowed, backward scatter-adds.
Var gather_rows(Var a, std::span<const std::size_t> idx);
/// out[s] = sum_{i in s} w_i a_i / sum_{i in s} w_i
Var segment_mean(Var a, std::span<const std::size_t> segment_of, std::span<const double> weights,
                 std::size_t num_segments);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
/// Elementwise product with a fixed mask (no gradient to the mask).
Var mask_mul(Var a, const DenseArray& mask);
/// Mean negative log-likelihood of softmax(logits) at the labels, one per row.
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels);
/// Mean squared error against fixed targets.
Var mse(Var pred, const DenseArray& target);

/// x * w + bias
Var linear(Var x, Var w, Var bias);

/// Fused multi-head attention on precomputed projections q, k, v (N x D):
/// head h uses columns [h*D/heads, (h+1)*D/heads) and computes
/// softmax((q_h k_h^T + 1 bias) * scale) v_h. `key_bias` is an optional
/// 1 x N row. Only the attention matrices are kept for backward; a copy of
/// them is appended to `weights_out` when given.
Var multi_head_attention(Var q, Var k, Var v, int heads, double scale, const Var* key_bias = nullptr,
                         std::vector<DenseArray>* weights_out = nullptr);

}  // namespace vtm::ad
