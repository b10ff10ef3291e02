// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#include "vtm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "vtm/errors.hpp"
#include "vtm/kernels.hpp"

namespace vtm::ad {

const DenseArray& Var::value() const { return graph_->value(id_); }
const DenseArray& Var::grad() const { return graph_->grad(id_); }

Var Graph::constant(DenseArray value) {
    nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
    return Var(this, nodes_.size() - 1);
}

Var Graph::variable(DenseArray value) {
    nodes_.push_back(Node{std::move(value), {}, {}, nullptr, true});
    return Var(this, nodes_.size() - 1);
}

Var Graph::record(DenseArray value, std::vector<std::size_t> parents, BackwardFn backward) {
    bool needs = false;
    for (std::size_t p : parents) needs = needs || nodes_[p].requires_grad;
    nodes_.push_back(Node{std::move(value), {}, std::move(parents),
                          needs ? std::move(backward) : nullptr, needs});
    return Var(this, nodes_.size() - 1);
}

DenseArray* Graph::grad_sink(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty() && !n.value.empty()) n.grad = DenseArray(n.value.shape(), 0.0f);
    return &n.grad;
}

const DenseArray& Graph::grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.shape() != n.value.shape()) n.grad = DenseArray(n.value.shape(), 0.0f);
    return n.grad;
}

void Graph::backward(Var root) {
    if (root.graph_ != this) throw ShapeError("backward: root belongs to another graph");
    const std::size_t r = root.id_;
    if (nodes_[r].value.numel() != 1) {
        throw ShapeError("backward: root must be scalar, got shape " +
                         nodes_[r].value.shape_string());
    }
    for (std::size_t i = 0; i <= r; ++i) {
        if (nodes_[i].requires_grad) nodes_[i].grad = DenseArray(nodes_[i].value.shape(), 0.0f);
    }
    if (!nodes_[r].requires_grad) return;
    nodes_[r].grad[0] = 1.0f;
    for (std::size_t i = r + 1; i-- > 0;) {
        if (nodes_[i].backward) nodes_[i].backward(*this, i);
    }
}

namespace {

Graph& same_graph(const Var& a, const Var& b) {
    if (&a.graph() != &b.graph()) throw ShapeError("operands belong to different graphs");
    return a.graph();
}

void require_same_shape(const char* op, const DenseArray& a, const DenseArray& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
    }
}

void accumulate(DenseArray* sink, const DenseArray& g, double factor = 1.0) {
    if (sink == nullptr) return;
    for (std::size_t i = 0; i < g.numel(); ++i) {
        (*sink)[i] = static_cast<float>((*sink)[i] + factor * g[i]);
    }
}

}  // namespace

Var matmul(Var a, Var b) {
    Graph& g = same_graph(a, b);
    const DenseArray& av = a.value();
    const DenseArray& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
        throw ShapeError("matmul: inner dimensions differ, " + av.shape_string() + " x " +
                         bv.shape_string());
    }
    return g.record(kernels::matmul(av, bv), {a.id(), b.id()}, [](Graph& gr, std::size_t self) {
        const std::size_t pa = gr.parent(self, 0), pb = gr.parent(self, 1);
        const DenseArray& up = gr.upstream(self);
        if (DenseArray* sa = gr.grad_sink(pa)) accumulate(sa, kernels::matmul_nt(up, gr.value(pb)));
        if (DenseArray* sb = gr.grad_sink(pb)) accumulate(sb, kernels::matmul_tn(gr.value(pa), up));
    });
}

Var transpose(Var a) {
    return a.graph().record(kernels::transpose(a.value()), {a.id()},
                            [](Graph& gr, std::size_t self) {
                                if (DenseArray* s = gr.grad_sink(gr.parent(self, 0)))
                                    accumulate(s, kernels::transpose(gr.upstream(self)));
                            });
}

Var add(Var a, Var b) {
    Graph& g = same_graph(a, b);
    require_same_shape("add", a.value(), b.value());
    DenseArray out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
    return g.record(std::move(out), {a.id(), b.id()}, [](Graph& gr, std::size_t self) {
        accumulate(gr.grad_sink(gr.parent(self, 0)), gr.upstream(self));
        accumulate(gr.grad_sink(gr.parent(self, 1)), gr.upstream(self));
    });
}

Var sub(Var a, Var b) {
    Graph& g = same_graph(a, b);
    require_same_shape("sub", a.value(), b.value());
    DenseArray out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
    return g.record(std::move(out), {a.id(), b.id()}, [](Graph& gr, std::size_t self) {
        accumulate(gr.grad_sink(gr.parent(self, 0)), gr.upstream(self));
        accumulate(gr.grad_sink(gr.parent(self, 1)), gr.upstream(self), -1.0);
    });
}

Var add_row(Var a, Var row) {
    Graph& g = same_graph(a, row);
    const DenseArray& av = a.value();
    const DenseArray& rv = row.value();
    if (rv.rank() != 2 || rv.rows() != 1 || rv.cols() != av.cols()) {
        throw ShapeError("add_row: cannot broadcast " + rv.shape_string() + " over " +
                         av.shape_string());
    }
    DenseArray out = av;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += rv[j];
    return g.record(std::move(out), {a.id(), row.id()}, [](Graph& gr, std::size_t self) {
        const DenseArray& up = gr.upstream(self);
        accumulate(gr.grad_sink(gr.parent(self, 0)), up);
        if (DenseArray* s = gr.grad_sink(gr.parent(self, 1))) {
            for (std::size_t j = 0; j < up.cols(); ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < up.rows(); ++i) acc += up(i, j);
                (*s)[j] = static_cast<float>((*s)[j] + acc);
            }
        }
    });
}

Var mul(Var a, Var b) {
    Graph& g = same_graph(a, b);
    require_same_shape("mul", a.value(), b.value());
    DenseArray out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
    return g.record(std::move(out), {a.id(), b.id()}, [](Graph& gr, std::size_t self) {
        const std::size_t pa = gr.parent(self, 0), pb = gr.parent(self, 1);
        const DenseArray& up = gr.upstream(self);
        if (DenseArray* s = gr.grad_sink(pa)) {
            const DenseArray& bv = gr.value(pb);
            for (std::size_t i = 0; i < up.numel(); ++i) (*s)[i] += up[i] * bv[i];
        }
        if (DenseArray* s = gr.grad_sink(pb)) {
            const DenseArray& av = gr.value(pa);
            for (std::size_t i = 0; i < up.numel(); ++i) (*s)[i] += up[i] * av[i];
        }
    });
}

Var scale(Var a, double c) {
    DenseArray out = a.value();
    for (float& v : out.data()) v = static_cast<float>(v * c);
    return a.graph().record(std::move(out), {a.id()}, [c](Graph& gr, std::size_t self) {
        accumulate(gr.grad_sink(gr.parent(self, 0)), gr.upstream(self), c);
    });
}

Var tanh_elem(Var a) {
    DenseArray out = a.value();
    for (float& v : out.data()) v = static_cast<float>(std::tanh(static_cast<double>(v)));
    return a.graph().record(std::move(out), {a.id()}, [](Graph& gr, std::size_t self) {
        if (DenseArray* s = gr.grad_sink(gr.parent(self, 0))) {
            const DenseArray& y = gr.value(self);
            const DenseArray& up = gr.upstream(self);
            for (std::size_t i = 0; i < y.numel(); ++i) {
                const double yi = y[i];
                (*s)[i] = static_cast<float>((*s)[i] + up[i] * (1.0 - yi * yi));
            }
        }
    });
}

Var softmax_rows(Var a) {
    DenseArray out = a.value();
    kernels::softmax_rows_inplace(out);
    return a.graph().record(std::move(out), {a.id()}, [](Graph& gr, std::size_t self) {
        DenseArray* s = gr.grad_sink(gr.parent(self, 0));
        if (s == nullptr) return;
        const DenseArray& y = gr.value(self);
        const DenseArray& up = gr.upstream(self);
        const std::size_t n = y.cols();
        for (std::size_t i = 0; i < y.rows(); ++i) {
            const float* yr = y.data().data() + i * n;
            const float* ur = up.data().data() + i * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += static_cast<double>(yr[j]) * ur[j];
            float* sr = s->data().data() + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                sr[j] = static_cast<float>(sr[j] + yr[j] * (ur[j] - dot));
            }
        }
    });
}

Var mean_rows(Var a) {
    const DenseArray& av = a.value();
    const std::size_t m = av.rows(), n = av.cols();
    if (m == 0) throw ShapeError("mean_rows: no rows");
    DenseArray out = DenseArray::matrix(1, n);
    for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) acc += av(i, j);
        out[j] = static_cast<float>(acc / static_cast<double>(m));
    }
    return a.graph().record(std::move(out), {a.id()}, [](Graph& gr, std::size_t self) {
        DenseArray* s = gr.grad_sink(gr.parent(self, 0));
        if (s == nullptr) return;
        const DenseArray& up = gr.upstream(self);
        const double inv = 1.0 / static_cast<double>(s->rows());
        for (std::size_t i = 0; i < s->rows(); ++i)
            for (std::size_t j = 0; j < s->cols(); ++j)
                (*s)(i, j) = static_cast<float>((*s)(i, j) + up[j] * inv);
    });
}

Var sum(Var a) {
    double acc = 0.0;
    for (float v : a.value().data()) acc += v;
    return a.graph().record(DenseArray::scalar(static_cast<float>(acc)), {a.id()},
                            [](Graph& gr, std::size_t self) {
                                DenseArray* s = gr.grad_sink(gr.parent(self, 0));
                                if (s == nullptr) return;
                                const float up = gr.upstream(self)[0];
                                for (float& v : s->data()) v += up;
                            });
}

namespace {

// Shared by both layer-norm overloads: normalized values and per-row
// inverse standard deviation.
struct Normalized {
    DenseArray xhat;
    std::vector<double> inv_std;
};

Normalized normalize_rows(const DenseArray& x, double eps) {
    const std::size_t m = x.rows(), n = x.cols();
    Normalized r{DenseArray::matrix(m, n), std::vector<double>(m)};
    for (std::size_t i = 0; i < m; ++i) {
        auto row = x.row(i);
        double mean = 0.0;
        for (float v : row) mean += v;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (float v : row) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        r.inv_std[i] = inv;
        for (std::size_t j = 0; j < n; ++j) r.xhat(i, j) = static_cast<float>((row[j] - mean) * inv);
    }
    return r;
}

// dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
void layer_norm_input_grad(DenseArray* sink, const DenseArray& xhat, const DenseArray& dxhat,
                           const std::vector<double>& inv_std) {
    const std::size_t m = xhat.rows(), n = xhat.cols();
    for (std::size_t i = 0; i < m; ++i) {
        double mg = 0.0, mgx = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            mg += dxhat(i, j);
            mgx += static_cast<double>(dxhat(i, j)) * xhat(i, j);
        }
        mg /= static_cast<double>(n);
        mgx /= static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) {
            const double d = inv_std[i] * (dxhat(i, j) - mg - xhat(i, j) * mgx);
            (*sink)(i, j) = static_cast<float>((*sink)(i, j) + d);
        }
    }
}

}  // namespace

Var layer_norm_rows(Var a, double eps) {
    Normalized norm = normalize_rows(a.value(), eps);
    DenseArray out = norm.xhat;
    return a.graph().record(
        std::move(out), {a.id()},
        [inv_std = std::move(norm.inv_std)](Graph& gr, std::size_t self) {
            if (DenseArray* s = gr.grad_sink(gr.parent(self, 0)))
                layer_norm_input_grad(s, gr.value(self), gr.upstream(self), inv_std);
        });
}

Var layer_norm_rows(Var a, Var gamma, Var beta, double eps) {
    same_graph(a, gamma);
    same_graph(a, beta);
    const std::size_t n = a.value().cols();
    for (const Var* p : {&gamma, &beta}) {
        const DenseArray& v = p->value();
        if (v.rank() != 2 || v.rows() != 1 || v.cols() != n) {
            throw ShapeError("layer_norm_rows: affine parameter " + v.shape_string() +
                             " does not match width " + std::to_string(n));
        }
    }
    Normalized norm = normalize_rows(a.value(), eps);
    DenseArray out = norm.xhat;
    const DenseArray& gv = gamma.value();
    const DenseArray& bv = beta.value();
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < n; ++j)
            out(i, j) = static_cast<float>(static_cast<double>(out(i, j)) * gv[j] + bv[j]);
    return a.graph().record(
        std::move(out), {a.id(), gamma.id(), beta.id()},
        [xhat = std::move(norm.xhat), inv_std = std::move(norm.inv_std)](Graph& gr,
                                                                         std::size_t self) {
            const DenseArray& up = gr.upstream(self);
            const DenseArray& gv = gr.value(gr.parent(self, 1));
            const std::size_t m = up.rows(), n = up.cols();
            if (DenseArray* s = gr.grad_sink(gr.parent(self, 0))) {
                DenseArray dxhat = DenseArray::matrix(m, n);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) dxhat(i, j) = up(i, j) * gv[j];
                layer_norm_input_grad(s, xhat, dxhat, inv_std);
            }
            DenseArray* sg = gr.grad_sink(gr.parent(self, 1));
            DenseArray* sb = gr.grad_sink(gr.parent(self, 2));
            for (std::size_t j = 0; j < n; ++j) {
                double dg = 0.0, db = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    dg += static_cast<double>(up(i, j)) * xhat(i, j);
                    db += up(i, j);
                }
                if (sg) (*sg)[j] = static_cast<float>((*sg)[j] + dg);
                if (sb) (*sb)[j] = static_cast<float>((*sb)[j] + db);
            }
        });
}

Var gather_rows(Var a, std::span<const std::size_t> idx) {
    const DenseArray& av = a.value();
    const std::size_t m = av.rows(), n = av.cols();
    DenseArray out = DenseArray::matrix(idx.size(), n);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= m) {
            throw IndexError("gather_rows: index " + std::to_string(idx[r]) + " out of range for " +
                             std::to_string(m) + " rows");
        }
        std::copy_n(av.row(idx[r]).begin(), n, out.row(r).begin());
    }
    return a.graph().record(
        std::move(out), {a.id()},
        [index = std::vector<std::size_t>(idx.begin(), idx.end())](Graph& gr, std::size_t self) {
            DenseArray* s = gr.grad_sink(gr.parent(self, 0));
            if (s == nullptr) return;
            const DenseArray& up = gr.upstream(self);
            for (std::size_t r = 0; r < index.size(); ++r) {
                auto dst = s->row(index[r]);
                auto src = up.row(r);
                for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
            }
        });
}

Var segment_mean(Var a, std::span<const std::size_t> segment_of, std::span<const double> weights,
                 std::size_t num_segments) {
    const DenseArray& av = a.value();
    const std::size_t m = av.rows(), n = av.cols();
    if (segment_of.size() != m || weights.size() != m) {
        throw ShapeError("segment_mean: " + std::to_string(m) + " rows but " +
                         std::to_string(segment_of.size()) + " segment ids and " +
                         std::to_string(weights.size()) + " weights");
    }
    std::vector<double> total(num_segments, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        if (segment_of[i] >= num_segments) {
            throw IndexError("segment_mean: segment id " + std::to_string(segment_of[i]) +
                             " out of range for " + std::to_string(num_segments) + " segments");
        }
        if (!(weights[i] > 0.0)) {
            throw DomainError("segment_mean: weight of row " + std::to_string(i) +
                              " must be strictly positive");
        }
        total[segment_of[i]] += weights[i];
    }
    for (std::size_t s = 0; s < num_segments; ++s) {
        if (total[s] == 0.0) throw DomainError("segment_mean: segment " + std::to_string(s) + " is empty");
    }
    std::vector<double> acc(num_segments * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* dst = acc.data() + segment_of[i] * n;
        auto src = av.row(i);
        for (std::size_t j = 0; j < n; ++j) dst[j] += weights[i] * src[j];
    }
    DenseArray out = DenseArray::matrix(num_segments, n);
    for (std::size_t s = 0; s < num_segments; ++s)
        for (std::size_t j = 0; j < n; ++j) out(s, j) = static_cast<float>(acc[s * n + j] / total[s]);

    std::vector<double> coeff(m);
    for (std::size_t i = 0; i < m; ++i) coeff[i] = weights[i] / total[segment_of[i]];
    return a.graph().record(
        std::move(out), {a.id()},
        [seg = std::vector<std::size_t>(segment_of.begin(), segment_of.end()),
         coeff = std::move(coeff)](Graph& gr, std::size_t self) {
            DenseArray* s = gr.grad_sink(gr.parent(self, 0));
            if (s == nullptr) return;
            const DenseArray& up = gr.upstream(self);
            for (std::size_t i = 0; i < seg.size(); ++i) {
                auto dst = s->row(i);
                auto src = up.row(seg[i]);
                for (std::size_t j = 0; j < dst.size(); ++j)
                    dst[j] = static_cast<float>(dst[j] + coeff[i] * src[j]);
            }
        });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
    const DenseArray& av = a.value();
    if (begin + count > av.cols()) {
        throw IndexError("slice_cols: columns [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") exceed " + av.shape_string());
    }
    DenseArray out = DenseArray::matrix(av.rows(), count);
    for (std::size_t i = 0; i < av.rows(); ++i)
        std::copy_n(av.row(i).begin() + static_cast<std::ptrdiff_t>(begin), count, out.row(i).begin());
    return a.graph().record(std::move(out), {a.id()}, [begin](Graph& gr, std::size_t self) {
        DenseArray* s = gr.grad_sink(gr.parent(self, 0));
        if (s == nullptr) return;
        const DenseArray& up = gr.upstream(self);
        for (std::size_t i = 0; i < up.rows(); ++i)
            for (std::size_t j = 0; j < up.cols(); ++j) (*s)(i, begin + j) += up(i, j);
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
    Graph& g = parts.front().graph();
    const std::size_t m = parts.front().value().rows();
    std::size_t n = 0;
    std::vector<std::size_t> ids;
    for (const Var& p : parts) {
        same_graph(parts.front(), p);
        if (p.value().rows() != m) {
            throw ShapeError("concat_cols: row counts differ, " + parts.front().value().shape_string() +
                             " vs " + p.value().shape_string());
        }
        n += p.value().cols();
        ids.push_back(p.id());
    }
    DenseArray out = DenseArray::matrix(m, n);
    std::size_t off = 0;
    for (const Var& p : parts) {
        const DenseArray& pv = p.value();
        for (std::size_t i = 0; i < m; ++i)
            std::copy_n(pv.row(i).begin(), pv.cols(), out.row(i).begin() + static_cast<std::ptrdiff_t>(off));
        off += pv.cols();
    }
    return g.record(std::move(out), std::move(ids), [count = parts.size()](Graph& gr, std::size_t self) {
        const DenseArray& up = gr.upstream(self);
        std::size_t off = 0;
        for (std::size_t k = 0; k < count; ++k) {
            const std::size_t pid = gr.parent(self, k);
            const std::size_t w = gr.value(pid).cols();
            if (DenseArray* s = gr.grad_sink(pid)) {
                for (std::size_t i = 0; i < up.rows(); ++i)
                    for (std::size_t j = 0; j < w; ++j) (*s)(i, j) += up(i, off + j);
            }
            off += w;
        }
    });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_rows: nothing to concatenate");
    Graph& g = parts.front().graph();
    const std::size_t n = parts.front().value().cols();
    std::size_t m = 0;
    std::vector<std::size_t> ids;
    for (const Var& p : parts) {
        same_graph(parts.front(), p);
        if (p.value().cols() != n) {
            throw ShapeError("concat_rows: column counts differ, " +
                             parts.front().value().shape_string() + " vs " + p.value().shape_string());
        }
        m += p.value().rows();
        ids.push_back(p.id());
    }
    std::vector<float> data;
    data.reserve(m * n);
    for (const Var& p : parts) data.insert(data.end(), p.value().data().begin(), p.value().data().end());
    return g.record(DenseArray({m, n}, std::move(data)), std::move(ids),
                    [count = parts.size()](Graph& gr, std::size_t self) {
                        const DenseArray& up = gr.upstream(self);
                        std::size_t off = 0;
                        for (std::size_t k = 0; k < count; ++k) {
                            const std::size_t pid = gr.parent(self, k);
                            const std::size_t len = gr.value(pid).numel();
                            if (DenseArray* s = gr.grad_sink(pid)) {
                                for (std::size_t i = 0; i < len; ++i) (*s)[i] += up[off + i];
                            }
                            off += len;
                        }
                    });
}

Var mask_mul(Var a, const DenseArray& mask) {
    require_same_shape("mask_mul", a.value(), mask);
    DenseArray out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= mask[i];
    return a.graph().record(std::move(out), {a.id()}, [mask](Graph& gr, std::size_t self) {
        DenseArray* s = gr.grad_sink(gr.parent(self, 0));
        if (s == nullptr) return;
        const DenseArray& up = gr.upstream(self);
        for (std::size_t i = 0; i < up.numel(); ++i) (*s)[i] += up[i] * mask[i];
    });
}

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels) {
    const DenseArray& lv = logits.value();
    const std::size_t m = lv.rows(), k = lv.cols();
    if (labels.size() != m) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(m) + " rows but " +
                         std::to_string(labels.size()) + " labels");
    }
    DenseArray probs = lv;
    kernels::softmax_rows_inplace(probs);
    double loss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (labels[i] >= k) {
            throw IndexError("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                             " out of range for " + std::to_string(k) + " classes");
        }
        // log-sum-exp in double for the loss value itself
        auto row = lv.row(i);
        double mx = row[0];
        for (float v : row) mx = std::max(mx, static_cast<double>(v));
        double s = 0.0;
        for (float v : row) s += std::exp(v - mx);
        loss += (mx + std::log(s)) - row[labels[i]];
    }
    loss /= static_cast<double>(m);
    return logits.graph().record(
        DenseArray::scalar(static_cast<float>(loss)), {logits.id()},
        [probs = std::move(probs), lab = std::vector<std::size_t>(labels.begin(), labels.end())](
            Graph& gr, std::size_t self) {
            DenseArray* s = gr.grad_sink(gr.parent(self, 0));
            if (s == nullptr) return;
            const double up = gr.upstream(self)[0] / static_cast<double>(probs.rows());
            for (std::size_t i = 0; i < probs.rows(); ++i)
                for (std::size_t j = 0; j < probs.cols(); ++j) {
                    const double d = probs(i, j) - (j == lab[i] ? 1.0 : 0.0);
                    (*s)(i, j) = static_cast<float>((*s)(i, j) + up * d);
                }
        });
}

Var mse(Var pred, const DenseArray& target) {
    require_same_shape("mse", pred.value(), target);
    const DenseArray& pv = pred.value();
    double acc = 0.0;
    for (std::size_t i = 0; i < pv.numel(); ++i) {
        const double d = static_cast<double>(pv[i]) - target[i];
        acc += d * d;
    }
    acc /= static_cast<double>(pv.numel());
    return pred.graph().record(DenseArray::scalar(static_cast<float>(acc)), {pred.id()},
                               [target](Graph& gr, std::size_t self) {
                                   DenseArray* s = gr.grad_sink(gr.parent(self, 0));
                                   if (s == nullptr) return;
                                   const DenseArray& pv = gr.value(gr.parent(self, 0));
                                   const double up = gr.upstream(self)[0] * 2.0 /
                                                     static_cast<double>(pv.numel());
                                   for (std::size_t i = 0; i < pv.numel(); ++i)
                                       (*s)[i] = static_cast<float>(
                                           (*s)[i] + up * (static_cast<double>(pv[i]) - target[i]));
                               });
}

Var linear(Var x, Var w, Var bias) { return add_row(matmul(x, w), bias); }

namespace {

DenseArray head_block(const DenseArray& a, std::size_t off, std::size_t width) {
    const std::size_t n = a.rows();
    DenseArray out = DenseArray::matrix(n, width);
    for (std::size_t i = 0; i < n; ++i)
        std::copy_n(a.data().data() + i * a.cols() + off, width, out.data().data() + i * width);
    return out;
}

// Columns [off, off + width) of `a`, transposed: width x N.
DenseArray head_block_t(const DenseArray& a, std::size_t off, std::size_t width) {
    const std::size_t n = a.rows();
    DenseArray out = DenseArray::matrix(width, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < width; ++c) out(c, i) = a(i, off + c);
    return out;
}

// sink[:, off + c] += g_t[c, :]
void add_head_block_t(DenseArray* sink, const DenseArray& g_t, std::size_t off) {
    if (sink == nullptr) return;
    const std::size_t w = g_t.rows(), n = g_t.cols();
    for (std::size_t i = 0; i < n; ++i) {
        float* dst = sink->data().data() + i * sink->cols() + off;
        for (std::size_t c = 0; c < w; ++c) dst[c] += g_t(c, i);
    }
}

// out[i, c] = <a row i, b_t row c>, written to columns [off, off + width).
void rows_dot_into(const DenseArray& a, const DenseArray& b_t, DenseArray& out, std::size_t off, bool add) {
    const std::size_t n = a.rows(), k = a.cols(), w = b_t.rows();
    for (std::size_t i = 0; i < n; ++i) {
        const float* ar = a.data().data() + i * k;
        float* dst = out.data().data() + i * out.cols() + off;
        for (std::size_t c = 0; c < w; ++c) {
            const float v = kernels::dot_f32(ar, b_t.data().data() + c * k, k);
            dst[c] = add ? dst[c] + v : v;
        }
    }
}

}  // namespace

Var multi_head_attention(Var q, Var k, Var v, int heads, double scale, const Var* key_bias,
                         std::vector<DenseArray>* weights_out) {
    Graph& g = same_graph(q, k);
    same_graph(q, v);
    const DenseArray& qv = q.value();
    const std::size_t n = qv.rows(), d = qv.cols();
    if (k.value().shape() != qv.shape() || v.value().shape() != qv.shape()) {
        throw ShapeError("multi_head_attention: q/k/v shapes differ: " + qv.shape_string() + ", " +
                         k.value().shape_string() + ", " + v.value().shape_string());
    }
    if (heads < 1 || d % static_cast<std::size_t>(heads) != 0) {
        throw ShapeError("multi_head_attention: width " + std::to_string(d) + " not divisible by " +
                         std::to_string(heads) + " heads");
    }
    if (key_bias != nullptr) {
        same_graph(q, *key_bias);
        if (key_bias->value().rank() != 2 || key_bias->rows() != 1 || key_bias->cols() != n) {
            throw ShapeError("multi_head_attention: bias " + key_bias->value().shape_string() +
                             " is not 1 x " + std::to_string(n));
        }
    }
    const auto hc = static_cast<std::size_t>(heads);
    const std::size_t dh = d / hc;
    const auto fscale = static_cast<float>(scale);

    auto probs = std::make_shared<std::vector<DenseArray>>();
    DenseArray out = DenseArray::matrix(n, d);
    for (std::size_t h = 0; h < hc; ++h) {
        const DenseArray qh = head_block(qv, h * dh, dh);
        DenseArray p = kernels::matmul(qh, head_block_t(k.value(), h * dh, dh));
        for (std::size_t i = 0; i < n; ++i) {
            float* row = p.data().data() + i * n;
            if (key_bias != nullptr) {
                const float* b = key_bias->value().data().data();
                for (std::size_t j = 0; j < n; ++j) row[j] += b[j];
            }
            for (std::size_t j = 0; j < n; ++j) row[j] *= fscale;
        }
        kernels::softmax_rows_inplace(p);
        rows_dot_into(p, head_block_t(v.value(), h * dh, dh), out, h * dh, false);
        if (weights_out != nullptr) weights_out->push_back(p);
        probs->push_back(std::move(p));
    }

    std::vector<std::size_t> parents{q.id(), k.id(), v.id()};
    const bool with_bias = key_bias != nullptr;
    if (with_bias) parents.push_back(key_bias->id());
    return g.record(std::move(out), std::move(parents), [probs, hc, dh, fscale, with_bias](Graph& gr, std::size_t self) {
        const std::size_t pq = gr.parent(self, 0), pk = gr.parent(self, 1), pv = gr.parent(self, 2);
        DenseArray* sb = with_bias ? gr.grad_sink(gr.parent(self, 3)) : nullptr;
        std::vector<double> bias_acc(sb != nullptr ? sb->numel() : 0, 0.0);
        DenseArray* sq = gr.grad_sink(pq);
        DenseArray* sk = gr.grad_sink(pk);
        DenseArray* sv = gr.grad_sink(pv);
        const DenseArray& up = gr.upstream(self);
        const DenseArray& qv = gr.value(pq);
        const DenseArray& kv = gr.value(pk);
        const DenseArray& vv = gr.value(pv);
        const std::size_t n = qv.rows();
        for (std::size_t h = 0; h < hc; ++h) {
            const DenseArray& p = (*probs)[h];
            const DenseArray doh = head_block(up, h * dh, dh);
            if (sv != nullptr) add_head_block_t(sv, kernels::matmul_tn(doh, p), h * dh);
            // dS = P o (dP - rowsum(P o dP)), then the logit scale.
            DenseArray ds = kernels::matmul(doh, head_block_t(vv, h * dh, dh));
            for (std::size_t i = 0; i < n; ++i) {
                const float* pr = p.data().data() + i * n;
                float* dr = ds.data().data() + i * n;
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += static_cast<double>(pr[j]) * dr[j];
                const auto fd = static_cast<float>(dot);
                for (std::size_t j = 0; j < n; ++j) dr[j] = pr[j] * (dr[j] - fd) * fscale;
            }
            if (sq != nullptr) rows_dot_into(ds, head_block_t(kv, h * dh, dh), *sq, h * dh, true);
            if (sk != nullptr) add_head_block_t(sk, kernels::matmul_tn(head_block(qv, h * dh, dh), ds), h * dh);
            if (sb != nullptr) {
                for (std::size_t i = 0; i < n; ++i) {
                    const float* dr = ds.data().data() + i * n;
                    for (std::size_t j = 0; j < n; ++j) bias_acc[j] += dr[j];
                }
            }
        }
        for (std::size_t j = 0; j < bias_acc.size(); ++j) (*sb)[j] = static_cast<float>((*sb)[j] + bias_acc[j]);
    });
}

}  // namespace vtm::ad
