#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape records primitive operations in creation order, so parents always
// precede children and the backward sweep is a single reverse pass. Values are
// rank-0 scalars or rank-2 matrices. Binary element-wise ops broadcast a
// dimension of size 1 against the other operand (row/column vectors, scalars).

#include "eigenmap/tensor.hpp"

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace eigenmap {

struct NodeId {
    std::size_t index = 0;
    friend bool operator==(NodeId, NodeId) = default;
    friend auto operator<=>(NodeId, NodeId) = default;
};

enum class OpKind {
    Constant,
    Parameter,
    MatMul,
    Transpose,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale,
    AddScalar,
    Relu,
    Square,
    Sqrt,
    Sum,
    Mean,
    SumRows,   // m x n -> 1 x n
    SumCols,   // m x n -> m x 1
    MeanRows,  // m x n -> 1 x n
    MaskMul,   // element-wise product with a constant mask
    GatherRows,
    SoftmaxCrossEntropy,
    StopGradient,
    Identity,
};

inline const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::Constant: return "constant";
        case OpKind::Parameter: return "parameter";
        case OpKind::MatMul: return "matmul";
        case OpKind::Transpose: return "transpose";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::Div: return "divide";
        case OpKind::Neg: return "neg";
        case OpKind::Scale: return "scale";
        case OpKind::AddScalar: return "add_scalar";
        case OpKind::Relu: return "relu";
        case OpKind::Square: return "square";
        case OpKind::Sqrt: return "sqrt";
        case OpKind::Sum: return "sum";
        case OpKind::Mean: return "mean";
        case OpKind::SumRows: return "sum_rows";
        case OpKind::SumCols: return "sum_cols";
        case OpKind::MeanRows: return "mean_rows";
        case OpKind::MaskMul: return "mask_mul";
        case OpKind::GatherRows: return "gather_rows";
        case OpKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
        case OpKind::StopGradient: return "stop_gradient";
        case OpKind::Identity: return "identity";
    }
    return "?";
}

/// Adjoints produced by Tape::backward, keyed by parameter node.
class Gradients {
public:
    const Tensor& at(NodeId id) const {
        auto it = grads_.find(id);
        if (it == grads_.end()) throw Error("no gradient recorded for node " + std::to_string(id.index));
        return it->second;
    }
    bool contains(NodeId id) const { return grads_.count(id) != 0; }
    std::size_t size() const { return grads_.size(); }
    auto begin() const { return grads_.begin(); }
    auto end() const { return grads_.end(); }

private:
    friend class Tape;
    std::map<NodeId, Tensor> grads_;
};

class Tape {
public:
    NodeId constant(Tensor value) { return push(OpKind::Constant, {}, std::move(value)); }
    NodeId parameter(Tensor value) { return push(OpKind::Parameter, {}, std::move(value)); }

    const Tensor& value(NodeId id) const {
        if (id.index >= nodes_.size()) throw Error("node " + std::to_string(id.index) + " not on tape");
        return nodes_[id.index].value;
    }
    std::size_t size() const { return nodes_.size(); }
    OpKind kind(NodeId id) const { return nodes_.at(id.index).kind; }
    const std::vector<std::size_t>& parents(NodeId id) const { return nodes_.at(id.index).parents; }

    // -- linear algebra ------------------------------------------------------

    NodeId matmul(NodeId a, NodeId b) { return push(OpKind::MatMul, {a, b}, eigenmap::matmul(value(a), value(b))); }

    NodeId transpose(NodeId a) {
        return push(OpKind::Transpose, {a}, as_matrix(value(a), "transpose").transposed());
    }

    // -- element-wise with broadcasting ----------------------------------------

    NodeId add(NodeId a, NodeId b) { return binary(OpKind::Add, a, b, [](double x, double y) { return x + y; }); }
    NodeId sub(NodeId a, NodeId b) { return binary(OpKind::Sub, a, b, [](double x, double y) { return x - y; }); }
    NodeId mul(NodeId a, NodeId b) { return binary(OpKind::Mul, a, b, [](double x, double y) { return x * y; }); }
    NodeId div(NodeId a, NodeId b) { return binary(OpKind::Div, a, b, [](double x, double y) { return x / y; }); }

    NodeId neg(NodeId a) { return unary(OpKind::Neg, a, [](double x) { return -x; }); }

    NodeId scale(NodeId a, double s) {
        NodeId id = unary(OpKind::Scale, a, [s](double x) { return s * x; });
        nodes_[id.index].scalar = s;
        return id;
    }

    NodeId add_scalar(NodeId a, double s) { return unary(OpKind::AddScalar, a, [s](double x) { return x + s; }); }
    NodeId relu(NodeId a) { return unary(OpKind::Relu, a, [](double x) { return x > 0.0 ? x : 0.0; }); }
    NodeId square(NodeId a) { return unary(OpKind::Square, a, [](double x) { return x * x; }); }
    NodeId sqrt(NodeId a) { return unary(OpKind::Sqrt, a, [](double x) { return std::sqrt(x); }); }

    /// Element-wise product with a fixed (non-differentiable) mask of the same shape.
    NodeId mask_mul(NodeId a, Tensor mask) {
        const Tensor& x = value(a);
        if (mask.shape() != x.shape())
            throw ShapeError("mask_mul: mask " + shape_str(mask.shape()) + " vs input " + shape_str(x.shape()));
        Tensor out = x;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
        NodeId id = push(OpKind::MaskMul, {a}, std::move(out));
        nodes_[id.index].aux = std::move(mask);
        return id;
    }

    // -- reductions -------------------------------------------------------------

    NodeId sum(NodeId a) {
        double s = 0.0;
        for (double v : value(a).data()) s += v;
        return push(OpKind::Sum, {a}, Tensor::scalar(s));
    }

    NodeId mean(NodeId a) {
        const Tensor& x = value(a);
        double s = 0.0;
        for (double v : x.data()) s += v;
        return push(OpKind::Mean, {a}, Tensor::scalar(s / static_cast<double>(x.size())));
    }

    NodeId sum_rows(NodeId a) { return push(OpKind::SumRows, {a}, reduce_rows(value(a), 1.0)); }

    NodeId mean_rows(NodeId a) {
        const Tensor& x = as_matrix(value(a), "mean_rows");
        return push(OpKind::MeanRows, {a}, reduce_rows(x, 1.0 / static_cast<double>(x.rows())));
    }

    NodeId sum_cols(NodeId a) {
        const Tensor& x = as_matrix(value(a), "sum_cols");
        Tensor out = Tensor::matrix(x.rows(), 1);
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) out[i] += x(i, j);
        return push(OpKind::SumCols, {a}, std::move(out));
    }

    // -- indexing / classification --------------------------------------------

    NodeId gather_rows(NodeId a, const std::vector<std::size_t>& idx) {
        NodeId id = push(OpKind::GatherRows, {a}, eigenmap::gather_rows(as_matrix(value(a), "gather_rows"), idx));
        nodes_[id.index].indices = idx;
        return id;
    }

    /// Mean multinomial cross-entropy of row-wise logits against integer labels.
    NodeId softmax_cross_entropy(NodeId logits, const std::vector<std::size_t>& labels) {
        const Tensor& z = as_matrix(value(logits), "softmax_cross_entropy");
        if (labels.size() != z.rows())
            throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(z.rows()) + " rows");
        Tensor prob = Tensor::matrix(z.rows(), z.cols());
        double loss = 0.0;
        for (std::size_t i = 0; i < z.rows(); ++i) {
            if (labels[i] >= z.cols()) throw ShapeError("softmax_cross_entropy: label out of range");
            double mx = z(i, 0);
            for (std::size_t j = 1; j < z.cols(); ++j) mx = std::max(mx, z(i, j));
            double den = 0.0;
            for (std::size_t j = 0; j < z.cols(); ++j) den += std::exp(z(i, j) - mx);
            for (std::size_t j = 0; j < z.cols(); ++j) prob(i, j) = std::exp(z(i, j) - mx) / den;
            loss -= (z(i, labels[i]) - mx) - std::log(den);
        }
        NodeId id = push(OpKind::SoftmaxCrossEntropy, {logits}, Tensor::scalar(loss / static_cast<double>(z.rows())));
        nodes_[id.index].aux = std::move(prob);
        nodes_[id.index].indices = labels;
        return id;
    }

    // -- gradient flow control ------------------------------------------------

    /// Identity in the forward pass; contributes no adjoint to its input.
    NodeId stop_gradient(NodeId a) { return push(OpKind::StopGradient, {a}, value(a)); }

    NodeId identity(NodeId a) { return push(OpKind::Identity, {a}, value(a)); }

    /// Reverse sweep from a scalar node. Returns adjoints of every Parameter
    /// node that the output depends on through differentiable paths; other
    /// parameters get zero tensors.
    Gradients backward(NodeId output) const {
        const Node& out = nodes_.at(output.index);
        if (out.value.size() != 1)
            throw ShapeError("backward: output must be scalar, got shape " + shape_str(out.value.shape()));

        std::vector<std::optional<Tensor>> adj(output.index + 1);
        adj[output.index] = Tensor(out.value.shape(), 1.0);

        for (std::size_t i = output.index + 1; i-- > 0;) {
            if (!adj[i]) continue;
            const Node& n = nodes_[i];
            const Tensor& g = *adj[i];
            switch (n.kind) {
                case OpKind::Constant:
                case OpKind::Parameter:
                case OpKind::StopGradient:
                    break;
                case OpKind::Identity:
                    accumulate(adj, n.parents[0], g);
                    break;
                case OpKind::MatMul: {
                    const Tensor& a = nodes_[n.parents[0]].value;
                    const Tensor& b = nodes_[n.parents[1]].value;
                    accumulate(adj, n.parents[0], matmul_nt(g, b));
                    accumulate(adj, n.parents[1], matmul_tn(a, g));
                    break;
                }
                case OpKind::Transpose:
                    accumulate(adj, n.parents[0], g.transposed());
                    break;
                case OpKind::Add:
                    accumulate(adj, n.parents[0], unbroadcast(g, nodes_[n.parents[0]].value.shape()));
                    accumulate(adj, n.parents[1], unbroadcast(g, nodes_[n.parents[1]].value.shape()));
                    break;
                case OpKind::Sub: {
                    accumulate(adj, n.parents[0], unbroadcast(g, nodes_[n.parents[0]].value.shape()));
                    Tensor ng = g;
                    for (double& v : ng.data()) v = -v;
                    accumulate(adj, n.parents[1], unbroadcast(ng, nodes_[n.parents[1]].value.shape()));
                    break;
                }
                case OpKind::Mul: {
                    const Tensor& a = nodes_[n.parents[0]].value;
                    const Tensor& b = nodes_[n.parents[1]].value;
                    accumulate(adj, n.parents[0], unbroadcast(zip(g, b, n.value.shape(), [](double gv, double bv) { return gv * bv; }), a.shape()));
                    accumulate(adj, n.parents[1], unbroadcast(zip(g, a, n.value.shape(), [](double gv, double av) { return gv * av; }), b.shape()));
                    break;
                }
                case OpKind::Div: {
                    const Tensor& a = nodes_[n.parents[0]].value;
                    const Tensor& b = nodes_[n.parents[1]].value;
                    accumulate(adj, n.parents[0], unbroadcast(zip(g, b, n.value.shape(), [](double gv, double bv) { return gv / bv; }), a.shape()));
                    // d(a/b)/db = -(a/b)/b = -out/b
                    Tensor gb = zip(g, n.value, n.value.shape(), [](double gv, double ov) { return -gv * ov; });
                    gb = zip(gb, b, n.value.shape(), [](double x, double bv) { return x / bv; });
                    accumulate(adj, n.parents[1], unbroadcast(gb, b.shape()));
                    break;
                }
                case OpKind::Neg:
                    accumulate(adj, n.parents[0], map(g, [](double v) { return -v; }));
                    break;
                case OpKind::Scale: {
                    const double s = n.scalar;
                    accumulate(adj, n.parents[0], map(g, [s](double v) { return s * v; }));
                    break;
                }
                case OpKind::AddScalar:
                    accumulate(adj, n.parents[0], g);
                    break;
                case OpKind::Relu: {
                    const Tensor& x = nodes_[n.parents[0]].value;
                    Tensor r = g;
                    for (std::size_t k = 0; k < r.size(); ++k)
                        if (!(x[k] > 0.0)) r[k] = 0.0;
                    accumulate(adj, n.parents[0], r);
                    break;
                }
                case OpKind::Square: {
                    const Tensor& x = nodes_[n.parents[0]].value;
                    Tensor r = g;
                    for (std::size_t k = 0; k < r.size(); ++k) r[k] *= 2.0 * x[k];
                    accumulate(adj, n.parents[0], r);
                    break;
                }
                case OpKind::Sqrt: {
                    Tensor r = g;
                    for (std::size_t k = 0; k < r.size(); ++k) r[k] *= 0.5 / n.value[k];
                    accumulate(adj, n.parents[0], r);
                    break;
                }
                case OpKind::Sum:
                    accumulate(adj, n.parents[0], Tensor(nodes_[n.parents[0]].value.shape(), g.item()));
                    break;
                case OpKind::Mean: {
                    const Tensor& x = nodes_[n.parents[0]].value;
                    accumulate(adj, n.parents[0], Tensor(x.shape(), g.item() / static_cast<double>(x.size())));
                    break;
                }
                case OpKind::SumRows:
                case OpKind::MeanRows: {
                    const Tensor& x = nodes_[n.parents[0]].value;
                    const double f = n.kind == OpKind::MeanRows ? 1.0 / static_cast<double>(x.rows()) : 1.0;
                    Tensor r(x.shape());
                    for (std::size_t a = 0; a < x.rows(); ++a)
                        for (std::size_t b = 0; b < x.cols(); ++b) r(a, b) = f * g[b];
                    accumulate(adj, n.parents[0], r);
                    break;
                }
                case OpKind::SumCols: {
                    const Tensor& x = nodes_[n.parents[0]].value;
                    Tensor r(x.shape());
                    for (std::size_t a = 0; a < x.rows(); ++a)
                        for (std::size_t b = 0; b < x.cols(); ++b) r(a, b) = g[a];
                    accumulate(adj, n.parents[0], r);
                    break;
                }
                case OpKind::MaskMul: {
                    Tensor r = g;
                    for (std::size_t k = 0; k < r.size(); ++k) r[k] *= n.aux[k];
                    accumulate(adj, n.parents[0], r);
                    break;
                }
                case OpKind::GatherRows: {
                    const Tensor& x = nodes_[n.parents[0]].value;
                    Tensor r(x.shape());
                    const std::size_t c = x.cols();
                    for (std::size_t a = 0; a < n.indices.size(); ++a)
                        for (std::size_t b = 0; b < c; ++b) r(n.indices[a], b) += g(a, b);
                    accumulate(adj, n.parents[0], r);
                    break;
                }
                case OpKind::SoftmaxCrossEntropy: {
                    Tensor r = n.aux;
                    const double f = g.item() / static_cast<double>(r.rows());
                    for (std::size_t a = 0; a < r.rows(); ++a) {
                        r(a, n.indices[a]) -= 1.0;
                        for (std::size_t b = 0; b < r.cols(); ++b) r(a, b) *= f;
                    }
                    accumulate(adj, n.parents[0], r);
                    break;
                }
            }
        }

        Gradients result;
        for (std::size_t i = 0; i <= output.index; ++i) {
            if (nodes_[i].kind != OpKind::Parameter) continue;
            result.grads_.emplace(NodeId{i}, adj[i] ? std::move(*adj[i]) : Tensor(nodes_[i].value.shape(), 0.0));
        }
        return result;
    }

private:
    struct Node {
        OpKind kind;
        std::vector<std::size_t> parents;
        Tensor value;
        Tensor aux;
        std::vector<std::size_t> indices;
        double scalar = 0.0;
    };

    std::vector<Node> nodes_;

    NodeId push(OpKind kind, std::vector<NodeId> parents, Tensor value) {
        for (NodeId p : parents)
            if (p.index >= nodes_.size())
                throw Error(std::string(op_name(kind)) + ": input node " + std::to_string(p.index) + " not on tape");
        if (!value.all_finite())
            throw NumericError(std::string(op_name(kind)) + ": non-finite value produced, shape " +
                               shape_str(value.shape()));
        Node n{kind, {}, std::move(value), Tensor{}, {}, 0.0};
        n.parents.reserve(parents.size());
        for (NodeId p : parents) n.parents.push_back(p.index);
        nodes_.push_back(std::move(n));
        return NodeId{nodes_.size() - 1};
    }

    static const Tensor& as_matrix(const Tensor& t, const char* op) {
        t.require_matrix(op);
        return t;
    }

    static Tensor reduce_rows(const Tensor& x, double f) {
        x.require_matrix("sum_rows");
        Tensor out = Tensor::matrix(1, x.cols());
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) out[j] += x(i, j);
        for (double& v : out.data()) v *= f;
        return out;
    }

    template <class F>
    NodeId unary(OpKind kind, NodeId a, F f) {
        Tensor out = value(a);
        for (double& v : out.data()) v = f(v);
        return push(kind, {a}, std::move(out));
    }

    template <class F>
    static Tensor map(const Tensor& t, F f) {
        Tensor out = t;
        for (double& v : out.data()) v = f(v);
        return out;
    }

    static std::pair<std::size_t, std::size_t> dims(const Tensor& t) {
        return t.rank() == 0 ? std::pair<std::size_t, std::size_t>{1, 1}
                             : std::pair<std::size_t, std::size_t>{t.rows(), t.cols()};
    }

    static Shape broadcast_shape(const Tensor& a, const Tensor& b, OpKind kind) {
        if (a.rank() == 0 && b.rank() == 0) return Shape{};
        if ((a.rank() != 0 && a.rank() != 2) || (b.rank() != 0 && b.rank() != 2))
            throw ShapeError(std::string(op_name(kind)) + ": only scalars and matrices are supported");
        auto [ar, ac] = dims(a);
        auto [br, bc] = dims(b);
        auto pick = [&](std::size_t x, std::size_t y) -> std::size_t {
            if (x == y || y == 1) return x;
            if (x == 1) return y;
            throw ShapeError(std::string(op_name(kind)) + ": cannot broadcast " + shape_str(a.shape()) + " with " +
                             shape_str(b.shape()));
        };
        return Shape{pick(ar, br), pick(ac, bc)};
    }

    template <class F>
    static Tensor zip(const Tensor& a, const Tensor& b, const Shape& out_shape, F f) {
        Tensor out(out_shape);
        if (out_shape.empty()) {
            out[0] = f(a[0], b[0]);
            return out;
        }
        auto [ar, ac] = dims(a);
        auto [br, bc] = dims(b);
        const std::size_t R = out_shape[0], C = out_shape[1];
        for (std::size_t i = 0; i < R; ++i) {
            const std::size_t ia = ar == 1 ? 0 : i, ib = br == 1 ? 0 : i;
            for (std::size_t j = 0; j < C; ++j) {
                const std::size_t ja = ac == 1 ? 0 : j, jb = bc == 1 ? 0 : j;
                out[i * C + j] = f(a[ia * ac + ja], b[ib * bc + jb]);
            }
        }
        return out;
    }

    template <class F>
    NodeId binary(OpKind kind, NodeId a, NodeId b, F f) {
        const Tensor& x = value(a);
        const Tensor& y = value(b);
        Shape s = broadcast_shape(x, y, kind);
        return push(kind, {a, b}, zip(x, y, s, f));
    }

    /// Sums a gradient over broadcast dimensions back to `target` shape.
    static Tensor unbroadcast(const Tensor& g, const Shape& target) {
        if (g.shape() == target) return g;
        Tensor out(target);
        auto [tr, tc] = target.empty() ? std::pair<std::size_t, std::size_t>{1, 1}
                                       : std::pair<std::size_t, std::size_t>{target[0], target[1]};
        auto [gr, gc] = dims(g);
        for (std::size_t i = 0; i < gr; ++i)
            for (std::size_t j = 0; j < gc; ++j) out[(tr == 1 ? 0 : i) * tc + (tc == 1 ? 0 : j)] += g[i * gc + j];
        return out;
    }

    static void accumulate(std::vector<std::optional<Tensor>>& adj, std::size_t i, const Tensor& g) {
        if (!adj[i]) {
            adj[i] = g;
            return;
        }
        Tensor& a = *adj[i];
        for (std::size_t k = 0; k < a.size(); ++k) a[k] += g[k];
    }
};

}  // namespace eigenmap
