#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include "tsi/ops.hpp"
#include "tsi/tensor.hpp"

// Tape-based reverse-mode differentiation over the ops kernels. Nodes are
// appended after their parents, so tape order is a valid topological order
// and a single reverse sweep computes every adjoint.
namespace tsi::ad {

using NodeId = int32_t;
using Value = std::variant<Tensor, ComplexTensor>;

enum class OpKind : uint8_t {
    Leaf,
    Constant,
    Matmul,
    Matvec,
    Add,
    AddRows,
    Mul,
    Scale,
    Tanh,
    Conv1dCausal,
    Rfft,
    Irfft,
    ComplexLinear,
    MeanPoolTime,
    RowAt,
    ElementAt,
    ConcatVec,
    L2Normalize,
    Dot,
    LogSoftmax,
    L1Norm,
    L2Norm,
    MeanAll,
    SumAll,
};

struct Node {
    OpKind op = OpKind::Leaf;
    std::array<NodeId, 3> parents{-1, -1, -1};
    Value value;
    double attr = 0.0;     // scale factor
    int64_t index = 0;     // dilation / row index / time length
    bool requires_grad = false;
};

class Tape {
public:
    std::vector<Node> nodes;

    NodeId leaf(Tensor v) { return push_terminal(OpKind::Leaf, Value(std::move(v)), true); }
    NodeId leaf(ComplexTensor v) { return push_terminal(OpKind::Leaf, Value(std::move(v)), true); }
    NodeId constant(Tensor v) { return push_terminal(OpKind::Constant, Value(std::move(v)), false); }
    NodeId constant(ComplexTensor v) {
        return push_terminal(OpKind::Constant, Value(std::move(v)), false);
    }

    const Tensor& val(NodeId id) const { return std::get<Tensor>(nodes.at(id).value); }
    const ComplexTensor& cval(NodeId id) const {
        return std::get<ComplexTensor>(nodes.at(id).value);
    }

    NodeId push(Node n) {
        for (NodeId p : n.parents)
            if (p >= 0) n.requires_grad = n.requires_grad || nodes.at(p).requires_grad;
        nodes.push_back(std::move(n));
        return static_cast<NodeId>(nodes.size() - 1);
    }

private:
    NodeId push_terminal(OpKind op, Value v, bool grad) {
        Node n;
        n.op = op;
        n.value = std::move(v);
        n.requires_grad = grad;
        nodes.push_back(std::move(n));
        return static_cast<NodeId>(nodes.size() - 1);
    }
};

// Recomputes a node's forward value from its parents. Recording and replay
// share this dispatcher, which is what makes replay bit-exact.
inline Value compute(const Tape& t, const Node& n) {
    auto T = [&](int i) -> const Tensor& { return std::get<Tensor>(t.nodes[n.parents[i]].value); };
    auto C = [&](int i) -> const ComplexTensor& {
        return std::get<ComplexTensor>(t.nodes[n.parents[i]].value);
    };
    switch (n.op) {
        case OpKind::Matmul: return ops::matmul(T(0), T(1));
        case OpKind::Matvec: return ops::matvec(T(0), T(1));
        case OpKind::Add: return ops::add(T(0), T(1));
        case OpKind::AddRows: return ops::add_rows(T(0), T(1));
        case OpKind::Mul: return ops::mul(T(0), T(1));
        case OpKind::Scale: return ops::scale(T(0), n.attr);
        case OpKind::Tanh: return ops::tanh_map(T(0));
        case OpKind::Conv1dCausal: return ops::conv1d_causal(T(0), T(1), n.index);
        case OpKind::Rfft: return ops::rfft(T(0));
        case OpKind::Irfft: return ops::irfft(C(0), n.index);
        case OpKind::ComplexLinear: return ops::complex_linear(C(0), C(1), C(2));
        case OpKind::MeanPoolTime: return ops::mean_pool_time(T(0));
        case OpKind::RowAt: return ops::row_at(T(0), n.index);
        case OpKind::ElementAt: return ops::element_at(T(0), n.index);
        case OpKind::ConcatVec: return ops::concat_vec(T(0), T(1));
        case OpKind::L2Normalize: return ops::l2_normalize(T(0));
        case OpKind::Dot: return ops::dot(T(0), T(1));
        case OpKind::LogSoftmax: return ops::log_softmax(T(0));
        case OpKind::L1Norm: return ops::l1_norm(T(0));
        case OpKind::L2Norm: return ops::l2_norm(T(0));
        case OpKind::MeanAll: return ops::mean_all(T(0));
        case OpKind::SumAll: return ops::sum_all(T(0));
        case OpKind::Leaf:
        case OpKind::Constant: break;
    }
    throw std::logic_error("compute: terminal node has no forward rule");
}

inline NodeId record(Tape& t, OpKind op, std::array<NodeId, 3> parents, double attr = 0.0,
                     int64_t index = 0) {
    Node n;
    n.op = op;
    n.parents = parents;
    n.attr = attr;
    n.index = index;
    n.value = compute(t, n);
    return t.push(std::move(n));
}

inline NodeId matmul(Tape& t, NodeId a, NodeId b) { return record(t, OpKind::Matmul, {a, b, -1}); }
inline NodeId matvec(Tape& t, NodeId m, NodeId v) { return record(t, OpKind::Matvec, {m, v, -1}); }
inline NodeId add(Tape& t, NodeId a, NodeId b) { return record(t, OpKind::Add, {a, b, -1}); }
inline NodeId add_rows(Tape& t, NodeId x, NodeId bias) {
    return record(t, OpKind::AddRows, {x, bias, -1});
}
inline NodeId mul(Tape& t, NodeId a, NodeId b) { return record(t, OpKind::Mul, {a, b, -1}); }
inline NodeId scale(Tape& t, NodeId a, double s) {
    return record(t, OpKind::Scale, {a, -1, -1}, s);
}
inline NodeId tanh(Tape& t, NodeId a) { return record(t, OpKind::Tanh, {a, -1, -1}); }
inline NodeId conv1d_causal(Tape& t, NodeId x, NodeId kernel, int64_t dilation) {
    return record(t, OpKind::Conv1dCausal, {x, kernel, -1}, 0.0, dilation);
}
inline NodeId rfft(Tape& t, NodeId x) { return record(t, OpKind::Rfft, {x, -1, -1}); }
inline NodeId irfft(Tape& t, NodeId X, int64_t time) {
    return record(t, OpKind::Irfft, {X, -1, -1}, 0.0, time);
}
inline NodeId complex_linear(Tape& t, NodeId Q, NodeId P, NodeId B) {
    return record(t, OpKind::ComplexLinear, {Q, P, B});
}
inline NodeId mean_pool_time(Tape& t, NodeId x) {
    return record(t, OpKind::MeanPoolTime, {x, -1, -1});
}
inline NodeId row_at(Tape& t, NodeId x, int64_t row) {
    return record(t, OpKind::RowAt, {x, -1, -1}, 0.0, row);
}
inline NodeId element_at(Tape& t, NodeId v, int64_t i) {
    return record(t, OpKind::ElementAt, {v, -1, -1}, 0.0, i);
}
inline NodeId concat_vec(Tape& t, NodeId a, NodeId b) {
    return record(t, OpKind::ConcatVec, {a, b, -1});
}
inline NodeId l2_normalize(Tape& t, NodeId v) {
    return record(t, OpKind::L2Normalize, {v, -1, -1});
}
inline NodeId dot(Tape& t, NodeId a, NodeId b) { return record(t, OpKind::Dot, {a, b, -1}); }
inline NodeId log_softmax(Tape& t, NodeId v) { return record(t, OpKind::LogSoftmax, {v, -1, -1}); }
inline NodeId l1_norm(Tape& t, NodeId v) { return record(t, OpKind::L1Norm, {v, -1, -1}); }
inline NodeId l2_norm(Tape& t, NodeId v) { return record(t, OpKind::L2Norm, {v, -1, -1}); }
inline NodeId mean_all(Tape& t, NodeId v) { return record(t, OpKind::MeanAll, {v, -1, -1}); }
inline NodeId sum_all(Tape& t, NodeId v) { return record(t, OpKind::SumAll, {v, -1, -1}); }

inline bool values_equal(const Value& a, const Value& b) {
    if (std::holds_alternative<Tensor>(a)) {
        if (!std::holds_alternative<Tensor>(b)) return false;
        const Tensor& x = std::get<Tensor>(a);
        const Tensor& y = std::get<Tensor>(b);
        return x.dims == y.dims && x.data == y.data;
    }
    const ComplexTensor& x = std::get<ComplexTensor>(a);
    const ComplexTensor& y = std::get<ComplexTensor>(b);
    return x.dims == y.dims && x.re == y.re && x.im == y.im;
}

// Recomputes every non-terminal node and compares against the recorded value.
inline bool replay_matches(const Tape& t) {
    for (const Node& n : t.nodes) {
        if (n.op == OpKind::Leaf || n.op == OpKind::Constant) continue;
        if (!values_equal(n.value, compute(t, n))) return false;
    }
    return true;
}

class Gradients {
public:
    explicit Gradients(size_t n) : adj_(n) {}

    std::optional<Value>& slot(NodeId id) { return adj_.at(static_cast<size_t>(id)); }

    // Gradient of the output w.r.t. node `id`; zeros when nothing flowed back.
    Tensor grad(const Tape& t, NodeId id) const {
        const auto& a = adj_.at(static_cast<size_t>(id));
        if (a) return std::get<Tensor>(*a);
        return Tensor::zeros(std::get<Tensor>(t.nodes.at(id).value).dims);
    }

    ComplexTensor cgrad(const Tape& t, NodeId id) const {
        const auto& a = adj_.at(static_cast<size_t>(id));
        if (a) return std::get<ComplexTensor>(*a);
        return ComplexTensor::zeros(std::get<ComplexTensor>(t.nodes.at(id).value).dims);
    }

private:
    std::vector<std::optional<Value>> adj_;
};

namespace detail {

inline Tensor& adj_tensor(Gradients& g, const Tape& t, NodeId id) {
    auto& slot = g.slot(id);
    if (!slot) slot = Value(Tensor::zeros(std::get<Tensor>(t.nodes[id].value).dims));
    return std::get<Tensor>(*slot);
}

inline ComplexTensor& adj_complex(Gradients& g, const Tape& t, NodeId id) {
    auto& slot = g.slot(id);
    if (!slot) slot = Value(ComplexTensor::zeros(std::get<ComplexTensor>(t.nodes[id].value).dims));
    return std::get<ComplexTensor>(*slot);
}

inline void accumulate(Tensor& into, const Tensor& g) {
    for (int64_t i = 0; i < into.size(); ++i) into.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)];
}

inline void accumulate(ComplexTensor& into, const ComplexTensor& g) {
    for (size_t i = 0; i < into.re.size(); ++i) {
        into.re[i] += g.re[i];
        into.im[i] += g.im[i];
    }
}

}  // namespace detail

// Reverse sweep from a recorded scalar node. Adjoints flow only through
// nodes that can reach a Leaf, so constants cost nothing.
inline Gradients backward(const Tape& t, NodeId out, bool verify_replay = false) {
    const Node& on = t.nodes.at(static_cast<size_t>(out));
    if (!std::holds_alternative<Tensor>(on.value) || std::get<Tensor>(on.value).size() != 1)
        throw std::invalid_argument("backward: output node is not a scalar");
    if (verify_replay && !replay_matches(t))
        throw std::runtime_error("backward: tape replay mismatch");

    Gradients grads(t.nodes.size());
    grads.slot(out) = Value(Tensor::scalar(1.0));

    auto wants = [&](NodeId id) { return id >= 0 && t.nodes[id].requires_grad; };

    for (NodeId id = out; id >= 0; --id) {
        const Node& n = t.nodes[id];
        if (!n.requires_grad) continue;
        auto& slot = grads.slot(id);
        if (!slot) continue;
        const NodeId p0 = n.parents[0], p1 = n.parents[1], p2 = n.parents[2];
        auto pt = [&](int i) -> const Tensor& { return std::get<Tensor>(t.nodes[n.parents[i]].value); };
        auto pc = [&](int i) -> const ComplexTensor& {
            return std::get<ComplexTensor>(t.nodes[n.parents[i]].value);
        };
        switch (n.op) {
            case OpKind::Leaf:
            case OpKind::Constant: break;
            case OpKind::Matmul: {
                const Tensor& g = std::get<Tensor>(*slot);
                Tensor da = Tensor::zeros(pt(0).dims), db = Tensor::zeros(pt(1).dims);
                ops::matmul_vjp(pt(0), pt(1), g, da, db);
                if (wants(p0)) detail::accumulate(detail::adj_tensor(grads, t, p0), da);
                if (wants(p1)) detail::accumulate(detail::adj_tensor(grads, t, p1), db);
                break;
            }
            case OpKind::Matvec: {
                const Tensor& g = std::get<Tensor>(*slot);
                Tensor dm = Tensor::zeros(pt(0).dims), dv = Tensor::zeros(pt(1).dims);
                ops::matvec_vjp(pt(0), pt(1), g, dm, dv);
                if (wants(p0)) detail::accumulate(detail::adj_tensor(grads, t, p0), dm);
                if (wants(p1)) detail::accumulate(detail::adj_tensor(grads, t, p1), dv);
                break;
            }
            case OpKind::Add: {
                const Tensor& g = std::get<Tensor>(*slot);
                if (wants(p0)) detail::accumulate(detail::adj_tensor(grads, t, p0), g);
                if (wants(p1)) detail::accumulate(detail::adj_tensor(grads, t, p1), g);
                break;
            }
            case OpKind::AddRows: {
                const Tensor& g = std::get<Tensor>(*slot);
                if (wants(p0)) detail::accumulate(detail::adj_tensor(grads, t, p0), g);
                if (wants(p1)) {
                    Tensor& db = detail::adj_tensor(grads, t, p1);
                    const int64_t rows = g.dim(0), c = g.dim(1);
                    for (int64_t i = 0; i < rows; ++i)
                        for (int64_t j = 0; j < c; ++j) db.at(j) += g.at(i, j);
                }
                break;
            }
            case OpKind::Mul: {
                const Tensor& g = std::get<Tensor>(*slot);
                if (wants(p0)) detail::accumulate(detail::adj_tensor(grads, t, p0), ops::mul(g, pt(1)));
                if (wants(p1)) detail::accumulate(detail::adj_tensor(grads, t, p1), ops::mul(g, pt(0)));
                break;
            }
            case OpKind::Scale: {
                const Tensor& g = std::get<Tensor>(*slot);
                if (wants(p0)) detail::accumulate(detail::adj_tensor(grads, t, p0), ops::scale(g, n.attr));
                break;
            }
            case OpKind::Tanh: {
                const Tensor& g = std::get<Tensor>(*slot);
                if (wants(p0)) {
                    const Tensor& y = std::get<Tensor>(n.value);
                    Tensor& dx = detail::adj_tensor(grads, t, p0);
                    for (int64_t i = 0; i < g.size(); ++i) {
                        const double yi = y.data[static_cast<size_t>(i)];
                        dx.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)] * (1.0 - yi * yi);
                    }
                }
                break;
            }
            case OpKind::Conv1dCausal: {
                const Tensor& g = std::get<Tensor>(*slot);
                Tensor dx = Tensor::zeros(pt(0).dims), dk = Tensor::zeros(pt(1).dims);
                ops::conv1d_causal_vjp(pt(0), pt(1), n.index, g, dx, dk);
                if (wants(p0)) detail::accumulate(detail::adj_tensor(grads, t, p0), dx);
                if (wants(p1)) detail::accumulate(detail::adj_tensor(grads, t, p1), dk);
                break;
            }
            case OpKind::Rfft: {
                const ComplexTensor& g = std::get<ComplexTensor>(*slot);
                if (wants(p0))
                    detail::accumulate(detail::adj_tensor(grads, t, p0),
                                       ops::rfft_vjp(g, pt(0).dim(0)));
                break;
            }
            case OpKind::Irfft: {
                const Tensor& g = std::get<Tensor>(*slot);
                if (wants(p0))
                    detail::accumulate(detail::adj_complex(grads, t, p0), ops::irfft_vjp(g));
                break;
            }
            case OpKind::ComplexLinear: {
                const ComplexTensor& g = std::get<ComplexTensor>(*slot);
                ComplexTensor dQ = ComplexTensor::zeros(pc(0).dims);
                ComplexTensor dP = ComplexTensor::zeros(pc(1).dims);
                ComplexTensor dB = ComplexTensor::zeros(pc(2).dims);
                ops::complex_linear_vjp(pc(0), pc(1), g, dQ, dP, dB);
                if (wants(p0)) detail::accumulate(detail::adj_complex(grads, t, p0), dQ);
                if (wants(p1)) detail::accumulate(detail::adj_complex(grads, t, p1), dP);
                if (wants(p2)) detail::accumulate(detail::adj_complex(grads, t, p2), dB);
                break;
            }
            case OpKind::MeanPoolTime: {
                const Tensor& g = std::get<Tensor>(*slot);
                if (wants(p0)) {
                    Tensor& dx = detail::adj_tensor(grads, t, p0);
                    const int64_t time = dx.dim(0), c = dx.dim(1);
                    for (int64_t i = 0; i < time; ++i)
                        for (int64_t j = 0; j < c; ++j)
                            dx.at(i, j) += g.at(j) / static_cast<double>(time);
                }
                break;
            }
            case OpKind::RowAt: {
                const Tensor& g = std::get<Tensor>(*slot);
                if (wants(p0)) {
                    Tensor& dx = detail::adj_tensor(grads, t, p0);
                    for (int64_t j = 0; j < g.dim(0); ++j) dx.at(n.index, j) += g.at(j);
                }
                break;
            }
            case OpKind::ElementAt: {
                const Tensor& g = std::get<Tensor>(*slot);
                if (wants(p0)) detail::adj_tensor(grads, t, p0).at(n.index) += g.at(0);
                break;
            }
            case OpKind::ConcatVec: {
                const Tensor& g = std::get<Tensor>(*slot);
                const int64_t na = pt(0).dim(0);
                if (wants(p0)) {
                    Tensor& da = detail::adj_tensor(grads, t, p0);
                    for (int64_t i = 0; i < na; ++i) da.at(i) += g.at(i);
                }
                if (wants(p1)) {
                    Tensor& db = detail::adj_tensor(grads, t, p1);
                    for (int64_t i = 0; i < g.dim(0) - na; ++i) db.at(i) += g.at(na + i);
                }
                break;
            }
            case OpKind::L2Normalize: {
                const Tensor& g = std::get<Tensor>(*slot);
                if (wants(p0))
                    ops::l2_normalize_vjp(pt(0), std::get<Tensor>(n.value), g,
                                          detail::adj_tensor(grads, t, p0));
                break;
            }
            case OpKind::Dot: {
                const Tensor& g = std::get<Tensor>(*slot);
                const double gv = g.at(0);
                if (wants(p0))
                    detail::accumulate(detail::adj_tensor(grads, t, p0), ops::scale(pt(1), gv));
                if (wants(p1))
                    detail::accumulate(detail::adj_tensor(grads, t, p1), ops::scale(pt(0), gv));
                break;
            }
            case OpKind::LogSoftmax: {
                const Tensor& g = std::get<Tensor>(*slot);
                if (wants(p0))
                    ops::log_softmax_vjp(std::get<Tensor>(n.value), g,
                                         detail::adj_tensor(grads, t, p0));
                break;
            }
            case OpKind::L1Norm: {
                const double gv = std::get<Tensor>(*slot).at(0);
                if (wants(p0)) {
                    const Tensor& v = pt(0);
                    Tensor& dv = detail::adj_tensor(grads, t, p0);
                    for (int64_t i = 0; i < v.size(); ++i) {
                        const double x = v.data[static_cast<size_t>(i)];
                        dv.data[static_cast<size_t>(i)] += gv * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
                    }
                }
                break;
            }
            case OpKind::L2Norm: {
                const double gv = std::get<Tensor>(*slot).at(0);
                const double norm = std::get<Tensor>(n.value).at(0);
                if (wants(p0) && norm > 0.0)
                    detail::accumulate(detail::adj_tensor(grads, t, p0),
                                       ops::scale(pt(0), gv / norm));
                break;
            }
            case OpKind::MeanAll: {
                const double gv = std::get<Tensor>(*slot).at(0);
                if (wants(p0)) {
                    Tensor& dv = detail::adj_tensor(grads, t, p0);
                    const double s = gv / static_cast<double>(dv.size());
                    for (double& x : dv.data) x += s;
                }
                break;
            }
            case OpKind::SumAll: {
                const double gv = std::get<Tensor>(*slot).at(0);
                if (wants(p0)) {
                    Tensor& dv = detail::adj_tensor(grads, t, p0);
                    for (double& x : dv.data) x += gv;
                }
                break;
            }
        }
    }
    return grads;
}

}  // namespace tsi::ad
