#ifndef SENA_TAPE_HPP
#define SENA_TAPE_HPP

#include "tensor.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

/**
 * @file tape.hpp
 * @brief Reverse-mode differentiation over a fixed set of matrix primitives.
 */

namespace sena {

enum class OpKind {
    leaf,
    matmul,
    add,
    sub,
    mul,
    scale,
    exp,
    log,
    square,
    abs,
    leaky_relu,
    tanh,
    sum,
    mean,
    softmax,
    gaussian_kernel,
    broadcast_row
};

inline const char* to_string(OpKind op) {
    switch (op) {
        case OpKind::leaf: return "leaf";
        case OpKind::matmul: return "matmul";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::mul: return "mul";
        case OpKind::scale: return "scale";
        case OpKind::exp: return "exp";
        case OpKind::log: return "log";
        case OpKind::square: return "square";
        case OpKind::abs: return "abs";
        case OpKind::leaky_relu: return "leaky_relu";
        case OpKind::tanh: return "tanh";
        case OpKind::sum: return "sum";
        case OpKind::mean: return "mean";
        case OpKind::softmax: return "softmax";
        case OpKind::gaussian_kernel: return "gaussian_kernel";
        case OpKind::broadcast_row: return "broadcast_row";
    }
    return "unknown";
}

using NodeId = std::uint32_t;

class Tape;

/**
 * Handle to a node on a tape.
 */
struct Var {
    Tape* tape = nullptr;
    NodeId id = 0;
};

/**
 * @brief Ordered record of primitive operations.
 *
 * Nodes only ever reference earlier nodes, so the record is topologically sorted by construction.
 * Leaf values can be overwritten and the record replayed, which is what finite-difference checking relies on.
 */
class Tape {
public:
    struct Node {
        OpKind op = OpKind::leaf;
        std::array<NodeId, 2> inputs{};
        int arity = 0;
        double param = 0.0;
        std::size_t count = 0;
        Tensor value;
        bool trainable = false;
        std::string name;
    };

    Var leaf(Tensor value, bool trainable, std::string name = {}) {
        Node node;
        node.op = OpKind::leaf;
        node.value = std::move(value);
        node.trainable = trainable;
        node.name = std::move(name);
        return push(std::move(node));
    }

    Var parameter(Tensor value, std::string name = {}) { return leaf(std::move(value), true, std::move(name)); }
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    Var matmul(Var a, Var b) { return record(OpKind::matmul, a, b); }
    Var add(Var a, Var b) { return record(OpKind::add, a, b); }
    Var sub(Var a, Var b) { return record(OpKind::sub, a, b); }
    Var mul(Var a, Var b) { return record(OpKind::mul, a, b); }
    Var scale(Var a, double c) { return record(OpKind::scale, a, {}, c); }
    Var exp(Var a) { return record(OpKind::exp, a); }
    Var log(Var a) { return record(OpKind::log, a); }
    Var square(Var a) { return record(OpKind::square, a); }
    Var abs(Var a) { return record(OpKind::abs, a); }
    Var leaky_relu(Var a, double slope) { return record(OpKind::leaky_relu, a, {}, slope); }
    Var tanh(Var a) { return record(OpKind::tanh, a); }
    Var sum(Var a) { return record(OpKind::sum, a); }
    Var mean(Var a) { return record(OpKind::mean, a); }
    Var softmax(Var a, double temperature) { return record(OpKind::softmax, a, {}, temperature); }
    Var gaussian_kernel(Var a, Var b, double bandwidth) { return record(OpKind::gaussian_kernel, a, b, bandwidth); }
    Var broadcast_row(Var a, std::size_t nrows) { return record(OpKind::broadcast_row, a, {}, 0.0, nrows); }

    std::size_t size() const { return nodes_.size(); }
    const Node& node(NodeId id) const { return nodes_.at(id); }
    const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
    const Tensor& value(NodeId id) const { return nodes_.at(id).value; }

    std::vector<NodeId> parameters() const {
        std::vector<NodeId> out;
        for (NodeId i = 0; i < nodes_.size(); ++i) {
            if (nodes_[i].op == OpKind::leaf && nodes_[i].trainable) {
                out.push_back(i);
            }
        }
        return out;
    }

    /**
     * Overwrite a leaf value. The shape must not change.
     */
    void set_leaf(NodeId id, Tensor value) {
        Node& node = nodes_.at(id);
        if (node.op != OpKind::leaf) {
            throw Error(ErrorKind::contract, "set_leaf on a non-leaf node");
        }
        ops::require_same_shape(node.value, value, "set_leaf");
        node.value = std::move(value);
    }

    /**
     * Recompute every non-leaf node from the current leaf values.
     */
    void replay() {
        for (auto& node : nodes_) {
            if (node.op != OpKind::leaf) {
                node.value = evaluate(node);
            }
        }
    }

    /**
     * Gradient of a scalar node with respect to every trainable leaf.
     * Leaves that the loss does not depend on get zero tensors.
     */
    std::map<NodeId, Tensor> gradient(Var loss) const { return gradient(loss.id); }

    std::map<NodeId, Tensor> gradient(NodeId loss) const {
        if (nodes_.at(loss).value.size() != 1) {
            throw Error(ErrorKind::contract, "gradient requires a scalar loss node, got " + shape_string(nodes_[loss].value));
        }
        std::vector<Tensor> adj(loss + 1);
        std::vector<bool> live(loss + 1, false);
        adj[loss] = Tensor::scalar(1.0);
        live[loss] = true;

        for (NodeId id = loss + 1; id-- > 0;) {
            if (!live[id] || nodes_[id].op == OpKind::leaf) {
                continue;
            }
            const Node& node = nodes_[id];
            const Tensor& g = adj[id];
            for (int slot = 0; slot < node.arity; ++slot) {
                Tensor contrib = input_gradient(node, slot, g);
                auto fault = faults_.find(node.op);
                if (fault != faults_.end()) {
                    contrib = ops::scale(contrib, fault->second);
                }
                NodeId in = node.inputs[slot];
                if (live[in]) {
                    adj[in] = ops::add(adj[in], contrib);
                } else {
                    adj[in] = std::move(contrib);
                    live[in] = true;
                }
            }
        }

        std::map<NodeId, Tensor> out;
        for (NodeId id : parameters()) {
            if (id <= loss && live[id]) {
                out[id] = std::move(adj[id]);
            } else {
                out[id] = Tensor(nodes_[id].value.rows(), nodes_[id].value.cols());
            }
        }
        return out;
    }

    /**
     * Testing hook: scales every input gradient produced by `op` by `factor`.
     * Used to confirm that gradient checking flags a broken backward rule.
     */
    void inject_backward_fault(OpKind op, double factor) { faults_[op] = factor; }
    void clear_backward_faults() { faults_.clear(); }

private:
    std::vector<Node> nodes_;
    std::map<OpKind, double> faults_;

    Var push(Node node) {
        nodes_.push_back(std::move(node));
        return Var{this, static_cast<NodeId>(nodes_.size() - 1)};
    }

    Var record(OpKind op, Var a, Var b = {}, double param = 0.0, std::size_t count = 0) {
        Node node;
        node.op = op;
        node.param = param;
        node.count = count;
        node.inputs = {a.id, b.id};
        node.arity = (b.tape ? 2 : 1);
        if (a.tape != this || (b.tape && b.tape != this)) {
            throw Error(ErrorKind::contract, std::string(to_string(op)) + ": operand belongs to another tape");
        }
        node.value = evaluate(node);
        return push(std::move(node));
    }

    Tensor evaluate(const Node& node) const {
        const Tensor& a = nodes_[node.inputs[0]].value;
        switch (node.op) {
            case OpKind::matmul: return ops::matmul(a, nodes_[node.inputs[1]].value);
            case OpKind::add: return ops::add(a, nodes_[node.inputs[1]].value);
            case OpKind::sub: return ops::sub(a, nodes_[node.inputs[1]].value);
            case OpKind::mul: return ops::mul(a, nodes_[node.inputs[1]].value);
            case OpKind::scale: return ops::scale(a, node.param);
            case OpKind::exp: return ops::exp(a);
            case OpKind::log: return ops::log(a);
            case OpKind::square: return ops::square(a);
            case OpKind::abs: return ops::abs(a);
            case OpKind::leaky_relu: return ops::leaky_relu(a, node.param);
            case OpKind::tanh: return ops::tanh(a);
            case OpKind::sum: return ops::sum(a);
            case OpKind::mean: return ops::mean(a);
            case OpKind::softmax: return ops::softmax_rows(a, node.param);
            case OpKind::gaussian_kernel: return ops::gaussian_kernel(a, nodes_[node.inputs[1]].value, node.param);
            case OpKind::broadcast_row: return ops::broadcast_row(a, node.count);
            case OpKind::leaf: break;
        }
        return node.value;
    }

    Tensor input_gradient(const Node& node, int slot, const Tensor& g) const {
        const Tensor& a = nodes_[node.inputs[0]].value;
        const Tensor& out = node.value;
        switch (node.op) {
            case OpKind::matmul: {
                const Tensor& b = nodes_[node.inputs[1]].value;
                return slot == 0 ? ops::matmul(g, ops::transpose(b)) : ops::matmul(ops::transpose(a), g);
            }
            case OpKind::add:
                return g;
            case OpKind::sub:
                return slot == 0 ? g : ops::scale(g, -1.0);
            case OpKind::mul:
                return ops::mul(g, nodes_[node.inputs[1 - slot]].value);
            case OpKind::scale:
                return ops::scale(g, node.param);
            case OpKind::exp:
                return ops::mul(g, out);
            case OpKind::log:
                return ops::zip(g, a, "log backward", [](double gv, double x) { return gv / x; });
            case OpKind::square:
                return ops::zip(g, a, "square backward", [](double gv, double x) { return 2.0 * x * gv; });
            case OpKind::abs:
                return ops::zip(g, a, "abs backward", [](double gv, double x) { return x > 0.0 ? gv : (x < 0.0 ? -gv : 0.0); });
            case OpKind::leaky_relu: {
                const double slope = node.param;
                return ops::zip(g, a, "leaky backward", [slope](double gv, double x) { return x > 0.0 ? gv : slope * gv; });
            }
            case OpKind::tanh:
                return ops::zip(g, out, "tanh backward", [](double gv, double y) { return gv * (1.0 - y * y); });
            case OpKind::sum:
                return Tensor(a.rows(), a.cols(), g.item());
            case OpKind::mean:
                return Tensor(a.rows(), a.cols(), g.item() / static_cast<double>(a.size()));
            case OpKind::softmax: {
                Tensor dx(a.rows(), a.cols());
                for (std::size_t i = 0; i < a.rows(); ++i) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < a.cols(); ++j) {
                        dot += g(i, j) * out(i, j);
                    }
                    for (std::size_t j = 0; j < a.cols(); ++j) {
                        dx(i, j) = node.param * out(i, j) * (g(i, j) - dot);
                    }
                }
                return dx;
            }
            case OpKind::gaussian_kernel: {
                const Tensor& b = nodes_[node.inputs[1]].value;
                const double inv = 1.0 / (node.param * node.param);
                if (slot == 0) {
                    Tensor da(a.rows(), a.cols());
                    for (std::size_t i = 0; i < a.rows(); ++i) {
                        for (std::size_t j = 0; j < b.rows(); ++j) {
                            const double w = g(i, j) * out(i, j) * inv;
                            for (std::size_t k = 0; k < a.cols(); ++k) {
                                da(i, k) -= w * (a(i, k) - b(j, k));
                            }
                        }
                    }
                    return da;
                }
                Tensor db(b.rows(), b.cols());
                for (std::size_t i = 0; i < a.rows(); ++i) {
                    for (std::size_t j = 0; j < b.rows(); ++j) {
                        const double w = g(i, j) * out(i, j) * inv;
                        for (std::size_t k = 0; k < b.cols(); ++k) {
                            db(j, k) += w * (a(i, k) - b(j, k));
                        }
                    }
                }
                return db;
            }
            case OpKind::broadcast_row:
                return ops::column_sums(g);
            case OpKind::leaf:
                break;
        }
        throw Error(ErrorKind::contract, "no backward rule for leaf");
    }
};

/**
 * Backend that records onto a tape. Model and loss code is written once against
 * this interface and `EagerBackend`.
 */
struct TapeBackend {
    using Value = Var;
    Tape& tape;

    Value constant(Tensor t) { return tape.constant(std::move(t)); }
    Value matmul(Value a, Value b) { return tape.matmul(a, b); }
    Value add(Value a, Value b) { return tape.add(a, b); }
    Value sub(Value a, Value b) { return tape.sub(a, b); }
    Value mul(Value a, Value b) { return tape.mul(a, b); }
    Value scale(Value a, double c) { return tape.scale(a, c); }
    Value exp(Value a) { return tape.exp(a); }
    Value log(Value a) { return tape.log(a); }
    Value square(Value a) { return tape.square(a); }
    Value abs(Value a) { return tape.abs(a); }
    Value leaky_relu(Value a, double slope) { return tape.leaky_relu(a, slope); }
    Value tanh(Value a) { return tape.tanh(a); }
    Value sum(Value a) { return tape.sum(a); }
    Value mean(Value a) { return tape.mean(a); }
    Value softmax(Value a, double temperature) { return tape.softmax(a, temperature); }
    Value gaussian_kernel(Value a, Value b, double bandwidth) { return tape.gaussian_kernel(a, b, bandwidth); }
    Value broadcast_row(Value a, std::size_t nrows) { return tape.broadcast_row(a, nrows); }
    const Tensor& value(Value a) const { return tape.value(a); }
};

struct EagerBackend {
    using Value = Tensor;

    Value constant(Tensor t) { return t; }
    Value matmul(const Value& a, const Value& b) { return ops::matmul(a, b); }
    Value add(const Value& a, const Value& b) { return ops::add(a, b); }
    Value sub(const Value& a, const Value& b) { return ops::sub(a, b); }
    Value mul(const Value& a, const Value& b) { return ops::mul(a, b); }
    Value scale(const Value& a, double c) { return ops::scale(a, c); }
    Value exp(const Value& a) { return ops::exp(a); }
    Value log(const Value& a) { return ops::log(a); }
    Value square(const Value& a) { return ops::square(a); }
    Value abs(const Value& a) { return ops::abs(a); }
    Value leaky_relu(const Value& a, double slope) { return ops::leaky_relu(a, slope); }
    Value tanh(const Value& a) { return ops::tanh(a); }
    Value sum(const Value& a) { return ops::sum(a); }
    Value mean(const Value& a) { return ops::mean(a); }
    Value softmax(const Value& a, double temperature) { return ops::softmax_rows(a, temperature); }
    Value gaussian_kernel(const Value& a, const Value& b, double bandwidth) { return ops::gaussian_kernel(a, b, bandwidth); }
    Value broadcast_row(const Value& a, std::size_t nrows) { return ops::broadcast_row(a, nrows); }
    const Tensor& value(const Value& a) const { return a; }
};

}

#endif
