#pragma once

// Reverse-mode differentiation over Tensor values.
//
// A Tape records every operation applied to its Vars. Nodes are appended in
// evaluation order, so walking them backwards is a valid topological order and
// each node is visited exactly once. One tape per forward/backward pass; tapes
// are not thread-safe and must not be shared.

#include "mapsed/tensor.hpp"

#include <functional>
#include <unordered_map>
#include <vector>

namespace mapsed {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    /// Gradient of the last backward root w.r.t. this node.
    const Tensor& grad() const;

    Tape* tape() const { return tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Non-differentiable input.
    Var constant(Tensor value);
    /// Differentiable leaf owned by the tape.
    Var variable(Tensor value);
    /// Differentiable leaf bound to an external parameter tensor. Repeated calls
    /// with the same tensor return the same node, so shared weights accumulate.
    Var param(const Tensor& value);

    /// Appends an operation result. `inputs` are the nodes it reads; if none of
    /// them needs a gradient the backward function is dropped.
    Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
    Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

    /// Runs reverse accumulation from a scalar root (one element).
    void backward(Var root);

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    const Tensor& grad(std::size_t id) const;
    /// Mutable gradient buffer, allocated with zeros on first access.
    Tensor& grad_buffer(std::size_t id);
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    /// Gradient for a tensor previously bound with param(); zeros if unused.
    Tensor param_grad(const Tensor& param) const;
    bool has_param(const Tensor& param) const { return params_.count(&param) != 0; }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        BackwardFn backward;
        bool requires_grad = false;
    };

    std::vector<Node> nodes_;
    std::unordered_map<const Tensor*, std::size_t> params_;
};

class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

namespace ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var relu(Var a);
Var exp(Var a);

Var reshape(Var a, Shape shape);
Var permute(Var a, std::vector<std::size_t> axes);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var narrow(Var a, std::size_t axis, std::size_t start, std::size_t length);

Var conv2d(Var input, Var kernel, Var bias);
Var conv3d(Var input, Var kernel, Var bias);

/// op(a)·op(b) for 2D operands, where op transposes when the flag is set.
Var matmul(Var a, Var b, bool transpose_a = false, bool transpose_b = false);
Var softmax(Var a, std::size_t axis);

Var avg_pool2x2(Var a);
Var upsample2x2(Var a);

// Reductions to a scalar (shape {}).
Var sum(Var a);
Var sum_squares(Var a);
Var abs_sum(Var a);
Var dot(Var a, Var b);
Var squared_distance(Var a, Var b);

// Scalar-only operations.
Var hinge(Var x);
Var minimum(const std::vector<Var>& xs);
Var log_sum_exp(const std::vector<Var>& xs);
Var add_scalar(Var a, double c);

}  // namespace ad

}  // namespace mapsed
