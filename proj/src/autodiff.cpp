#include "mapsed/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mapsed {

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, {}, false});
    return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, {}, true});
    return Var(this, nodes_.size() - 1);
}

Var Tape::param(const Tensor& value) {
    auto it = params_.find(&value);
    if (it != params_.end()) return Var(this, it->second);
    Var v = variable(value);
    params_.emplace(&value, v.id());
    return v;
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    bool needs = false;
    for (const Var& in : inputs) needs = needs || nodes_[in.id()].requires_grad;
    nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : BackwardFn{}, needs});
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
    bool needs = false;
    for (const Var& in : inputs) needs = needs || nodes_[in.id()].requires_grad;
    nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : BackwardFn{}, needs});
    return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::grad(std::size_t id) const {
    const Node& n = nodes_[id];
    if (n.grad.shape() != n.value.shape()) {
        throw ContractError("gradient requested for a node that received none; call backward() first");
    }
    return n.grad;
}

Tensor& Tape::grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape());
    return n.grad;
}

void Tape::backward(Var root) {
    if (root.tape() != this) throw ContractError("backward: root belongs to another tape");
    if (nodes_[root.id()].value.size() != 1) {
        throw ContractError("backward: root must be scalar, got shape " +
                            shape_to_string(nodes_[root.id()].value.shape()));
    }
    for (Node& n : nodes_) {
        if (n.requires_grad) n.grad = Tensor(n.value.shape());
    }
    grad_buffer(root.id())[0] = 1.0;
    for (std::size_t id = root.id() + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (n.backward) n.backward(*this, id);
    }
}

Tensor Tape::param_grad(const Tensor& param) const {
    auto it = params_.find(&param);
    if (it == params_.end()) return Tensor(param.shape());
    const Node& n = nodes_[it->second];
    if (n.grad.shape() != n.value.shape()) return Tensor(param.shape());
    return n.grad;
}

namespace ad {

namespace {

Tape& tape_of(Var a) {
    if (!a.valid()) throw ContractError("operation on an unbound Var");
    return *a.tape();
}

void same_tape(Var a, Var b) {
    if (a.tape() != b.tape()) throw ContractError("operands live on different tapes");
}

void accumulate(Tape& t, Var target, const Tensor& g) {
    if (!t.requires_grad(target.id())) return;
    t.grad_buffer(target.id()) += g;
}

void require_scalar(Var x, const char* op) {
    if (x.value().size() != 1) {
        throw DimensionError(std::string(op) + ": expects a scalar, got " + shape_to_string(x.shape()));
    }
}

}  // namespace

Var add(Var a, Var b) {
    same_tape(a, b);
    require_same_shape(a.value(), b.value(), "add");
    Tape& t = tape_of(a);
    return t.record(a.value() + b.value(), {a, b}, [a, b](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        accumulate(tp, a, g);
        accumulate(tp, b, g);
    });
}

Var sub(Var a, Var b) {
    same_tape(a, b);
    require_same_shape(a.value(), b.value(), "sub");
    Tape& t = tape_of(a);
    return t.record(a.value() - b.value(), {a, b}, [a, b](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        accumulate(tp, a, g);
        if (tp.requires_grad(b.id())) tp.grad_buffer(b.id()) -= g;
    });
}

Var mul(Var a, Var b) {
    same_tape(a, b);
    require_same_shape(a.value(), b.value(), "mul");
    Tape& t = tape_of(a);
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        if (tp.requires_grad(a.id())) {
            Tensor& ga = tp.grad_buffer(a.id());
            const Tensor& bv = b.value();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (tp.requires_grad(b.id())) {
            Tensor& gb = tp.grad_buffer(b.id());
            const Tensor& av = a.value();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

Var scale(Var a, double s) {
    Tape& t = tape_of(a);
    return t.record(a.value() * s, {a}, [a, s](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        Tensor& ga = tp.grad_buffer(a.id());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
    });
}

Var add_scalar(Var a, double c) {
    Tape& t = tape_of(a);
    Tensor out = a.value();
    for (double& v : out.data()) v += c;
    return t.record(std::move(out), {a}, [a](Tape& tp, std::size_t self) { accumulate(tp, a, tp.grad(self)); });
}

Var relu(Var a) {
    Tape& t = tape_of(a);
    Tensor out = a.value();
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    return t.record(std::move(out), {a}, [a](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        const Tensor& x = a.value();
        Tensor& ga = tp.grad_buffer(a.id());
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] > 0.0) ga[i] += g[i];
    });
}

Var exp(Var a) {
    Tape& t = tape_of(a);
    Tensor out = a.value();
    for (double& v : out.data()) v = std::exp(v);
    return t.record(std::move(out), {a}, [a](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        const Tensor& y = tp.value(self);
        Tensor& ga = tp.grad_buffer(a.id());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    });
}

Var reshape(Var a, Shape shape) {
    Tape& t = tape_of(a);
    Tensor out = a.value().reshaped(std::move(shape));
    return t.record(std::move(out), {a}, [a](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        Tensor& ga = tp.grad_buffer(a.id());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

Var permute(Var a, std::vector<std::size_t> axes) {
    Tape& t = tape_of(a);
    Tensor out = mapsed::permute(a.value(), axes);
    return t.record(std::move(out), {a}, [a, axes](Tape& tp, std::size_t self) {
        std::vector<std::size_t> inverse(axes.size());
        for (std::size_t i = 0; i < axes.size(); ++i) inverse[axes[i]] = i;
        accumulate(tp, a, mapsed::permute(tp.grad(self), inverse));
    });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    Tape& t = tape_of(parts.front());
    std::vector<const Tensor*> values;
    for (const Var& p : parts) {
        same_tape(parts.front(), p);
        values.push_back(&p.value());
    }
    Tensor out = mapsed::concat(values, axis);
    return t.record(std::move(out), parts, [parts, axis](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        std::size_t start = 0;
        for (const Var& p : parts) {
            const std::size_t len = p.value().dim(axis);
            if (tp.requires_grad(p.id())) accumulate(tp, p, mapsed::narrow(g, axis, start, len));
            start += len;
        }
    });
}

Var narrow(Var a, std::size_t axis, std::size_t start, std::size_t length) {
    Tape& t = tape_of(a);
    Tensor out = mapsed::narrow(a.value(), axis, start, length);
    return t.record(std::move(out), {a}, [a, axis, start, length](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        Tensor& ga = tp.grad_buffer(a.id());
        std::size_t outer = 1, inner = 1;
        const Shape& s = ga.shape();
        for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
        for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
        for (std::size_t o = 0; o < outer; ++o) {
            double* dst = ga.data().data() + (o * s[axis] + start) * inner;
            const double* src = g.data().data() + o * length * inner;
            for (std::size_t k = 0; k < length * inner; ++k) dst[k] += src[k];
        }
    });
}

namespace {

Var conv(Var input, Var kernel, Var bias, std::size_t spatial_rank) {
    same_tape(input, kernel);
    same_tape(input, bias);
    Tape& t = tape_of(input);
    ConvParams p{kernel.value(), bias.value()};
    validate_conv(input.shape(), p, spatial_rank);
    const auto g = detail::conv_geometry(input.shape(), kernel.shape(), spatial_rank);
    Shape out_shape = input.shape();
    out_shape[0] = g.out_ch;
    Tensor out(out_shape);
    detail::conv_forward(g, input.value().data().data(), kernel.value().data().data(),
                         bias.value().data().data(), out.data().data());
    return t.record(std::move(out), {input, kernel, bias}, [input, kernel, bias, g](Tape& tp, std::size_t self) {
        const double* go = tp.grad(self).data().data();
        if (tp.requires_grad(input.id())) {
            detail::conv_backward_input(g, go, kernel.value().data().data(),
                                        tp.grad_buffer(input.id()).data().data());
        }
        const bool gk = tp.requires_grad(kernel.id());
        const bool gb = tp.requires_grad(bias.id());
        if (gk || gb) {
            Tensor kbuf(kernel.shape());
            Tensor bbuf(bias.shape());
            detail::conv_backward_kernel(g, go, input.value().data().data(), kbuf.data().data(),
                                         bbuf.data().data());
            if (gk) tp.grad_buffer(kernel.id()) += kbuf;
            if (gb) tp.grad_buffer(bias.id()) += bbuf;
        }
    });
}

}  // namespace

Var conv2d(Var input, Var kernel, Var bias) { return conv(input, kernel, bias, 2); }
Var conv3d(Var input, Var kernel, Var bias) { return conv(input, kernel, bias, 3); }

Var matmul(Var a, Var b, bool transpose_a, bool transpose_b) {
    same_tape(a, b);
    Tape& t = tape_of(a);
    if (a.value().rank() != 2 || b.value().rank() != 2) throw DimensionError("matmul: operands must be 2D");
    const Tensor lhs = transpose_a ? transpose2d(a.value()) : a.value();
    const Tensor rhs = transpose_b ? transpose2d(b.value()) : b.value();
    Tensor out = mapsed::matmul(lhs, rhs);
    return t.record(std::move(out), {a, b}, [a, b, transpose_a, transpose_b](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        // C = L·R with L = op(A), R = op(B); dL = G·Rᵀ, dR = Lᵀ·G.
        if (tp.requires_grad(a.id())) {
            const Tensor rhs = transpose_b ? transpose2d(b.value()) : b.value();
            Tensor dl = mapsed::matmul(g, transpose2d(rhs));
            accumulate(tp, a, transpose_a ? transpose2d(dl) : dl);
        }
        if (tp.requires_grad(b.id())) {
            const Tensor lhs = transpose_a ? transpose2d(a.value()) : a.value();
            Tensor dr = mapsed::matmul(transpose2d(lhs), g);
            accumulate(tp, b, transpose_b ? transpose2d(dr) : dr);
        }
    });
}

Var softmax(Var a, std::size_t axis) {
    Tape& t = tape_of(a);
    Tensor out = mapsed::softmax(a.value(), axis);
    return t.record(std::move(out), {a}, [a, axis](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        const Tensor& y = tp.value(self);
        Tensor& ga = tp.grad_buffer(a.id());
        const Shape& s = y.shape();
        std::size_t outer = 1, inner = 1;
        for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
        for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
        const std::size_t len = s[axis];
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * len * inner + in;
                double dotp = 0.0;
                for (std::size_t k = 0; k < len; ++k) dotp += g[base + k * inner] * y[base + k * inner];
                for (std::size_t k = 0; k < len; ++k) {
                    const std::size_t idx = base + k * inner;
                    ga[idx] += y[idx] * (g[idx] - dotp);
                }
            }
        }
    });
}

Var avg_pool2x2(Var a) {
    Tape& t = tape_of(a);
    const Tensor& x = a.value();
    if (x.rank() != 3 || x.dim(1) % 2 || x.dim(2) % 2) {
        throw DimensionError("avg_pool2x2: expects c×h×w with even h and w, got " + shape_to_string(x.shape()));
    }
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor out(Shape{c, h / 2, w / 2});
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j)
                out[(k * (h / 2) + i / 2) * (w / 2) + j / 2] += 0.25 * x[(k * h + i) * w + j];
    return t.record(std::move(out), {a}, [a, c, h, w](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        Tensor& ga = tp.grad_buffer(a.id());
        for (std::size_t k = 0; k < c; ++k)
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j)
                    ga[(k * h + i) * w + j] += 0.25 * g[(k * (h / 2) + i / 2) * (w / 2) + j / 2];
    });
}

Var upsample2x2(Var a) {
    Tape& t = tape_of(a);
    const Tensor& x = a.value();
    if (x.rank() != 3) throw DimensionError("upsample2x2: expects c×h×w");
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor out(Shape{c, 2 * h, 2 * w});
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t i = 0; i < 2 * h; ++i)
            for (std::size_t j = 0; j < 2 * w; ++j) out[(k * 2 * h + i) * 2 * w + j] = x[(k * h + i / 2) * w + j / 2];
    return t.record(std::move(out), {a}, [a, c, h, w](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        Tensor& ga = tp.grad_buffer(a.id());
        for (std::size_t k = 0; k < c; ++k)
            for (std::size_t i = 0; i < 2 * h; ++i)
                for (std::size_t j = 0; j < 2 * w; ++j) ga[(k * h + i / 2) * w + j / 2] += g[(k * 2 * h + i) * 2 * w + j];
    });
}

Var sum(Var a) {
    Tape& t = tape_of(a);
    return t.record(Tensor::scalar(a.value().sum()), {a}, [a](Tape& tp, std::size_t self) {
        const double g = tp.grad(self)[0];
        for (double& v : tp.grad_buffer(a.id()).data()) v += g;
    });
}

Var sum_squares(Var a) {
    Tape& t = tape_of(a);
    return t.record(Tensor::scalar(a.value().squared_norm()), {a}, [a](Tape& tp, std::size_t self) {
        const double g = tp.grad(self)[0];
        const Tensor& x = a.value();
        Tensor& ga = tp.grad_buffer(a.id());
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] += 2.0 * g * x[i];
    });
}

Var abs_sum(Var a) {
    Tape& t = tape_of(a);
    double s = 0.0;
    for (double v : a.value().data()) s += std::abs(v);
    return t.record(Tensor::scalar(s), {a}, [a](Tape& tp, std::size_t self) {
        const double g = tp.grad(self)[0];
        const Tensor& x = a.value();
        Tensor& ga = tp.grad_buffer(a.id());
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (x[i] > 0.0) ga[i] += g;
            else if (x[i] < 0.0) ga[i] -= g;
        }
    });
}

Var dot(Var a, Var b) {
    same_tape(a, b);
    require_same_shape(a.value(), b.value(), "dot");
    Tape& t = tape_of(a);
    double s = 0.0;
    for (std::size_t i = 0; i < a.value().size(); ++i) s += a.value()[i] * b.value()[i];
    return t.record(Tensor::scalar(s), {a, b}, [a, b](Tape& tp, std::size_t self) {
        const double g = tp.grad(self)[0];
        if (tp.requires_grad(a.id())) {
            Tensor& ga = tp.grad_buffer(a.id());
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * b.value()[i];
        }
        if (tp.requires_grad(b.id())) {
            Tensor& gb = tp.grad_buffer(b.id());
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * a.value()[i];
        }
    });
}

Var squared_distance(Var a, Var b) {
    same_tape(a, b);
    require_same_shape(a.value(), b.value(), "squared_distance");
    Tape& t = tape_of(a);
    double s = 0.0;
    for (std::size_t i = 0; i < a.value().size(); ++i) {
        const double d = a.value()[i] - b.value()[i];
        s += d * d;
    }
    return t.record(Tensor::scalar(s), {a, b}, [a, b](Tape& tp, std::size_t self) {
        const double g = tp.grad(self)[0];
        const Tensor& av = a.value();
        const Tensor& bv = b.value();
        if (tp.requires_grad(a.id())) {
            Tensor& ga = tp.grad_buffer(a.id());
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += 2.0 * g * (av[i] - bv[i]);
        }
        if (tp.requires_grad(b.id())) {
            Tensor& gb = tp.grad_buffer(b.id());
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= 2.0 * g * (av[i] - bv[i]);
        }
    });
}

Var hinge(Var x) {
    require_scalar(x, "hinge");
    Tape& t = tape_of(x);
    const double v = x.value()[0];
    return t.record(Tensor::scalar(v > 0.0 ? v : 0.0), {x}, [x](Tape& tp, std::size_t self) {
        if (x.value()[0] > 0.0) tp.grad_buffer(x.id())[0] += tp.grad(self)[0];
    });
}

Var minimum(const std::vector<Var>& xs) {
    if (xs.empty()) throw ContractError("minimum: empty argument list");
    std::size_t best = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        require_scalar(xs[i], "minimum");
        same_tape(xs.front(), xs[i]);
        if (xs[i].value()[0] < xs[best].value()[0]) best = i;
    }
    Tape& t = tape_of(xs.front());
    Var chosen = xs[best];
    return t.record(Tensor::scalar(chosen.value()[0]), xs, [chosen](Tape& tp, std::size_t self) {
        if (tp.requires_grad(chosen.id())) tp.grad_buffer(chosen.id())[0] += tp.grad(self)[0];
    });
}

Var log_sum_exp(const std::vector<Var>& xs) {
    if (xs.empty()) throw ContractError("log_sum_exp: empty argument list");
    double mx = -std::numeric_limits<double>::infinity();
    for (const Var& x : xs) {
        require_scalar(x, "log_sum_exp");
        same_tape(xs.front(), x);
        mx = std::max(mx, x.value()[0]);
    }
    double total = 0.0;
    for (const Var& x : xs) total += std::exp(x.value()[0] - mx);
    const double lse = mx + std::log(total);
    Tape& t = tape_of(xs.front());
    return t.record(Tensor::scalar(lse), xs, [xs](Tape& tp, std::size_t self) {
        const double g = tp.grad(self)[0];
        const double y = tp.value(self)[0];
        for (const Var& x : xs) {
            if (tp.requires_grad(x.id())) tp.grad_buffer(x.id())[0] += g * std::exp(x.value()[0] - y);
        }
    });
}

}  // namespace ad

}  // namespace mapsed
