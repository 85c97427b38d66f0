#include "mapsed/layers.hpp"

#include "mapsed/keyvalue.hpp"

#include <cmath>

namespace mapsed {

Activation parse_activation(const std::string& name) {
    if (name == "relu") return Activation::Relu;
    if (name == "none") return Activation::None;
    throw ConfigError("unknown activation '" + name + "' (valid: relu, none)");
}

std::string to_string(Activation a) { return a == Activation::Relu ? "relu" : "none"; }

ConvParams init_conv(std::size_t in_ch, std::size_t out_ch, std::size_t kernel_size, std::size_t spatial_rank,
                     Rng& rng) {
    Shape kshape{out_ch, in_ch};
    for (std::size_t i = 0; i < spatial_rank; ++i) kshape.push_back(kernel_size);
    ConvParams p{Tensor(kshape), Tensor(Shape{out_ch})};
    const double fan_in = static_cast<double>(in_ch) * std::pow(static_cast<double>(kernel_size), spatial_rank);
    const double bound = std::sqrt(6.0 / fan_in);
    for (double& v : p.kernel.data()) v = rng.uniform(-bound, bound);
    return p;
}

void visit_conv(const std::string& prefix, ConvParams& p, const ParamFn& fn) {
    fn(prefix + ".kernel", p.kernel);
    fn(prefix + ".bias", p.bias);
}

void visit_conv(const std::string& prefix, const ConvParams& p, const ConstParamFn& fn) {
    fn(prefix + ".kernel", p.kernel);
    fn(prefix + ".bias", p.bias);
}

Bottleneck Bottleneck::init(std::size_t in_ch, std::size_t inner, std::size_t out_ch, std::size_t spatial_rank,
                            Rng& rng) {
    Bottleneck b;
    b.reduce = init_conv(in_ch, inner, 1, spatial_rank, rng);
    b.middle = init_conv(inner, inner, 3, spatial_rank, rng);
    b.expand = init_conv(inner, out_ch, 1, spatial_rank, rng);
    return b;
}

void Bottleneck::visit(const std::string& prefix, const ParamFn& fn) {
    visit_conv(prefix + ".reduce", reduce, fn);
    visit_conv(prefix + ".middle", middle, fn);
    visit_conv(prefix + ".expand", expand, fn);
}

void Bottleneck::visit(const std::string& prefix, const ConstParamFn& fn) const {
    visit_conv(prefix + ".reduce", reduce, fn);
    visit_conv(prefix + ".middle", middle, fn);
    visit_conv(prefix + ".expand", expand, fn);
}

void Bottleneck::zero() {
    for (ConvParams* p : {&reduce, &middle, &expand}) {
        p->kernel.fill(0.0);
        p->bias.fill(0.0);
    }
}

std::size_t default_inner_width(std::size_t channels) { return std::max<std::size_t>((channels + 1) / 2, 4); }

Var apply_conv(Tape& tape, Var x, const ConvParams& p) {
    Var k = tape.param(p.kernel);
    Var b = tape.param(p.bias);
    return p.spatial_rank() == 3 ? ad::conv3d(x, k, b) : ad::conv2d(x, k, b);
}

Var apply_bottleneck(Tape& tape, Var x, const Bottleneck& b, Activation act) {
    auto activate = [act](Var v) { return act == Activation::Relu ? ad::relu(v) : v; };
    Var h = activate(apply_conv(tape, x, b.reduce));
    h = activate(apply_conv(tape, h, b.middle));
    return apply_conv(tape, h, b.expand);
}

}  // namespace mapsed
