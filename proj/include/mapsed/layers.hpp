#pragma once

#include "mapsed/autodiff.hpp"
#include "mapsed/rng.hpp"
#include "mapsed/tensor.hpp"

#include <functional>
#include <string>

namespace mapsed {

using ParamFn = std::function<void(const std::string& name, Tensor& value)>;
using ConstParamFn = std::function<void(const std::string& name, const Tensor& value)>;

enum class Activation { Relu, None };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

/// Kernel uniform in ±1/sqrt(fan_in), zero bias. `spatial_rank` is 2 or 3.
ConvParams init_conv(std::size_t in_ch, std::size_t out_ch, std::size_t kernel_size, std::size_t spatial_rank,
                     Rng& rng);

void visit_conv(const std::string& prefix, ConvParams& p, const ParamFn& fn);
void visit_conv(const std::string& prefix, const ConvParams& p, const ConstParamFn& fn);

/// Three same-padded convolutions: 1×1 (in→inner), 3×3 (inner→inner), 1×1
/// (inner→out), with the activation after the first two.
struct Bottleneck {
    ConvParams reduce;
    ConvParams middle;
    ConvParams expand;

    static Bottleneck init(std::size_t in_ch, std::size_t inner, std::size_t out_ch, std::size_t spatial_rank,
                           Rng& rng);
    std::size_t spatial_rank() const { return reduce.spatial_rank(); }
    void visit(const std::string& prefix, const ParamFn& fn);
    void visit(const std::string& prefix, const ConstParamFn& fn) const;
    /// Zeroes every weight and bias.
    void zero();
};

/// Default inner width: half the output channels rounded up, at least 4.
std::size_t default_inner_width(std::size_t channels);

Var apply_conv(Tape& tape, Var x, const ConvParams& p);
Var apply_bottleneck(Tape& tape, Var x, const Bottleneck& b, Activation act);

}  // namespace mapsed
