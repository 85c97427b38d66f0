#pragma once

// Multi-axis attention block: spatial attention and channel attention run in
// parallel on a c×h×w tensor, their outputs are stacked along channels, fused
// by a 2D bottleneck, and added back to the input.

#include "mapsed/layers.hpp"

namespace mapsed {

struct MABParams {
    ConvParams phi_q;  // 1×1, c→c
    ConvParams phi_k;
    ConvParams phi_v;
    ConvParams phi_c;
    Bottleneck fusion;  // 2c→inner→inner→c

    static MABParams init(std::size_t channels, std::size_t inner, Rng& rng);
    std::size_t channels() const { return phi_q.out_channels(); }
    void visit(const std::string& prefix, const ParamFn& fn);
    void visit(const std::string& prefix, const ConstParamFn& fn) const;
};

struct AttentionOutput {
    Var attended;  // c×h×w
    Var weights;   // u×u (spatial) or c×c (channel); rows sum to one
};

/// Row i of the weights is the softmax over keys j of q_{:,i}·k_{:,j}
/// (no 1/sqrt(d) scaling); output column i is the weighted sum of value columns.
AttentionOutput spatial_attention(Tape& tape, Var z, const MABParams& p);
/// Query, key and value are all φ_c(Z) flattened to c×u; weights are c×c.
AttentionOutput channel_attention(Tape& tape, Var z, const MABParams& p);
/// Fuse(spatial ‖ channel) + Z. Output shape equals input shape.
Var mab_forward(Tape& tape, Var z, const MABParams& p, Activation act = Activation::Relu);

// Tensor-level conveniences (each builds a private tape).
struct AttentionResult {
    Tensor attended;
    Tensor weights;
};
AttentionResult spatial_attention(const Tensor& z, const MABParams& p);
AttentionResult channel_attention(const Tensor& z, const MABParams& p);
Tensor mab_forward(const Tensor& z, const MABParams& p, Activation act = Activation::Relu);

}  // namespace mapsed
