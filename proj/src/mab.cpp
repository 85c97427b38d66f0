#include "mapsed/mab.hpp"

namespace mapsed {

MABParams MABParams::init(std::size_t channels, std::size_t inner, Rng& rng) {
    MABParams p;
    p.phi_q = init_conv(channels, channels, 1, 2, rng);
    p.phi_k = init_conv(channels, channels, 1, 2, rng);
    p.phi_v = init_conv(channels, channels, 1, 2, rng);
    p.phi_c = init_conv(channels, channels, 1, 2, rng);
    p.fusion = Bottleneck::init(2 * channels, inner, channels, 2, rng);
    return p;
}

void MABParams::visit(const std::string& prefix, const ParamFn& fn) {
    visit_conv(prefix + ".phi_q", phi_q, fn);
    visit_conv(prefix + ".phi_k", phi_k, fn);
    visit_conv(prefix + ".phi_v", phi_v, fn);
    visit_conv(prefix + ".phi_c", phi_c, fn);
    fusion.visit(prefix + ".fusion", fn);
}

void MABParams::visit(const std::string& prefix, const ConstParamFn& fn) const {
    visit_conv(prefix + ".phi_q", phi_q, fn);
    visit_conv(prefix + ".phi_k", phi_k, fn);
    visit_conv(prefix + ".phi_v", phi_v, fn);
    visit_conv(prefix + ".phi_c", phi_c, fn);
    fusion.visit(prefix + ".fusion", fn);
}

namespace {

void require_block_input(Var z, const MABParams& p) {
    const Shape& s = z.shape();
    if (s.size() != 3) throw DimensionError("MAB input must be c×h×w, got " + shape_to_string(s));
    if (s[0] != p.channels()) {
        throw DimensionError("MAB configured for " + std::to_string(p.channels()) + " channels, input has " +
                                 std::to_string(s[0]),
                             0);
    }
}

}  // namespace

AttentionOutput spatial_attention(Tape& tape, Var z, const MABParams& p) {
    require_block_input(z, p);
    const Shape shape = z.shape();
    const std::size_t c = shape[0], u = shape[1] * shape[2];
    Var q = ad::reshape(apply_conv(tape, z, p.phi_q), {c, u});
    Var k = ad::reshape(apply_conv(tape, z, p.phi_k), {c, u});
    Var v = ad::reshape(apply_conv(tape, z, p.phi_v), {c, u});
    Var scores = ad::matmul(q, k, /*transpose_a=*/true);  // u×u, scores[i][j] = q_i·k_j
    Var a = ad::softmax(scores, 1);
    Var out = ad::matmul(v, a, false, /*transpose_b=*/true);  // c×u, column i = Σ_j a_ij v_j
    return {ad::reshape(out, shape), a};
}

AttentionOutput channel_attention(Tape& tape, Var z, const MABParams& p) {
    require_block_input(z, p);
    const Shape shape = z.shape();
    const std::size_t c = shape[0], u = shape[1] * shape[2];
    Var f = ad::reshape(apply_conv(tape, z, p.phi_c), {c, u});
    Var scores = ad::matmul(f, f, false, /*transpose_b=*/true);  // c×c
    Var a = ad::softmax(scores, 1);
    Var out = ad::matmul(a, f);
    return {ad::reshape(out, shape), a};
}

Var mab_forward(Tape& tape, Var z, const MABParams& p, Activation act) {
    AttentionOutput spatial = spatial_attention(tape, z, p);
    AttentionOutput channel = channel_attention(tape, z, p);
    Var stacked = ad::concat({spatial.attended, channel.attended}, 0);
    return ad::add(apply_bottleneck(tape, stacked, p.fusion, act), z);
}

AttentionResult spatial_attention(const Tensor& z, const MABParams& p) {
    Tape tape;
    auto out = spatial_attention(tape, tape.constant(z), p);
    return {out.attended.value(), out.weights.value()};
}

AttentionResult channel_attention(const Tensor& z, const MABParams& p) {
    Tape tape;
    auto out = channel_attention(tape, tape.constant(z), p);
    return {out.attended.value(), out.weights.value()};
}

Tensor mab_forward(const Tensor& z, const MABParams& p, Activation act) {
    Tape tape;
    return mab_forward(tape, tape.constant(z), p, act).value();
}

}  // namespace mapsed
