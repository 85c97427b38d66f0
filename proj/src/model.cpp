#include "mapsed/model.hpp"

#include "mapsed/keyvalue.hpp"
#include "mapsed/optim.hpp"

#include <cmath>
#include <numeric>

namespace mapsed {

AdapterMode parse_adapter_mode(const std::string& name) {
    if (name == "identity") return AdapterMode::Identity;
    if (name == "vae") return AdapterMode::Vae;
    throw ConfigError("unknown adapter '" + name + "' (valid: identity, vae)");
}

std::string to_string(AdapterMode mode) { return mode == AdapterMode::Vae ? "vae" : "identity"; }

void ModelConfig::validate() const {
    if (m == 0 || n == 0 || c == 0 || h == 0 || w == 0) throw ConfigError("model dimensions must be positive");
    if (encoder_layers == 0) throw ConfigError("model.encoder_layers must be at least 1");
    if (adapter == AdapterMode::Vae) {
        if (h % 2 != 0 || w % 2 != 0) throw ConfigError("VAE adapter requires even grid height and width");
        if (vae.latent_channels == 0 || vae.hidden_channels == 0)
            throw ConfigError("VAE channel counts must be positive");
    }
}

// ---------------------------------------------------------------- parameters

VaeParams VaeParams::init(std::size_t c, const VaeConfig& cfg, Rng& rng) {
    VaeParams p;
    p.enc_hidden = init_conv(c, cfg.hidden_channels, 3, 2, rng);
    p.enc_mean = init_conv(cfg.hidden_channels, cfg.latent_channels, 1, 2, rng);
    p.enc_logvar = init_conv(cfg.hidden_channels, cfg.latent_channels, 1, 2, rng);
    p.dec_hidden = init_conv(cfg.latent_channels, cfg.hidden_channels, 3, 2, rng);
    p.dec_out = init_conv(cfg.hidden_channels, c, 1, 2, rng);
    return p;
}

void VaeParams::visit(const std::string& prefix, const ParamFn& fn) {
    visit_conv(prefix + ".enc_hidden", enc_hidden, fn);
    visit_conv(prefix + ".enc_mean", enc_mean, fn);
    visit_conv(prefix + ".enc_logvar", enc_logvar, fn);
    visit_conv(prefix + ".dec_hidden", dec_hidden, fn);
    visit_conv(prefix + ".dec_out", dec_out, fn);
}

void VaeParams::visit(const std::string& prefix, const ConstParamFn& fn) const {
    visit_conv(prefix + ".enc_hidden", enc_hidden, fn);
    visit_conv(prefix + ".enc_mean", enc_mean, fn);
    visit_conv(prefix + ".enc_logvar", enc_logvar, fn);
    visit_conv(prefix + ".dec_hidden", dec_hidden, fn);
    visit_conv(prefix + ".dec_out", dec_out, fn);
}

ModelParams ModelParams::init(const ModelConfig& config, Rng& rng) {
    config.validate();
    ModelParams p;
    p.config = config;
    const std::size_t m = config.m, n = config.n, c = config.core_c();
    auto mab_inner = [&](std::size_t ch) { return config.mab_inner ? config.mab_inner : default_inner_width(ch); };
    auto b3_inner = [&](std::size_t ch) {
        return config.bottleneck3d_inner ? config.bottleneck3d_inner : default_inner_width(ch);
    };
    for (std::size_t l = 0; l < config.encoder_layers; ++l) {
        EncoderLayerParams layer;
        layer.dynamics = MABParams::init(c * m, mab_inner(c * m), rng);
        layer.semantics = MABParams::init(c, mab_inner(c), rng);
        layer.merge = Bottleneck::init(2 * c, b3_inner(c), c, 3, rng);
        layer.residual = Bottleneck::init(c, b3_inner(c), c, 3, rng);
        p.layers.push_back(std::move(layer));
    }
    p.decoder.first = Bottleneck::init(m, b3_inner(m), m, 3, rng);
    p.decoder.second = Bottleneck::init(m, b3_inner(n), n, 3, rng);
    p.decoder.dynamics = MABParams::init(c * n, mab_inner(c * n), rng);
    p.decoder.semantics = MABParams::init(c, mab_inner(c), rng);
    return p;
}

void ModelParams::visit(const ParamFn& fn) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string prefix = "encoder." + std::to_string(l);
        layers[l].dynamics.visit(prefix + ".dynamics", fn);
        layers[l].semantics.visit(prefix + ".semantics", fn);
        layers[l].merge.visit(prefix + ".merge", fn);
        layers[l].residual.visit(prefix + ".residual", fn);
    }
    decoder.first.visit("decoder.first", fn);
    decoder.second.visit("decoder.second", fn);
    decoder.dynamics.visit("decoder.dynamics", fn);
    decoder.semantics.visit("decoder.semantics", fn);
}

void ModelParams::visit(const ConstParamFn& fn) const {
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string prefix = "encoder." + std::to_string(l);
        layers[l].dynamics.visit(prefix + ".dynamics", fn);
        layers[l].semantics.visit(prefix + ".semantics", fn);
        layers[l].merge.visit(prefix + ".merge", fn);
        layers[l].residual.visit(prefix + ".residual", fn);
    }
    decoder.first.visit("decoder.first", fn);
    decoder.second.visit("decoder.second", fn);
    decoder.dynamics.visit("decoder.dynamics", fn);
    decoder.semantics.visit("decoder.semantics", fn);
}

std::size_t ModelParams::parameter_count() const {
    std::size_t total = 0;
    visit([&](const std::string&, const Tensor& t) { total += t.size(); });
    return total;
}

// ------------------------------------------------------------ concatenations

namespace {

void require_sequence(const Shape& s, const char* what) {
    if (s.size() != 4) throw DimensionError(std::string(what) + ": expected m×c×h×w, got " + shape_to_string(s));
}

std::size_t split_rows(std::size_t rows, std::size_t m) {
    if (m == 0 || rows % m != 0) {
        throw DimensionError("breadth view: " + std::to_string(rows) + " rows not divisible by m=" + std::to_string(m),
                             1);
    }
    return rows / m;
}

std::size_t split_channels(std::size_t channels, std::size_t m) {
    if (m == 0 || channels % m != 0) {
        throw DimensionError(
            "depth view: " + std::to_string(channels) + " channels not divisible by m=" + std::to_string(m), 0);
    }
    return channels / m;
}

}  // namespace

Var concat_depth(Var x) {
    require_sequence(x.shape(), "concat_depth");
    const Shape& s = x.shape();
    return ad::reshape(x, {s[0] * s[1], s[2], s[3]});
}

Var concat_depth_inverse(Var d, std::size_t m) {
    const Shape& s = d.shape();
    return ad::reshape(d, {m, split_channels(s.at(0), m), s.at(1), s.at(2)});
}

Var concat_breadth(Var x) {
    require_sequence(x.shape(), "concat_breadth");
    const Shape s = x.shape();
    return ad::reshape(ad::permute(x, {1, 0, 2, 3}), {s[1], s[0] * s[2], s[3]});
}

Var concat_breadth_inverse(Var sv, std::size_t m) {
    const Shape s = sv.shape();
    return ad::permute(ad::reshape(sv, {s.at(0), m, split_rows(s.at(1), m), s.at(2)}), {1, 0, 2, 3});
}

Tensor concat_depth(const Tensor& x) {
    require_sequence(x.shape(), "concat_depth");
    const Shape& s = x.shape();
    return x.reshaped({s[0] * s[1], s[2], s[3]});
}

Tensor concat_depth_inverse(const Tensor& d, std::size_t m) {
    const Shape& s = d.shape();
    return d.reshaped({m, split_channels(s.at(0), m), s.at(1), s.at(2)});
}

Tensor concat_breadth(const Tensor& x) {
    require_sequence(x.shape(), "concat_breadth");
    const Shape& s = x.shape();
    return permute(x, {1, 0, 2, 3}).reshaped({s[1], s[0] * s[2], s[3]});
}

Tensor concat_breadth_inverse(const Tensor& sv, std::size_t m) {
    const Shape& s = sv.shape();
    return permute(sv.reshaped({s.at(0), m, split_rows(s.at(1), m), s.at(2)}), {1, 0, 2, 3});
}

// ------------------------------------------------------------ encoder/decoder

LatentBundle encoder_layer(Tape& tape, Var x, const EncoderLayerParams& p, Activation act) {
    require_sequence(x.shape(), "encoder layer");
    const std::size_t m = x.shape()[0];
    Var d_prime = mab_forward(tape, concat_depth(x), p.dynamics, act);
    Var s_prime = mab_forward(tape, concat_breadth(x), p.semantics, act);
    // Category-major views so the 3D bottlenecks see categories as channels.
    Var xd = ad::permute(concat_depth_inverse(d_prime, m), {1, 0, 2, 3});
    Var xs = ad::permute(concat_breadth_inverse(s_prime, m), {1, 0, 2, 3});
    Var merged = apply_bottleneck(tape, ad::concat({xd, xs}, 0), p.merge, act);
    Var skip = apply_bottleneck(tape, ad::permute(x, {1, 0, 2, 3}), p.residual, act);
    Var u = ad::permute(ad::add(merged, skip), {1, 0, 2, 3});
    return {d_prime, s_prime, u};
}

LatentBundle encode(Tape& tape, Var x, const ModelParams& params) {
    if (params.layers.empty()) throw ConfigError("model has no encoder layers");
    LatentBundle first = encoder_layer(tape, x, params.layers[0], params.config.activation);
    Var u = first.merged;
    for (std::size_t l = 1; l < params.layers.size(); ++l) {
        u = encoder_layer(tape, u, params.layers[l], params.config.activation).merged;
    }
    return {first.dynamics, first.semantics, u};
}

Var extract_semantics(Tape& tape, Var x, const ModelParams& params) {
    if (params.layers.empty()) throw ConfigError("model has no encoder layers");
    return mab_forward(tape, concat_breadth(x), params.layers[0].semantics, params.config.activation);
}

Var decode(Tape& tape, Var u, const ModelParams& params) {
    require_sequence(u.shape(), "decoder");
    const Activation act = params.config.activation;
    const std::size_t n = params.config.n;
    // Time axis as channels.
    Var y = apply_bottleneck(tape, u, params.decoder.first, act);
    y = apply_bottleneck(tape, y, params.decoder.second, act);
    Var yd = concat_depth_inverse(mab_forward(tape, concat_depth(y), params.decoder.dynamics, act), n);
    return concat_breadth_inverse(mab_forward(tape, concat_breadth(yd), params.decoder.semantics, act), n);
}

// -------------------------------------------------------------------- adapter

namespace {

Var conv_frozen(Tape& tape, Var x, const ConvParams& p, bool trainable) {
    if (trainable) return apply_conv(tape, x, p);
    return ad::conv2d(x, tape.constant(p.kernel), tape.constant(p.bias));
}

const VaeParams& require_vae(const ModelParams& params) {
    if (!params.vae) throw ConfigError("VAE adapter selected but no pre-trained VAE is available");
    return *params.vae;
}

template <class FrameFn>
Var map_frames(Var frames, FrameFn fn) {
    require_sequence(frames.shape(), "adapter");
    const Shape s = frames.shape();
    std::vector<Var> out;
    out.reserve(s[0]);
    for (std::size_t t = 0; t < s[0]; ++t) {
        Var frame = ad::reshape(ad::narrow(frames, 0, t, 1), {s[1], s[2], s[3]});
        Var mapped = fn(frame);
        Shape ms = mapped.shape();
        ms.insert(ms.begin(), 1);
        out.push_back(ad::reshape(mapped, ms));
    }
    return ad::concat(out, 0);
}

}  // namespace

VaeEncoding vae_encode_frame(Tape& tape, Var frame, const VaeParams& p, bool trainable) {
    Var hidden = ad::relu(conv_frozen(tape, frame, p.enc_hidden, trainable));
    Var pooled = ad::avg_pool2x2(hidden);
    return {conv_frozen(tape, pooled, p.enc_mean, trainable), conv_frozen(tape, pooled, p.enc_logvar, trainable)};
}

Var vae_decode_frame(Tape& tape, Var latent, const VaeParams& p, bool trainable) {
    Var up = ad::upsample2x2(latent);
    Var hidden = ad::relu(conv_frozen(tape, up, p.dec_hidden, trainable));
    return conv_frozen(tape, hidden, p.dec_out, trainable);
}

Var adapter_encode(Tape& tape, Var frames, const ModelParams& params) {
    if (params.config.adapter == AdapterMode::Identity) return frames;
    const VaeParams& vae = require_vae(params);
    return map_frames(frames, [&](Var f) { return vae_encode_frame(tape, f, vae, false).mean; });
}

Var adapter_decode(Tape& tape, Var frames, const ModelParams& params) {
    if (params.config.adapter == AdapterMode::Identity) return frames;
    const VaeParams& vae = require_vae(params);
    return map_frames(frames, [&](Var f) { return vae_decode_frame(tape, f, vae, false); });
}

namespace {

void require_observation(const Shape& s, const ModelConfig& cfg) {
    require_sequence(s, "model input");
    const std::size_t expected[4] = {cfg.m, cfg.c, cfg.h, cfg.w};
    for (int a = 0; a < 4; ++a) {
        if (s[a] != expected[a]) {
            throw DimensionError("model input " + shape_to_string(s) + " does not match configured " +
                                     shape_to_string({cfg.m, cfg.c, cfg.h, cfg.w}),
                                 a);
        }
    }
}

}  // namespace

ForwardPass model_forward(Tape& tape, Var x, const ModelParams& params) {
    require_observation(x.shape(), params.config);
    Var z = adapter_encode(tape, x, params);
    LatentBundle latent = encode(tape, z, params);
    Var y = decode(tape, latent.merged, params);
    return {latent, adapter_decode(tape, y, params)};
}

Var model_semantics(Tape& tape, Var x, const ModelParams& params) {
    require_observation(x.shape(), params.config);
    return extract_semantics(tape, adapter_encode(tape, x, params), params);
}

Tensor predict(const ModelParams& params, const Tensor& x) {
    Tape tape;
    return model_forward(tape, tape.constant(x), params).prediction.value();
}

// ------------------------------------------------------------------------ VAE

Var gaussian_kl(Var mean, Var logvar) {
    // ½ Σ (μ² + e^{lv} − 1 − lv)
    Var terms = ad::sub(ad::add(ad::mul(mean, mean), ad::exp(logvar)), ad::add_scalar(logvar, 1.0));
    return ad::scale(ad::sum(terms), 0.5);
}

double gaussian_kl(const Tensor& mean, const Tensor& logvar) {
    require_same_shape(mean, logvar, "gaussian_kl");
    double total = 0.0;
    for (std::size_t i = 0; i < mean.size(); ++i) {
        total += mean[i] * mean[i] + std::exp(logvar[i]) - 1.0 - logvar[i];
    }
    return 0.5 * total;
}

VaeTrainResult vae_pretrain(const std::vector<Tensor>& frames, const VaeConfig& cfg) {
    if (frames.empty()) throw ConfigError("VAE pre-training needs at least one frame");
    const Shape& fs = frames.front().shape();
    if (fs.size() != 3 || fs[1] % 2 != 0 || fs[2] % 2 != 0)
        throw DimensionError("VAE frames must be c×h×w with even h and w, got " + shape_to_string(fs));
    if (cfg.batch_size == 0) throw ConfigError("vae.batch_size must be positive");

    Rng rng(cfg.seed);
    VaeTrainResult result{VaeParams::init(fs[0], cfg, rng), {}};
    std::vector<NamedParam> named;
    result.params.visit("vae", [&](const std::string& name, Tensor& t) { named.push_back({name, &t}); });
    Optimizer opt(OptimizerConfig{OptimizerKind::Adam, cfg.learning_rate});

    std::vector<std::size_t> order(frames.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            Tape tape;
            std::vector<Var> losses;
            for (std::size_t i = start; i < end; ++i) {
                const Tensor& frame = frames[order[i]];
                if (frame.shape() != fs) throw DimensionError("VAE frames must share one shape");
                Var x = tape.constant(frame);
                VaeEncoding enc = vae_encode_frame(tape, x, result.params, true);
                Tensor eps(enc.mean.shape());
                for (double& e : eps.data()) e = rng.normal();
                Var z = ad::add(enc.mean, ad::mul(ad::exp(ad::scale(enc.logvar, 0.5)), tape.constant(eps)));
                Var recon = vae_decode_frame(tape, z, result.params, true);
                Var kl = gaussian_kl(enc.mean, enc.logvar);
                losses.push_back(ad::add(ad::squared_distance(recon, x), ad::scale(kl, cfg.kl_weight)));
            }
            Var total = losses.front();
            for (std::size_t i = 1; i < losses.size(); ++i) total = ad::add(total, losses[i]);
            Var loss = ad::scale(total, 1.0 / static_cast<double>(losses.size()));
            const double value = loss.value().item();
            if (!std::isfinite(value)) {
                throw std::runtime_error("VAE pre-training diverged at epoch " + std::to_string(epoch) +
                                         " (loss is not finite)");
            }
            tape.backward(loss);
            std::vector<Tensor> grads;
            grads.reserve(named.size());
            for (const NamedParam& p : named) grads.push_back(tape.param_grad(*p.value));
            opt.step(named, grads);
            result.loss_history.push_back(value);
        }
    }
    return result;
}

Tensor vae_reconstruct(const VaeParams& p, const Tensor& frame) {
    Tape tape;
    Var x = tape.constant(frame);
    return vae_decode_frame(tape, vae_encode_frame(tape, x, p, false).mean, p, false).value();
}

}  // namespace mapsed
