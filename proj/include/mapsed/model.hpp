#pragma once

#include "mapsed/mab.hpp"

#include <optional>
#include <vector>

namespace mapsed {

enum class AdapterMode { Identity, Vae };

AdapterMode parse_adapter_mode(const std::string& name);
std::string to_string(AdapterMode mode);

struct VaeConfig {
    std::size_t latent_channels = 4;
    std::size_t hidden_channels = 8;
    std::size_t epochs = 200;
    std::size_t batch_size = 8;
    double learning_rate = 1e-2;
    double kl_weight = 1.0;
    std::uint64_t seed = 7;
};

struct ModelConfig {
    // Observation geometry.
    std::size_t m = 5, n = 3, c = 4, h = 10, w = 10;
    std::size_t encoder_layers = 2;
    /// Inner widths; 0 selects default_inner_width of the block's output.
    std::size_t mab_inner = 0;
    std::size_t bottleneck3d_inner = 0;
    Activation activation = Activation::Relu;
    AdapterMode adapter = AdapterMode::Identity;
    VaeConfig vae;

    /// Geometry seen by the encoder/decoder (reduced in VAE mode).
    std::size_t core_c() const { return adapter == AdapterMode::Vae ? vae.latent_channels : c; }
    std::size_t core_h() const { return adapter == AdapterMode::Vae ? h / 2 : h; }
    std::size_t core_w() const { return adapter == AdapterMode::Vae ? w / 2 : w; }
    void validate() const;
};

/// Per-frame convolutional VAE: c×h×w ↔ latent×(h/2)×(w/2).
struct VaeParams {
    ConvParams enc_hidden;  // 3×3, c→hidden
    ConvParams enc_mean;    // 1×1, hidden→latent (after 2×2 average pooling)
    ConvParams enc_logvar;  // 1×1, hidden→latent
    ConvParams dec_hidden;  // 3×3, latent→hidden (after 2× upsampling)
    ConvParams dec_out;     // 1×1, hidden→c

    static VaeParams init(std::size_t c, const VaeConfig& cfg, Rng& rng);
    void visit(const std::string& prefix, const ParamFn& fn);
    void visit(const std::string& prefix, const ConstParamFn& fn) const;
};

struct EncoderLayerParams {
    MABParams dynamics;   // on (c·m)×h×w
    MABParams semantics;  // on c×(m·h)×w
    Bottleneck merge;     // 3D, category axis as channels: 2c→c over (m, h, w)
    Bottleneck residual;  // 3D, c→c over (m, h, w)
};

struct DecoderParams {
    Bottleneck first;   // 3D, time axis as channels: m→m over (c, h, w)
    Bottleneck second;  // m→n
    MABParams dynamics;   // (c·n)×h×w
    MABParams semantics;  // c×(n·h)×w
};

struct ModelParams {
    ModelConfig config;
    std::vector<EncoderLayerParams> layers;
    DecoderParams decoder;
    /// Present once pre-trained; frozen while the core model trains.
    std::optional<VaeParams> vae;

    static ModelParams init(const ModelConfig& config, Rng& rng);
    /// Trainable parameters (the VAE is excluded).
    void visit(const ParamFn& fn);
    void visit(const ConstParamFn& fn) const;
    std::size_t parameter_count() const;
};

struct LatentBundle {
    Var dynamics;   // D′: (c·m)×h×w
    Var semantics;  // S′: c×(m·h)×w
    Var merged;     // U:  m×c×h×w
};

// Concatenation views. Depth: channel index t·c + k. Breadth: rows [t·h, (t+1)·h)
// hold frame t.
Var concat_depth(Var x);
Var concat_depth_inverse(Var d, std::size_t m);
Var concat_breadth(Var x);
Var concat_breadth_inverse(Var s, std::size_t m);
Tensor concat_depth(const Tensor& x);
Tensor concat_depth_inverse(const Tensor& d, std::size_t m);
Tensor concat_breadth(const Tensor& x);
Tensor concat_breadth_inverse(const Tensor& s, std::size_t m);

LatentBundle encoder_layer(Tape& tape, Var x, const EncoderLayerParams& p, Activation act);
/// Stacked layers; U from the last, D′ and S′ from the first.
LatentBundle encode(Tape& tape, Var x, const ModelParams& params);
/// S′ of the first encoder layer only.
Var extract_semantics(Tape& tape, Var x, const ModelParams& params);
Var decode(Tape& tape, Var u, const ModelParams& params);

// Adapter. Sequences are T×c×h×w; each frame is mapped independently.
Var adapter_encode(Tape& tape, Var frames, const ModelParams& params);
Var adapter_decode(Tape& tape, Var frames, const ModelParams& params);

struct ForwardPass {
    LatentBundle latent;
    Var prediction;  // n×c×h×w in observation space
};

ForwardPass model_forward(Tape& tape, Var x, const ModelParams& params);
/// Adapter-encoded first-layer semantics of a raw observation.
Var model_semantics(Tape& tape, Var x, const ModelParams& params);

Tensor predict(const ModelParams& params, const Tensor& x);

// VAE components.
struct VaeEncoding {
    Var mean;
    Var logvar;
};
VaeEncoding vae_encode_frame(Tape& tape, Var frame, const VaeParams& p, bool trainable);
Var vae_decode_frame(Tape& tape, Var latent, const VaeParams& p, bool trainable);
/// ½ Σ (μ² + e^{lv} − 1 − lv).
Var gaussian_kl(Var mean, Var logvar);
double gaussian_kl(const Tensor& mean, const Tensor& logvar);

struct VaeTrainResult {
    VaeParams params;
    std::vector<double> loss_history;  // one entry per optimizer step
};

/// Minimizes squared reconstruction error plus KL using the reparameterization
/// trick. Throws if the loss becomes non-finite.
VaeTrainResult vae_pretrain(const std::vector<Tensor>& frames, const VaeConfig& cfg);
Tensor vae_reconstruct(const VaeParams& p, const Tensor& frame);

}  // namespace mapsed
