#include "mapsed/training.hpp"

namespace mapsed {

namespace {

std::string str(std::size_t v) { return std::to_string(v); }
std::string str(bool v) { return v ? "true" : "false"; }

}  // namespace

void model_config_to_kv(const ModelConfig& cfg, KeyValues& kv) {
    kv.set("model.m", str(cfg.m));
    kv.set("model.n", str(cfg.n));
    kv.set("model.c", str(cfg.c));
    kv.set("model.h", str(cfg.h));
    kv.set("model.w", str(cfg.w));
    kv.set("model.encoder_layers", str(cfg.encoder_layers));
    kv.set("model.mab_inner", str(cfg.mab_inner));
    kv.set("model.bottleneck3d_inner", str(cfg.bottleneck3d_inner));
    kv.set("model.activation", to_string(cfg.activation));
    kv.set("model.adapter", to_string(cfg.adapter));
    kv.set("vae.latent_channels", str(cfg.vae.latent_channels));
    kv.set("vae.hidden_channels", str(cfg.vae.hidden_channels));
    kv.set("vae.epochs", str(cfg.vae.epochs));
    kv.set("vae.batch_size", str(cfg.vae.batch_size));
    kv.set("vae.lr", format_double(cfg.vae.learning_rate));
    kv.set("vae.kl_weight", format_double(cfg.vae.kl_weight));
    kv.set("vae.seed", std::to_string(cfg.vae.seed));
}

void train_config_to_kv(const TrainConfig& cfg, KeyValues& kv) {
    kv.set("train.lr", format_double(cfg.learning_rate));
    kv.set("train.epochs", str(cfg.epochs));
    kv.set("train.batch_size", str(cfg.batch_size));
    kv.set("train.seed", std::to_string(cfg.seed));
    kv.set("train.optimizer", to_string(cfg.optimizer));
    kv.set("train.augment", str(cfg.augment));
    kv.set("train.patience", str(cfg.patience));
    kv.set("train.fixed_contrast_samples", str(cfg.fixed_contrast_samples));
    if (cfg.max_steps) kv.set("train.max_steps", str(*cfg.max_steps));
}

void loss_config_to_kv(const LossConfig& cfg, KeyValues& kv) {
    kv.set("loss.lambda", format_double(cfg.lambda));
    kv.set("loss.lambda_c", format_double(cfg.lambda_c));
    kv.set("loss.omega", format_double(cfg.omega));
    kv.set("loss.num_negatives", str(cfg.num_negatives));
    kv.set("loss.contrast", to_string(cfg.contrast));
}

ModelConfig model_config_from_kv(const KeyValues& kv, ModelConfig d) {
    d.m = kv.get_size("model.m", d.m);
    d.n = kv.get_size("model.n", d.n);
    d.c = kv.get_size("model.c", d.c);
    d.h = kv.get_size("model.h", d.h);
    d.w = kv.get_size("model.w", d.w);
    d.encoder_layers = kv.get_size("model.encoder_layers", d.encoder_layers);
    d.mab_inner = kv.get_size("model.mab_inner", d.mab_inner);
    d.bottleneck3d_inner = kv.get_size("model.bottleneck3d_inner", d.bottleneck3d_inner);
    if (auto* v = kv.find("model.activation")) d.activation = parse_activation(*v);
    if (auto* v = kv.find("model.adapter")) d.adapter = parse_adapter_mode(*v);
    d.vae.latent_channels = kv.get_size("vae.latent_channels", d.vae.latent_channels);
    d.vae.hidden_channels = kv.get_size("vae.hidden_channels", d.vae.hidden_channels);
    d.vae.epochs = kv.get_size("vae.epochs", d.vae.epochs);
    d.vae.batch_size = kv.get_size("vae.batch_size", d.vae.batch_size);
    d.vae.learning_rate = kv.get_double("vae.lr", d.vae.learning_rate);
    d.vae.kl_weight = kv.get_double("vae.kl_weight", d.vae.kl_weight);
    d.vae.seed = kv.get_size("vae.seed", d.vae.seed);
    return d;
}

TrainConfig train_config_from_kv(const KeyValues& kv, TrainConfig d) {
    d.learning_rate = kv.get_double("train.lr", d.learning_rate);
    d.epochs = kv.get_size("train.epochs", d.epochs);
    d.batch_size = kv.get_size("train.batch_size", d.batch_size);
    d.seed = kv.get_size("train.seed", d.seed);
    if (auto* v = kv.find("train.optimizer")) d.optimizer = parse_optimizer(*v);
    d.augment = kv.get_bool("train.augment", d.augment);
    d.patience = kv.get_size("train.patience", d.patience);
    d.fixed_contrast_samples = kv.get_bool("train.fixed_contrast_samples", d.fixed_contrast_samples);
    if (kv.has("train.max_steps")) d.max_steps = kv.get_size("train.max_steps", 0);
    return d;
}

LossConfig loss_config_from_kv(const KeyValues& kv, LossConfig d) {
    d.lambda = kv.get_double("loss.lambda", d.lambda);
    d.lambda_c = kv.get_double("loss.lambda_c", d.lambda_c);
    d.omega = kv.get_double("loss.omega", d.omega);
    d.num_negatives = kv.get_size("loss.num_negatives", d.num_negatives);
    if (auto* v = kv.find("loss.contrast")) d.contrast = parse_contrast_mode(*v);
    return d;
}

}  // namespace mapsed
