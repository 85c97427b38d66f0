#pragma once

#include "mapsed/dataset.hpp"
#include "mapsed/keyvalue.hpp"
#include "mapsed/losses.hpp"
#include "mapsed/model.hpp"
#include "mapsed/optim.hpp"

#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mapsed {

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t epochs = 100;
    std::size_t batch_size = 4;
    std::uint64_t seed = 1;
    OptimizerKind optimizer = OptimizerKind::Adam;
    bool augment = false;
    /// Epochs without validation improvement before stopping; 0 disables.
    std::size_t patience = 0;
    /// Draw each sequence's positive and negatives once, before the first epoch.
    bool fixed_contrast_samples = false;
    /// Hard cap on optimizer steps; nullopt means unlimited.
    std::optional<std::size_t> max_steps;
    /// Worker threads for per-sequence passes; 0 reads MAPSED_THREADS.
    std::size_t threads = 0;

    void validate() const;
    OptimizerConfig optimizer_config() const;
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct StepRecord {
    std::size_t step = 0;
    double loss = 0.0;
    double reconstruction = 0.0;
    double contrastive = 0.0;
    double semantics_norm = 0.0;  // mean ‖S′‖_F over the batch
};

struct EpochRecord {
    std::size_t epoch = 0;
    std::size_t end_step = 0;           // steps completed when the epoch ended
    double train_reconstruction = 0.0;  // mean over the epoch's steps
    double val_reconstruction = std::numeric_limits<double>::quiet_NaN();
};

struct TrainState {
    ModelParams params;
    Optimizer optimizer;
    std::size_t epoch = 0;
    std::size_t step = 0;
    Rng rng;
    std::vector<StepRecord> history;
    std::vector<EpochRecord> epochs;
    ModelParams best_params;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t epochs_since_best = 0;
    bool stopped = false;
    /// Most recent checkpoint written by the loop; empty if none.
    std::string last_checkpoint;
};

/// Uniform random permutation of 0..m-1 that is not the identity when m ≥ 2.
std::vector<std::size_t> draw_positive_permutation(std::size_t m, Rng& rng);
/// Frame t of the result is frame perm[t] of X.
Tensor permute_frames(const Tensor& x, const std::vector<std::size_t>& perm);
Tensor make_positive(const Tensor& x, Rng& rng);
/// `k` distinct indices in [0, dataset_size) excluding `current`.
std::vector<std::size_t> sample_negatives(std::size_t dataset_size, std::size_t current, std::size_t k, Rng& rng);

/// Worker count: explicit request, else MAPSED_THREADS, else hardware threads.
std::size_t resolve_threads(std::size_t requested);

/// Random choices for one sequence within a step.
struct SequencePlan {
    std::size_t index = 0;
    AugmentChoice augmentation;
    std::vector<std::size_t> permutation;
    std::vector<std::size_t> negatives;
};

struct SequenceResult {
    double loss = 0.0, reconstruction = 0.0, contrastive = 0.0, semantics_norm = 0.0;
    std::vector<Tensor> grads;  // in parameter visiting order
};

/// Forward and backward for one sequence. Pure given its inputs.
SequenceResult sequence_gradient(const ModelParams& params, const std::vector<OccurrenceSequence>& data,
                                 const SequencePlan& plan, const LossConfig& loss);

/// Averages the batch's gradients in index order and applies one update.
/// Throws TrainingError on a non-finite loss without touching parameters.
StepRecord train_step(TrainState& state, const std::vector<OccurrenceSequence>& data,
                      const std::vector<SequencePlan>& batch, const LossConfig& loss, std::size_t threads = 1);

std::vector<NamedParam> named_parameters(ModelParams& params);

struct TrainOptions {
    std::string report_path;       // empty: no report
    std::string checkpoint_path;   // empty: no checkpoint; written after each epoch
    std::string resume_from;       // empty: fresh run
    /// Echoed into the report header and stored in checkpoints.
    KeyValues config_echo;
};

/// Mean reconstruction loss of plain predictions (no augmentation).
double evaluate_reconstruction(const ModelParams& params, const std::vector<OccurrenceSequence>& data,
                               double lambda, std::size_t threads = 1);

TrainState init_train_state(const ModelConfig& model, const TrainConfig& train,
                            const std::vector<OccurrenceSequence>& train_data);

TrainState train_loop(const Dataset& dataset, const ModelConfig& model, const TrainConfig& train,
                      const LossConfig& loss, const TrainOptions& options = {});
TrainState train_loop(const std::vector<OccurrenceSequence>& train_data,
                      const std::vector<OccurrenceSequence>& val_data, const ModelConfig& model,
                      const TrainConfig& train, const LossConfig& loss, const TrainOptions& options = {});

std::string format_report(const TrainState& state, const KeyValues& config_echo);

// Config <-> key/value. Keys are prefixed model.*, vae.*, train.*, loss.*.
void model_config_to_kv(const ModelConfig& cfg, KeyValues& kv);
void train_config_to_kv(const TrainConfig& cfg, KeyValues& kv);
void loss_config_to_kv(const LossConfig& cfg, KeyValues& kv);
ModelConfig model_config_from_kv(const KeyValues& kv, ModelConfig defaults = {});
TrainConfig train_config_from_kv(const KeyValues& kv, TrainConfig defaults = {});
LossConfig loss_config_from_kv(const KeyValues& kv, LossConfig defaults = {});

// Checkpoints.
struct Checkpoint {
    KeyValues config;
    TrainState state;
};

std::string serialize_checkpoint(const TrainState& state, const KeyValues& config);
Checkpoint deserialize_checkpoint(const std::string& bytes);
void write_checkpoint(const std::string& path, const TrainState& state, const KeyValues& config);
Checkpoint read_checkpoint(const std::string& path);
/// Best-validation parameters from a checkpoint file.
ModelParams load_model(const std::string& path);

}  // namespace mapsed
