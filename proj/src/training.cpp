#include "mapsed/training.hpp"

#include "mapsed/io.hpp"
#include "mapsed/parallel.hpp"

#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <thread>

namespace mapsed {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train.lr must be positive");
    if (epochs == 0) throw ConfigError("train.epochs must be at least 1");
    if (batch_size == 0) throw ConfigError("train.batch_size must be at least 1");
}

OptimizerConfig TrainConfig::optimizer_config() const {
    OptimizerConfig cfg;
    cfg.kind = optimizer;
    cfg.learning_rate = learning_rate;
    return cfg;
}

// ------------------------------------------------------------------ sampling

std::vector<std::size_t> draw_positive_permutation(std::size_t m, Rng& rng) {
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    if (m < 2) return perm;
    // Rejection from uniform permutations leaves the non-identity ones uniform.
    for (;;) {
        rng.shuffle(perm);
        for (std::size_t i = 0; i < m; ++i)
            if (perm[i] != i) return perm;
    }
}

Tensor permute_frames(const Tensor& x, const std::vector<std::size_t>& perm) {
    if (x.rank() == 0 || perm.size() != x.dim(0)) {
        throw DimensionError("permute_frames: permutation of length " + std::to_string(perm.size()) +
                                 " for tensor " + shape_to_string(x.shape()),
                             0);
    }
    const std::size_t frame = x.size() / x.dim(0);
    Tensor out(x.shape());
    for (std::size_t t = 0; t < perm.size(); ++t) {
        if (perm[t] >= perm.size()) throw std::out_of_range("permute_frames: index out of range");
        std::copy_n(x.data().begin() + perm[t] * frame, frame, out.data().begin() + t * frame);
    }
    return out;
}

Tensor make_positive(const Tensor& x, Rng& rng) {
    if (x.rank() == 0) throw DimensionError("make_positive: expected m×c×h×w");
    return permute_frames(x, draw_positive_permutation(x.dim(0), rng));
}

std::vector<std::size_t> sample_negatives(std::size_t dataset_size, std::size_t current, std::size_t k, Rng& rng) {
    if (dataset_size < k + 1) {
        throw ConfigError("need at least " + std::to_string(k + 1) + " training sequences for " + std::to_string(k) +
                          " negatives, have " + std::to_string(dataset_size));
    }
    std::vector<std::size_t> pool;
    pool.reserve(dataset_size - 1);
    for (std::size_t i = 0; i < dataset_size; ++i)
        if (i != current) pool.push_back(i);
    // Partial Fisher-Yates: the first k slots become a uniform k-subset.
    for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    pool.resize(k);
    return pool;
}

std::size_t resolve_threads(std::size_t requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("MAPSED_THREADS")) {
        const long long v = parse_int("MAPSED_THREADS", env);
        if (v < 1) throw ConfigError("MAPSED_THREADS must be at least 1");
        return static_cast<std::size_t>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------------- step

std::vector<NamedParam> named_parameters(ModelParams& params) {
    std::vector<NamedParam> out;
    params.visit([&](const std::string& name, Tensor& t) { out.push_back({name, &t}); });
    return out;
}

namespace {

bool contrast_active(const LossConfig& loss) { return loss.contrast != ContrastMode::None && loss.lambda_c != 0.0; }

bool is_identity(const AugmentChoice& a) { return !a.flip && a.quarter_turns % 4 == 0; }

}  // namespace

SequenceResult sequence_gradient(const ModelParams& params, const std::vector<OccurrenceSequence>& data,
                                 const SequencePlan& plan, const LossConfig& loss) {
    const OccurrenceSequence& raw = data.at(plan.index);
    const OccurrenceSequence seq = is_identity(plan.augmentation) ? raw : apply_augmentation(raw, plan.augmentation);

    Tape tape;
    ForwardPass fwd = model_forward(tape, tape.constant(seq.x), params);
    Var target = tape.constant(seq.y);
    SequenceResult r;
    r.semantics_norm = std::sqrt(fwd.latent.semantics.value().squared_norm());

    LossTerms terms;
    if (contrast_active(loss)) {
        Var positive = model_semantics(tape, tape.constant(permute_frames(seq.x, plan.permutation)), params);
        std::vector<Var> negatives;
        negatives.reserve(plan.negatives.size());
        for (std::size_t j : plan.negatives) negatives.push_back(model_semantics(tape, tape.constant(data.at(j).x), params));
        terms = net_loss(target, fwd.prediction, fwd.latent.semantics, positive, negatives, loss);
        r.contrastive = terms.contrastive.value().item();
    } else {
        terms.reconstruction = reconstruction_loss(target, fwd.prediction, loss.lambda);
        terms.total = terms.reconstruction;
    }
    r.loss = terms.total.value().item();
    r.reconstruction = terms.reconstruction.value().item();
    if (!std::isfinite(r.loss)) return r;

    tape.backward(terms.total);
    params.visit([&](const std::string&, const Tensor& t) { r.grads.push_back(tape.param_grad(t)); });
    return r;
}

StepRecord train_step(TrainState& state, const std::vector<OccurrenceSequence>& data,
                      const std::vector<SequencePlan>& batch, const LossConfig& loss, std::size_t threads) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    std::vector<SequenceResult> results(batch.size());
    const ModelParams& params = state.params;
    parallel_for(batch.size(), threads, [&](std::size_t i) { results[i] = sequence_gradient(params, data, batch[i], loss); });

    StepRecord rec;
    rec.step = state.step;
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const SequenceResult& r : results) {
        if (!std::isfinite(r.loss)) {
            throw TrainingError("non-finite loss at step " + std::to_string(state.step) + "; last good checkpoint: " +
                                (state.last_checkpoint.empty() ? "none" : state.last_checkpoint));
        }
        rec.loss += r.loss;
        rec.reconstruction += r.reconstruction;
        rec.contrastive += r.contrastive;
        rec.semantics_norm += r.semantics_norm;
    }
    rec.loss *= inv;
    rec.reconstruction *= inv;
    rec.contrastive *= inv;
    rec.semantics_norm *= inv;

    std::vector<Tensor> grads = std::move(results.front().grads);
    for (std::size_t i = 1; i < results.size(); ++i)
        for (std::size_t p = 0; p < grads.size(); ++p) grads[p] += results[i].grads[p];
    for (Tensor& g : grads) g *= inv;

    state.optimizer.step(named_parameters(state.params), grads);
    ++state.step;
    state.history.push_back(rec);
    return rec;
}

// ---------------------------------------------------------------------- loop

double evaluate_reconstruction(const ModelParams& params, const std::vector<OccurrenceSequence>& data, double lambda,
                               std::size_t threads) {
    if (data.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::vector<double> losses(data.size());
    parallel_for(data.size(), threads,
                 [&](std::size_t i) { losses[i] = reconstruction_loss(data[i].y, predict(params, data[i].x), lambda); });
    double total = 0.0;
    for (double v : losses) total += v;
    return total / static_cast<double>(data.size());
}

TrainState init_train_state(const ModelConfig& model, const TrainConfig& train,
                            const std::vector<OccurrenceSequence>& train_data) {
    TrainState state;
    state.rng = Rng(train.seed);
    state.params = ModelParams::init(model, state.rng);
    if (model.adapter == AdapterMode::Vae) {
        std::vector<Tensor> frames;
        for (const OccurrenceSequence& s : train_data) {
            for (std::size_t t = 0; t < s.x.dim(0); ++t) frames.push_back(frame_of(s.x, t));
            for (std::size_t t = 0; t < s.y.dim(0); ++t) frames.push_back(frame_of(s.y, t));
        }
        state.params.vae = vae_pretrain(frames, model.vae).params;
    }
    state.optimizer = Optimizer(train.optimizer_config());
    state.best_params = state.params;
    return state;
}

namespace {

constexpr std::uint64_t kFixedSampleSalt = 0xC0FFEE5EEDULL;

std::vector<SequencePlan> fixed_plans(std::size_t count, std::size_t m, const TrainConfig& train,
                                      const LossConfig& loss) {
    Rng rng(train.seed ^ kFixedSampleSalt);
    std::vector<SequencePlan> plans(count);
    for (std::size_t i = 0; i < count; ++i) {
        plans[i].index = i;
        plans[i].permutation = draw_positive_permutation(m, rng);
        plans[i].negatives = sample_negatives(count, i, loss.num_negatives, rng);
    }
    return plans;
}

KeyValues checkpoint_config(const KeyValues& echo, const ModelConfig& model, const TrainConfig& train,
                            const LossConfig& loss) {
    KeyValues kv;
    for (const auto& [k, v] : echo.entries())
        if (!v.empty()) kv.set(k, v);
    model_config_to_kv(model, kv);
    train_config_to_kv(train, kv);
    loss_config_to_kv(loss, kv);
    return kv;
}

}  // namespace

TrainState train_loop(const Dataset& dataset, const ModelConfig& model, const TrainConfig& train,
                      const LossConfig& loss, const TrainOptions& options) {
    return train_loop(dataset.sequences("train"), dataset.sequences("val"), model, train, loss, options);
}

TrainState train_loop(const std::vector<OccurrenceSequence>& train_data,
                      const std::vector<OccurrenceSequence>& val_data, const ModelConfig& model,
                      const TrainConfig& train, const LossConfig& loss, const TrainOptions& options) {
    if (train_data.empty()) throw TrainingError("training split is empty");
    train.validate();
    loss.validate();
    const bool contrast = contrast_active(loss);
    if (contrast && train_data.size() < loss.num_negatives + 1) {
        throw ConfigError("need at least " + std::to_string(loss.num_negatives + 1) +
                          " training sequences for loss.num_negatives=" + std::to_string(loss.num_negatives));
    }

    TrainState state = options.resume_from.empty() ? init_train_state(model, train, train_data)
                                                   : read_checkpoint(options.resume_from).state;
    if (!options.resume_from.empty()) state.optimizer = [&] {
        // Keep restored moments but adopt the current learning rate and kind.
        Optimizer opt(train.optimizer_config());
        std::map<std::string, Tensor> buffers;
        state.optimizer.visit_state([&](const std::string& k, const Tensor& t) { buffers.emplace(k, t); });
        opt.restore_state(state.optimizer.steps(), std::move(buffers));
        return opt;
    }();
    const ModelConfig& mcfg = state.params.config;
    const KeyValues config = checkpoint_config(options.config_echo, mcfg, train, loss);
    const std::size_t threads = resolve_threads(train.threads);
    const std::vector<SequencePlan> fixed =
        contrast && train.fixed_contrast_samples ? fixed_plans(train_data.size(), mcfg.m, train, loss)
                                                 : std::vector<SequencePlan>{};

    auto step_limit_reached = [&] { return train.max_steps && state.step >= *train.max_steps; };

    while (!state.stopped && state.epoch < train.epochs) {
        if (step_limit_reached()) {
            state.stopped = true;
            break;
        }
        std::vector<std::size_t> order(train_data.size());
        std::iota(order.begin(), order.end(), 0);
        state.rng.shuffle(order);

        double recon_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < order.size(); start += train.batch_size) {
            if (step_limit_reached()) {
                state.stopped = true;
                break;
            }
            const std::size_t end = std::min(order.size(), start + train.batch_size);
            std::vector<SequencePlan> batch;
            for (std::size_t i = start; i < end; ++i) {
                SequencePlan plan;
                plan.index = order[i];
                if (train.augment) plan.augmentation = draw_augmentation(state.rng);
                if (contrast) {
                    if (!fixed.empty()) {
                        plan.permutation = fixed[order[i]].permutation;
                        plan.negatives = fixed[order[i]].negatives;
                    } else {
                        plan.permutation = draw_positive_permutation(mcfg.m, state.rng);
                        plan.negatives = sample_negatives(train_data.size(), order[i], loss.num_negatives, state.rng);
                    }
                }
                batch.push_back(std::move(plan));
            }
            recon_sum += train_step(state, train_data, batch, loss, threads).reconstruction;
            ++steps;
        }
        if (state.stopped) break;

        EpochRecord rec;
        rec.epoch = state.epoch;
        rec.end_step = state.step;
        rec.train_reconstruction = recon_sum / static_cast<double>(steps);
        rec.val_reconstruction = evaluate_reconstruction(state.params, val_data, loss.lambda, threads);
        state.epochs.push_back(rec);

        const double criterion = val_data.empty() ? rec.train_reconstruction : rec.val_reconstruction;
        if (criterion < state.best_val) {
            state.best_val = criterion;
            state.best_params = state.params;
            state.epochs_since_best = 0;
        } else {
            ++state.epochs_since_best;
            if (train.patience > 0 && state.epochs_since_best >= train.patience) state.stopped = true;
        }
        ++state.epoch;
        if (!options.checkpoint_path.empty()) {
            write_checkpoint(options.checkpoint_path, state, config);
            state.last_checkpoint = options.checkpoint_path;
        }
    }
    if (!options.report_path.empty()) write_file_atomic(options.report_path, format_report(state, config));
    return state;
}

std::string format_report(const TrainState& state, const KeyValues& config_echo) {
    std::ostringstream out;
    out << "# mapsed training report\n";
    for (const auto& [k, v] : config_echo.entries()) out << "# " << k << "=" << v << "\n";
    out << "# parameters=" << state.params.parameter_count() << "\n";
    out << "step loss recon contrast semantics_norm\n";
    std::size_t next_epoch = 0;
    auto flush_epochs = [&](std::size_t steps_done) {
        while (next_epoch < state.epochs.size() && state.epochs[next_epoch].end_step <= steps_done) {
            const EpochRecord& e = state.epochs[next_epoch++];
            out << "# epoch " << e.epoch << " train_L_r=" << format_double(e.train_reconstruction)
                << " val_L_r=" << (std::isnan(e.val_reconstruction) ? "nan" : format_double(e.val_reconstruction))
                << "\n";
        }
    };
    for (const StepRecord& r : state.history) {
        flush_epochs(r.step);
        out << r.step << ' ' << format_double(r.loss) << ' ' << format_double(r.reconstruction) << ' '
            << format_double(r.contrastive) << ' ' << format_double(r.semantics_norm) << "\n";
    }
    flush_epochs(state.step);
    out << "# best_criterion=" << (std::isfinite(state.best_val) ? format_double(state.best_val) : "none") << "\n";
    return out.str();
}

}  // namespace mapsed
