#include "mapsed/io.hpp"
#include "mapsed/training.hpp"

#include <map>

namespace mapsed {

namespace {

constexpr char kMagic[] = "MAPSEDCK";
constexpr std::uint32_t kVersion = 1;

// Column layout of the history tensors.
constexpr std::size_t kStepColumns = 5;   // step, loss, recon, contrast, semantics_norm
constexpr std::size_t kEpochColumns = 4;  // epoch, end_step, train recon, val recon

Tensor history_tensor(const std::vector<StepRecord>& h) {
    Tensor t(Shape{h.size(), kStepColumns});
    for (std::size_t i = 0; i < h.size(); ++i) {
        double* row = t.data().data() + i * kStepColumns;
        row[0] = static_cast<double>(h[i].step);
        row[1] = h[i].loss;
        row[2] = h[i].reconstruction;
        row[3] = h[i].contrastive;
        row[4] = h[i].semantics_norm;
    }
    return t;
}

Tensor epoch_tensor(const std::vector<EpochRecord>& e) {
    Tensor t(Shape{e.size(), kEpochColumns});
    for (std::size_t i = 0; i < e.size(); ++i) {
        double* row = t.data().data() + i * kEpochColumns;
        row[0] = static_cast<double>(e[i].epoch);
        row[1] = static_cast<double>(e[i].end_step);
        row[2] = e[i].train_reconstruction;
        row[3] = e[i].val_reconstruction;
    }
    return t;
}

void require_columns(const Tensor& t, std::size_t cols, const char* what) {
    if (t.rank() != 2 || t.dim(1) != cols) throw FormatError(std::string("checkpoint: malformed ") + what);
}

void assign(ModelParams& params, const std::string& prefix, std::map<std::string, Tensor>& tensors) {
    params.visit([&](const std::string& name, Tensor& t) {
        auto it = tensors.find(prefix + name);
        if (it == tensors.end()) throw FormatError("checkpoint: missing tensor '" + prefix + name + "'");
        if (it->second.shape() != t.shape()) {
            throw FormatError("checkpoint: tensor '" + prefix + name + "' has shape " +
                              shape_to_string(it->second.shape()) + ", expected " + shape_to_string(t.shape()));
        }
        t = std::move(it->second);
        tensors.erase(it);
    });
}

}  // namespace

std::string serialize_checkpoint(const TrainState& state, const KeyValues& config) {
    KeyValues scalars;
    scalars.set("epoch", std::to_string(state.epoch));
    scalars.set("step", std::to_string(state.step));
    scalars.set("epochs_since_best", std::to_string(state.epochs_since_best));
    scalars.set("stopped", state.stopped ? "true" : "false");
    scalars.set("optimizer_steps", std::to_string(state.optimizer.steps()));
    scalars.set("has_vae", state.params.vae ? "true" : "false");

    std::vector<std::pair<std::string, Tensor>> tensors;
    state.params.visit([&](const std::string& n, const Tensor& t) { tensors.emplace_back("param/" + n, t); });
    state.best_params.visit([&](const std::string& n, const Tensor& t) { tensors.emplace_back("best/" + n, t); });
    if (state.params.vae) {
        state.params.vae->visit("vae", [&](const std::string& n, const Tensor& t) { tensors.emplace_back("adapter/" + n, t); });
    }
    state.optimizer.visit_state([&](const std::string& n, const Tensor& t) { tensors.emplace_back("opt/" + n, t); });
    tensors.emplace_back("history/steps", history_tensor(state.history));
    tensors.emplace_back("history/epochs", epoch_tensor(state.epochs));
    tensors.emplace_back("state/best_val", Tensor::scalar(state.best_val));

    ByteWriter w;
    w.bytes(std::string(kMagic, 8));
    w.u32(kVersion);
    w.str(config.serialize());
    w.str(scalars.serialize());
    w.str(state.rng.state());
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        w.str(name);
        w.tensor(t);
    }
    return w.buffer();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
    ByteReader r(bytes);
    if (r.bytes(8) != std::string(kMagic, 8)) throw FormatError("not a checkpoint file (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));

    Checkpoint ck;
    ck.config = KeyValues::parse(r.str());
    const KeyValues scalars = KeyValues::parse(r.str());
    const std::string rng_state = r.str();
    std::map<std::string, Tensor> tensors;
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.str();
        Tensor t = r.tensor();
        if (!tensors.emplace(name, std::move(t)).second) throw FormatError("checkpoint: duplicate tensor '" + name + "'");
    }
    if (!r.at_end()) throw FormatError("checkpoint: trailing bytes");

    const ModelConfig mcfg = model_config_from_kv(ck.config);
    const TrainConfig tcfg = train_config_from_kv(ck.config);
    TrainState& s = ck.state;
    // Skeletons supply names and shapes; values are overwritten below.
    Rng scratch(0);
    s.params = ModelParams::init(mcfg, scratch);
    s.best_params = s.params;
    assign(s.params, "param/", tensors);
    assign(s.best_params, "best/", tensors);
    if (scalars.get_bool("has_vae", false)) {
        VaeParams vae = VaeParams::init(mcfg.c, mcfg.vae, scratch);
        vae.visit("vae", [&](const std::string& n, Tensor& t) {
            auto it = tensors.find("adapter/" + n);
            if (it == tensors.end() || it->second.shape() != t.shape())
                throw FormatError("checkpoint: missing or malformed adapter tensor '" + n + "'");
            t = std::move(it->second);
            tensors.erase(it);
        });
        s.params.vae = vae;
        s.best_params.vae = vae;
    }

    std::map<std::string, Tensor> moments;
    for (auto it = tensors.begin(); it != tensors.end();) {
        if (it->first.rfind("opt/", 0) == 0) {
            moments.emplace(it->first.substr(4), std::move(it->second));
            it = tensors.erase(it);
        } else {
            ++it;
        }
    }
    s.optimizer = Optimizer(tcfg.optimizer_config());
    s.optimizer.restore_state(scalars.get_size("optimizer_steps", 0), std::move(moments));

    auto take = [&](const std::string& name) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw FormatError("checkpoint: missing tensor '" + name + "'");
        return it->second;
    };
    const Tensor steps = take("history/steps");
    require_columns(steps, kStepColumns, "step history");
    for (std::size_t i = 0; i < steps.dim(0); ++i) {
        const double* row = steps.data().data() + i * kStepColumns;
        s.history.push_back({static_cast<std::size_t>(row[0]), row[1], row[2], row[3], row[4]});
    }
    const Tensor epochs = take("history/epochs");
    require_columns(epochs, kEpochColumns, "epoch history");
    for (std::size_t i = 0; i < epochs.dim(0); ++i) {
        const double* row = epochs.data().data() + i * kEpochColumns;
        s.epochs.push_back({static_cast<std::size_t>(row[0]), static_cast<std::size_t>(row[1]), row[2], row[3]});
    }
    s.best_val = take("state/best_val").item();
    s.epoch = scalars.get_size("epoch", 0);
    s.step = scalars.get_size("step", 0);
    s.epochs_since_best = scalars.get_size("epochs_since_best", 0);
    s.stopped = scalars.get_bool("stopped", false);
    s.rng.restore(rng_state);
    return ck;
}

void write_checkpoint(const std::string& path, const TrainState& state, const KeyValues& config) {
    write_file_atomic(path, serialize_checkpoint(state, config));
}

Checkpoint read_checkpoint(const std::string& path) {
    Checkpoint ck = deserialize_checkpoint(read_file(path));
    ck.state.last_checkpoint = path;
    return ck;
}

ModelParams load_model(const std::string& path) { return read_checkpoint(path).state.best_params; }

}  // namespace mapsed
