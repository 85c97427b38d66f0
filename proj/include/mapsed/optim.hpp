#pragma once

#include "mapsed/tensor.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace mapsed {

enum class OptimizerKind { Sgd, Momentum, Adam };

OptimizerKind parse_optimizer(const std::string& name);
std::string to_string(OptimizerKind kind);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double momentum = 0.9;
};

struct NamedParam {
    std::string name;
    Tensor* value;
};

/// First-order optimizer with per-parameter state keyed by name.
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig config = {});

    /// Applies one update. `grads[i]` must match `params[i]` in shape.
    void step(const std::vector<NamedParam>& params, const std::vector<Tensor>& grads);

    const OptimizerConfig& config() const { return config_; }
    std::size_t steps() const { return steps_; }

    // Moment buffers are exposed as "m/<name>" and "v/<name>" for checkpointing.
    void visit_state(const std::function<void(const std::string&, const Tensor&)>& fn) const;
    void restore_state(std::size_t steps, std::map<std::string, Tensor> buffers);

private:
    OptimizerConfig config_;
    std::size_t steps_ = 0;
    std::map<std::string, Tensor> first_;
    std::map<std::string, Tensor> second_;
};

}  // namespace mapsed
