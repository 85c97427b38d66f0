#include "mapsed/optim.hpp"

#include "mapsed/keyvalue.hpp"

#include <cmath>

namespace mapsed {

OptimizerKind parse_optimizer(const std::string& name) {
    if (name == "sgd") return OptimizerKind::Sgd;
    if (name == "momentum") return OptimizerKind::Momentum;
    if (name == "adam") return OptimizerKind::Adam;
    throw ConfigError("unknown optimizer '" + name + "' (valid: sgd, momentum, adam)");
}

std::string to_string(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::Sgd: return "sgd";
        case OptimizerKind::Momentum: return "momentum";
        case OptimizerKind::Adam: return "adam";
    }
    return "adam";
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) {
    if (!(config_.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
}

void Optimizer::step(const std::vector<NamedParam>& params, const std::vector<Tensor>& grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("optimizer: parameter/gradient count mismatch");
    ++steps_;
    const double lr = config_.learning_rate;
    const double t = static_cast<double>(steps_);
    const double bias1 = 1.0 - std::pow(config_.beta1, t);
    const double bias2 = 1.0 - std::pow(config_.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i].value;
        const Tensor& g = grads[i];
        require_same_shape(p, g, "optimizer step");
        switch (config_.kind) {
            case OptimizerKind::Sgd:
                for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j];
                break;
            case OptimizerKind::Momentum: {
                auto [it, inserted] = first_.try_emplace(params[i].name, p.shape());
                Tensor& vel = it->second;
                for (std::size_t j = 0; j < p.size(); ++j) {
                    vel[j] = config_.momentum * vel[j] + g[j];
                    p[j] -= lr * vel[j];
                }
                break;
            }
            case OptimizerKind::Adam: {
                Tensor& m = first_.try_emplace(params[i].name, p.shape()).first->second;
                Tensor& v = second_.try_emplace(params[i].name, p.shape()).first->second;
                for (std::size_t j = 0; j < p.size(); ++j) {
                    m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
                    v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
                    const double mhat = m[j] / bias1;
                    const double vhat = v[j] / bias2;
                    p[j] -= lr * mhat / (std::sqrt(vhat) + config_.epsilon);
                }
                break;
            }
        }
    }
}

void Optimizer::visit_state(const std::function<void(const std::string&, const Tensor&)>& fn) const {
    for (const auto& [name, t] : first_) fn("m/" + name, t);
    for (const auto& [name, t] : second_) fn("v/" + name, t);
}

void Optimizer::restore_state(std::size_t steps, std::map<std::string, Tensor> buffers) {
    steps_ = steps;
    first_.clear();
    second_.clear();
    for (auto& [key, t] : buffers) {
        if (key.rfind("m/", 0) == 0) {
            first_.emplace(key.substr(2), std::move(t));
        } else if (key.rfind("v/", 0) == 0) {
            second_.emplace(key.substr(2), std::move(t));
        } else {
            throw std::invalid_argument("optimizer: unknown state buffer '" + key + "'");
        }
    }
}

}  // namespace mapsed
