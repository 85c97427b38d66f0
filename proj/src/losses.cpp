#include "mapsed/losses.hpp"

#include "mapsed/keyvalue.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mapsed {

ContrastMode parse_contrast_mode(const std::string& name) {
    if (name == "frobenius") return ContrastMode::Frobenius;
    if (name == "dot") return ContrastMode::Dot;
    if (name == "none") return ContrastMode::None;
    throw ConfigError("unknown contrast mode '" + name + "' (valid: frobenius, dot, none)");
}

std::string to_string(ContrastMode mode) {
    switch (mode) {
        case ContrastMode::Frobenius: return "frobenius";
        case ContrastMode::Dot: return "dot";
        case ContrastMode::None: return "none";
    }
    return "frobenius";
}

void LossConfig::validate() const {
    if (!(lambda >= 0.0) || !(lambda_c >= 0.0) || !(omega >= 0.0))
        throw ConfigError("loss weights and margin must be non-negative");
    if (contrast != ContrastMode::None && num_negatives == 0)
        throw ConfigError("contrastive loss needs at least one negative sample");
}

namespace {

void require_negatives(std::size_t count) {
    if (count == 0) throw ConfigError("contrastive loss needs at least one negative sample");
}

std::size_t horizon(const Shape& s) {
    if (s.empty() || s[0] == 0) throw DimensionError("reconstruction target needs a non-empty leading axis");
    return s[0];
}

}  // namespace

Var reconstruction_loss(Var target, Var prediction, double lambda) {
    if (target.shape() != prediction.shape()) {
        throw DimensionError("reconstruction: target " + shape_to_string(target.shape()) + " vs prediction " +
                             shape_to_string(prediction.shape()));
    }
    const double inv_n = 1.0 / static_cast<double>(horizon(target.shape()));
    Var diff = ad::sub(target, prediction);
    Var total = ad::add(ad::sum_squares(diff), ad::scale(ad::abs_sum(diff), lambda));
    return ad::scale(total, inv_n);
}

double reconstruction_loss(const Tensor& target, const Tensor& prediction, double lambda) {
    require_same_shape(target, prediction, "reconstruction");
    const double n = static_cast<double>(horizon(target.shape()));
    double sq = 0.0, abs = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double d = target[i] - prediction[i];
        sq += d * d;
        abs += std::abs(d);
    }
    return (sq + lambda * abs) / n;
}

Var contrastive_loss(Var anchor, Var positive, const std::vector<Var>& negatives, double omega) {
    require_negatives(negatives.size());
    std::vector<Var> distances;
    distances.reserve(negatives.size());
    for (Var neg : negatives) distances.push_back(ad::squared_distance(neg, anchor));
    Var gap = ad::sub(ad::squared_distance(positive, anchor), ad::minimum(distances));
    return ad::hinge(ad::add_scalar(gap, omega));
}

double contrastive_loss(const Tensor& anchor, const Tensor& positive, const std::vector<Tensor>& negatives,
                        double omega) {
    require_negatives(negatives.size());
    auto dist = [&](const Tensor& t) {
        require_same_shape(t, anchor, "contrastive");
        double s = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) s += (t[i] - anchor[i]) * (t[i] - anchor[i]);
        return s;
    };
    double nearest = std::numeric_limits<double>::infinity();
    for (const Tensor& neg : negatives) nearest = std::min(nearest, dist(neg));
    return std::max(dist(positive) - nearest + omega, 0.0);
}

Var infonce_dot_loss(Var anchor, Var positive, const std::vector<Var>& negatives) {
    require_negatives(negatives.size());
    Var pos = ad::dot(anchor, positive);
    std::vector<Var> logits{pos};
    for (Var neg : negatives) logits.push_back(ad::dot(anchor, neg));
    return ad::sub(ad::log_sum_exp(logits), pos);
}

double infonce_dot_loss(const Tensor& anchor, const Tensor& positive, const std::vector<Tensor>& negatives) {
    require_negatives(negatives.size());
    auto dot = [&](const Tensor& t) {
        require_same_shape(t, anchor, "infonce");
        double s = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * anchor[i];
        return s;
    };
    std::vector<double> logits{dot(positive)};
    for (const Tensor& neg : negatives) logits.push_back(dot(neg));
    const double peak = *std::max_element(logits.begin(), logits.end());
    double acc = 0.0;
    for (double a : logits) acc += std::exp(a - peak);
    return peak + std::log(acc) - logits.front();
}

double net_loss(double reconstruction, double contrastive, double lambda_c) {
    return reconstruction + lambda_c * contrastive;
}

LossTerms net_loss(Var target, Var prediction, Var anchor, Var positive, const std::vector<Var>& negatives,
                   const LossConfig& cfg) {
    LossTerms terms;
    terms.reconstruction = reconstruction_loss(target, prediction, cfg.lambda);
    switch (cfg.contrast) {
        case ContrastMode::None:
            terms.total = terms.reconstruction;
            return terms;
        case ContrastMode::Frobenius:
            terms.contrastive = contrastive_loss(anchor, positive, negatives, cfg.omega);
            break;
        case ContrastMode::Dot:
            terms.contrastive = infonce_dot_loss(anchor, positive, negatives);
            break;
    }
    terms.total = ad::add(terms.reconstruction, ad::scale(terms.contrastive, cfg.lambda_c));
    return terms;
}

}  // namespace mapsed
