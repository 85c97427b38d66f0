#pragma once

#include "mapsed/autodiff.hpp"

#include <string>
#include <vector>

namespace mapsed {

enum class ContrastMode { Frobenius, Dot, None };

ContrastMode parse_contrast_mode(const std::string& name);
std::string to_string(ContrastMode mode);

struct LossConfig {
    double lambda = 0.1;        // L1 weight inside the reconstruction term
    double lambda_c = 0.1;      // weight of the contrastive term
    double omega = 1.0;         // margin
    std::size_t num_negatives = 4;
    ContrastMode contrast = ContrastMode::Frobenius;

    void validate() const;
};

/// (1/n) Σ_τ ( ‖Y_τ − Y′_τ‖²_F + λ‖Y_τ − Y′_τ‖₁ ), with n the leading axis.
Var reconstruction_loss(Var target, Var prediction, double lambda);
double reconstruction_loss(const Tensor& target, const Tensor& prediction, double lambda);

/// max(‖S⁺ − S‖² − min_i ‖S⁻_i − S‖² + Ω, 0). Empty negatives are an error.
Var contrastive_loss(Var anchor, Var positive, const std::vector<Var>& negatives, double omega);
double contrastive_loss(const Tensor& anchor, const Tensor& positive, const std::vector<Tensor>& negatives,
                        double omega);

/// −⟨S, S⁺⟩ + log(e^{⟨S,S⁺⟩} + Σ_j e^{⟨S,S⁻_j⟩}).
Var infonce_dot_loss(Var anchor, Var positive, const std::vector<Var>& negatives);
double infonce_dot_loss(const Tensor& anchor, const Tensor& positive, const std::vector<Tensor>& negatives);

struct LossTerms {
    Var total;
    Var reconstruction;
    Var contrastive;  // invalid when the contrast mode is None
};

/// L_r + λ_c·L_c.
double net_loss(double reconstruction, double contrastive, double lambda_c);

LossTerms net_loss(Var target, Var prediction, Var anchor, Var positive, const std::vector<Var>& negatives,
                   const LossConfig& cfg);

}  // namespace mapsed
