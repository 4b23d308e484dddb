#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "survey/estimate.hpp"

namespace survey {

/// Area-level inputs: direct estimates, their (known) sampling variances and
/// area covariate means, one row per area.
struct AreaData {
    std::vector<double> direct;
    std::vector<double> V;
    Eigen::MatrixXd X;
};

struct FayHerriotModel {
    AreaData data;
    Eigen::VectorXd beta;
    /// (Σ X̄X̄ᵀ/(σ̂² + V))⁻¹.
    Eigen::MatrixXd beta_cov;
    double sigma2_u = 0.0;
    /// α̂_g = σ̂²/(V_g + σ̂²).
    std::vector<double> alpha;
    int iterations = 0;
    /// σ̂² was floored at zero.
    bool boundary = false;

    std::size_t areas() const { return data.direct.size(); }
    double synthetic(std::size_t g) const;
};

/// Alternates GLS for β with the moment equation Σ Z_g(β)/(σ² + V_g) = G − p
/// for σ², Z_g = (Ŷ_g − X̄_gᵀβ)², until |Δσ²| < tol.
FayHerriotModel fit_fay_herriot(const AreaData& data, double tol = 1e-10, int max_iter = 500);

/// α̂ Ŷ_g + (1 − α̂) X̄_gᵀβ̂ with the Prasad-Rao MSE as its variance.
Estimate eblup(const FayHerriotModel& model, std::size_t g);

/// Approximate variance of σ̂²: 2G/(Σ (σ̂² + V_g)⁻¹)².
double sigma2_variance(const FayHerriotModel& model);
/// α̂V + (1−α̂)² X̄ᵀV̂(β̂)X̄ + 2V̂(α̂)(V + σ̂²), V̂(α̂) = {V/(σ̂²+V)²}² V̂(σ̂²).
double prasad_rao_mse(const FayHerriotModel& model, std::size_t g);

/// Parametric bootstrap MSE for every area: regenerate Ȳ_g^(b) ~ N(X̄ᵀβ̂, σ̂²),
/// Ŷ_g^(b) ~ N(Ȳ_g^(b), V_g), refit, and average (EBLUP^(b) − Ȳ^(b))².
/// Replicate b uses stream (seed, b).
std::vector<double> bootstrap_mse(const FayHerriotModel& model, int B, std::uint64_t seed);

/// α* = MSE_s/(MSE_d + MSE_s), value α* direct + (1 − α*) synthetic.
Estimate composite_smallarea(double direct, double synthetic, double mse_direct, double mse_synthetic);

}  // namespace survey
