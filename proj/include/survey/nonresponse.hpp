#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "survey/calibration.hpp"
#include "survey/design.hpp"
#include "survey/estimate.hpp"
#include "survey/sample.hpp"

namespace survey {

/// Response status of the sampled units, aligned with Sample::units.
struct ResponseData {
    std::vector<int> delta;
    /// Covariates, one row per sampled unit; include a constant column for an intercept.
    Eigen::MatrixXd x;
    /// Study values; entries of nonrespondents are ignored.
    std::vector<double> y;
};

struct PropensityFit {
    Eigen::VectorXd phi;
    /// Fitted p(x_i; φ̂) for every sampled unit.
    std::vector<double> p;
    Eigen::MatrixXd information;
    int iterations = 0;
    /// sup-norm of the weighted score divided by Σ w.
    double score_norm = 0.0;
};

/// Weighted logistic pseudo-MLE by Fisher scoring. Throws NumericalError when
/// ‖φ̂‖∞ exceeds 30 (separation) or scoring does not converge.
PropensityFit fit_propensity(const Sample& sample, const ResponseData& data, double tol = 1e-8, int max_iter = 100);

/// Σ_{A_R} w_i y_i/p̂_i with the linearized variance of ps_variance (b = h).
Estimate ps_estimator(const Sample& sample, const ResponseData& data, std::span<const double> p);

/// V̂₁ + V̂₂. V̂₁ is the design variance of η̂_i = b_iᵀB̂ + δ_i/p̂_i (y_i − b_iᵀB̂)
/// (HT form with `joint`, otherwise simplified); V̂₂ = Σ_{A_R} w (1−p̂)/p̂² (y − bᵀB̂)².
/// `b` defaults to h(x; φ̂) = p̂·x. Diagnostics: "V1", "V2".
Estimate ps_variance(const Sample& sample, const ResponseData& data, std::span<const double> p,
                     const Eigen::MatrixXd* b = nullptr, const InclusionProbs* joint = nullptr);

/// w_i = d_i (Σ_A d x)ᵀ(Σ_{A_R} d x xᵀ)⁻¹ x_i on respondents, 0 on nonrespondents.
std::vector<double> nwa_regression_weights(const Sample& sample, const ResponseData& data);

/// Final weights w_{1i} ω_{2i} (0 for nonrespondents) calibrating Σ_A w₁ x and the
/// debiasing total Σ_A w₁ g(1/p̂) c, with ω₂ = g⁻¹(λᵀẑ/c). Empty `c` means 1.
CalibrationResult gec_nonresponse(const Sample& sample, const ResponseData& data, std::span<const double> p,
                                  const EntropySpec& entropy, std::span<const double> c = {});

}  // namespace survey
