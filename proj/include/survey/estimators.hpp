#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "survey/estimate.hpp"
#include "survey/frame.hpp"
#include "survey/sample.hpp"

namespace survey {

// Value spans are aligned with sample.units. Unless noted, the variance
// attached to an estimate is the simplified (ultimate-cluster) variance of
// the estimator's linearized scores.

Estimate ht_total(const Sample& sample, std::span<const double> y);
Estimate ht_mean(const Sample& sample, std::span<const double> y, double N);
Estimate hajek_mean(const Sample& sample, std::span<const double> y);
/// n⁻¹ Σ_k y/p over draws; requires a with-replacement sample.
Estimate hh_total(const Sample& sample, std::span<const double> y);

/// X·Ŷ_HT/X̂_HT. diagnostics["relative_bias_bound"] holds the estimated CV(X̂_HT).
Estimate ratio_estimator(const Sample& sample, std::span<const double> y, std::span<const double> x, double X_total);

/// Σ δ y w / Σ δ w with linearized scores δ(y − Ȳ_d)/N̂_d.
Estimate domain_mean(const Sample& sample, std::span<const double> y, std::span<const int> in_domain);

/// F̂(t) = Σ w 1{y ≤ t} / Σ w.
double ecdf(const Sample& sample, std::span<const double> y, double t);
/// inf{t : F̂(t) ≥ q}.
Estimate quantile(const Sample& sample, std::span<const double> y, double q);

/// U(θ, k) for sample position k.
using EstimatingFunction = std::function<double(double theta, std::size_t k)>;
/// Root of Σ w U(θ; y) = 0 by bracketing from θ0 and bisection. For step
/// functions it converges to the boundary point where the sum leaves its
/// initial sign (the infimum convention of `quantile`).
Estimate estimating_equation_solve(const Sample& sample, const EstimatingFunction& U, double theta0,
                                   double tol = 1e-10);

struct RegressionFit {
    Eigen::VectorXd coefficients;
    std::vector<double> residuals;
    std::vector<double> g_weights;
    std::vector<double> c;
    /// sup-norm of Σ ω x − X.
    double calibration_residual = 0.0;
};

struct GregResult {
    Estimate estimate;
    RegressionFit fit;
    /// ω_i = d_i + (X − X̂_HT)ᵀ(Σ x xᵀ/c)⁻¹ x_i/c_i; may be negative.
    std::vector<double> weights;
    /// True when c_i/π_i lies in the span of x (projection form equals the debiased form).
    bool ibc = false;
    /// Σ_U x̂ᵀβ̂ = Xᵀβ̂.
    double projection = 0.0;
};
/// Debiased GREG Ŷ_HT + (X − X̂_HT)ᵀβ̂_c with β̂_c = (Σ_A x xᵀ/c)⁻¹ Σ_A x y/c.
/// Rows of `X` are sample units. Variance uses the residuals g_i e_i.
GregResult regression_greg(const Sample& sample, std::span<const double> y, const Eigen::MatrixXd& X,
                           const Eigen::VectorXd& X_totals, std::span<const double> c, bool allow_pinv = true);

struct PostStratResult {
    Estimate estimate;
    std::vector<double> weights;
};
/// Σ_g N_g Ŷ_g/N̂_g with weights d·N_g/N̂_g. Groups are 0..G−1.
PostStratResult post_stratify(const Sample& sample, std::span<const double> y, std::span<const int> groups,
                              std::span<const double> N_g);

struct RakeResult {
    std::vector<double> weights;
    int iterations = 0;
    double row_residual = 0.0;
    double col_residual = 0.0;
};
/// Iterative proportional fitting on two margins. Empty `col_groups` means a
/// one-way adjustment.
RakeResult rake(std::span<const double> d, std::span<const int> row_groups, std::span<const int> col_groups,
                std::span<const double> row_totals, std::span<const double> col_totals, double tol = 1e-8,
                int max_iter = 500);

/// Σ_U y0 + Σ_A (y − y0)/π.
Estimate difference_estimator(const Sample& sample, std::span<const double> y, std::span<const double> y0,
                              double y0_population_total);

enum class TwoPhaseMode { dee, stratified, regression };
struct TwoPhaseOptions {
    std::vector<std::size_t> x_columns;
    bool intercept = true;
    /// Working c_i per phase-2 unit; empty means 1.
    std::vector<double> c;
};
/// dee: Σ_{A2} y/(π1 π2|1) (total). stratified: Σ w_h ȳ_h2 (mean, groups from
/// the phase-2 rule). regression: Σ_{A1} w1 xᵀβ̂₂ + Σ_{A2} w1/π2|1 (y − xᵀβ̂₂) (total);
/// diagnostics["ibc_residual"] holds Σ_{A2} w1/π2|1 (y − xᵀβ̂₂).
Estimate two_phase_estimate(const Sample& sample2p, const Frame& frame, std::span<const double> y, TwoPhaseMode mode,
                            const TwoPhaseOptions& options = {});

struct CombinedTotals {
    Eigen::VectorXd X_c;
    Eigen::MatrixXd W;
};
/// X_c = W X̂₁ + (I − W) X̂₂ with W = V₂(V₁ + V₂)⁻¹.
CombinedTotals nonnested_combine(const Eigen::VectorXd& X1, const Eigen::VectorXd& X2, const Eigen::MatrixXd& V1,
                                 const Eigen::MatrixXd& V2);
/// Ŷ₂ + (X_c − X̂₂)ᵀβ̂_q on sample 2 (rows of `X` are its units). Variance
/// α̂ᵀV₁α̂ + V̂(û₂) with α̂ = Wβ̂_q.
Estimate nonnested_regression(const Sample& sample2, std::span<const double> y, const Eigen::MatrixXd& X,
                              const CombinedTotals& combined, const Eigen::MatrixXd& V1,
                              std::span<const double> q = {});

/// α e1 + (1 − α) e2; α defaults to (V2 − cov)/(V1 + V2 − 2cov).
Estimate composite(const Estimate& e1, const Estimate& e2, double cov, std::optional<double> alpha = std::nullopt);

}  // namespace survey
