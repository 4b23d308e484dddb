#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "survey/design.hpp"
#include "survey/estimate.hpp"
#include "survey/frame.hpp"
#include "survey/sample.hpp"

namespace survey {

enum class HtForm { ht, syg };

/// HT total with its unbiased variance estimate. `joint` is indexed by frame
/// position; SYG needs a fixed-size design (checked from Σ_j π_ij = nπ_i).
/// A negative HT-form estimate is returned with flag "negative_variance".
Estimate ht_variance_est(const Sample& sample, std::span<const double> y, const InclusionProbs& joint,
                         HtForm form = HtForm::ht);

/// Ultimate-cluster (simplified) variance of Σ w_k z_k: PSU totals are grouped
/// by (stratum, psu), each with-replacement draw counts as its own PSU, and
/// each stratum contributes n_h/(n_h−1) Σ (t_hi − t̄_h)². Throws if a stratum
/// has a single PSU.
double simplified_variance(const Sample& sample, std::span<const double> z);
/// HT total of y with the simplified variance.
Estimate simplified_variance_estimate(const Sample& sample, std::span<const double> y);

/// HH total with the unbiased variance (1/n)(1/(n−1)) Σ (z_k − z̄)², z_k = y/p per draw.
Estimate hh_variance(const Sample& sample, std::span<const double> y);

/// Variance of a linearized statistic from its residuals: HT/SYG with `joint`
/// when given, otherwise simplified.
double linearized_variance(const Sample& sample, std::span<const double> residuals,
                           const InclusionProbs* joint = nullptr);

/// (1/G)(1/(G−1)) Σ (θ̂_k − θ̄)² with θ̂_RG = θ̄.
Estimate random_group_variance(std::span<const double> replicates);

enum class JackknifeStructure { iid, stratified_psu, grouped };

/// Replicate weights with the variance multiplier of each replicate.
struct ReplicateWeights {
    std::vector<std::vector<double>> weights;
    std::vector<double> factor;
};

/// Delete-one-PSU weights: remaining PSUs in the stratum are scaled by n_h/(n_h−1).
/// `grouped` assigns PSUs round-robin to `groups` groups and deletes one group at a time.
ReplicateWeights jackknife_weights(const Sample& sample, JackknifeStructure structure, int groups = 0);

using WeightedStatistic = std::function<double(std::span<const double> weights)>;

struct JackknifeOptions {
    JackknifeStructure structure = JackknifeStructure::iid;
    int groups = 0;
    /// Multiply each stratum's term by 1 − n_h/N_h (conservative without it).
    std::vector<double> stratum_fpc;
};
Estimate jackknife_variance(const Sample& sample, const WeightedStatistic& statistic,
                            const JackknifeOptions& options = {});

/// ±1 matrix with MᵀM = G·I. Orders 1, 2, the order-4 matrix printed in the
/// text and its Sylvester doublings.
struct HadamardMatrix {
    int order = 0;
    std::vector<int> entries;  // row-major

    int operator()(int row, int col) const { return entries[row * order + col]; }
};
HadamardMatrix make_hadamard(int order);
/// Smallest supported order ≥ H + 1.
HadamardMatrix hadamard_for_strata(int H);

/// Half-sample replicates θ_(g) = Σ W_h(δ y_h1 + (1−δ) y_h2), δ from column h+1 of
/// replicate row g, and V = G⁻¹ Σ (θ_(g) − θ̂).
Estimate brr_linear(std::span<const std::array<double, 2>> pairs, std::span<const double> W,
                    const HadamardMatrix& hadamard);
/// BRR on a two-PSU-per-stratum sample with replicate weights 2w / 0.
Estimate brr_variance(const Sample& sample, const WeightedStatistic& statistic, const HadamardMatrix& hadamard);
ReplicateWeights brr_weights(const Sample& sample, const HadamardMatrix& hadamard);

/// PSU-level HT variance of Σ Ŷ_i/π_Ii plus Σ V̂_i/π_Ii. `pi_joint` is the
/// n_I × n_I joint matrix among selected PSUs (row-major).
Estimate two_stage_variance(std::span<const double> Yhat, std::span<const double> Vhat, std::span<const double> pi,
                            std::span<const double> pi_joint);
/// Within-cluster SRS estimates: Ŷ_i = M_i ȳ_i, V̂_i = M_i²/m_i (1 − m_i/M_i) s_i².
struct ClusterEstimate {
    double total = 0.0;
    double variance = 0.0;
};
ClusterEstimate srs_cluster_estimate(double M, std::span<const double> y);

enum class TwoPhaseVarianceMode { stratified, regression_reverse };
struct TwoPhaseVarianceOptions {
    std::vector<std::size_t> x_columns;
    bool intercept = true;
    /// Phase-1 sampling fraction applied as (1 − f) to the phase-1 term.
    double phase1_fraction = 0.0;
    /// Add the bias correction for Poisson phase-2 selection.
    bool poisson_phase2 = false;
};
/// Stratified mode returns the mean Σ w_h ȳ_h2 with variance
/// n⁻¹ Σ w_h (ȳ_h2 − Ȳ)² + Σ r_h⁻¹ w_h² s_h2²; regression mode returns the
/// total with the η̂-based variance over phase 1.
Estimate two_phase_variance(const Sample& sample2p, const Frame& frame, std::span<const double> y,
                            TwoPhaseVarianceMode mode, const TwoPhaseVarianceOptions& options = {});

}  // namespace survey
