#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace survey {

struct StratumInfo {
    double N = 0.0;
    double S = 0.0;
    double cost = 1.0;
};

struct Allocation {
    std::vector<int> n;
    /// Variance of the stratified HT total, Σ N_h²/n_h (1 − n_h/N_h) S_h².
    double variance = 0.0;
    /// Strata fixed at n_h = N_h by the cap step.
    std::vector<bool> capped;
};

double stratified_total_variance(std::span<const StratumInfo> strata, std::span<const int> n);

/// Huntington-Hill apportionment with priority values N_h/√(s(s+1)).
Allocation proportional_allocation(std::span<const StratumInfo> strata, int n);

enum class AllocationTarget {
    total,            // Q_h = N_h² S_h²
    mean_difference,  // Q_h = S_h²
};

/// n_h ∝ √(Q_h/c_h) for a fixed total n, with iterative capping at N_h.
Allocation optimal_allocation(std::span<const StratumInfo> strata, int n,
                              AllocationTarget target = AllocationTarget::total);
/// Same proportions with n fixed by the budget C = c0 + Σ c_h n_h.
Allocation optimal_allocation_for_budget(std::span<const StratumInfo> strata, double budget, double fixed_cost,
                                         AllocationTarget target = AllocationTarget::total);

/// n_h ∝ N_h^α, largest-remainder rounding.
Allocation power_allocation(std::span<const StratumInfo> strata, double alpha, int n);

/// Integerizes real shares summing to `total` with bounds [lower_h, upper_h];
/// largest remainders receive the leftover units.
std::vector<int> largest_remainder(std::span<const double> shares, int total, std::span<const int> lower,
                                   std::span<const int> upper);

struct SubsampleSize {
    double m = 0.0;
    /// Set when S_b² ≤ S_w² (or m* ≥ M): take whole clusters, m = M.
    bool one_stage = false;
};
SubsampleSize cluster_subsample_size(double c1, double c2, double Sb2, double Sw2, double M);
/// Large-M form √(c1/c2·(1/ρ − 1)).
double cluster_subsample_size_icc(double c1, double c2, double rho);

struct TwoPhaseStratRates {
    std::vector<double> nu;
    /// r_h/n = W_h ν_h.
    std::vector<double> r_over_n;
    /// Phase-1 size from the budget; empty when no budget is given.
    std::optional<double> n;
    std::vector<double> r;
    /// Strata whose ν_h was capped at 1.
    std::vector<bool> capped;
};
TwoPhaseStratRates two_phase_strat_rates(double c1, std::span<const double> c2h, std::span<const double> W,
                                         std::span<const double> S2h, double S2,
                                         std::optional<double> budget = std::nullopt);
/// Homogeneous case: r/n = √(c1/c2 · 1/(φ − 1)).
double two_phase_homogeneous_ratio(double c1, double c2, double phi);

struct TwoPhaseRegPlan {
    double nu = 0.0;
    double n_continuous = 0.0;
    long n = 0;
    long r = 0;
    /// BᵀS_xxB/n + S_ee/r at the integer plan.
    double variance = 0.0;
    /// Cost of a direct survey of y alone reaching the same variance, c2·σ_y²/V.
    double direct_cost = 0.0;
    bool all_to_y = false;
};
/// r = round(ν·n_continuous), then n = (C − c0 − c2 r)/c1 rounded down.
TwoPhaseRegPlan two_phase_reg_rate(double c1, double c2, double S_ee, double BSB, double budget, double fixed_cost);

struct RepeatedSurveySplit {
    double unmatched = 0.0;  // n_u/n
    double matched = 0.0;    // n_m/n
    double variance_factor = 1.0;
};
RepeatedSurveySplit repeated_survey_fractions(double rho);

struct CallbackRate {
    double nu = 0.0;
    bool capped = false;
};
CallbackRate callback_rate(double c0, double c1, double W1, double c2, double S2, double W2, double S2_2);

enum class BoundaryMethod { dalenius_hodges, sequential, kmeans };
struct BoundaryOptions {
    /// Number of equal-width bins for Dalenius-Hodges; 0 means max(50, 10H).
    int bins = 0;
    int kmeans_restarts = 10;
    std::uint64_t seed = 1;
};
/// H − 1 ascending cut values; unit with value y lies in stratum #{b : b < y}.
std::vector<double> stratum_boundaries(std::span<const double> values, int H, BoundaryMethod method,
                                       const BoundaryOptions& options = {});
std::vector<int> assign_strata(std::span<const double> values, std::span<const double> boundaries);
/// Σ N_h S_h for the stratification induced by `boundaries`.
double boundary_objective(std::span<const double> values, std::span<const double> boundaries);

}  // namespace survey
