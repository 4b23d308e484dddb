#pragma once

#include <span>
#include <vector>

namespace survey {

/// One-way ANOVA of a clustered population.
struct AnovaSummary {
    std::size_t clusters = 0;  // N_I
    std::size_t elements = 0;  // N
    double mean_size = 0.0;    // M̄
    bool equal_sizes = true;
    double mean = 0.0;
    double SST = 0.0, SSB = 0.0, SSW = 0.0;
    double df_between = 0.0, df_within = 0.0, df_total = 0.0;
    double Sb2 = 0.0, Sw2 = 0.0, S2 = 0.0;
    /// 1 − M/(M−1)·SSW/SST, using M̄ when sizes differ.
    double rho = 0.0;
    /// Homogeneity 1 − {SSW/(N−N_I)}/{SST/(N−1)}.
    double delta = 0.0;
    /// (N_I−1)⁻¹ Σ (M_i − M̄) M_i Ȳ_i².
    double C_star = 0.0;
};

AnovaSummary anova(const std::vector<std::vector<double>>& clusters);

/// 1 + (M − 1)ρ; also the two-stage form with M = m.
double design_effect(double M, double rho);
/// Unequal cluster sizes: 1 + (N − N_I)/(N_I − 1)·δ + C*/(M̄ S²).
double design_effect(const AnovaSummary& a);

double effective_sample_size(double n, double deff);
/// Conservative n* = d⁻² for a proportion at 95% (p = ½, z ≈ 2).
double conservative_sample_size(double d);
/// n*·deff/M̄.
double required_clusters(double n_star, double deff, double M);
/// Pipeline d → n* = d⁻² → deff = 1 + (M − 1)ρ → clusters of size M.
double required_clusters_for_margin(double d, double M, double rho);

/// Smallest n with margin of error d at level 1 − α: ⌈S²/((d/z)² + S²/N)⌉, at least 1.
/// N ≤ 0 or infinite means no finite-population correction.
long srs_sample_size(double S2, double d, double alpha, double N = 0.0);

/// Standard normal quantile, accurate to full double precision on (0, 1).
double normal_quantile(double p);
double normal_cdf(double x);

}  // namespace survey
