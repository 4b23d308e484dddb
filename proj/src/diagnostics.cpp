#include "survey/diagnostics.hpp"

#include <cmath>
#include <numbers>

#include "survey/error.hpp"

namespace survey {

AnovaSummary anova(const std::vector<std::vector<double>>& clusters) {
    AnovaSummary a;
    a.clusters = clusters.size();
    if (a.clusters < 2) throw DataError("ANOVA needs at least two clusters");
    double total = 0.0;
    for (const auto& c : clusters) {
        if (c.empty()) throw DataError("ANOVA: empty cluster");
        if (c.size() != clusters.front().size()) a.equal_sizes = false;
        a.elements += c.size();
        for (double y : c) total += y;
    }
    const double N = static_cast<double>(a.elements), NI = static_cast<double>(a.clusters);
    if (a.elements <= a.clusters) throw DataError("ANOVA needs some cluster with two or more elements");
    a.mean = total / N;
    a.mean_size = N / NI;
    for (const auto& c : clusters) {
        double s = 0.0;
        for (double y : c) s += y;
        const double M = static_cast<double>(c.size()), ybar = s / M;
        a.SSB += M * (ybar - a.mean) * (ybar - a.mean);
        for (double y : c) {
            a.SSW += (y - ybar) * (y - ybar);
            a.SST += (y - a.mean) * (y - a.mean);
        }
        a.C_star += (M - a.mean_size) * M * ybar * ybar;
    }
    a.C_star /= NI - 1.0;
    a.df_between = NI - 1.0;
    a.df_within = N - NI;
    a.df_total = N - 1.0;
    a.Sb2 = a.SSB / a.df_between;
    a.Sw2 = a.SSW / a.df_within;
    a.S2 = a.SST / a.df_total;
    if (a.SST > 0.0) {
        const double M = a.mean_size;
        a.rho = 1.0 - M / (M - 1.0) * a.SSW / a.SST;
        a.delta = 1.0 - a.Sw2 / a.S2;
    }
    return a;
}

double design_effect(double M, double rho) {
    if (!(M >= 1.0)) throw DataError("cluster size must be at least 1");
    return 1.0 + (M - 1.0) * rho;
}

double design_effect(const AnovaSummary& a) {
    const double N = static_cast<double>(a.elements), NI = static_cast<double>(a.clusters);
    if (!(a.S2 > 0.0)) throw DataError("design effect undefined for a constant population");
    return 1.0 + (N - NI) / (NI - 1.0) * a.delta + a.C_star / (a.mean_size * a.S2);
}

double effective_sample_size(double n, double deff) {
    if (!(deff > 0.0)) throw DataError("design effect must be positive");
    return n / deff;
}

double conservative_sample_size(double d) {
    if (!(d > 0.0)) throw DataError("margin of error must be positive");
    return 1.0 / (d * d);
}

double required_clusters(double n_star, double deff, double M) {
    if (!(M > 0.0)) throw DataError("cluster size must be positive");
    return n_star * deff / M;
}

double required_clusters_for_margin(double d, double M, double rho) {
    return required_clusters(conservative_sample_size(d), design_effect(M, rho), M);
}

long srs_sample_size(double S2, double d, double alpha, double N) {
    if (!(S2 >= 0.0)) throw DataError("S² must be nonnegative");
    if (!(d > 0.0)) throw DataError("margin of error must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw DataError("α must lie in (0,1)");
    const double z = normal_quantile(1.0 - alpha / 2.0);
    const double fpc = (N > 0.0 && std::isfinite(N)) ? S2 / N : 0.0;
    const double denom = (d / z) * (d / z) + fpc;
    const double n = std::ceil(S2 / denom - 1e-9);
    return std::max(1L, static_cast<long>(n));
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw DataError("normal quantile needs p in (0,1)");
    // Acklam's rational approximation, then one Halley step against erfc
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    const double lo = 0.02425;
    double x;
    if (p < lo) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - lo) {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

}  // namespace survey
