#include "survey/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "linalg.hpp"
#include "survey/error.hpp"
#include "survey/variance.hpp"

namespace survey {

namespace {

void check_aligned(const Sample& sample, std::size_t size, const char* what) {
    if (size != sample.size())
        throw DataError(std::string(what) + " has " + std::to_string(size) + " values for a sample of " +
                        std::to_string(sample.size()));
}

double weighted_sum(std::span<const double> w, std::span<const double> y) {
    double t = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) t += w[k] * y[k];
    return t;
}

/// Attaches the simplified variance of Σ w z scaled by `scale`², or flags it.
void attach_variance(Estimate& e, const Sample& sample, std::span<const double> z, double scale = 1.0) {
    try {
        e.variance = scale * scale * simplified_variance(sample, z);
    } catch (const DataError&) {
        e.flags.push_back("variance_unavailable");
    }
}

}  // namespace

Estimate ht_total(const Sample& sample, std::span<const double> y) {
    check_aligned(sample, y.size(), "y");
    Estimate e;
    e.method = "ht_total";
    e.value = weighted_sum(sample.weights(), y);
    e.n_effective = static_cast<double>(sample.size());
    attach_variance(e, sample, y);
    return e;
}

Estimate ht_mean(const Sample& sample, std::span<const double> y, double N) {
    if (!(N > 0.0)) throw DataError("population size must be positive");
    Estimate e = ht_total(sample, y);
    e.method = "ht_mean";
    e.value /= N;
    if (e.variance) *e.variance /= N * N;
    return e;
}

Estimate hajek_mean(const Sample& sample, std::span<const double> y) {
    check_aligned(sample, y.size(), "y");
    const auto w = sample.weights();
    const double Nhat = std::accumulate(w.begin(), w.end(), 0.0);
    if (!(Nhat > 0.0)) throw DataError("Hájek mean: empty sample");
    Estimate e;
    e.method = "hajek_mean";
    e.value = weighted_sum(w, y) / Nhat;
    std::vector<double> z(y.size());
    for (std::size_t k = 0; k < y.size(); ++k) z[k] = y[k] - e.value;
    attach_variance(e, sample, z, 1.0 / Nhat);
    return e;
}

Estimate hh_total(const Sample& sample, std::span<const double> y) {
    check_aligned(sample, y.size(), "y");
    for (const auto& s : sample.units)
        if (s.draws <= 0) throw DataError("HH estimator needs a with-replacement sample");
    Estimate e;
    e.method = "hh_total";
    e.value = weighted_sum(sample.weights(), y);
    if (sample.total_draws() >= 2) {
        e.variance = hh_variance(sample, y).variance;
    } else {
        e.flags.push_back("variance_unavailable");
    }
    return e;
}

Estimate ratio_estimator(const Sample& sample, std::span<const double> y, std::span<const double> x, double X_total) {
    check_aligned(sample, y.size(), "y");
    check_aligned(sample, x.size(), "x");
    const auto w = sample.weights();
    const double Yhat = weighted_sum(w, y), Xhat = weighted_sum(w, x);
    if (Xhat == 0.0) throw DataError("ratio estimator: X̂_HT is zero");
    const double R = Yhat / Xhat;
    Estimate e;
    e.method = "ratio";
    e.value = X_total * R;
    std::vector<double> resid(y.size());
    for (std::size_t k = 0; k < y.size(); ++k) resid[k] = y[k] - R * x[k];
    attach_variance(e, sample, resid, X_total / Xhat);
    try {
        e.diagnostics["relative_bias_bound"] = std::sqrt(simplified_variance(sample, x)) / std::abs(Xhat);
    } catch (const DataError&) {
    }
    e.diagnostics["ratio"] = R;
    return e;
}

Estimate domain_mean(const Sample& sample, std::span<const double> y, std::span<const int> in_domain) {
    check_aligned(sample, y.size(), "y");
    check_aligned(sample, in_domain.size(), "domain indicator");
    const auto w = sample.weights();
    double Nd = 0.0, Yd = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k)
        if (in_domain[k]) {
            Nd += w[k];
            Yd += w[k] * y[k];
        }
    if (!(Nd > 0.0)) throw DataError("domain mean: no eligible units in the realized domain");
    Estimate e;
    e.method = "domain_mean";
    e.value = Yd / Nd;
    std::vector<double> z(y.size(), 0.0);
    for (std::size_t k = 0; k < y.size(); ++k)
        if (in_domain[k]) z[k] = y[k] - e.value;
    attach_variance(e, sample, z, 1.0 / Nd);
    e.diagnostics["domain_size"] = Nd;
    return e;
}

double ecdf(const Sample& sample, std::span<const double> y, double t) {
    check_aligned(sample, y.size(), "y");
    const auto w = sample.weights();
    double below = 0.0, total = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) {
        total += w[k];
        if (y[k] <= t) below += w[k];
    }
    if (!(total > 0.0)) throw DataError("ECDF of an empty sample");
    return below / total;
}

Estimate quantile(const Sample& sample, std::span<const double> y, double q) {
    check_aligned(sample, y.size(), "y");
    if (!(q > 0.0 && q <= 1.0)) throw DataError("quantile level must be in (0,1]");
    const auto w = sample.weights();
    std::vector<std::size_t> order(y.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return y[a] < y[b]; });
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    if (!(total > 0.0)) throw DataError("quantile of an empty sample");
    Estimate e;
    e.method = "quantile";
    double cum = 0.0;
    for (std::size_t j = 0; j < order.size(); ++j) {
        cum += w[order[j]];
        // a tie block is complete only at its last member
        if (j + 1 < order.size() && y[order[j + 1]] == y[order[j]]) continue;
        if (cum >= q * total * (1.0 - 1e-12)) {
            e.value = y[order[j]];
            return e;
        }
    }
    e.value = y[order.back()];
    return e;
}

Estimate estimating_equation_solve(const Sample& sample, const EstimatingFunction& U, double theta0, double tol) {
    const auto w = sample.weights();
    auto h = [&](double theta) {
        double s = 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * U(theta, k);
        return s;
    };
    auto sgn = [](double v) { return (v > 0.0) - (v < 0.0); };
    const double h0 = h(theta0);
    double s_point = theta0, other = theta0;  // s_point has strict sign s; other does not
    int s = sgn(h0);
    bool found = false;
    double step = std::max(1.0, std::abs(theta0));
    if (s == 0) {
        // inside a zero set: find where it begins on the left
        for (int i = 0; i < 200 && !found; ++i, step *= 2.0) {
            const double a = theta0 - step;
            if (const int sa = sgn(h(a)); sa != 0) {
                s = sa;
                s_point = a;
                found = true;
            }
        }
        if (!found) {
            Estimate e;
            e.method = "estimating_equation";
            e.value = theta0;
            e.flags.push_back("flat_estimating_function");
            return e;
        }
    } else {
        for (int i = 0; i < 200 && !found; ++i, step *= 2.0) {
            for (double cand : {theta0 + step, theta0 - step}) {
                if (sgn(h(cand)) != s) {
                    other = cand;
                    found = true;
                    break;
                }
            }
        }
        if (!found) throw NumericalError("estimating equation: no sign change found");
    }
    for (int i = 0; i < 2000; ++i) {
        if (std::abs(other - s_point) <= tol * std::max(1.0, std::abs(other))) break;
        const double mid = 0.5 * (s_point + other);
        if (mid == s_point || mid == other) break;
        if (sgn(h(mid)) == s) s_point = mid;
        else other = mid;
    }
    Estimate e;
    e.method = "estimating_equation";
    e.value = other;
    // sandwich variance when the estimating function is smooth at the root
    const double d1 = 1e-5 * std::max(1.0, std::abs(other));
    const double slope1 = (h(other + d1) - h(other - d1)) / (2.0 * d1);
    const double slope2 = (h(other + d1 / 10.0) - h(other - d1 / 10.0)) / (2.0 * d1 / 10.0);
    if (std::isfinite(slope1) && slope1 != 0.0 && std::abs(slope1 - slope2) <= 1e-3 * std::abs(slope1)) {
        std::vector<double> z(w.size());
        for (std::size_t k = 0; k < w.size(); ++k) z[k] = U(other, k);
        attach_variance(e, sample, z, 1.0 / slope1);
    } else {
        e.flags.push_back("variance_unavailable");
    }
    return e;
}

GregResult regression_greg(const Sample& sample, std::span<const double> y, const Eigen::MatrixXd& X,
                           const Eigen::VectorXd& X_totals, std::span<const double> c, bool allow_pinv) {
    const std::size_t n = sample.size();
    check_aligned(sample, y.size(), "y");
    if (static_cast<std::size_t>(X.rows()) != n) throw DataError("GREG: covariate rows do not match the sample");
    if (X_totals.size() != X.cols()) throw DataError("GREG: totals dimension differs from covariates");
    if (!c.empty()) check_aligned(sample, c.size(), "c");
    const auto d = sample.weights();
    const Eigen::Index p = X.cols();
    GregResult r;
    r.fit.c.assign(n, 1.0);
    if (!c.empty()) r.fit.c.assign(c.begin(), c.end());
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd Xhat = Eigen::VectorXd::Zero(p);
    for (std::size_t k = 0; k < n; ++k) {
        if (!(r.fit.c[k] > 0.0)) throw DataError("GREG: c_i must be positive");
        const Eigen::VectorXd x = X.row(k).transpose();
        M += x * x.transpose() / r.fit.c[k];
        b += x * y[k] / r.fit.c[k];
        Xhat += d[k] * x;
    }
    const Eigen::MatrixXd Minv = detail::inverse_symmetric(M, allow_pinv, r.estimate.flags);
    r.fit.coefficients = Minv * b;
    const Eigen::VectorXd lambda = Minv * (X_totals - Xhat);
    r.weights.resize(n);
    r.fit.residuals.resize(n);
    r.fit.g_weights.resize(n);
    Eigen::VectorXd calibrated = Eigen::VectorXd::Zero(p);
    std::vector<double> scores(n);
    for (std::size_t k = 0; k < n; ++k) {
        const Eigen::VectorXd x = X.row(k).transpose();
        r.weights[k] = d[k] + x.dot(lambda) / r.fit.c[k];
        r.fit.residuals[k] = y[k] - x.dot(r.fit.coefficients);
        r.fit.g_weights[k] = r.weights[k] / d[k];
        scores[k] = r.fit.g_weights[k] * r.fit.residuals[k];
        calibrated += r.weights[k] * x;
    }
    r.fit.calibration_residual = p > 0 ? (calibrated - X_totals).cwiseAbs().maxCoeff() : 0.0;
    r.estimate.method = "greg";
    r.estimate.value = weighted_sum(r.weights, y);
    r.projection = X_totals.dot(r.fit.coefficients);
    if (std::any_of(r.weights.begin(), r.weights.end(), [](double v) { return v < 0.0; }))
        r.estimate.flags.push_back("negative_weights");
    attach_variance(r.estimate, sample, scores);

    // IBC: is c_i/π_i = c_i d_i in the column space of X?
    Eigen::VectorXd v(n);
    for (std::size_t k = 0; k < n; ++k) v(k) = r.fit.c[k] * d[k];
    if (p > 0 && n > 0) {
        const Eigen::VectorXd coef = X.completeOrthogonalDecomposition().solve(v);
        const double gap = (X * coef - v).cwiseAbs().maxCoeff();
        r.ibc = gap <= 1e-9 * std::max(1.0, v.cwiseAbs().maxCoeff());
    }
    r.estimate.diagnostics["projection"] = r.projection;
    r.estimate.diagnostics["calibration_residual"] = r.fit.calibration_residual;
    return r;
}

PostStratResult post_stratify(const Sample& sample, std::span<const double> y, std::span<const int> groups,
                              std::span<const double> N_g) {
    check_aligned(sample, y.size(), "y");
    check_aligned(sample, groups.size(), "groups");
    const auto d = sample.weights();
    const std::size_t G = N_g.size();
    std::vector<double> Nhat(G, 0.0), Yhat(G, 0.0);
    for (std::size_t k = 0; k < y.size(); ++k) {
        if (groups[k] < 0 || static_cast<std::size_t>(groups[k]) >= G)
            throw DataError("post-stratification: group label out of range");
        Nhat[groups[k]] += d[k];
        Yhat[groups[k]] += d[k] * y[k];
    }
    for (std::size_t g = 0; g < G; ++g)
        if (N_g[g] > 0.0 && !(Nhat[g] > 0.0))
            throw DataError("post-stratification: group " + std::to_string(g) + " is empty in the sample");
    PostStratResult r;
    r.weights.resize(y.size());
    std::vector<double> z(y.size());
    for (std::size_t k = 0; k < y.size(); ++k) {
        const int g = groups[k];
        const double ratio = N_g[g] / Nhat[g];
        r.weights[k] = d[k] * ratio;
        z[k] = ratio * (y[k] - Yhat[g] / Nhat[g]);
    }
    r.estimate.method = "post_stratified";
    for (std::size_t g = 0; g < G; ++g)
        if (Nhat[g] > 0.0) r.estimate.value += N_g[g] * Yhat[g] / Nhat[g];
    attach_variance(r.estimate, sample, z);
    return r;
}

namespace {

std::vector<double> margin(std::span<const double> w, std::span<const int> groups, std::size_t G) {
    std::vector<double> m(G, 0.0);
    for (std::size_t k = 0; k < w.size(); ++k) m[groups[k]] += w[k];
    return m;
}

double margin_residual(std::span<const double> w, std::span<const int> groups, std::span<const double> totals) {
    if (totals.empty()) return 0.0;
    const auto m = margin(w, groups, totals.size());
    double r = 0.0;
    for (std::size_t g = 0; g < totals.size(); ++g) r = std::max(r, std::abs(m[g] - totals[g]) / std::max(1.0, std::abs(totals[g])));
    return r;
}

void adjust(std::vector<double>& w, std::span<const int> groups, std::span<const double> totals) {
    const auto m = margin(w, groups, totals.size());
    for (std::size_t k = 0; k < w.size(); ++k) w[k] *= totals[groups[k]] / m[groups[k]];
}

void check_groups(std::span<const int> groups, std::span<const double> totals, std::span<const double> d,
                  const char* which) {
    if (groups.size() != d.size()) throw DataError(std::string("raking: ") + which + " labels differ from weights");
    for (int g : groups)
        if (g < 0 || static_cast<std::size_t>(g) >= totals.size())
            throw DataError(std::string("raking: ") + which + " label out of range");
    for (double t : totals)
        if (!(t > 0.0)) throw DataError(std::string("raking: ") + which + " totals must be positive");
    const auto m = margin(d, groups, totals.size());
    for (std::size_t g = 0; g < totals.size(); ++g)
        if (!(m[g] > 0.0))
            throw DataError(std::string("raking: ") + which + " margin " + std::to_string(g) +
                            " is empty but has a positive target");
}

}  // namespace

RakeResult rake(std::span<const double> d, std::span<const int> row_groups, std::span<const int> col_groups,
                std::span<const double> row_totals, std::span<const double> col_totals, double tol, int max_iter) {
    check_groups(row_groups, row_totals, d, "row");
    const bool two_way = !col_totals.empty();
    if (two_way) check_groups(col_groups, col_totals, d, "column");
    RakeResult r;
    r.weights.assign(d.begin(), d.end());
    auto residuals = [&] {
        r.row_residual = margin_residual(r.weights, row_groups, row_totals);
        r.col_residual = two_way ? margin_residual(r.weights, col_groups, col_totals) : 0.0;
        return r.row_residual < tol && r.col_residual < tol;
    };
    if (residuals()) return r;
    for (r.iterations = 1; r.iterations <= max_iter; ++r.iterations) {
        adjust(r.weights, row_groups, row_totals);
        if (two_way) adjust(r.weights, col_groups, col_totals);
        if (residuals()) return r;
    }
    r.iterations = max_iter;
    throw NumericalError("raking did not converge in " + std::to_string(max_iter) +
                         " iterations (row residual " + std::to_string(r.row_residual) + ", column residual " +
                         std::to_string(r.col_residual) + ")");
}

Estimate difference_estimator(const Sample& sample, std::span<const double> y, std::span<const double> y0,
                              double y0_population_total) {
    check_aligned(sample, y.size(), "y");
    check_aligned(sample, y0.size(), "y0");
    std::vector<double> diff(y.size());
    for (std::size_t k = 0; k < y.size(); ++k) diff[k] = y[k] - y0[k];
    Estimate e;
    e.method = "difference";
    e.value = y0_population_total + weighted_sum(sample.weights(), diff);
    attach_variance(e, sample, diff);
    return e;
}

Estimate two_phase_estimate(const Sample& sample2p, const Frame& frame, std::span<const double> y, TwoPhaseMode mode,
                            const TwoPhaseOptions& options) {
    check_aligned(sample2p, y.size(), "y");
    switch (mode) {
        case TwoPhaseMode::dee: {
            Estimate e;
            e.method = "two_phase_dee";
            e.value = weighted_sum(sample2p.weights(), y);
            return e;
        }
        case TwoPhaseMode::stratified: {
            auto e = two_phase_variance(sample2p, frame, y, TwoPhaseVarianceMode::stratified);
            e.method = "two_phase_stratified";
            return e;
        }
        case TwoPhaseMode::regression:
            break;
    }
    if (!sample2p.phase1) throw DataError("two-phase regression needs the phase-1 sample");
    const Sample& s1 = *sample2p.phase1;
    const std::size_t p = options.x_columns.size() + (options.intercept ? 1 : 0);
    if (p == 0) throw DataError("two-phase regression needs covariates");
    if (!options.c.empty()) check_aligned(sample2p, options.c.size(), "c");
    auto xrow = [&](std::size_t unit) {
        Eigen::VectorXd x(p);
        std::size_t col = 0;
        if (options.intercept) x(col++) = 1.0;
        for (auto j : options.x_columns) {
            if (j >= frame[unit].aux.size()) throw DataError("unit '" + frame[unit].id + "' lacks aux column");
            x(col++) = frame[unit].aux[j];
        }
        return x;
    };
    Estimate e;
    e.method = "two_phase_regression";
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
    for (std::size_t k = 0; k < sample2p.size(); ++k) {
        const double w1 = 1.0 / sample2p.units[k].pi;
        const double ck = options.c.empty() ? 1.0 : options.c[k];
        const auto x = xrow(sample2p.units[k].unit);
        A += w1 * x * x.transpose() / ck;
        b += w1 * x * y[k] / ck;
    }
    const Eigen::VectorXd beta = detail::solve_symmetric(A, b, true, e.flags);
    std::map<std::size_t, std::size_t> in2;
    for (std::size_t k = 0; k < sample2p.size(); ++k) in2[sample2p.units[k].unit] = k;
    std::vector<double> eta(s1.size());
    double projection = 0.0, ibc = 0.0;
    for (std::size_t k = 0; k < s1.size(); ++k) {
        const auto unit = s1.units[k].unit;
        const double fit = xrow(unit).dot(beta);
        eta[k] = fit;
        projection += s1.weight(k) * fit;
        if (auto it = in2.find(unit); it != in2.end()) {
            const double pi2 = sample2p.units[it->second].conditional_pi.value_or(1.0);
            eta[k] += (y[it->second] - fit) / pi2;
            ibc += s1.weight(k) * (y[it->second] - fit) / pi2;
        }
        e.value += s1.weight(k) * eta[k];
    }
    e.diagnostics["projection"] = projection;
    e.diagnostics["ibc_residual"] = ibc;
    attach_variance(e, s1, eta);
    return e;
}

CombinedTotals nonnested_combine(const Eigen::VectorXd& X1, const Eigen::VectorXd& X2, const Eigen::MatrixXd& V1,
                                 const Eigen::MatrixXd& V2) {
    if (X1.size() != X2.size() || V1.rows() != X1.size() || V2.rows() != X1.size())
        throw DataError("non-nested combination: dimension mismatch");
    std::vector<std::string> flags;
    CombinedTotals c;
    c.W = V2 * detail::inverse_symmetric(V1 + V2, false, flags);
    c.X_c = c.W * X1 + (Eigen::MatrixXd::Identity(X1.size(), X1.size()) - c.W) * X2;
    return c;
}

Estimate nonnested_regression(const Sample& sample2, std::span<const double> y, const Eigen::MatrixXd& X,
                              const CombinedTotals& combined, const Eigen::MatrixXd& V1, std::span<const double> q) {
    const std::size_t n = sample2.size();
    check_aligned(sample2, y.size(), "y");
    if (static_cast<std::size_t>(X.rows()) != n) throw DataError("non-nested regression: covariate rows differ");
    if (!q.empty()) check_aligned(sample2, q.size(), "q");
    const auto d = sample2.weights();
    const Eigen::Index p = X.cols();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p), X2 = Eigen::VectorXd::Zero(p);
    double Y2 = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double qk = q.empty() ? 1.0 : q[k];
        const Eigen::VectorXd x = X.row(k).transpose();
        A += x * x.transpose() / qk;
        b += x * y[k] / qk;
        X2 += d[k] * x;
        Y2 += d[k] * y[k];
    }
    Estimate e;
    e.method = "nonnested_regression";
    const Eigen::VectorXd beta = detail::solve_symmetric(A, b, true, e.flags);
    e.value = Y2 + (combined.X_c - X2).dot(beta);
    const Eigen::VectorXd alpha = combined.W * beta;
    std::vector<double> u(n);
    for (std::size_t k = 0; k < n; ++k) u[k] = y[k] - X.row(k).dot(alpha);
    try {
        e.variance = alpha.dot(V1 * alpha) + simplified_variance(sample2, u);
    } catch (const DataError&) {
        e.flags.push_back("variance_unavailable");
    }
    return e;
}

Estimate composite(const Estimate& e1, const Estimate& e2, double cov, std::optional<double> alpha) {
    Estimate e;
    e.method = "composite";
    double a = 0.0;
    if (alpha) {
        a = *alpha;
    } else {
        if (!e1.variance || !e2.variance) throw DataError("composite: optimal α needs both variances");
        const double denom = *e1.variance + *e2.variance - 2.0 * cov;
        if (!(denom > 0.0)) throw NumericalError("composite: V1 + V2 − 2cov is not positive");
        a = (*e2.variance - cov) / denom;
    }
    e.value = a * e1.value + (1.0 - a) * e2.value;
    if (e1.variance && e2.variance)
        e.variance = a * a * *e1.variance + (1.0 - a) * (1.0 - a) * *e2.variance + 2.0 * a * (1.0 - a) * cov;
    e.diagnostics["alpha"] = a;
    return e;
}

}  // namespace survey
