#include "survey/smallarea.hpp"

#include <cmath>

#include "linalg.hpp"
#include "survey/error.hpp"
#include "survey/rng.hpp"

namespace survey {

double FayHerriotModel::synthetic(std::size_t g) const { return data.X.row(g).dot(beta); }

namespace {

void gls(FayHerriotModel& m) {
    const auto& d = m.data;
    const Eigen::Index p = d.X.cols();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
    for (std::size_t g = 0; g < d.direct.size(); ++g) {
        const double w = 1.0 / (m.sigma2_u + d.V[g]);
        const Eigen::VectorXd x = d.X.row(g).transpose();
        A += w * x * x.transpose();
        b += w * x * d.direct[g];
    }
    std::vector<std::string> flags;
    m.beta_cov = detail::inverse_symmetric(A, false, flags);
    m.beta = m.beta_cov * b;
}

/// Root of Σ Z/(s + V) = G − p, or 0 when the left side is already below at s = 0.
double moment_sigma2(const FayHerriotModel& m) {
    const auto& d = m.data;
    const std::size_t G = d.direct.size();
    const double target = static_cast<double>(G) - static_cast<double>(d.X.cols());
    std::vector<double> Z(G);
    double zmax = 0.0, vmax = 0.0;
    for (std::size_t g = 0; g < G; ++g) {
        const double r = d.direct[g] - m.synthetic(g);
        Z[g] = r * r;
        zmax = std::max(zmax, Z[g]);
        vmax = std::max(vmax, d.V[g]);
    }
    auto h = [&](double s) {
        double t = 0.0;
        for (std::size_t g = 0; g < G; ++g) t += Z[g] / (s + d.V[g]);
        return t - target;
    };
    if (h(0.0) <= 0.0) return 0.0;
    double lo = 0.0, hi = std::max(1.0, G * zmax + vmax);
    while (h(hi) > 0.0) hi *= 2.0;
    // h is decreasing in s
    for (int i = 0; i < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++i) {
        const double mid = 0.5 * (lo + hi);
        (h(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

FayHerriotModel fit_fay_herriot(const AreaData& data, double tol, int max_iter) {
    const std::size_t G = data.direct.size();
    if (data.V.size() != G || static_cast<std::size_t>(data.X.rows()) != G)
        throw DataError("area data columns differ in length");
    if (G <= static_cast<std::size_t>(data.X.cols()) + 1)
        throw DataError("Fay-Herriot needs more areas than covariates + 1");
    for (double v : data.V)
        if (!(v > 0.0)) throw DataError("sampling variances must be positive");
    FayHerriotModel m;
    m.data = data;
    m.sigma2_u = 0.0;
    gls(m);
    for (m.iterations = 1; m.iterations <= max_iter; ++m.iterations) {
        const double next = moment_sigma2(m);
        const double change = std::abs(next - m.sigma2_u);
        m.sigma2_u = next;
        gls(m);
        if (change < tol * std::max(1.0, m.sigma2_u)) break;
    }
    if (m.iterations > max_iter)
        throw NumericalError("Fay-Herriot fit did not converge in " + std::to_string(max_iter) + " iterations");
    m.boundary = m.sigma2_u == 0.0;
    m.alpha.resize(G);
    for (std::size_t g = 0; g < G; ++g) m.alpha[g] = m.sigma2_u / (data.V[g] + m.sigma2_u);
    return m;
}

Estimate eblup(const FayHerriotModel& model, std::size_t g) {
    if (g >= model.areas()) throw DataError("area index out of range");
    Estimate e;
    e.method = "eblup";
    const double a = model.alpha[g];
    e.value = a * model.data.direct[g] + (1.0 - a) * model.synthetic(g);
    e.variance = prasad_rao_mse(model, g);
    e.diagnostics["alpha"] = a;
    e.diagnostics["synthetic"] = model.synthetic(g);
    if (model.boundary) e.flags.push_back("sigma2_at_zero");
    return e;
}

double sigma2_variance(const FayHerriotModel& model) {
    double s = 0.0;
    for (double v : model.data.V) s += 1.0 / (model.sigma2_u + v);
    const double G = static_cast<double>(model.areas());
    return 2.0 * G / (s * s);
}

double prasad_rao_mse(const FayHerriotModel& model, std::size_t g) {
    if (g >= model.areas()) throw DataError("area index out of range");
    const double V = model.data.V[g], s2 = model.sigma2_u, a = model.alpha[g];
    const Eigen::VectorXd x = model.data.X.row(g).transpose();
    const double m1 = a * V;
    const double m2 = (1.0 - a) * (1.0 - a) * x.dot(model.beta_cov * x);
    const double dalpha = V / ((s2 + V) * (s2 + V));
    const double var_alpha = dalpha * dalpha * sigma2_variance(model);
    return m1 + m2 + 2.0 * var_alpha * (V + s2);
}

std::vector<double> bootstrap_mse(const FayHerriotModel& model, int B, std::uint64_t seed) {
    if (B < 1) throw DataError("bootstrap needs B ≥ 1");
    const std::size_t G = model.areas();
    const double su = std::sqrt(model.sigma2_u);
    std::vector<double> mse(G, 0.0);
    AreaData boot = model.data;
    std::vector<double> truth(G);
    for (int b = 0; b < B; ++b) {
        RngStream rng(seed, static_cast<std::uint64_t>(b));
        for (std::size_t g = 0; g < G; ++g) {
            truth[g] = model.synthetic(g) + su * rng.normal();
            boot.direct[g] = truth[g] + std::sqrt(model.data.V[g]) * rng.normal();
        }
        const FayHerriotModel refit = fit_fay_herriot(boot);
        for (std::size_t g = 0; g < G; ++g) {
            const double est = refit.alpha[g] * boot.direct[g] + (1.0 - refit.alpha[g]) * refit.synthetic(g);
            mse[g] += (est - truth[g]) * (est - truth[g]);
        }
    }
    for (auto& v : mse) v /= B;
    return mse;
}

Estimate composite_smallarea(double direct, double synthetic, double mse_direct, double mse_synthetic) {
    if (!(mse_direct >= 0.0 && mse_synthetic >= 0.0) || mse_direct + mse_synthetic == 0.0)
        throw DataError("composite weights need nonnegative MSEs, not both zero");
    const double a = mse_synthetic / (mse_direct + mse_synthetic);
    Estimate e;
    e.method = "composite_smallarea";
    e.value = a * direct + (1.0 - a) * synthetic;
    // approximate MSE treating the two errors as independent
    e.variance = a * a * mse_direct + (1.0 - a) * (1.0 - a) * mse_synthetic;
    e.diagnostics["alpha"] = a;
    return e;
}

}  // namespace survey
