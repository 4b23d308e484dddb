#include "survey/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "linalg.hpp"
#include "survey/error.hpp"

namespace survey {

EntropySpec::EntropySpec(EntropyKind kind, double param) : kind_(kind), param_(param) {
    if (kind_ == EntropyKind::pseudo_huber) {
        if (param_ == 0.0) param_ = 1.0;
        if (!(param_ > 0.0)) throw DataError("pseudo-Huber M must be positive");
    }
    if (kind_ == EntropyKind::renyi && (param_ == 0.0 || param_ == -1.0 || !std::isfinite(param_)))
        throw DataError("Rényi α must differ from 0 and -1");
}

EntropySpec EntropySpec::parse(const std::string& text) {
    const auto colon = text.find(':');
    const std::string key = text.substr(0, colon);
    double param = 0.0;
    if (colon != std::string::npos) {
        try {
            param = std::stod(text.substr(colon + 1));
        } catch (const std::exception&) {
            throw DataError("bad entropy parameter in '" + text + "'");
        }
    }
    if (key == "squared" || key == "chi_square") return EntropySpec(EntropyKind::squared);
    if (key == "kl" || key == "kullback_leibler") return EntropySpec(EntropyKind::kullback_leibler);
    if (key == "shifted_kl") return EntropySpec(EntropyKind::shifted_kl);
    if (key == "el" || key == "empirical_likelihood") return EntropySpec(EntropyKind::empirical_likelihood);
    if (key == "et" || key == "exponential_tilting") return EntropySpec(EntropyKind::exponential_tilting);
    if (key == "cross_entropy") return EntropySpec(EntropyKind::cross_entropy);
    if (key == "hellinger") return EntropySpec(EntropyKind::hellinger);
    if (key == "squared_hellinger") return EntropySpec(EntropyKind::squared_hellinger);
    if (key == "pseudo_huber") return EntropySpec(EntropyKind::pseudo_huber, param);
    if (key == "inverse") return EntropySpec(EntropyKind::inverse);
    if (key == "renyi") {
        if (colon == std::string::npos) throw DataError("renyi needs α, e.g. renyi:0.5");
        return EntropySpec(EntropyKind::renyi, param);
    }
    throw DataError("unknown entropy '" + text + "'");
}

std::vector<EntropySpec> EntropySpec::all() {
    return {EntropySpec(EntropyKind::squared),           EntropySpec(EntropyKind::kullback_leibler),
            EntropySpec(EntropyKind::shifted_kl),        EntropySpec(EntropyKind::empirical_likelihood),
            EntropySpec(EntropyKind::exponential_tilting), EntropySpec(EntropyKind::cross_entropy),
            EntropySpec(EntropyKind::hellinger),         EntropySpec(EntropyKind::squared_hellinger),
            EntropySpec(EntropyKind::pseudo_huber, 1.0), EntropySpec(EntropyKind::inverse),
            EntropySpec(EntropyKind::renyi, 0.5)};
}

std::string EntropySpec::name() const {
    switch (kind_) {
        case EntropyKind::squared: return "squared";
        case EntropyKind::kullback_leibler: return "kullback_leibler";
        case EntropyKind::shifted_kl: return "shifted_kl";
        case EntropyKind::empirical_likelihood: return "empirical_likelihood";
        case EntropyKind::exponential_tilting: return "exponential_tilting";
        case EntropyKind::cross_entropy: return "cross_entropy";
        case EntropyKind::hellinger: return "hellinger";
        case EntropyKind::squared_hellinger: return "squared_hellinger";
        case EntropyKind::pseudo_huber: return "pseudo_huber:" + std::to_string(param_);
        case EntropyKind::inverse: return "inverse";
        case EntropyKind::renyi: return "renyi:" + std::to_string(param_);
    }
    return "?";
}

bool EntropySpec::in_weight_domain(double w) const {
    if (!std::isfinite(w)) return false;
    switch (kind_) {
        case EntropyKind::squared:
        case EntropyKind::pseudo_huber: return true;
        case EntropyKind::shifted_kl:
        case EntropyKind::cross_entropy: return w > 1.0;
        default: return w > 0.0;
    }
}

bool EntropySpec::in_dual_domain(double nu) const {
    if (!std::isfinite(nu)) return false;
    switch (kind_) {
        case EntropyKind::squared:
        case EntropyKind::kullback_leibler:
        case EntropyKind::shifted_kl:
        case EntropyKind::exponential_tilting: return true;
        case EntropyKind::empirical_likelihood:
        case EntropyKind::cross_entropy:
        case EntropyKind::hellinger:
        case EntropyKind::inverse: return nu < 0.0;
        case EntropyKind::squared_hellinger: return nu < 1.0;
        case EntropyKind::pseudo_huber: return std::abs(nu) < param_;
        case EntropyKind::renyi: return param_ * nu > 0.0;
    }
    return false;
}

double EntropySpec::G(double w) const {
    switch (kind_) {
        case EntropyKind::squared: return 0.5 * w * w;
        case EntropyKind::kullback_leibler: return w * std::log(w);
        case EntropyKind::shifted_kl: return (w - 1.0) * std::log(w - 1.0) - (w - 1.0);
        case EntropyKind::empirical_likelihood: return -std::log(w);
        case EntropyKind::exponential_tilting: return w * std::log(w) - w;
        case EntropyKind::cross_entropy: return (w - 1.0) * std::log(w - 1.0) - w * std::log(w);
        case EntropyKind::hellinger: return -4.0 * std::sqrt(w);
        case EntropyKind::squared_hellinger: return (std::sqrt(w) - 1.0) * (std::sqrt(w) - 1.0);
        case EntropyKind::pseudo_huber: {
            const double M = param_;
            return M * M * (std::sqrt(1.0 + (w / M) * (w / M)) - 1.0);
        }
        case EntropyKind::inverse: return 0.5 / w;
        case EntropyKind::renyi: return std::pow(w, param_ + 1.0) / (param_ * (param_ + 1.0));
    }
    return 0.0;
}

double EntropySpec::g(double w) const {
    switch (kind_) {
        case EntropyKind::squared: return w;
        case EntropyKind::kullback_leibler: return 1.0 + std::log(w);
        case EntropyKind::shifted_kl: return std::log(w - 1.0);
        case EntropyKind::empirical_likelihood: return -1.0 / w;
        case EntropyKind::exponential_tilting: return std::log(w);
        case EntropyKind::cross_entropy: return std::log1p(-1.0 / w);
        case EntropyKind::hellinger: return -2.0 / std::sqrt(w);
        case EntropyKind::squared_hellinger: return 1.0 - 1.0 / std::sqrt(w);
        case EntropyKind::pseudo_huber: {
            const double M = param_;
            return w / std::sqrt(1.0 + (w / M) * (w / M));
        }
        case EntropyKind::inverse: return -0.5 / (w * w);
        case EntropyKind::renyi: return std::pow(w, param_) / param_;
    }
    return 0.0;
}

double EntropySpec::g_inv(double nu) const {
    switch (kind_) {
        case EntropyKind::squared: return nu;
        case EntropyKind::kullback_leibler: return std::exp(nu - 1.0);
        case EntropyKind::shifted_kl: return 1.0 + std::exp(nu);
        case EntropyKind::empirical_likelihood: return -1.0 / nu;
        case EntropyKind::exponential_tilting: return std::exp(nu);
        case EntropyKind::cross_entropy: return -1.0 / std::expm1(nu);
        case EntropyKind::hellinger: return 4.0 / (nu * nu);
        case EntropyKind::squared_hellinger: return 1.0 / ((1.0 - nu) * (1.0 - nu));
        case EntropyKind::pseudo_huber: {
            const double M = param_;
            return nu / std::sqrt(1.0 - (nu / M) * (nu / M));
        }
        case EntropyKind::inverse: return 1.0 / std::sqrt(-2.0 * nu);
        case EntropyKind::renyi: return std::pow(param_ * nu, 1.0 / param_);
    }
    return 0.0;
}

double EntropySpec::rho(double nu) const {
    switch (kind_) {
        case EntropyKind::squared: return 0.5 * nu * nu;
        case EntropyKind::kullback_leibler: return std::exp(nu - 1.0);
        case EntropyKind::shifted_kl: return nu + std::exp(nu);
        case EntropyKind::empirical_likelihood: return -1.0 - std::log(-nu);
        case EntropyKind::exponential_tilting: return std::exp(nu);
        case EntropyKind::cross_entropy: return nu - std::log(-std::expm1(nu));
        case EntropyKind::hellinger: return -4.0 / nu;
        case EntropyKind::squared_hellinger: return nu / (1.0 - nu);
        case EntropyKind::pseudo_huber: {
            const double M = param_;
            return M * M - M * std::sqrt(M * M - nu * nu);
        }
        case EntropyKind::inverse: return -std::sqrt(-2.0 * nu);
        case EntropyKind::renyi: return std::pow(param_ * nu, (param_ + 1.0) / param_) / (param_ + 1.0);
    }
    return 0.0;
}

double EntropySpec::rho_second(double nu) const {
    switch (kind_) {
        case EntropyKind::squared: return 1.0;
        case EntropyKind::kullback_leibler: return std::exp(nu - 1.0);
        case EntropyKind::shifted_kl:
        case EntropyKind::exponential_tilting: return std::exp(nu);
        case EntropyKind::empirical_likelihood: return 1.0 / (nu * nu);
        case EntropyKind::cross_entropy: {
            const double den = std::expm1(nu);
            return std::exp(nu) / (den * den);
        }
        case EntropyKind::hellinger: return -8.0 / (nu * nu * nu);
        case EntropyKind::squared_hellinger: return 2.0 / std::pow(1.0 - nu, 3);
        case EntropyKind::pseudo_huber: {
            const double M = param_;
            return std::pow(1.0 - (nu / M) * (nu / M), -1.5);
        }
        case EntropyKind::inverse: return std::pow(-2.0 * nu, -1.5);
        case EntropyKind::renyi: return std::pow(param_ * nu, (1.0 - param_) / param_);
    }
    return 0.0;
}

std::vector<double> debias_column(const EntropySpec& entropy, std::span<const double> d, std::span<const double> v) {
    std::vector<double> col(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (!entropy.in_weight_domain(d[i]))
            throw DataError("base weight " + std::to_string(d[i]) + " lies outside the domain of " + entropy.name());
        col[i] = entropy.g(d[i]) * (v.empty() ? 1.0 : v[i]);
    }
    return col;
}

namespace {

struct Prepared {
    std::size_t n = 0;
    Eigen::MatrixXd z;
    Eigen::VectorXd T;
    std::vector<double> v, mult, offset;
};

Prepared prepare(const CalibrationProblem& pr) {
    Prepared p;
    p.n = pr.d.size();
    if (static_cast<std::size_t>(pr.z.rows()) != p.n) throw DataError("calibration: constraint rows differ from weights");
    if (pr.z.cols() != pr.targets.size()) throw DataError("calibration: dim(z) differs from dim(T)");
    if (!pr.v.empty() && pr.v.size() != p.n) throw DataError("calibration: scale factors differ from weights");
    if (!pr.a.empty() && pr.a.size() != p.n) throw DataError("calibration: multipliers differ from weights");
    for (std::size_t i = 0; i < p.n; ++i) {
        if (!(pr.d[i] > 0.0)) throw DataError("calibration: base weight " + std::to_string(i) + " is not positive");
        if (!pr.v.empty() && !(pr.v[i] > 0.0)) throw DataError("calibration: scale factors must be positive");
    }
    p.v = pr.v.empty() ? std::vector<double>(p.n, 1.0) : pr.v;
    p.z = pr.z;
    p.T = pr.targets;
    if (pr.debias_target) {
        const auto col = debias_column(pr.entropy, pr.d, p.v);
        p.z.conservativeResize(Eigen::NoChange, p.z.cols() + 1);
        for (std::size_t i = 0; i < p.n; ++i) p.z(i, p.z.cols() - 1) = col[i];
        p.T.conservativeResize(p.T.size() + 1);
        p.T(p.T.size() - 1) = *pr.debias_target;
    }
    const auto& e = pr.entropy;
    p.mult.resize(p.n);
    p.offset.resize(p.n);
    for (std::size_t i = 0; i < p.n; ++i) {
        const double a = pr.a.empty() ? 1.0 : pr.a[i];
        switch (pr.form) {
            case CalibrationForm::anchored:
                if (!e.in_weight_domain(pr.d[i]))
                    throw DataError("base weight outside the domain of " + e.name());
                p.mult[i] = a;
                p.offset[i] = e.g(pr.d[i]);
                break;
            case CalibrationForm::divergence:
                if (!e.in_weight_domain(1.0)) throw DataError(e.name() + " is undefined at ω/d = 1");
                p.mult[i] = a * pr.d[i];
                p.offset[i] = e.g(1.0);
                break;
            case CalibrationForm::free:
                p.mult[i] = a;
                p.offset[i] = 0.0;
                break;
        }
    }
    return p;
}

}  // namespace

CalibrationResult solve_chi_square(const CalibrationProblem& problem) {
    CalibrationProblem sq = problem;
    sq.entropy = EntropySpec(EntropyKind::squared);
    const Prepared p = prepare(sq);
    const Eigen::Index k = p.z.cols();
    CalibrationResult r;
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd zhat = Eigen::VectorXd::Zero(k);
    for (std::size_t i = 0; i < p.n; ++i) {
        const Eigen::VectorXd z = p.z.row(i).transpose();
        M += z * z.transpose() / p.v[i];
        zhat += problem.d[i] * z;
    }
    const Eigen::MatrixXd Minv = detail::inverse_symmetric(M, false, r.flags);
    r.lambda = Minv * (p.T - zhat);
    r.weights.resize(p.n);
    Eigen::VectorXd achieved = Eigen::VectorXd::Zero(k);
    for (std::size_t i = 0; i < p.n; ++i) {
        const Eigen::VectorXd z = p.z.row(i).transpose();
        r.weights[i] = problem.d[i] + z.dot(r.lambda) / p.v[i];
        achieved += r.weights[i] * z;
    }
    r.residual = k > 0 ? (achieved - p.T).cwiseAbs().maxCoeff() : 0.0;
    if (std::any_of(r.weights.begin(), r.weights.end(), [](double w) { return w < 0.0; }))
        r.flags.push_back("negative_weights");
    return r;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct DualState {
    double value = kInf;
    Eigen::VectorXd grad;
    std::vector<double> nu;
};

DualState evaluate(const Prepared& p, const EntropySpec& e, const Eigen::VectorXd& lambda, bool need_grad) {
    DualState s;
    s.nu.resize(p.n);
    double F = -lambda.dot(p.T);
    if (need_grad) s.grad = -p.T;
    for (std::size_t i = 0; i < p.n; ++i) {
        const double nu = p.offset[i] + p.z.row(i).dot(lambda) / p.v[i];
        if (!e.in_dual_domain(nu)) return DualState{};
        s.nu[i] = nu;
        F += p.mult[i] * p.v[i] * e.rho(nu);
        if (need_grad) s.grad += p.mult[i] * e.g_inv(nu) * p.z.row(i).transpose();
    }
    if (!std::isfinite(F)) return DualState{};
    s.value = F;
    return s;
}

Eigen::VectorXd start_point(const Prepared& p, const CalibrationProblem& pr) {
    const Eigen::Index k = p.z.cols();
    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(k);
    if (pr.form != CalibrationForm::free) return lambda;
    if (pr.debias_target) {
        // λ = (0, …, 0, 1) reproduces ω = d exactly
        lambda(k - 1) = 1.0;
        return lambda;
    }
    // least squares for zᵀλ/v ≈ g(d)
    Eigen::VectorXd target(p.n);
    Eigen::MatrixXd zs(p.n, k);
    for (std::size_t i = 0; i < p.n; ++i) {
        target(i) = pr.entropy.g(pr.d[i]);
        zs.row(i) = p.z.row(i) / p.v[i];
    }
    return zs.completeOrthogonalDecomposition().solve(target);
}

}  // namespace

CalibrationResult solve_entropy(const CalibrationProblem& problem) {
    const Prepared p = prepare(problem);
    const auto& e = problem.entropy;
    const Eigen::Index k = p.z.cols();
    CalibrationResult r;
    Eigen::VectorXd lambda = start_point(p, problem);
    DualState cur = evaluate(p, e, lambda, true);
    if (!std::isfinite(cur.value))
        throw NumericalError("calibration: starting point lies outside the domain of " + e.name());
    r.dual_path.push_back(cur.value);
    const double scale = std::max(1.0, p.T.size() > 0 ? p.T.cwiseAbs().maxCoeff() : 1.0);
    auto finish = [&](const DualState& s) {
        r.lambda = lambda;
        r.weights.resize(p.n);
        for (std::size_t i = 0; i < p.n; ++i) r.weights[i] = p.mult[i] * e.g_inv(s.nu[i]);
        Eigen::VectorXd achieved = Eigen::VectorXd::Zero(k);
        for (std::size_t i = 0; i < p.n; ++i) achieved += r.weights[i] * p.z.row(i).transpose();
        r.residual = k > 0 ? (achieved - p.T).cwiseAbs().maxCoeff() : 0.0;
        return r;
    };
    for (r.iterations = 0; r.iterations <= problem.max_iter; ++r.iterations) {
        const double gnorm = k > 0 ? cur.grad.cwiseAbs().maxCoeff() : 0.0;
        if (gnorm < problem.tol) return finish(cur);
        if (r.iterations == problem.max_iter) break;
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(k, k);
        for (std::size_t i = 0; i < p.n; ++i) {
            const Eigen::VectorXd z = p.z.row(i).transpose();
            H += p.mult[i] * e.rho_second(cur.nu[i]) / p.v[i] * z * z.transpose();
        }
        std::vector<std::string> scratch;
        Eigen::VectorXd step;
        try {
            step = -detail::solve_symmetric(H, cur.grad, false, scratch);
        } catch (const NumericalError&) {
            throw NumericalError("calibration: singular Hessian for " + e.name() + ", targets appear infeasible");
        }
        const double slope = cur.grad.dot(step);
        // Near the optimum the predicted decrease drops below the rounding of F;
        // switch to requiring a smaller constraint residual.
        const bool f_unreliable = -slope < 1e-10 * std::max(1.0, std::abs(cur.value));
        double t = 1.0;
        bool accepted = false;
        for (int halving = 0; halving < 60; ++halving, t *= 0.5) {
            const Eigen::VectorXd trial = lambda + t * step;
            DualState next = evaluate(p, e, trial, true);
            if (!std::isfinite(next.value)) continue;
            const bool ok = f_unreliable ? next.grad.cwiseAbs().maxCoeff() < (1.0 - 1e-4 * t) * gnorm
                                         : next.value <= cur.value + 1e-4 * t * slope;
            if (ok) {
                lambda = trial;
                cur = std::move(next);
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            // stalled at rounding level: accept if the constraints are met to working precision
            if (gnorm <= problem.tol * scale) {
                r.flags.push_back("stalled_at_rounding");
                return finish(cur);
            }
            throw NumericalError("calibration: line search failed for " + e.name() +
                                 " (residual " + std::to_string(gnorm) + ")");
        }
        r.dual_path.push_back(cur.value);
        if (lambda.cwiseAbs().maxCoeff() > 1e12)
            throw NumericalError("calibration: dual diverges, targets appear infeasible for " + e.name());
    }
    throw NumericalError("calibration: no convergence in " + std::to_string(problem.max_iter) + " iterations for " +
                         e.name());
}

ImpliedRegression implied_regression(const CalibrationProblem& problem, std::span<const double> y) {
    const Prepared p = prepare(problem);
    if (y.size() != p.n) throw DataError("implied regression: y differs from weights");
    const auto& e = problem.entropy;
    const Eigen::Index k = p.z.cols();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
    for (std::size_t i = 0; i < p.n; ++i) {
        // g′(d) = 1/ρ″(g(d))
        const double q = p.v[i] / e.rho_second(e.g(problem.d[i]));
        const Eigen::VectorXd z = p.z.row(i).transpose();
        A += z * z.transpose() / q;
        b += z * y[i] / q;
    }
    std::vector<std::string> flags;
    ImpliedRegression out;
    out.gamma = detail::solve_symmetric(A, b, true, flags);
    for (std::size_t i = 0; i < p.n; ++i) out.ibc_residual += problem.d[i] * (y[i] - p.z.row(i).dot(out.gamma));
    return out;
}

ConjugateReport conjugate_check(const EntropySpec& entropy, std::span<const double> weight_grid) {
    ConjugateReport rep;
    for (double w : weight_grid) {
        if (!entropy.in_weight_domain(w)) continue;
        const double nu = entropy.g(w);
        if (!entropy.in_dual_domain(nu)) continue;
        const double back = entropy.rho_prime(nu);
        rep.max_inverse_error = std::max(rep.max_inverse_error, std::abs(back - w) / std::max(1.0, std::abs(w)));
        const double rho = entropy.rho(nu);
        const double legendre = nu * back - entropy.G(back);
        rep.max_conjugate_error =
            std::max(rep.max_conjugate_error, std::abs(rho - legendre) / std::max(1.0, std::abs(rho)));
        ++rep.points;
    }
    return rep;
}

}  // namespace survey
