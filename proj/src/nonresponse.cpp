#include "survey/nonresponse.hpp"

#include <cmath>
#include <numeric>

#include "linalg.hpp"
#include "survey/error.hpp"
#include "survey/variance.hpp"

namespace survey {

namespace {

void check(const Sample& sample, const ResponseData& data) {
    const auto n = sample.size();
    if (data.delta.size() != n || static_cast<std::size_t>(data.x.rows()) != n)
        throw DataError("response data is not aligned with the sample");
    if (data.y.size() != n) throw DataError("study values are not aligned with the sample");
    for (std::size_t i = 0; i < n; ++i) {
        if (data.delta[i] != 0 && data.delta[i] != 1) throw DataError("response indicator must be 0 or 1");
        if (data.delta[i] == 1 && !std::isfinite(data.y[i]))
            throw DataError("respondent " + std::to_string(i) + " has no study value");
    }
}

void check_p(std::span<const double> p, std::size_t n) {
    if (p.size() != n) throw DataError("propensities are not aligned with the sample");
    for (double v : p)
        if (!(v > 0.0 && v <= 1.0)) throw DataError("propensities must lie in (0,1]");
}

double logistic(double t) { return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t)); }

}  // namespace

PropensityFit fit_propensity(const Sample& sample, const ResponseData& data, double tol, int max_iter) {
    check(sample, data);
    const auto w = sample.weights();
    const std::size_t n = sample.size();
    const Eigen::Index k = data.x.cols();
    const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
    PropensityFit fit;
    fit.phi = Eigen::VectorXd::Zero(k);
    fit.p.resize(n);
    auto loglik = [&](const Eigen::VectorXd& phi) {
        double l = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double t = data.x.row(i).dot(phi);
            // log p = −log(1+e^{−t}), log(1−p) = −log(1+e^{t})
            l -= w[i] * (data.delta[i] ? std::log1p(std::exp(-t)) : std::log1p(std::exp(t)));
        }
        return l;
    };
    double ll = loglik(fit.phi);
    for (fit.iterations = 0; fit.iterations <= max_iter; ++fit.iterations) {
        Eigen::VectorXd score = Eigen::VectorXd::Zero(k);
        fit.information = Eigen::MatrixXd::Zero(k, k);
        for (std::size_t i = 0; i < n; ++i) {
            const Eigen::VectorXd x = data.x.row(i).transpose();
            fit.p[i] = logistic(x.dot(fit.phi));
            score += w[i] * (data.delta[i] - fit.p[i]) * x;
            fit.information += w[i] * fit.p[i] * (1.0 - fit.p[i]) * x * x.transpose();
        }
        fit.score_norm = score.cwiseAbs().maxCoeff() / wsum;
        if (fit.score_norm < tol) return fit;
        if (fit.iterations == max_iter) break;
        std::vector<std::string> flags;
        const Eigen::VectorXd step = detail::solve_symmetric(fit.information, score, false, flags);
        double t = 1.0;
        Eigen::VectorXd trial;
        double ll_trial = 0.0;
        for (int h = 0; h < 40; ++h, t *= 0.5) {
            trial = fit.phi + t * step;
            ll_trial = loglik(trial);
            if (ll_trial >= ll) break;
        }
        fit.phi = trial;
        ll = ll_trial;
        if (fit.phi.cwiseAbs().maxCoeff() > 30.0)
            throw NumericalError("propensity fit diverges (‖φ‖ > 30): responses are separated by x");
    }
    throw NumericalError("propensity scoring did not converge in " + std::to_string(max_iter) + " iterations");
}

Estimate ps_estimator(const Sample& sample, const ResponseData& data, std::span<const double> p) {
    check(sample, data);
    check_p(p, sample.size());
    Estimate e = ps_variance(sample, data, p);
    e.method = "propensity_score";
    return e;
}

Estimate ps_variance(const Sample& sample, const ResponseData& data, std::span<const double> p,
                     const Eigen::MatrixXd* b, const InclusionProbs* joint) {
    check(sample, data);
    const std::size_t n = sample.size();
    check_p(p, n);
    Eigen::MatrixXd basis(n, data.x.cols());
    if (b) {
        if (static_cast<std::size_t>(b->rows()) != n) throw DataError("b(x) rows differ from the sample");
        basis = *b;
    } else {
        for (std::size_t i = 0; i < n; ++i) basis.row(i) = p[i] * data.x.row(i);
    }
    // h = p̂ x for the logistic model
    const auto w = sample.weights();
    const Eigen::Index k = basis.cols();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
    for (std::size_t i = 0; i < n; ++i) {
        if (!data.delta[i]) continue;
        const double f = w[i] * (1.0 - p[i]) / (p[i] * p[i]);
        const Eigen::VectorXd h = p[i] * data.x.row(i).transpose();
        A += f * h * basis.row(i);
        rhs += f * h * data.y[i];
    }
    Estimate e;
    e.method = "propensity_score";
    const Eigen::VectorXd B = A.isZero(0.0) ? Eigen::VectorXd::Zero(k).eval()
                                            : Eigen::VectorXd(A.completeOrthogonalDecomposition().solve(rhs));
    std::vector<double> eta(n);
    double V2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double fit = basis.row(i).dot(B);
        eta[i] = fit;
        if (data.delta[i]) {
            eta[i] += (data.y[i] - fit) / p[i];
            e.value += w[i] * data.y[i] / p[i];
            V2 += w[i] * (1.0 - p[i]) / (p[i] * p[i]) * (data.y[i] - fit) * (data.y[i] - fit);
        }
    }
    double V1 = 0.0;
    try {
        V1 = linearized_variance(sample, eta, joint);
    } catch (const DataError&) {
        e.flags.push_back("variance_unavailable");
        return e;
    }
    e.variance = V1 + V2;
    e.diagnostics["V1"] = V1;
    e.diagnostics["V2"] = V2;
    return e;
}

std::vector<double> nwa_regression_weights(const Sample& sample, const ResponseData& data) {
    const std::size_t n = sample.size();
    if (data.delta.size() != n || static_cast<std::size_t>(data.x.rows()) != n)
        throw DataError("response data is not aligned with the sample");
    const auto d = sample.weights();
    const Eigen::Index k = data.x.cols();
    Eigen::VectorXd total = Eigen::VectorXd::Zero(k);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(k, k);
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::VectorXd x = data.x.row(i).transpose();
        total += d[i] * x;
        if (data.delta[i]) M += d[i] * x * x.transpose();
    }
    std::vector<std::string> flags;
    const Eigen::VectorXd lambda = detail::solve_symmetric(M, total, false, flags);
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        if (data.delta[i]) out[i] = d[i] * data.x.row(i).dot(lambda);
    return out;
}

CalibrationResult gec_nonresponse(const Sample& sample, const ResponseData& data, std::span<const double> p,
                                  const EntropySpec& entropy, std::span<const double> c) {
    const std::size_t n = sample.size();
    if (data.delta.size() != n || static_cast<std::size_t>(data.x.rows()) != n)
        throw DataError("response data is not aligned with the sample");
    check_p(p, n);
    if (!c.empty() && c.size() != n) throw DataError("c is not aligned with the sample");
    const auto w1 = sample.weights();
    std::vector<std::size_t> resp;
    for (std::size_t i = 0; i < n; ++i)
        if (data.delta[i]) resp.push_back(i);
    if (resp.empty()) throw DataError("no respondents");
    CalibrationProblem pr;
    pr.entropy = entropy;
    pr.form = CalibrationForm::free;
    pr.z.resize(resp.size(), data.x.cols());
    pr.targets = Eigen::VectorXd::Zero(data.x.cols());
    double debias_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double ci = c.empty() ? 1.0 : c[i];
        pr.targets += w1[i] * data.x.row(i).transpose();
        const double inv = 1.0 / p[i];
        if (!entropy.in_weight_domain(inv))
            throw DataError("1/p̂ = " + std::to_string(inv) + " lies outside the domain of " + entropy.name());
        debias_total += w1[i] * entropy.g(inv) * ci;
    }
    pr.debias_target = debias_total;
    for (std::size_t r = 0; r < resp.size(); ++r) {
        const auto i = resp[r];
        pr.z.row(r) = data.x.row(i);
        pr.d.push_back(1.0 / p[i]);
        pr.a.push_back(w1[i]);
        pr.v.push_back(c.empty() ? 1.0 : c[i]);
    }
    CalibrationResult r = solve_entropy(pr);
    std::vector<double> full(n, 0.0);
    for (std::size_t k = 0; k < resp.size(); ++k) full[resp[k]] = r.weights[k];
    r.weights = std::move(full);
    return r;
}

}  // namespace survey
