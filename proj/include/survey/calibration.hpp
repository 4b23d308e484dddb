#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace survey {

enum class EntropyKind {
    squared,
    kullback_leibler,
    shifted_kl,
    empirical_likelihood,
    exponential_tilting,
    cross_entropy,
    hellinger,
    squared_hellinger,
    pseudo_huber,
    inverse,
    renyi,
};

/// Generalized entropy G with derivative g = G′ and convex conjugate ρ.
/// Conjugacy: ρ′ = g⁻¹ and ρ(ν) = ν·g⁻¹(ν) − G(g⁻¹(ν)).
class EntropySpec {
public:
    /// `param` is M for pseudo_huber (default 1) and α for renyi (α ∉ {0, −1}).
    explicit EntropySpec(EntropyKind kind, double param = 0.0);
    /// Parses "kl", "empirical_likelihood", "pseudo_huber:2", "renyi:0.5", ...
    static EntropySpec parse(const std::string& text);
    static std::vector<EntropySpec> all();

    EntropyKind kind() const { return kind_; }
    double param() const { return param_; }
    std::string name() const;

    double G(double w) const;
    double g(double w) const;
    double g_inv(double nu) const;
    double rho(double nu) const;
    double rho_prime(double nu) const { return g_inv(nu); }
    double rho_second(double nu) const;
    bool in_weight_domain(double w) const;
    bool in_dual_domain(double nu) const;

private:
    EntropyKind kind_;
    double param_;
};

/// How weights relate to the base weights d.
enum class CalibrationForm {
    /// ω = a·g⁻¹(g(d) + λᵀz/v): minimum Σ a v [G(ω) − G(d) − g(d)(ω − d)].
    anchored,
    /// ω = a·d·g⁻¹(g(1) + λᵀz/v): minimum Σ a d v G(ω/d) distance.
    divergence,
    /// ω = a·g⁻¹(λᵀz/v): minimum Σ a v G(ω), d enters only through the debiasing column.
    free,
};

struct CalibrationProblem {
    std::vector<double> d;
    /// One row per unit.
    Eigen::MatrixXd z;
    Eigen::VectorXd targets;
    EntropySpec entropy{EntropyKind::squared};
    CalibrationForm form = CalibrationForm::anchored;
    /// Scale factors v_i (c_i); empty means 1.
    std::vector<double> v;
    /// Fixed multipliers a_i (e.g. phase-1 weights); empty means 1.
    std::vector<double> a;
    /// When set, the column g(d_i)·v_i is appended to z with this target.
    std::optional<double> debias_target;
    double tol = 1e-9;
    int max_iter = 200;
};

struct CalibrationResult {
    std::vector<double> weights;
    Eigen::VectorXd lambda;
    int iterations = 0;
    /// sup-norm of Σ ω z − T over all constraints, including the debiasing one.
    double residual = 0.0;
    /// Dual objective after each accepted step, starting value first.
    std::vector<double> dual_path;
    std::vector<std::string> flags;
};

/// Closed-form ω = d + λᵀz/c with λ = (Σ z zᵀ/c)⁻¹(T − Σ d z). Ignores `entropy` and `form`.
CalibrationResult solve_chi_square(const CalibrationProblem& problem);
/// Damped Newton on the dual. Throws DataError for malformed input and
/// NumericalError for divergence or non-convergence.
CalibrationResult solve_entropy(const CalibrationProblem& problem);

/// Values g(d_i)·v_i of the debiasing column.
std::vector<double> debias_column(const EntropySpec& entropy, std::span<const double> d, std::span<const double> v);

struct ImpliedRegression {
    Eigen::VectorXd gamma;
    /// Σ d (y − ẑᵀγ̂).
    double ibc_residual = 0.0;
};
/// Linearized regression behind a calibration problem: γ̂ = (Σ ẑẑᵀ/q)⁻¹ Σ ẑ y/q with
/// q_i = v_i·g′(d_i), ẑ including the debiasing column when present.
ImpliedRegression implied_regression(const CalibrationProblem& problem, std::span<const double> y);

struct ConjugateReport {
    double max_inverse_error = 0.0;
    double max_conjugate_error = 0.0;
    std::size_t points = 0;
    bool ok(double tol = 1e-10) const { return max_inverse_error <= tol && max_conjugate_error <= tol; }
};
/// Checks ρ′(g(ω)) = ω on the weight grid and ρ(ν) = ν g⁻¹(ν) − G(g⁻¹(ν)) at ν = g(ω).
/// Errors are relative to max(1, |value|).
ConjugateReport conjugate_check(const EntropySpec& entropy, std::span<const double> weight_grid);

}  // namespace survey
