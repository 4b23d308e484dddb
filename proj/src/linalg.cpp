#include "linalg.hpp"

#include <algorithm>

#include "survey/error.hpp"

namespace survey::detail {

namespace {

void add_flag(std::vector<std::string>& flags, const std::string& f) {
    if (std::find(flags.begin(), flags.end(), f) == flags.end()) flags.push_back(f);
}

}  // namespace

Eigen::MatrixXd inverse_symmetric(const Eigen::MatrixXd& A, bool allow_pinv, std::vector<std::string>& flags) {
    const Eigen::Index p = A.rows();
    if (p == 0) return Eigen::MatrixXd(0, 0);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    const double smax = s(0);
    const double smin = s(p - 1);
    const double tol = 1e-10 * smax;
    if (!(smax > 0.0) || smin <= tol) {
        if (!allow_pinv) throw NumericalError("singular matrix in normal equations");
        add_flag(flags, "generalized_inverse");
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
        cod.setThreshold(1e-10);
        return cod.pseudoInverse();
    }
    if (smax / smin > 1e12) add_flag(flags, "ill_conditioned");
    return Eigen::FullPivLU<Eigen::MatrixXd>(A).inverse();
}

Eigen::VectorXd solve_symmetric(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, bool allow_pinv,
                                std::vector<std::string>& flags) {
    const Eigen::Index p = A.rows();
    if (p == 0) return Eigen::VectorXd(0);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
    const auto& s = svd.singularValues();
    const double smax = s(0);
    const double smin = s(p - 1);
    if (!(smax > 0.0) || smin <= 1e-10 * smax) {
        if (!allow_pinv) throw NumericalError("singular matrix in normal equations");
        add_flag(flags, "generalized_inverse");
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
        cod.setThreshold(1e-10);
        return cod.solve(b);
    }
    if (smax / smin > 1e12) add_flag(flags, "ill_conditioned");
    return A.fullPivLu().solve(b);
}

}  // namespace survey::detail
