#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace survey::detail {

/// Solves A x = b for symmetric A. Falls back to a rank-revealing
/// pseudo-inverse (threshold 1e-10·‖A‖) when `allow_pinv`; pushes
/// "ill_conditioned" / "generalized_inverse" onto `flags`.
Eigen::VectorXd solve_symmetric(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, bool allow_pinv,
                                std::vector<std::string>& flags);
Eigen::MatrixXd inverse_symmetric(const Eigen::MatrixXd& A, bool allow_pinv, std::vector<std::string>& flags);

}  // namespace survey::detail
