#pragma once

#include <stdexcept>
#include <string>

namespace survey {

/// Input data violates a precondition (bad frame, infeasible size, empty domain).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An iterative or matrix routine failed (singular system, divergence, no convergence).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace survey
