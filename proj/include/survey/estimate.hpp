#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace survey {

struct Estimate {
    double value = 0.0;
    /// May be negative for flagged HT-form variance estimates.
    std::optional<double> variance;
    std::string method;
    std::optional<double> n_effective;
    std::vector<std::string> flags;
    std::map<std::string, double> diagnostics;

    /// NaN when no usable (nonnegative) variance is present.
    double se() const;
    std::array<double, 2> ci95() const;
    bool has_flag(const std::string& flag) const;
};

}  // namespace survey
