#include "survey/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace survey {

double Estimate::se() const {
    if (!variance || *variance < 0.0) return std::numeric_limits<double>::quiet_NaN();
    return std::sqrt(*variance);
}

std::array<double, 2> Estimate::ci95() const {
    const double half = 1.96 * se();
    return {value - half, value + half};
}

bool Estimate::has_flag(const std::string& flag) const {
    return std::find(flags.begin(), flags.end(), flag) != flags.end();
}

}  // namespace survey
