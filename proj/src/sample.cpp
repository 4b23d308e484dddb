#include "survey/sample.hpp"

#include "survey/error.hpp"

namespace survey {

double Sample::overall_pi(std::size_t k) const {
    const auto& s = units.at(k);
    return s.pi * s.conditional_pi.value_or(1.0);
}

double Sample::weight(std::size_t k) const {
    const auto& s = units.at(k);
    if (s.draws > 0) {
        if (!(s.pi > 0.0)) throw DataError("with-replacement selection with zero draw probability");
        return s.multiplicity / (s.draws * s.pi * s.conditional_pi.value_or(1.0));
    }
    const double p = overall_pi(k);
    if (!(p > 0.0)) throw DataError("selection with zero inclusion probability");
    return s.multiplicity / p;
}

std::vector<double> Sample::weights() const {
    std::vector<double> out(units.size());
    for (std::size_t k = 0; k < units.size(); ++k) out[k] = weight(k);
    return out;
}

std::vector<std::size_t> Sample::unit_indices() const {
    std::vector<std::size_t> out(units.size());
    for (std::size_t k = 0; k < units.size(); ++k) out[k] = units[k].unit;
    return out;
}

std::vector<double> Sample::values(const Frame& frame, std::size_t k) const {
    std::vector<double> out(units.size());
    for (std::size_t j = 0; j < units.size(); ++j) {
        const auto& u = frame[units[j].unit];
        if (u.y.size() <= k) throw DataError("unit '" + u.id + "' has no study value");
        out[j] = u.y[k];
    }
    return out;
}

std::vector<double> Sample::aux(const Frame& frame, std::size_t k) const {
    std::vector<double> out(units.size());
    for (std::size_t j = 0; j < units.size(); ++j) {
        const auto& u = frame[units[j].unit];
        if (u.aux.size() <= k) throw DataError("unit '" + u.id + "' has no aux column");
        out[j] = u.aux[k];
    }
    return out;
}

int Sample::total_draws() const {
    int n = 0;
    for (const auto& s : units) n += s.multiplicity;
    return n;
}

double DesignDistribution::total_probability() const {
    long double s = 0;
    for (const auto& o : support) s += o.prob;
    return static_cast<double>(s);
}

}  // namespace survey
