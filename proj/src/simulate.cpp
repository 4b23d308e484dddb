#include "survey/simulate.hpp"

#include <cmath>

#include "survey/error.hpp"
#include "survey/rng.hpp"

namespace survey {

ExactMoments exact_expectation(const Design& design, const Frame& frame, const SampleStatistic& statistic,
                               std::size_t cap) {
    const auto dist = enumerate_design(design, frame, cap);
    std::vector<double> values;
    values.reserve(dist.support.size());
    KahanSum mean;
    for (const auto& o : dist.support) {
        values.push_back(statistic(realize(design, frame, o)));
        mean.add(o.prob * values.back());
    }
    KahanSum var;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double dev = values[i] - mean.value();
        var.add(dist.support[i].prob * dev * dev);
    }
    return {mean.value(), var.value(), dist.support.size()};
}

MonteCarloResult monte_carlo(const Design& design, const Frame& frame, const VectorStatistic& statistic,
                             std::size_t dim, std::size_t R, std::uint64_t seed) {
    if (R < 2) throw DataError("Monte Carlo needs at least two replicates");
    std::vector<KahanSum> s1(dim), s2(dim);
    std::vector<double> out(dim);
    for (std::size_t r = 0; r < R; ++r) {
        RngStream rng(seed, r);
        const Sample s = draw(design, frame, rng);
        std::fill(out.begin(), out.end(), 0.0);
        statistic(s, out);
        for (std::size_t j = 0; j < dim; ++j) {
            s1[j].add(out[j]);
            s2[j].add(out[j] * out[j]);
        }
    }
    MonteCarloResult res;
    res.replicates = R;
    res.seed = seed;
    const double n = static_cast<double>(R);
    for (std::size_t j = 0; j < dim; ++j) {
        const double m = s1[j].value() / n;
        const double v = std::max(0.0, (s2[j].value() - n * m * m) / (n - 1.0));
        res.mean.push_back(m);
        res.variance.push_back(v);
        res.se_of_mean.push_back(std::sqrt(v / n));
    }
    return res;
}

MonteCarloResult monte_carlo(const Design& design, const Frame& frame, const SampleStatistic& statistic,
                             std::size_t R, std::uint64_t seed) {
    return monte_carlo(
        design, frame, [&](const Sample& s, std::span<double> out) { out[0] = statistic(s); }, 1, R, seed);
}

}  // namespace survey
