#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "survey/design.hpp"
#include "survey/frame.hpp"
#include "survey/sample.hpp"

namespace survey {

using SampleStatistic = std::function<double(const Sample&)>;
/// Writes `dim` values for one sample into `out`.
using VectorStatistic = std::function<void(const Sample&, std::span<double> out)>;

struct ExactMoments {
    double mean = 0.0;
    double variance = 0.0;
    std::size_t support_size = 0;
};

/// Σ_A P(A)·stat(A) and Σ_A P(A)(stat(A) − mean)² over the enumerated support.
ExactMoments exact_expectation(const Design& design, const Frame& frame, const SampleStatistic& statistic,
                               std::size_t cap = 1'000'000);

struct MonteCarloResult {
    std::vector<double> mean;
    /// Replicate variance with divisor R − 1.
    std::vector<double> variance;
    std::vector<double> se_of_mean;
    std::size_t replicates = 0;
    std::uint64_t seed = 0;
};

/// Replicate r draws with RngStream(seed, r); sums are Kahan-compensated. Throws if R < 2.
MonteCarloResult monte_carlo(const Design& design, const Frame& frame, const VectorStatistic& statistic,
                             std::size_t dim, std::size_t R, std::uint64_t seed);
MonteCarloResult monte_carlo(const Design& design, const Frame& frame, const SampleStatistic& statistic,
                             std::size_t R, std::uint64_t seed);

/// Running sum with Kahan compensation.
class KahanSum {
public:
    void add(double x) {
        const double y = x - c_;
        const double t = sum_ + y;
        c_ = (t - sum_) - y;
        sum_ = t;
    }
    double value() const { return sum_; }

private:
    double sum_ = 0.0;
    double c_ = 0.0;
};

}  // namespace survey
