#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "survey/design.hpp"
#include "survey/error.hpp"
#include "survey/estimators.hpp"
#include "survey/simulate.hpp"

using namespace survey;

namespace {

Frame sim_frame() {
    const std::vector<double> mos{3, 1, 4, 1, 5, 9, 2, 6};
    const std::vector<double> y{7, 2, 9, 3, 12, 20, 4, 13};
    return Frame::from_mos(mos, y);
}

}  // namespace

TEST(Simulate, ExactExpectationOfHtIsTotal) {
    const Frame f = sim_frame();
    const auto y = f.y();
    const double Y = std::accumulate(y.begin(), y.end(), 0.0);
    for (const Design& d : {Design{Srs{3}}, Design{Bernoulli{0.3}}, Design{Brewer2{}}, Design{Ppswr{3}}}) {
        const auto m = exact_expectation(d, f, [&](const Sample& s) { return ht_total(s, s.values(f)).value; });
        EXPECT_NEAR(m.mean, Y, 1e-10 * Y) << d.name();
    }
}

TEST(Simulate, MonteCarloWithinFourStandardErrors) {
    const Frame f = sim_frame();
    const auto y = f.y();
    const double Y = std::accumulate(y.begin(), y.end(), 0.0);
    const auto r = monte_carlo(Design{RejectivePoisson{3}}, f,
                               [&](const Sample& s) { return ht_total(s, s.values(f)).value; }, 20000, 99);
    EXPECT_LT(std::abs(r.mean[0] - Y), 4 * r.se_of_mean[0]);
    EXPECT_NEAR(r.se_of_mean[0], std::sqrt(r.variance[0] / 20000), 1e-12);
}

TEST(Simulate, DeterministicForSeed) {
    const Frame f = sim_frame();
    auto stat = [&](const Sample& s) { return ht_total(s, s.values(f)).value; };
    const auto a = monte_carlo(Design{Srs{3}}, f, stat, 500, 7);
    const auto b = monte_carlo(Design{Srs{3}}, f, stat, 500, 7);
    const auto c = monte_carlo(Design{Srs{3}}, f, stat, 500, 8);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.variance, b.variance);
    EXPECT_NE(a.mean, c.mean);
}

TEST(Simulate, RequiresTwoReplicates) {
    const Frame f = sim_frame();
    EXPECT_THROW(monte_carlo(Design{Srs{3}}, f, [](const Sample&) { return 0.0; }, 1, 1), DataError);
}

TEST(Simulate, VectorStatisticInclusionFrequencies) {
    const Frame f = sim_frame();
    const Design d{Brewer2{}};
    const auto pi = first_order_pips(d, f).first_order;
    const auto r = monte_carlo(
        d, f,
        [&](const Sample& s, std::span<double> out) {
            std::fill(out.begin(), out.end(), 0.0);
            for (const auto& u : s.units) out[u.unit] = 1.0;
        },
        f.size(), 20000, 5);
    for (std::size_t i = 0; i < f.size(); ++i) EXPECT_LT(std::abs(r.mean[i] - pi[i]), 4.5 * r.se_of_mean[i] + 1e-12);
}

TEST(Simulate, KahanSumIsCompensated) {
    KahanSum k;
    k.add(1.0);
    for (int i = 0; i < 1000000; ++i) k.add(1e-16);
    EXPECT_NEAR(k.value(), 1.0 + 1e-10, 1e-15);
}
