#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "survey/design.hpp"
#include "survey/error.hpp"
#include "survey/estimators.hpp"
#include "survey/simulate.hpp"

using namespace survey;

namespace {

struct Fixture {
    std::vector<double> mos, x, y;
    Frame frame;
};

Fixture make_fixture(std::size_t N) {
    Fixture f;
    for (std::size_t i = 0; i < N; ++i) {
        f.mos.push_back(1.0 + static_cast<double>((i * 7) % 13));
        f.x.push_back(f.mos.back() + 0.25 * static_cast<double>(i % 4));
        f.y.push_back(2.0 * f.x.back() + static_cast<double>(i % 5) - 2.0);
    }
    f.frame = Frame::from_mos(f.mos, f.y);
    return f;
}

std::vector<double> pick(const Sample& s, const std::vector<double>& v) {
    std::vector<double> out;
    for (const auto& u : s.units) out.push_back(v[u.unit]);
    return out;
}

Eigen::MatrixXd design_matrix(const std::vector<double>& x) {
    Eigen::MatrixXd X(x.size(), 2);
    for (std::size_t k = 0; k < x.size(); ++k) X.row(k) << 1.0, x[k];
    return X;
}

}  // namespace

TEST(Estimators, HtTotalExactlyUnbiasedOverSupport) {
    const auto f = make_fixture(8);
    const double truth = std::accumulate(f.y.begin(), f.y.end(), 0.0);
    for (const Design& d : {Design{Srs{3}}, Design{Brewer2{}}, Design{RejectivePoisson{3}}, Design{Chao{2}},
                            Design{SystematicPips{3}}}) {
        const auto m = exact_expectation(d, f.frame, [&](const Sample& s) { return ht_total(s, s.values(f.frame)).value; });
        EXPECT_NEAR(m.mean, truth, 1e-9 * truth) << d.name();
    }
}

TEST(Estimators, HajekReproducesConstants) {
    const auto f = make_fixture(30);
    RngStream rng(5);
    const auto s = draw(Design{Poisson{{}, 8}}, f.frame, rng);
    const std::vector<double> c(s.size(), 4.5);
    EXPECT_NEAR(hajek_mean(s, c).value, 4.5, 1e-12);
}

TEST(Estimators, RatioExactWhenYProportionalToX) {
    const auto f = make_fixture(30);
    RngStream rng(6);
    const auto s = draw(Design{Srs{10}}, f.frame, rng);
    const auto x = pick(s, f.x);
    std::vector<double> y2;
    for (double v : x) y2.push_back(3.0 * v);
    const double X = std::accumulate(f.x.begin(), f.x.end(), 0.0);
    const auto e = ratio_estimator(s, y2, x, X);
    EXPECT_NEAR(e.value, 3.0 * X, 1e-9);
    EXPECT_NEAR(*e.variance, 0.0, 1e-9);
}

TEST(Estimators, GregResidualsOrthogonalAndCalibrated) {
    const auto f = make_fixture(40);
    RngStream rng(7);
    const auto s = draw(Design{Poisson{{}, 12}}, f.frame, rng);
    const auto x = pick(s, f.x);
    const auto y = s.values(f.frame);
    const auto X = design_matrix(x);
    Eigen::VectorXd T(2);
    T << 40.0, std::accumulate(f.x.begin(), f.x.end(), 0.0);
    std::vector<double> c;
    for (double v : x) c.push_back(0.5 + v);
    const auto g = regression_greg(s, y, X, T, c);
    EXPECT_LT(g.fit.calibration_residual, 1e-9);
    Eigen::VectorXd orth = Eigen::VectorXd::Zero(2);
    for (std::size_t k = 0; k < s.size(); ++k) orth += X.row(k).transpose() * g.fit.residuals[k] / c[k];
    EXPECT_LT(orth.cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_FALSE(g.ibc);
}

TEST(Estimators, GregIbcProjectionEqualsDebiased) {
    const auto f = make_fixture(40);
    RngStream rng(8);
    const auto s = draw(Design{Poisson{{}, 12}}, f.frame, rng);
    const auto x = pick(s, f.x);
    const auto y = s.values(f.frame);
    const auto X = design_matrix(x);
    Eigen::VectorXd T(2);
    T << 40.0, std::accumulate(f.x.begin(), f.x.end(), 0.0);
    // c_i = π_i makes c_i/π_i = 1, inside the span of the intercept
    std::vector<double> c;
    for (const auto& u : s.units) c.push_back(u.pi);
    const auto g = regression_greg(s, y, X, T, c);
    EXPECT_TRUE(g.ibc);
    EXPECT_NEAR(g.estimate.value, g.projection, 1e-8 * std::abs(g.projection));
}

TEST(Estimators, GregExactForLinearY) {
    const auto f = make_fixture(40);
    RngStream rng(9);
    const auto s = draw(Design{Srs{9}}, f.frame, rng);
    const auto x = pick(s, f.x);
    std::vector<double> y;
    for (double v : x) y.push_back(1.5 - 2.0 * v);
    Eigen::VectorXd T(2);
    const double Xt = std::accumulate(f.x.begin(), f.x.end(), 0.0);
    T << 40.0, Xt;
    const auto g = regression_greg(s, y, design_matrix(x), T, {});
    EXPECT_NEAR(g.estimate.value, 1.5 * 40 - 2.0 * Xt, 1e-8);
}

TEST(Estimators, PostStratificationHitsGroupCounts) {
    const auto f = make_fixture(30);
    RngStream rng(10);
    const auto s = draw(Design{Srs{12}}, f.frame, rng);
    std::vector<int> groups;
    for (const auto& u : s.units) groups.push_back(f.x[u.unit] < 7 ? 0 : 1);
    std::vector<double> Ng(2, 0.0);
    for (double v : f.x) Ng[v < 7 ? 0 : 1] += 1;
    const auto y = s.values(f.frame);
    const auto r = post_stratify(s, y, groups, Ng);
    std::vector<double> got(2, 0.0);
    for (std::size_t k = 0; k < s.size(); ++k) got[groups[k]] += r.weights[k];
    EXPECT_NEAR(got[0], Ng[0], 1e-9);
    EXPECT_NEAR(got[1], Ng[1], 1e-9);
    EXPECT_THROW(post_stratify(s, y, std::vector<int>(s.size(), 0), Ng), DataError);
}

TEST(Estimators, RakeMatchesBothMargins) {
    const std::vector<double> d(6, 10.0);
    const std::vector<int> rows{0, 0, 0, 1, 1, 1}, cols{0, 1, 1, 0, 0, 1};
    const std::vector<double> rt{20, 50}, ct{40, 30};
    const auto r = rake(d, rows, cols, rt, ct);
    std::vector<double> rs(2, 0.0), cs(2, 0.0);
    for (std::size_t k = 0; k < 6; ++k) {
        rs[rows[k]] += r.weights[k];
        cs[cols[k]] += r.weights[k];
    }
    EXPECT_NEAR(rs[0], 20, 1e-6);
    EXPECT_NEAR(rs[1], 50, 1e-6);
    EXPECT_NEAR(cs[0], 40, 1e-6);
    EXPECT_NEAR(cs[1], 30, 1e-6);
}

TEST(Estimators, QuantileUsesInfimumConvention) {
    const auto frame = Frame::from_values(std::vector<double>{5, 1, 4, 2, 3});
    const auto s = realize(Design{Srs{5}}, frame, Outcome{{0, 1, 2, 3, 4}, 1.0});
    const auto y = s.values(frame);
    EXPECT_DOUBLE_EQ(quantile(s, y, 0.5).value, 3.0);
    EXPECT_DOUBLE_EQ(quantile(s, y, 0.2).value, 1.0);
    EXPECT_DOUBLE_EQ(quantile(s, y, 0.21).value, 2.0);
    EXPECT_DOUBLE_EQ(ecdf(s, y, 2.5), 0.4);
    const auto ee = estimating_equation_solve(
        s, [&](double t, std::size_t k) { return (y[k] <= t ? 1.0 : 0.0) - 0.5; }, 0.0);
    EXPECT_NEAR(ee.value, 3.0, 1e-8);
}

TEST(Estimators, EstimatingEquationGivesHajekMean) {
    const auto f = make_fixture(30);
    RngStream rng(11);
    const auto s = draw(Design{Poisson{{}, 10}}, f.frame, rng);
    const auto y = s.values(f.frame);
    const auto e = estimating_equation_solve(s, [&](double t, std::size_t k) { return y[k] - t; }, 0.0);
    EXPECT_NEAR(e.value, hajek_mean(s, y).value, 1e-8);
}

TEST(Estimators, DomainMeanOverWholeSampleIsHajek) {
    const auto f = make_fixture(30);
    RngStream rng(12);
    const auto s = draw(Design{Poisson{{}, 10}}, f.frame, rng);
    const auto y = s.values(f.frame);
    const std::vector<int> all(s.size(), 1);
    EXPECT_NEAR(domain_mean(s, y, all).value, hajek_mean(s, y).value, 1e-12);
}

TEST(Estimators, DifferenceEstimatorExactWhenProxyIsPerfect) {
    const auto f = make_fixture(30);
    RngStream rng(13);
    const auto s = draw(Design{Srs{6}}, f.frame, rng);
    const auto y = s.values(f.frame);
    const double Y = std::accumulate(f.y.begin(), f.y.end(), 0.0);
    const auto e = difference_estimator(s, y, y, Y);
    EXPECT_NEAR(e.value, Y, 1e-9);
}

TEST(Estimators, CompositeOptimalWeight) {
    Estimate a, b;
    a.value = 10;
    a.variance = 4;
    b.value = 14;
    b.variance = 1;
    const auto c = composite(a, b, 0.0);
    EXPECT_NEAR(c.diagnostics.at("alpha"), 0.2, 1e-15);
    EXPECT_NEAR(c.value, 13.2, 1e-12);
    EXPECT_NEAR(*c.variance, 0.8, 1e-12);
    EXPECT_LE(*c.variance, std::min(*a.variance, *b.variance));
}

TEST(Estimators, HhTotalRequiresWithReplacement) {
    const auto f = make_fixture(10);
    RngStream rng(14);
    const auto s = draw(Design{Srs{3}}, f.frame, rng);
    EXPECT_THROW(hh_total(s, s.values(f.frame)), DataError);
}

TEST(Estimators, TwoPhaseKeepAllIsPhaseOneHt) {
    const auto f = make_fixture(20);
    RngStream rng(15);
    const Design d{TwoPhase{Design{Srs{8}}, KeepAll{}}};
    const auto s = draw(d, f.frame, rng);
    const auto y = s.values(f.frame);
    EXPECT_NEAR(two_phase_estimate(s, f.frame, y, TwoPhaseMode::dee).value, 20.0 / 8 * std::accumulate(y.begin(), y.end(), 0.0),
                1e-9);
}

TEST(Estimators, NonnestedCombinationWeights) {
    Eigen::VectorXd X1(1), X2(1);
    X1 << 100;
    X2 << 110;
    Eigen::MatrixXd V1(1, 1), V2(1, 1);
    V1 << 1;
    V2 << 3;
    const auto c = nonnested_combine(X1, X2, V1, V2);
    EXPECT_NEAR(c.W(0, 0), 0.75, 1e-12);
    EXPECT_NEAR(c.X_c(0), 102.5, 1e-12);
}

TEST(Estimators, DifferenceEstimatorUnbiasedForAnyProxy) {
    const std::vector<double> y{1, 3, 5, 15};
    const Frame frame = Frame::from_values(y);
    const std::vector<double> y0{2, 2, 7, 1};
    const double y0_total = 12;
    const auto m = exact_expectation(Design{Srs{2}}, frame, [&](const Sample& s) {
        std::vector<double> proxy;
        for (const auto& u : s.units) proxy.push_back(y0[u.unit]);
        return difference_estimator(s, s.values(frame), proxy, y0_total).value;
    });
    EXPECT_NEAR(m.mean, 24.0, 1e-10);
    RngStream rng(1);
    const auto s = draw(Design{Srs{2}}, frame, rng);
    const auto v = s.values(frame);
    EXPECT_NEAR(difference_estimator(s, v, std::vector<double>(2, 0.0), 0.0).value, ht_total(s, v).value, 1e-12);
}

TEST(Estimators, NonnestedLimits) {
    Eigen::VectorXd X1(2), X2(2);
    X1 << 10, 20;
    X2 << 14, 28;
    const Eigen::MatrixXd V = Eigen::MatrixXd::Identity(2, 2);
    const auto same = nonnested_combine(X1, X2, V, V);
    EXPECT_NEAR(same.X_c(0), 12, 1e-12);
    EXPECT_NEAR(same.X_c(1), 24, 1e-12);
    const auto tiny = nonnested_combine(X1, X2, 1e-12 * V, V);
    EXPECT_NEAR(tiny.X_c(1), 20, 1e-9);
}

TEST(Estimators, CompositeEqualVariancesHalf) {
    Estimate a, b;
    a.value = 1;
    a.variance = 2;
    b.value = 3;
    b.variance = 2;
    EXPECT_NEAR(composite(a, b, 0.0).diagnostics.at("alpha"), 0.5, 1e-15);
}
