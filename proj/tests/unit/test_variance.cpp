#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "survey/design.hpp"
#include "survey/error.hpp"
#include "survey/estimators.hpp"
#include "survey/simulate.hpp"
#include "survey/variance.hpp"

using namespace survey;

namespace {

Frame small_frame() {
    const std::vector<double> mos{2, 3, 1, 6, 4, 5, 2.5};
    const std::vector<double> y{5, 9, 1, 20, 11, 14, 8};
    return Frame::from_mos(mos, y);
}

}  // namespace

class HtVarianceUnbiased : public ::testing::TestWithParam<int> {};

TEST_P(HtVarianceUnbiased, BothFormsMatchTrueVariance) {
    const Frame frame = small_frame();
    const std::vector<Design> designs{Design{Srs{3}}, Design{Brewer2{}}, Design{RejectivePoisson{3}},
                                      Design{Poisson{{}, 3}}};
    const Design& d = designs[GetParam()];
    const auto joint = joint_pips(d, frame);
    const auto total = exact_expectation(d, frame, [&](const Sample& s) { return ht_total(s, s.values(frame)).value; });
    const auto vht = exact_expectation(
        d, frame, [&](const Sample& s) { return *ht_variance_est(s, s.values(frame), joint).variance; });
    EXPECT_NEAR(vht.mean, total.variance, 1e-8 * total.variance) << d.name();
    if (d.fixed_size()) {
        const auto vsyg = exact_expectation(d, frame, [&](const Sample& s) {
            return *ht_variance_est(s, s.values(frame), joint, HtForm::syg).variance;
        });
        EXPECT_NEAR(vsyg.mean, total.variance, 1e-8 * total.variance) << d.name();
    }
}

INSTANTIATE_TEST_SUITE_P(Designs, HtVarianceUnbiased, ::testing::Values(0, 1, 2, 3));

TEST(Variance, SygRejectsRandomSize) {
    const Frame frame = small_frame();
    const Design d{Poisson{{}, 3}};
    const auto joint = joint_pips(d, frame);
    RngStream rng(4);
    auto s = draw(d, frame, rng);
    while (s.size() < 2) s = draw(d, frame, rng);
    EXPECT_THROW(ht_variance_est(s, s.values(frame), joint, HtForm::syg), DataError);
}

TEST(Variance, HansenHurwitzBusinessExample) {
    const std::vector<double> size{100, 200, 300, 1000}, income{11, 20, 24, 245};
    const Frame frame = Frame::from_mos(size, income);
    const Design d{Ppswr{2}};
    const auto est = exact_expectation(d, frame, [&](const Sample& s) { return hh_variance(s, s.values(frame)).value; });
    const auto vhat = exact_expectation(d, frame, [&](const Sample& s) { return *hh_variance(s, s.values(frame)).variance; });
    EXPECT_NEAR(est.mean, 300, 1e-9);
    // two draws: V(Ŷ) = 14248/2
    EXPECT_NEAR(est.variance, 7124, 1e-6);
    EXPECT_NEAR(vhat.mean, 7124, 1e-6);
    // single-draw variance of z = y/p
    const auto single = exact_expectation(Design{Ppswr{1}}, frame,
                                          [&](const Sample& s) { return hh_total(s, s.values(frame)).value; });
    EXPECT_NEAR(single.variance, 14248, 1e-6);
}

TEST(Variance, SimplifiedEqualsHtWithReplacementForm) {
    // SRSWR: simplified variance of the HH total is s_z²/n
    const Frame frame = small_frame();
    RngStream rng(3);
    const auto s = draw(Design{Srswr{5}}, frame, rng);
    const auto y = s.values(frame);
    std::vector<double> z;
    for (std::size_t k = 0; k < s.size(); ++k)
        for (int m = 0; m < s.units[k].multiplicity; ++m) z.push_back(y[k] * 7.0);
    const double mean = std::accumulate(z.begin(), z.end(), 0.0) / 5.0;
    double ss = 0;
    for (double v : z) ss += (v - mean) * (v - mean);
    EXPECT_NEAR(simplified_variance(s, y), ss / 4.0 / 5.0, 1e-9);
    EXPECT_NEAR(*hh_variance(s, y).variance, ss / 4.0 / 5.0, 1e-9);
}

TEST(Variance, SimplifiedNeedsTwoPsusPerStratum) {
    const Frame frame = small_frame();
    Sample s;
    s.units.push_back({0, 1, 0.5, std::nullopt, 0, 0});
    s.units.push_back({1, 1, 0.5, std::nullopt, 1, 1});
    EXPECT_THROW(simplified_variance(s, std::vector<double>{1, 2}), DataError);
}

TEST(Variance, JackknifeOfLinearTotalUnderSrs) {
    const Frame frame = small_frame();
    RngStream rng(5);
    const auto s = draw(Design{Srs{4}}, frame, rng);
    const auto y = s.values(frame);
    auto stat = [&](std::span<const double> w) {
        double t = 0;
        for (std::size_t k = 0; k < y.size(); ++k) t += w[k] * y[k];
        return t;
    };
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / 4.0;
    double s2 = 0;
    for (double v : y) s2 += (v - mean) * (v - mean);
    s2 /= 3.0;
    const auto jk = jackknife_variance(s, stat);
    EXPECT_NEAR(*jk.variance, 49.0 * s2 / 4.0, 1e-9);
    JackknifeOptions fpc;
    fpc.structure = JackknifeStructure::stratified_psu;
    fpc.stratum_fpc = {4.0 / 7.0};
    // without PSU labels each unit is its own PSU
    const auto jk2 = jackknife_variance(s, stat, fpc);
    EXPECT_NEAR(*jk2.variance, 49.0 * s2 / 4.0 * (1 - 4.0 / 7.0), 1e-9);
}

TEST(Variance, HadamardOrthogonality) {
    for (int order : {1, 2, 4, 8, 16}) {
        const auto h = make_hadamard(order);
        for (int a = 0; a < order; ++a)
            for (int b = 0; b < order; ++b) {
                int dot = 0;
                for (int r = 0; r < order; ++r) dot += h(r, a) * h(r, b);
                EXPECT_EQ(dot, a == b ? order : 0);
            }
    }
    EXPECT_EQ(hadamard_for_strata(3).order, 4);
    EXPECT_EQ(hadamard_for_strata(4).order, 8);
    EXPECT_THROW(make_hadamard(3), DataError);
}

TEST(Variance, BrrLinearIdentity) {
    const std::vector<std::array<double, 2>> pairs{{{3, 5}}, {{10, 4}}, {{7, 7.5}}};
    const std::vector<double> W{0.2, 0.5, 0.3};
    const auto e = brr_linear(pairs, W, make_hadamard(4));
    double want = 0;
    for (std::size_t h = 0; h < 3; ++h) want += W[h] * W[h] * std::pow(pairs[h][0] - pairs[h][1], 2) / 4;
    EXPECT_NEAR(*e.variance, want, 1e-12);
}

TEST(Variance, RandomGroups) {
    const std::vector<double> r{1, 2, 3, 4};
    const auto e = random_group_variance(r);
    EXPECT_DOUBLE_EQ(e.value, 2.5);
    EXPECT_NEAR(*e.variance, 5.0 / 12.0, 1e-15);
}

TEST(Variance, ClusterEstimateAndTwoStage) {
    const auto c = srs_cluster_estimate(10, std::vector<double>{1, 2, 3});
    EXPECT_NEAR(c.total, 20, 1e-12);
    EXPECT_NEAR(c.variance, 100.0 / 3 * 0.7, 1e-12);
    // certainty PSUs: only the within-PSU term remains
    const std::vector<double> Y{20, 30}, V{2, 3}, pi{1, 1}, pij{1, 1, 1, 1};
    const auto e = two_stage_variance(Y, V, pi, pij);
    EXPECT_NEAR(e.value, 50, 1e-12);
    EXPECT_NEAR(*e.variance, 5, 1e-12);
}

TEST(Variance, StratifiedSimplifiedIsSumOverStrata) {
    std::vector<Unit> units;
    for (int i = 0; i < 12; ++i) {
        Unit u;
        u.id = std::to_string(i);
        u.stratum = i < 6 ? "a" : "b";
        u.y = {static_cast<double>(i * i % 7)};
        units.push_back(u);
    }
    const Frame frame(units);
    std::vector<StratumDesign> strata;
    strata.push_back({"a", Design{Srswr{3}}});
    strata.push_back({"b", Design{Srswr{4}}});
    const Design d{Stratified{strata}};
    RngStream rng(2);
    const auto s = draw(d, frame, rng);
    const auto y = s.values(frame);
    double want = 0;
    for (int h = 0; h < 2; ++h) {
        Sample part;
        part.with_replacement = true;
        std::vector<double> yy;
        for (std::size_t k = 0; k < s.size(); ++k)
            if (s.units[k].stratum == h) {
                part.units.push_back(s.units[k]);
                yy.push_back(y[k]);
            }
        want += simplified_variance(part, yy);
    }
    EXPECT_NEAR(simplified_variance(s, y), want, 1e-9);
}

TEST(Variance, TwoStageCensusSecondStageEqualsOneStage) {
    // SRS of 2 PSUs out of 4 with complete enumeration inside
    const std::vector<double> Y{20, 30}, V{0, 0}, pi{0.5, 0.5};
    const double pij = 2.0 / 12.0;
    const std::vector<double> joint{0.5, pij, pij, 0.5};
    const auto e = two_stage_variance(Y, V, pi, joint);
    EXPECT_NEAR(e.value, 100, 1e-12);
    // SRS total variance estimate N²(1 − n/N)s²/n with s² = 50
    EXPECT_NEAR(*e.variance, 16 * 0.5 * 50 / 2, 1e-9);
}
