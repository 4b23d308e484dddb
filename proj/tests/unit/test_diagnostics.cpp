#include <gtest/gtest.h>

#include <cmath>

#include "survey/diagnostics.hpp"
#include "survey/error.hpp"

using namespace survey;

TEST(Diagnostics, AnovaDecomposition) {
    const std::vector<std::vector<double>> c{{1, 2, 3}, {4, 6, 8}, {2, 2, 5}, {7, 7, 7}};
    const auto a = anova(c);
    EXPECT_NEAR(a.SST, a.SSB + a.SSW, 1e-12);
    EXPECT_NEAR(a.S2, a.SST / 11.0, 1e-12);
    EXPECT_TRUE(a.equal_sizes);
    EXPECT_NEAR(a.C_star, 0.0, 1e-12);
    EXPECT_NEAR(a.rho, 1.0 - 1.5 * a.SSW / a.SST, 1e-12);
    EXPECT_NEAR(a.delta, 1.0 - (a.SSW / 8.0) / (a.SST / 11.0), 1e-12);
}

TEST(Diagnostics, HomogeneousClustersGiveRhoOne) {
    const auto a = anova({{3, 3}, {5, 5}, {9, 9}});
    EXPECT_NEAR(a.rho, 1.0, 1e-12);
    EXPECT_NEAR(design_effect(2, a.rho), 2.0, 1e-12);
}

TEST(Diagnostics, RhoLowerBound) {
    // cluster means identical: ρ = −1/(M − 1)
    const auto a = anova({{1, 3, 5}, {5, 1, 3}, {3, 5, 1}});
    EXPECT_NEAR(a.rho, -0.5, 1e-12);
}

TEST(Diagnostics, UnequalSizesUseCStar) {
    const auto a = anova({{1, 2}, {4, 6, 8, 3}, {2, 5, 5}});
    EXPECT_FALSE(a.equal_sizes);
    EXPECT_NEAR(design_effect(a), 1.0 + (9.0 - 3.0) / 2.0 * a.delta + a.C_star / (a.mean_size * a.S2), 1e-12);
}

TEST(Diagnostics, SampleSizeArithmetic) {
    EXPECT_DOUBLE_EQ(design_effect(11, 0.1), 2.0);
    EXPECT_DOUBLE_EQ(effective_sample_size(100, 2), 50.0);
    EXPECT_NEAR(conservative_sample_size(0.05), 400.0, 1e-9);
    EXPECT_NEAR(required_clusters(400, 2, 20), 40.0, 1e-12);
    EXPECT_NEAR(required_clusters_for_margin(0.02, 200, 0.05), 2500 * 10.95 / 200, 1e-9);
    EXPECT_EQ(srs_sample_size(1, 0.1, 0.05), 385);
    EXPECT_EQ(srs_sample_size(1, 0.1, 0.05, 1000), 278);
    EXPECT_THROW(srs_sample_size(1, 0.0, 0.05), DataError);
}

TEST(Diagnostics, NormalQuantile) {
    EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-14);
    EXPECT_NEAR(normal_quantile(0.5), 0.0, 1e-15);
    for (double p : {1e-12, 1e-6, 0.01, 0.3, 0.7, 0.999, 1 - 1e-9})
        EXPECT_NEAR(normal_cdf(normal_quantile(p)), p, 1e-14 * std::max(1.0, 1.0 / p) * p + 1e-15);
}
