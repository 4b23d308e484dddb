#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "survey/error.hpp"
#include "survey/frame.hpp"
#include "survey/rng.hpp"
#include "survey/sample.hpp"

using namespace survey;

TEST(Rng, SameSeedAndStreamRepeat) {
    RngStream a(42, 3), b(42, 3);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, StreamsDiffer) {
    RngStream a(42, 0), b(42, 1);
    int same = 0;
    for (int i = 0; i < 100; ++i) same += a.next_u64() == b.next_u64();
    EXPECT_EQ(same, 0);
}

TEST(Rng, UniformRangeAndMoments) {
    RngStream r(7);
    double sum = 0.0, sum2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
        sum2 += u * u;
    }
    const double mean = sum / n;
    EXPECT_NEAR(mean, 0.5, 4 * std::sqrt(1.0 / 12 / n));
    EXPECT_NEAR(sum2 / n - mean * mean, 1.0 / 12, 1e-3);
}

TEST(Rng, BelowIsUniform) {
    RngStream r(9);
    std::vector<int> counts(7, 0);
    const int n = 70000;
    for (int i = 0; i < n; ++i) ++counts[r.below(7)];
    for (int c : counts) EXPECT_NEAR(c, n / 7.0, 4 * std::sqrt(n * (1.0 / 7) * (6.0 / 7)));
}

TEST(Rng, NormalMoments) {
    RngStream r(10);
    double sum = 0.0, sum2 = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        sum += z;
        sum2 += z * z;
    }
    EXPECT_NEAR(sum / n, 0.0, 0.015);
    EXPECT_NEAR(sum2 / n, 1.0, 0.02);
}

TEST(Rng, ChildDoesNotDependOnParentState) {
    RngStream a(5), b(5);
    b.next_u64();
    auto ca = a.child(2), cb = b.child(2);
    EXPECT_EQ(ca.next_u64(), cb.next_u64());
}

TEST(Frame, ParsesCsvColumns) {
    std::istringstream in("id,mos,stratum,cluster,y1,y2,x1\n"
                          "a,2,s1,c1,1.5,2,10\n"
                          "\"b,q\",3,s1,c2,2.5,3,11\n");
    const Frame f = read_frame_csv(in);
    ASSERT_EQ(f.size(), 2u);
    EXPECT_EQ(f[1].id, "b,q");
    EXPECT_EQ(f[0].mos, 2.0);
    EXPECT_EQ(*f[0].stratum, "s1");
    EXPECT_EQ(f.y(1), (std::vector<double>{2, 3}));
    EXPECT_EQ(f.aux(0), (std::vector<double>{10, 11}));
    EXPECT_EQ(f.clusters(), (std::vector<std::string>{"c1", "c2"}));
    EXPECT_EQ(*f.index_of("b,q"), 1u);
}

TEST(Frame, ErrorsNameRowAndColumn) {
    std::istringstream in("id,mos,y\na,1,2\nb,oops,3\n");
    try {
        read_frame_csv(in);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("row 3"), std::string::npos) << msg;
        EXPECT_NE(msg.find("mos"), std::string::npos) << msg;
    }
}

TEST(Frame, RejectsDuplicateIdsAndMissingId) {
    std::istringstream dup("id,y\na,1\na,2\n");
    EXPECT_THROW(read_frame_csv(dup), DataError);
    std::istringstream noid("y\n1\n");
    EXPECT_THROW(read_frame_csv(noid), DataError);
    std::istringstream ragged("id,y\na,1,3\n");
    EXPECT_THROW(read_frame_csv(ragged), DataError);
}

TEST(Frame, ClusterMayNotSpanStrata) {
    std::vector<Unit> units(2);
    units[0].id = "1";
    units[0].stratum = "A";
    units[0].cluster = "c";
    units[1].id = "2";
    units[1].stratum = "B";
    units[1].cluster = "c";
    EXPECT_THROW(Frame{units}, DataError);
}

TEST(Frame, SplitCsvHandlesQuotes) {
    EXPECT_EQ(split_csv_line("a,\"b,c\",\"d\"\"e\""), (std::vector<std::string>{"a", "b,c", "d\"e"}));
    EXPECT_EQ(split_csv_line("a,,b"), (std::vector<std::string>{"a", "", "b"}));
}

TEST(Sample, WeightsForWithAndWithoutReplacement) {
    Sample s;
    Selection a;
    a.pi = 0.25;
    a.conditional_pi = 0.5;
    s.units.push_back(a);
    Selection b;
    b.unit = 1;
    b.pi = 0.1;
    b.draws = 4;
    b.multiplicity = 2;
    s.units.push_back(b);
    EXPECT_DOUBLE_EQ(s.weight(0), 8.0);
    EXPECT_DOUBLE_EQ(s.weight(1), 2.0 / (4 * 0.1));
    EXPECT_EQ(s.total_draws(), 3);
}
