#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "design_io.hpp"
#include "json.hpp"

using nlohmann::json;
using survey::cli::run;

namespace {

const std::string kData = TEST_DATA_DIR;

struct Result {
    int code = 0;
    std::string out, err;
    json doc() const { return json::parse(out); }
};

Result call(std::vector<std::string> args) {
    std::ostringstream out, err;
    Result r;
    r.code = run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string write_temp(const std::string& name, const std::string& text) {
    const std::string path = ::testing::TempDir() + name;
    std::ofstream(path) << text;
    return path;
}

}  // namespace

TEST(Cli, DrawIsDeterministicForSeed) {
    const std::vector<std::string> args{"--frame", kData + "/farm_frame.csv", "--seed", "7", "draw", "--design", "srs",
                                        "--n", "2"};
    const auto a = call(args), b = call(args);
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_EQ(a.out, b.out);
    const auto doc = a.doc();
    EXPECT_EQ(doc["schema"], 1);
    EXPECT_EQ(doc["units"].size(), 2u);
    EXPECT_DOUBLE_EQ(doc["units"][0]["pi"].get<double>(), 0.5);
}

TEST(Cli, HouseholdRatio) {
    const auto r = call({"--frame", kData + "/household_frame.csv", "estimate", "--sample",
                         kData + "/household_sample.csv", "--estimator", "ht", "--y", "y", "--denominator", "x1"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto doc = r.doc();
    EXPECT_NEAR(doc["value"].get<double>(), 0.2135, 5e-4);
    EXPECT_NEAR(doc["variance"].get<double>(), 0.005302, 1e-6);
}

TEST(Cli, NeymanAllocation) {
    const auto r = call({"allocate", "--strata", kData + "/neyman_strata.csv", "--method", "neyman", "--n", "140"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.doc()["n"], json::array({100, 26, 14}));
}

TEST(Cli, ExactBusinessPps) {
    const auto r = call({"--frame", kData + "/business_frame.csv", "simulate", "--design", "ppswr", "--n", "1",
                         "--exact", "--y", "y"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NEAR(r.doc()["var"].get<double>(), 14248, 1e-6);
}

TEST(Cli, DesignJsonRoundTrip) {
    const std::string text =
        R"({"two_stage":{"psu":{"srs":{"n":2,"method":"reservoir"}},"ssu":{"systematic":{"n":2}}}})";
    const auto d = survey::cli::design_from_json(json::parse(text));
    const auto back = survey::cli::design_to_json(d);
    EXPECT_EQ(survey::cli::design_to_json(survey::cli::design_from_json(back)), back);
    EXPECT_EQ(back["two_stage"]["psu"]["srs"]["method"], "reservoir");
}

TEST(Cli, EveryDesignKeyRoundTrips) {
    const std::vector<std::string> docs{
        R"({"srs":{"n":2,"method":"random_sort"}})",
        R"({"srswr":{"n":3}})",
        R"({"bernoulli":{"pi":0.3}})",
        R"({"poisson":{"n":2}})",
        R"({"systematic":{"n":2}})",
        R"({"systematic_pips":{"n":2}})",
        R"({"ppswr":{"n":2,"method":"lahiri"}})",
        R"({"brewer2":{}})",
        R"({"durbin2":{}})",
        R"({"chao":{"n":2}})",
        R"({"rejective":{"n":2,"calibrate":true}})",
        R"({"stratified":{"strata":[{"label":"A","design":{"srs":{"n":1}}},{"label":"B","design":{"ppswr":{"n":2}}}]}})",
        R"({"cluster":{"psu":{"srs":{"n":1}}}})",
        R"({"two_phase":{"phase1":{"srs":{"n":8}},"phase2":{"stratified_srs":{"x":0,"cuts":[6],"rates":[0.5,0.75]}}}})",
        R"({"two_phase":{"phase1":{"srs":{"n":8}},"phase2":{"poisson_pps":{"x":0,"expected_size":3}}}})",
    };
    for (const auto& text : docs) {
        const auto once = survey::cli::design_to_json(survey::cli::design_from_json(json::parse(text)));
        EXPECT_EQ(survey::cli::design_to_json(survey::cli::design_from_json(once)), once) << text;
        EXPECT_EQ(once.begin().key(), json::parse(text).begin().key()) << text;
    }
}

TEST(Cli, TwoPhaseDrawFromJson) {
    const auto r = call({"--frame", kData + "/household_frame.csv", "--seed", "2", "draw", "--design",
                         R"({"two_phase":{"phase1":{"srs":{"n":8}},"phase2":{"stratified_srs":{"x":0,"cuts":[6],"rates":[0.5,0.75]}}}})"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_GE(r.doc()["units"].size(), 4u);
}

TEST(Cli, SchemaErrorsNamePath) {
    const auto r = call({"--frame", kData + "/household_frame.csv", "draw", "--design",
                         R"({"two_stage":{"psu":{"srs":{"n":2}},"ssu":{"two_phase":{"phase1":{"srs":{"n":2}}}}}})"});
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("ssu"), std::string::npos);
    const auto typo = call({"--frame", kData + "/farm_frame.csv", "draw", "--design", R"({"srs":{"size":2}})"});
    EXPECT_EQ(typo.code, 3);
    EXPECT_NE(typo.err.find("size"), std::string::npos);
}

TEST(Cli, ExitCodes) {
    EXPECT_EQ(call({"draw", "--bogus"}).code, 2);
    EXPECT_EQ(call({}).code, 2);
    const auto bad = call({"--frame", kData + "/bad_frame.csv", "draw", "--design", "srs", "--n", "1"});
    EXPECT_EQ(bad.code, 3);
    EXPECT_NE(bad.err.find("row 3"), std::string::npos);
    const auto c = write_temp("cons.csv", "d,one,x\n2,1,1\n3,1,2\n4,1,3\n");
    const auto t = write_temp("targets.csv", "name,total\none,-10\nx,20\n");
    EXPECT_EQ(call({"calibrate", "--constraints", c, "--targets", t, "--entropy", "empirical_likelihood"}).code, 4);
    EXPECT_EQ(call({"--help"}).code, 0);
}

TEST(Cli, CalibrationReachesTargets) {
    const auto c = write_temp("cons2.csv", "d,one,x\n2,1,1\n3,1,2\n4,1,3\n5,1,5\n");
    const auto t = write_temp("targets2.csv", "name,total\none,16\nx,45\n");
    const auto r = call({"calibrate", "--constraints", c, "--targets", t, "--entropy", "kl"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto w = r.doc()["weights"].get<std::vector<double>>();
    EXPECT_NEAR(w[0] + w[1] + w[2] + w[3], 16, 1e-8);
    EXPECT_NEAR(w[0] + 2 * w[1] + 3 * w[2] + 5 * w[3], 45, 1e-8);
}

TEST(Cli, DiagnoseExitPollPipeline) {
    const auto r = call({"diagnose", "--margin", "0.02", "--M", "200", "--rho", "0.05"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NEAR(r.doc()["required_clusters"].get<double>(), 136.875, 1e-9);
}

TEST(Cli, NonresponseAndSmallArea) {
    for (const std::string m : {"ps", "nwa", "gec"}) {
        const auto r = call({"nonresponse", "--data", kData + "/nonresponse.csv", "--method", m});
        ASSERT_EQ(r.code, 0) << m << ": " << r.err;
        EXPECT_TRUE(std::isfinite(r.doc()["estimate"]["value"].get<double>()));
    }
    const auto s = call({"smallarea", "--areas", kData + "/areas.csv"});
    ASSERT_EQ(s.code, 0) << s.err;
    const auto areas = s.doc()["areas"];
    EXPECT_EQ(areas.size(), 30u);
    for (const auto& a : areas) {
        const double alpha = a["alpha"].get<double>();
        EXPECT_NEAR(a["eblup"].get<double>(),
                    alpha * a["direct"].get<double>() + (1 - alpha) * a["synthetic"].get<double>(), 1e-10);
    }
}

TEST(Cli, BinaryExitCode) {
    // exercises the installed entry point rather than the library call
    const std::string cmd = std::string(SURVEY_CLI_PATH) + " draw --bogus >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    ASSERT_NE(status, -1);
    EXPECT_EQ(WEXITSTATUS(status), 2);
}
