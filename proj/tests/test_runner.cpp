#include "gflow/runner.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <numbers>
#include <sstream>

using namespace gflow;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

RunConfig tiny(const std::string& out)
{
    RunConfig c;
    c.scenario = "shift";
    c.out = (std::filesystem::path(::testing::TempDir()) / out).string();
    c.solver.epsilon_floor = 1e-4;
    return c;
}

}  // namespace

TEST(RunConfig, StrictKeys)
{
    EXPECT_THROW(RunConfig::from_json(json{{"nn", 3}}), ConfigError);
    EXPECT_THROW(RunConfig::from_json(json{{"solver", {{"tol", 1}}}}), ConfigError);
    EXPECT_THROW(RunConfig::from_json(json{{"check", {{"floor", 1}}}}), ConfigError);
    EXPECT_THROW(RunConfig::from_json(json{{"n", "four"}}), ConfigError);
    EXPECT_THROW(RunConfig::from_json(json{{"solver", {{"backend", "gpu"}}}}), ConfigError);
    EXPECT_THROW(RunConfig::from_json(json::array()), ConfigError);
    const RunConfig c = RunConfig::from_json(json{{"n", 8}, {"T", 2.0}, {"solver", {{"epsilon_floor", 1e-3}}}});
    EXPECT_EQ(c.n, 8);
    EXPECT_DOUBLE_EQ(c.horizon(), 2.0);
    EXPECT_DOUBLE_EQ(*c.solver.epsilon_floor, 1e-3);
}

TEST(RunConfig, RoundTrip)
{
    RunConfig c = tiny("rt");
    c.velocity = {0.125, 0.5};
    c.check.samples = 77;
    RunConfig back = RunConfig::from_json(c.to_json());
    EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(RunConfig, Validation)
{
    auto bad = [](auto edit) {
        RunConfig c;
        edit(c);
        return c;
    };
    EXPECT_THROW(bad([](RunConfig& c) { c.n = 1; }).validate(), ConfigError);
    EXPECT_THROW(bad([](RunConfig& c) { c.K = 1; }).validate(), ConfigError);
    EXPECT_THROW(bad([](RunConfig& c) { c.scenario = "spiral"; }).validate(), ConfigError);
    EXPECT_THROW(bad([](RunConfig& c) { c.scenario = "rotation-classical"; }).validate(), ConfigError);
    EXPECT_THROW(bad([](RunConfig& c) { c.domain = "disk-2d"; c.scenario = "translation"; }).validate(), ConfigError);
    EXPECT_THROW(bad([](RunConfig& c) { c.oracle = true; c.scenario = "antipodal"; }).validate(), ConfigError);
    EXPECT_THROW(bad([](RunConfig& c) { c.q = "half"; }).validate(), ConfigError);
    EXPECT_THROW(bad([](RunConfig& c) { c.theta_samples = 4; }).validate(), ConfigError);
    EXPECT_THROW(bad([](RunConfig& c) { c.solver.epsilon_factor = 2.0; }).validate(), ConfigError);
    EXPECT_NO_THROW(bad([](RunConfig& c) { c.domain = "disk-2d"; c.scenario = "rotation-split"; }).validate());
    EXPECT_DOUBLE_EQ(bad([](RunConfig& c) { c.domain = "disk-2d"; c.scenario = "rotation-split"; }).horizon(), std::numbers::pi);
}

TEST(Run, DeterministicSummary)
{
    const RunResult a = run(Command::Pressure, tiny("det_a"));
    const RunResult b = run(Command::Pressure, tiny("det_b"));
    EXPECT_EQ(a.exit_code, 0);
    EXPECT_EQ(slurp(tiny("det_a").out + "/summary.json"), slurp(tiny("det_b").out + "/summary.json"));
    EXPECT_TRUE(std::filesystem::exists(tiny("det_a").out + "/fields/pressure.csv"));
    EXPECT_TRUE(std::filesystem::exists(tiny("det_a").out + "/fields/marginals.csv"));
    EXPECT_NEAR(a.summary["flow"]["action"].get<double>(), 0.09375, 0.02 * 0.09375);
    EXPECT_EQ(a.summary["schema_version"], kSummarySchemaVersion);
}

TEST(Run, ExitCodes)
{
    RunConfig c = tiny("exit2");
    c.solver.max_sweeps = 5;
    EXPECT_EQ(run(Command::Solve, c).exit_code, 2);

    RunConfig r;
    r.domain = "torus-2d";
    r.n = 8;
    r.K = 4;
    r.scenario = "translation";
    r.oracle = true;
    r.q = "zero";
    r.expect_certified = true;
    r.out = (std::filesystem::path(::testing::TempDir()) / "exit0").string();
    EXPECT_EQ(run(Command::Certify, r).exit_code, 0);

    RunConfig s;
    s.domain = "disk-2d";
    s.n = 8;
    s.K = 4;
    s.scenario = "rotation-classical";
    s.q = "zero";
    s.expect_certified = true;
    s.out = (std::filesystem::path(::testing::TempDir()) / "exit3").string();
    const RunResult res = run(Command::Certify, s);
    EXPECT_EQ(res.exit_code, 3);
    EXPECT_FALSE(res.summary["certificate"]["certified"].get<bool>());
}

TEST(Run, ProjectionCommands)
{
    RunConfig c;
    c.domain = "torus-1d";
    c.n = 4;
    c.h = "random";
    c.seed = 5;
    c.out = (std::filesystem::path(::testing::TempDir()) / "proj").string();
    const RunResult r = run(Command::Project, c);
    EXPECT_DOUBLE_EQ(r.summary["projection"]["distance2"].get<double>(), 0.0);
    c.scenario = "shift";
    c.shift = 2;
    const RunResult m = run(Command::Midpoint, c);
    EXPECT_TRUE(m.summary["projection"]["is_map"].get<bool>());
    EXPECT_TRUE(std::filesystem::exists(c.out + "/fields/midpoint.csv"));
}

TEST(Compare, Summaries)
{
    const RunResult a = run(Command::Pressure, tiny("cmp_a"));
    const json same = compare_summaries(a.summary, a.summary);
    EXPECT_DOUBLE_EQ(same["action"]["rel_diff"].get<double>(), 0.0);
    EXPECT_DOUBLE_EQ(same["pressure"]["rel_l2_diff"].get<double>(), 0.0);
    json b = a.summary;
    b["flow"]["action"] = 2.0 * b["flow"]["action"].get<double>();
    EXPECT_NEAR(compare_summaries(a.summary, b)["action"]["rel_diff"].get<double>(), 0.5, 1e-12);
    b["schema_version"] = 99;
    EXPECT_THROW(compare_summaries(a.summary, b), ConfigError);
}
