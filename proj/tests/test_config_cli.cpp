#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cutin/config.hpp>

using namespace cutin;
namespace fs = std::filesystem;

namespace {

struct Result {
    int status;
    std::string out;
};

Result run_cli(const std::string& args) {
    std::string cmd = std::string(CUTIN_CLI) + " " + args + " 2>&1";
    Result r{0, {}};
    FILE* f = popen(cmd.c_str(), "r");
    if (!f) return {-1, {}};
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, f)) r.out.append(buf, n);
    int st = pclose(f);
    r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

fs::path scratch(const std::string& name) {
    auto d = fs::temp_directory_path() / "cutin_cli_test";
    fs::create_directories(d);
    return d / name;
}

std::string data(const std::string& f) { return (fs::path(CUTIN_DATA) / f).string(); }

std::vector<std::vector<double>> read_csv(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        std::vector<double> row;
        for (const auto& s : split_csv_line(line)) row.push_back(parse_double(s, "csv"));
        rows.push_back(row);
    }
    return rows;
}

}  // namespace

TEST(Config, ParsesKeysCommentsAndDefaults) {
    auto c = parse_scenario_config("# comment\ntheta = 0.2\nphi=0.5\nmode = worst_case_braking\n; other\nseed = 42\n"
                                   "al_breaks = 1 2\nal_values = -1\n",
                                   "mem");
    EXPECT_EQ(c.theta, 0.2);
    EXPECT_EQ(c.phi, 0.5);
    EXPECT_EQ(c.mode, ScenarioMode::worst_case_braking);
    EXPECT_EQ(c.seed, 42u);
    EXPECT_EQ(c.a_l(1.5), -1.0);
    EXPECT_EQ(c.u_b, ScenarioConfig{}.u_b);
    EXPECT_FALSE(c.deviations);
}

TEST(Config, DeviationKeysEnableDeviationMode) {
    auto c = parse_scenario_config("ds_c = -5\ndv_l = 5\n", "mem");
    ASSERT_TRUE(c.deviations);
    EXPECT_EQ(c.deviations->ds_c, -5.0);
    EXPECT_EQ(c.deviations->dv_c, 0.0);
    EXPECT_EQ(c.deviations->dv_l, 5.0);
}

TEST(Config, RejectsBadInput) {
    EXPECT_THROW(parse_scenario_config("speed = 3\n", "mem"), ValidationError);
    EXPECT_THROW(parse_scenario_config("theta = fast\n", "mem"), ValidationError);
    EXPECT_THROW(parse_scenario_config("theta = -1\n", "mem"), ValidationError);
    EXPECT_THROW(parse_scenario_config("[x]\ntheta = 1\n", "mem"), ValidationError);
    EXPECT_THROW(parse_scenario_config("mode = fast\n", "mem"), ValidationError);
    EXPECT_THROW(parse_scenario_config("N = 500\n", "mem"), ValidationError);
    EXPECT_THROW(parse_scenario_config("saturate = maybe\n", "mem"), ValidationError);
    EXPECT_THROW(load_scenario_config("/nonexistent/cutin.cfg"), ValidationError);
}

TEST(Config, BundledDefaultsLoad) {
    auto c = load_scenario_config(data("cutin.cfg"));
    EXPECT_EQ(c.theta, 0.0);
    EXPECT_EQ(c.profile.a1, -2.0);
    EXPECT_EQ(c.lprime, 3.0);
    EXPECT_EQ(c.t_l, -1.0);
}

TEST(Config, JsonHasEveryResolvedField) {
    auto j = to_json(ScenarioConfig{});
    for (const char* k : {"theta", "phi", "tl_start", "ufb", "mode", "profile", "kinematics", "seed", "deviations"})
        EXPECT_TRUE(j.contains(k)) << k;
}

TEST(Cli, SimulateWritesTrajectoryAndManifest) {
    auto out = scratch("sim.csv");
    fs::remove(out);
    auto r = run_cli("simulate --config " + data("cutin.cfg") + " --out " + out.string());
    ASSERT_EQ(r.status, 0) << r.out;
    EXPECT_NE(r.out.find("min_gap="), std::string::npos);
    ASSERT_TRUE(fs::exists(out));
    ASSERT_TRUE(fs::exists(out.string() + ".manifest.json"));
    auto rows = read_csv(out);
    ASSERT_EQ(rows.size(), 611u);
    EXPECT_EQ(rows.front()[0], 0.0);
    // Equilibrium spacing plus the net speed gain of the cut-in vehicle.
    EXPECT_NEAR(rows.back()[12], 20.0 * 1.18 + 7.64 - 3.0 + 2.0 * 1.18, 1e-3);
}

TEST(Cli, AnticipationWidensMinimumGap) {
    auto a = scratch("phi0.csv"), b = scratch("phi1.csv");
    ASSERT_EQ(run_cli("simulate --theta 0.3 --phi 0 --out " + a.string()).status, 0);
    ASSERT_EQ(run_cli("simulate --theta 0.3 --phi 1 --out " + b.string()).status, 0);
    auto min_gap_of = [](const fs::path& p) {
        double m = 1e300;
        for (const auto& r : read_csv(p)) m = std::min(m, r[12]);
        return m;
    };
    EXPECT_GT(min_gap_of(b), min_gap_of(a));
}

TEST(Cli, ExitCodes) {
    auto out = scratch("never.csv");
    fs::remove(out);
    EXPECT_EQ(run_cli("simulate --config /nonexistent.cfg --out " + out.string()).status, 2);
    EXPECT_FALSE(fs::exists(out));
    EXPECT_EQ(run_cli("simulate --theta -1 --out " + out.string()).status, 2);
    EXPECT_EQ(run_cli("nosuchcommand").status, 2);
    EXPECT_EQ(run_cli("simulate --params /nonexistent.csv --out " + out.string()).status, 2);
    EXPECT_FALSE(fs::exists(out));
    EXPECT_EQ(run_cli("--help").status, 0);
}

TEST(Cli, StabilityClassifiesWitness) {
    auto out = scratch("stab.csv");
    auto r = run_cli("stability --params " + data("witness.csv") + " --theta 0.3 --out " + out.string());
    ASSERT_EQ(r.status, 0) << r.out;
    std::ifstream in(out);
    std::stringstream ss;
    ss << in.rdbuf();
    EXPECT_NE(ss.str().find("w8"), std::string::npos);
}

TEST(Cli, LambertPlotRoundTrip) {
    auto out = scratch("lw.csv");
    auto r = run_cli("lambert-plot --branches=-1,0,1 --grid=-1:2:31 --out " + out.string());
    ASSERT_EQ(r.status, 0) << r.out;
    ASSERT_TRUE(fs::exists(out));
}

TEST(Cli, SweepIsDeterministicAndReplays) {
    auto out = scratch("sweep.csv");
    std::string args = "sweep delay-anticipation --synthetic 40 --take 6 --axis theta:0:0.3:0.15 --axis phi:0:1:0.5 --out " +
                       out.string();
    ASSERT_EQ(run_cli(args).status, 0);
    std::ifstream a(out);
    std::stringstream first;
    first << a.rdbuf();
    auto r = run_cli("replay --verify " + out.string() + ".manifest.json");
    EXPECT_EQ(r.status, 0) << r.out;
    EXPECT_NE(r.out.find("identical"), std::string::npos);
    const std::string text = first.str();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 10);
}
