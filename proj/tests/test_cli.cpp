#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "twostop/cli.hpp"

using namespace twostop;
namespace fs = std::filesystem;

namespace {

json linear_config_json()
{
    return json::parse(R"({
        "horizon": 2.0,
        "site1": {"inter_arrival": {"kind": "exponential", "rate": 2},
                  "catch_size": {"kind": "exponential", "rate": 1},
                  "utility": {"kind": "linear", "slope": 1},
                  "cost": {"kind": "linear", "rate": 1}},
        "site2": {"inter_arrival": {"kind": "exponential", "rate": 1},
                  "catch_size": {"kind": "exponential", "rate": 0.5},
                  "utility": {"kind": "linear", "slope": 1},
                  "cost": {"kind": "linear", "rate": 1.5}},
        "grid": {"mass_max": 8, "mass_nodes": 17, "time_nodes": 9},
        "simulation": {"replications": 2000, "seed": 7}
    })");
}

json mixed_config_json()
{
    return json::parse(R"({
        "horizon": 2.0,
        "site1": {"inter_arrival": {"kind": "exponential", "rate": 2},
                  "catch_size": {"kind": "gamma", "shape": 2, "scale": 0.4},
                  "utility": {"kind": "saturating", "bound": 4, "rate": 0.4},
                  "cost": {"kind": "quadratic", "linear": 0.2, "quadratic": 0.3}},
        "site2": {"inter_arrival": {"kind": "weibull", "shape": 1.5, "scale": 0.6},
                  "catch_size": {"kind": "exponential", "rate": 1},
                  "utility": {"kind": "saturating", "bound": 3, "rate": 0.6},
                  "cost": {"kind": "linear", "rate": 0.4}},
        "grid": {"mass_nodes": 13, "time_nodes": 9},
        "simulation": {"replications": 2000, "seed": 3}
    })");
}

/// Fresh empty directory under the system temp dir.
fs::path scratch(const std::string& name)
{
    auto dir = fs::temp_directory_path() / ("twostop_cli_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

RunConfig config_in(const json& j, const fs::path& dir)
{
    auto cfg = parse_config(j);
    cfg.out_dir = dir.string();
    return cfg;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Config, EmitParseRoundTrip)
{
    auto cfg = parse_config(mixed_config_json());
    EXPECT_TRUE(cfg.auto_mass_max);
    EXPECT_DOUBLE_EQ(cfg.grid.mass_max, default_mass_max(cfg.problem));
    EXPECT_DOUBLE_EQ(cfg.problem.site1.cost.p1, 0.0);  // defaulted offset
    auto again = parse_config(emit_config(cfg));
    EXPECT_EQ(emit_config(again).dump(), emit_config(cfg).dump());
    EXPECT_EQ(config_hash(again), config_hash(cfg));
}

TEST(Config, RejectsUnknownAndMissingKeys)
{
    auto j = linear_config_json();
    j["site1"]["cost"]["slope"] = 1.0;
    EXPECT_THROW(parse_config(j), ConfigError);
    j = linear_config_json();
    j["extras"] = 1;
    EXPECT_THROW(parse_config(j), ConfigError);
    j = linear_config_json();
    j.erase("site2");
    EXPECT_THROW(parse_config(j), ConfigError);
    j = linear_config_json();
    j["site2"]["inter_arrival"] = {{"kind", "lognormal"}, {"rate", 1.0}};
    EXPECT_THROW(parse_config(j), ConfigError);
    j = linear_config_json();
    j["grid"]["time_nodes"] = 8.5;
    EXPECT_THROW(parse_config(j), ConfigError);
    j = linear_config_json();
    j["output"] = {{"format", "xml"}};
    EXPECT_THROW(parse_config(j), ConfigError);
}

TEST(Config, HashIgnoresOutputSection)
{
    auto a = parse_config(linear_config_json());
    auto b = a;
    b.out_dir = "elsewhere";
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.simulation.seed = 8;
    EXPECT_NE(config_hash(a), config_hash(b));
    EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Solve, WritesAllArtifacts)
{
    auto dir = scratch("solve");
    auto cfg = config_in(linear_config_json(), dir);
    std::ostringstream log, err;
    ASSERT_EQ(cmd_solve(cfg, log, err), exit_ok) << err.str();
    for (const char* name : {artifact::stage2_value, artifact::stage2_delay, artifact::stage1_value,
                             artifact::stage1_delay, artifact::stage2_boundary, artifact::stage1_boundary,
                             artifact::summary_json})
        EXPECT_TRUE(fs::exists(dir / name)) << name;
    auto summary = json::parse(slurp(dir / artifact::summary_json));
    EXPECT_EQ(summary["schema"], "twostop-summary/1");
    EXPECT_EQ(summary["config_hash"], config_hash(cfg));
    EXPECT_NEAR(summary["V"].get<double>(), 2.0, 1e-4);  // t0 * max(rho1, rho2) = 2 * 1
    auto r1 = load_field((dir / artifact::stage1_delay).string());
    EXPECT_EQ(r1.rank(), 2u);
    EXPECT_NEAR(r1.at(0.0, 0.0, 2.0), 2.0, 1e-12);
}

TEST(Solve, CsvSummary)
{
    auto dir = scratch("solve_csv");
    auto cfg = config_in(linear_config_json(), dir);
    cfg.format = "csv";
    std::ostringstream log, err;
    ASSERT_EQ(cmd_solve(cfg, log, err), exit_ok);
    auto text = slurp(dir / artifact::summary_csv);
    EXPECT_NE(text.find("V,q2,q1,stage2_iterations"), std::string::npos);
    EXPECT_EQ(text.rfind("# generator twostop", 0), 0u);
}

TEST(ExitCodes, InvalidInstanceIsTwo)
{
    auto dir = scratch("invalid");
    auto j = linear_config_json();
    j["site2"]["inter_arrival"] = {{"kind", "uniform"}, {"low", 0.1}, {"high", 1.0}};  // F2(t0) = 1
    auto cfg = config_in(j, dir);
    std::ostringstream log, err;
    EXPECT_EQ(cmd_solve(cfg, log, err), exit_invalid);
    EXPECT_NE(err.str().find("contraction"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir / artifact::summary_json));
}

TEST(ExitCodes, NonConvergenceIsThree)
{
    auto dir = scratch("noconv");
    auto j = mixed_config_json();
    j["solver"] = {{"max_iterations", 1}};
    auto cfg = config_in(j, dir);
    std::ostringstream log, err;
    EXPECT_EQ(cmd_solve(cfg, log, err), exit_convergence);
}

TEST(ExitCodes, MissingArtifactIsFour)
{
    auto dir = scratch("missing");
    auto cfg = config_in(linear_config_json(), dir);
    std::ostringstream log, err;
    EXPECT_EQ(cmd_simulate(cfg, PolicySource::solved, 0, log, err), exit_missing_artifact);
    EXPECT_NE(err.str().find("twostop solve"), std::string::npos);
}

TEST(ExitCodes, UnsupportedThresholdIsTwo)
{
    auto dir = scratch("threshold");
    auto cfg = config_in(mixed_config_json(), dir);  // Weibull arrivals at site 2
    std::ostringstream log, err;
    EXPECT_EQ(cmd_simulate(cfg, PolicySource::threshold, 0, log, err), exit_invalid);
}

TEST(Simulate, SolvedPolicyAfterSolve)
{
    auto dir = scratch("simulate");
    auto cfg = config_in(linear_config_json(), dir);
    std::ostringstream log, err;
    ASSERT_EQ(cmd_solve(cfg, log, err), exit_ok);
    ASSERT_EQ(cmd_simulate(cfg, PolicySource::solved, 5, log, err), exit_ok) << err.str();
    auto est = json::parse(slurp(dir / artifact::estimate));
    EXPECT_EQ(est["schema"], "twostop-estimate/1");
    EXPECT_EQ(est["replications"].get<std::uint64_t>(), 2000u);
    EXPECT_LE(std::abs(est["mean"].get<double>() - 2.0), 4.0 * est["std_error"].get<double>());
    auto traj = slurp(dir / artifact::trajectories);
    EXPECT_EQ(traj.rfind("# generator twostop", 0), 0u);

    ASSERT_EQ(cmd_simulate(cfg, PolicySource::baseline, 0, log, err), exit_ok);
    est = json::parse(slurp(dir / artifact::estimate));
    EXPECT_DOUBLE_EQ(est["mean"].get<double>(), 0.0);
    EXPECT_DOUBLE_EQ(est["std_error"].get<double>(), 0.0);
}

TEST(PolicySourceNames, ParseAndPrint)
{
    EXPECT_EQ(parse_policy_source("stop-now"), PolicySource::baseline);
    EXPECT_EQ(parse_policy_source("never-stop"), PolicySource::never_stop);
    EXPECT_FALSE(parse_policy_source("greedy").has_value());
    for (auto s : {PolicySource::solved, PolicySource::threshold, PolicySource::baseline, PolicySource::never_stop})
        EXPECT_EQ(parse_policy_source(to_string(s)), s);
}

TEST(Determinism, RepeatedRunsAreByteIdentical)
{
    auto d1 = scratch("det1"), d2 = scratch("det2");
    auto c1 = config_in(mixed_config_json(), d1), c2 = config_in(mixed_config_json(), d2);
    c2.solver.threads = 3;
    std::ostringstream log, err;
    for (auto* c : {&c1, &c2}) {
        ASSERT_EQ(cmd_solve(*c, log, err), exit_ok) << err.str();
        ASSERT_EQ(cmd_simulate(*c, PolicySource::solved, 10, log, err), exit_ok) << err.str();
    }
    for (const auto& entry : fs::directory_iterator(d1))
        EXPECT_EQ(slurp(entry.path()), slurp(d2 / entry.path().filename())) << entry.path().filename();
}

TEST(Sweep, EmptySingleAndFailingPoints)
{
    auto dir = scratch("sweep");
    auto cfg = config_in(linear_config_json(), dir);
    std::ostringstream log, err;

    ASSERT_EQ(cmd_sweep(cfg, "site2.cost.rate", {}, log, err), exit_ok);
    auto text = slurp(dir / artifact::sweep);
    EXPECT_NE(text.find("# parameter site2.cost.rate\n"), std::string::npos);
    EXPECT_EQ(text.substr(text.find("value,")), "value,V,q2,q1,stage2_iterations,stage1_iterations,initial_delay,status\n");

    ASSERT_EQ(cmd_sweep(cfg, "site2.cost.rate", {0.25}, log, err), exit_ok);
    text = slurp(dir / artifact::sweep);
    // rho2 = 2 - 0.25 > rho1 = 1: V = 3.5
    auto row = text.substr(text.rfind('\n', text.size() - 2) + 1);
    EXPECT_EQ(row.rfind("0.25,", 0), 0u);
    EXPECT_NEAR(std::stod(row.substr(5)), 3.5, 1e-4);
    EXPECT_NE(row.find(",ok\n"), std::string::npos);

    // rate 0 makes the site-2 gap law degenerate: that row fails, the sweep goes on
    EXPECT_EQ(cmd_sweep(cfg, "site2.inter_arrival.rate", {0.0, 1.0}, log, err), exit_invalid);
    text = slurp(dir / artifact::sweep);
    EXPECT_NE(text.find("invalid: "), std::string::npos);
    EXPECT_NE(text.find(",ok\n"), std::string::npos);

    EXPECT_EQ(cmd_sweep(cfg, "site3.cost.rate", {1.0}, log, err), exit_invalid);
}

TEST(Sweep, WithParameterKeepsIntegerFields)
{
    auto cfg = parse_config(linear_config_json());
    auto g = with_parameter(cfg, "grid.time_nodes", 5);
    EXPECT_EQ(g.grid.time_nodes, 5);
    EXPECT_THROW(with_parameter(cfg, "grid.time_nodes", 5.5), ConfigError);
    EXPECT_DOUBLE_EQ(with_parameter(cfg, "horizon", 1.5).problem.horizon, 1.5);
}

TEST(Compare, ReportJsonRoundTrip)
{
    CompareReport r;
    r.config_hash = "0123456789abcdef";
    r.solver_value = 1.25;
    r.q2 = 0.5;
    r.mc = {1.2, 0.01, 1000, 4};
    r.perturbations = {{"scale x0.5", 1.1, 0.02, -0.1, 0.005, false}};
    r.decay = {{0, 1.0}, {1, 0.5, 0.5}, {2, 1e-15}};
    auto back = compare_report_from_json(to_json(r));
    EXPECT_EQ(back.config_hash, r.config_hash);
    EXPECT_DOUBLE_EQ(back.mc.mean, 1.2);
    EXPECT_EQ(back.mc.replications, 1000u);
    ASSERT_EQ(back.perturbations.size(), 1u);
    EXPECT_EQ(back.perturbations[0].label, "scale x0.5");
    ASSERT_EQ(back.decay.size(), 3u);
    EXPECT_TRUE(std::isnan(back.decay[0].ratio));
    EXPECT_DOUBLE_EQ(back.decay[1].ratio, 0.5);
    EXPECT_TRUE(to_json(r)["decay"][2]["ratio"].is_null());
}

TEST(Compare, DecayRatiosStayBelowModulus)
{
    auto cfg = parse_config(mixed_config_json());
    auto decay = finite_k_decay(cfg, 6);
    ASSERT_EQ(decay.size(), 7u);
    const double q = cfg.problem.q2();
    for (const auto& p : decay) {
        if (!std::isnan(p.ratio)) {
            EXPECT_LE(p.ratio, q + 1e-9) << "K=" << p.k;
        }
    }
}

TEST(Binary, ExitCodesFromTheCommandLine)
{
    const std::string exe = TWOSTOP_CLI_PATH;
    auto dir = scratch("binary");
    const auto cfg_path = dir / "config.json";
    std::ofstream(cfg_path) << linear_config_json().dump(2);
    auto run = [&](const std::string& args) {
        int status = std::system((exe + " " + args + " > /dev/null 2>&1").c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    };
    const std::string common = "--config " + cfg_path.string() + " --out " + (dir / "out").string();
    EXPECT_EQ(run("simulate " + common + " --policy solved"), exit_missing_artifact);
    EXPECT_EQ(run("solve " + common), exit_ok);
    EXPECT_EQ(run("simulate " + common + " --policy solved --replications 500"), exit_ok);
    EXPECT_TRUE(fs::exists(dir / "out" / artifact::estimate));
    std::ofstream(dir / "bad.json") << "{\"horizon\": 2, \"site1\": {}}";
    EXPECT_EQ(run("solve --config " + (dir / "bad.json").string()), exit_invalid);
}
