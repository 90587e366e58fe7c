#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ets/scenario.hpp"
#include "test_support.hpp"

using namespace ets;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("ets_scenario_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_file(const fs::path& p, const std::string& text) {
    std::ofstream(p) << text;
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string config_error(const std::string& text) {
    try {
        parse_config(nlohmann::json::parse(text));
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(ETS_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kSmall = R"({
  "preset": "paper-2020-base",
  "simulation": {"n_paths": 40, "n_steps": 100, "seed": 3, "threads": 1, "trajectory_paths": 2}
})";

}  // namespace

TEST(Config, PresetMatchesBaseCalibration) {
    const auto c = parse_config(nlohmann::json::parse(R"({"preset": "paper-2020-base"})"));
    const auto m = c.market();
    EXPECT_EQ(m.n(), 6u);
    EXPECT_LT(test::rel(ell(m), -683407407.40740741), 1e-13);
    EXPECT_TRUE(m.nu().is_frictionless());
    EXPECT_EQ(c.simulation.n_steps, 2000u);
    const auto alt = parse_config(nlohmann::json::parse(R"({"preset": "paper-2020-alt"})"));
    EXPECT_LT(test::rel(alt.market().agg().h_bar, 25.0 / 6), 1e-15);
}

TEST(Config, ExplicitMarketAndFirms) {
    const auto c = parse_config(nlohmann::json::parse(R"({
      "market": {"horizon": 5, "rho": 0.5, "lambda": 1e-6, "nu": 2e5},
      "firms": [{"mu": 1e8, "sigma": 1e7, "k": 0.3, "h": 10, "eta": 1e8},
                {"mu": 2e8, "sigma": 2e7, "k": -0.3, "h": 12, "eta": 2e8}],
      "policy": {"kind": "custom", "m0": [1, 2], "gamma": [[0, 0, 0], [1, 1, 1]], "require_target": false},
      "simulation": {"stepping": "left_point", "msr_scheme": "coupled_euler", "beta": "adapted"},
      "output": {"units": "Gt", "directory": "out"}
    })"));
    EXPECT_EQ(c.firms.size(), 2u);
    EXPECT_EQ(c.nu.value(), 2e5);
    EXPECT_EQ(c.policy.kind, PolicyKind::CustomMartingale);
    EXPECT_EQ(c.policy.gamma[1][2], 1.0);
    EXPECT_EQ(c.simulation.options.stepping, PriceStepping::LeftPoint);
    EXPECT_EQ(c.simulation.options.msr, MsrScheme::CoupledEuler);
    EXPECT_EQ(c.simulation.options.beta, BetaSelection::Adapted);
    EXPECT_EQ(c.output.units, Units::Gigatons);
    EXPECT_EQ(c.output.directory, "out");
}

TEST(Config, FirmCountOverridesPreset) {
    const auto c = parse_config(
        nlohmann::json::parse(R"({"preset": "paper-2020-base", "firms": {"count": 60, "firm": {"eta": 1e6}},
                                  "market": {"nu": "inf"}})"));
    EXPECT_EQ(c.firms.size(), 60u);
    EXPECT_EQ(c.firms[59].eta, 1e6);
    EXPECT_EQ(c.firms[59].h, 25.0);
}

TEST(Config, RejectionsNameTheField) {
    EXPECT_NE(config_error(R"({"preset": "paper-2020-base", "colour": 1})").find("unknown key 'colour'"),
              std::string::npos);
    EXPECT_NE(config_error(R"({"preset": "paper-2020-base", "market": {"rho": 1.0}})").find("rho"),
              std::string::npos);
    EXPECT_NE(config_error(R"({"preset": "paper-2020-base", "market": {"nu": -3}})").find("market.nu"),
              std::string::npos);
    EXPECT_NE(config_error(R"({"preset": "paper-2020-base", "market": {"nu": "lots"}})").find("market.nu"),
              std::string::npos);
    EXPECT_NE(config_error(R"({"preset": "paper-2020-base", "firms": [{"k": 2}]})").find("firms[0]"),
              std::string::npos);
    EXPECT_NE(config_error(R"({"preset": "paper-2020-base", "firms": [{"mu": 1, "h": 1, "eta": "x"}]})")
                  .find("firms[0].eta"),
              std::string::npos);
    EXPECT_NE(config_error(R"({"preset": "paper-2020-base", "policy": {"kind": "cap"}})").find("cap"),
              std::string::npos);
    EXPECT_NE(config_error(R"({"preset": "paper-2020-base", "policy": {"delta": 0}})").find("policy.delta"),
              std::string::npos);
    EXPECT_NE(config_error(R"({"preset": "paper-2020-base", "simulation": {"n_paths": 0}})").find("n_paths"),
              std::string::npos);
    EXPECT_NE(config_error(R"({"preset": "paper-2020-base", "simulation": {"n_steps": -5}})").find("n_steps"),
              std::string::npos);
    EXPECT_NE(config_error(R"({"preset": "paper-2020-base", "output": {"units": "kg"}})").find("output.units"),
              std::string::npos);
    EXPECT_NE(config_error(R"({"preset": "nope"})").find("nope"), std::string::npos);
    EXPECT_NE(config_error(R"({"firms": []})").find("preset"), std::string::npos);
    EXPECT_NE(config_error(R"([1, 2])").find("config"), std::string::npos);
}

TEST(Config, LoadFromFile) {
    const auto dir = scratch("load");
    EXPECT_THROW(load_config(dir / "missing.json"), ConfigError);
    EXPECT_THROW(load_config(write_file(dir / "bad.json", "{ not json")), ConfigError);
    EXPECT_EQ(load_config(write_file(dir / "ok.json", kSmall)).simulation.n_paths, 40u);
}

TEST(EtaList, ParsesListsAndLogspace) {
    EXPECT_EQ(parse_eta_list("1e6,2e6"), (std::vector<double>{1e6, 2e6}));
    const auto l = parse_eta_list("logspace:1e6:1e9:4");
    ASSERT_EQ(l.size(), 4u);
    EXPECT_EQ(l.front(), 1e6);
    EXPECT_EQ(l.back(), 1e9);
    EXPECT_NEAR(l[1], 1e7, 1e-3);
    EXPECT_THROW(parse_eta_list("1e6,abc"), ConfigError);
    EXPECT_THROW(parse_eta_list("-1"), ConfigError);
    EXPECT_THROW(parse_eta_list("logspace:1:2"), ConfigError);
}

TEST(Tables, TrajectoryUnitRoundTrip) {
    const auto c = parse_config(nlohmann::json::parse(kSmall));
    const auto mkt = c.market();
    const auto grid = c.grid();
    const PolicySimulator sim(mkt, PolicySpec::static_ets(), grid);
    const std::vector<PolicyPath> paths{sim.run(generate_noise(1, grid, mkt.firms()))};
    std::stringstream tons, gt;
    write_trajectory(tons, paths, grid, "static", Units::Tons);
    write_trajectory(gt, paths, grid, "static", Units::Gigatons);
    const auto a = read_trajectory(tons);
    const auto b = read_trajectory(gt);
    ASSERT_EQ(a.size(), grid.knots());
    ASSERT_EQ(b.size(), a.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ(a[k].price, paths[0].price[k]);
        EXPECT_EQ(a[k].total_bank, paths[0].total_bank[k]);
        EXPECT_NEAR(b[k].total_bank, a[k].total_bank, 1e-15 * std::abs(a[k].total_bank) + 1e-6);
        EXPECT_NEAR(b[k].total_emissions, a[k].total_emissions, 1e-15 * std::abs(a[k].total_emissions) + 1e-6);
    }
    std::stringstream junk("hello\n");
    EXPECT_THROW(read_trajectory(junk), ConfigError);
}

TEST(Tables, SweepHasOneRowPerEta) {
    const auto c = parse_config(nlohmann::json::parse(kSmall));
    const auto rows = sweep_costs(c.market(), {1e6, 6e8}, c.grid(), PathEnsemble(1, 20), 0.1, {}, 1);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_LT(test::rel(rows[1].cost_optimal, 101483358024.69136), 1e-13);
    EXPECT_LT(test::rel(rows[0].delta_stat / rows[0].cost_optimal, 0.19330839571027476), 1e-12);
    EXPECT_LT(test::rel(rows[1].cost_tax, 502000000000.0), 1e-13);
    std::stringstream out;
    write_sweep(out, rows);
    std::string line;
    int n = 0;
    while (std::getline(out, line)) ++n;
    EXPECT_EQ(n, 4);
}

TEST(Tables, DeterministicSweepCollapses) {
    auto c = parse_config(nlohmann::json::parse(kSmall));
    for (auto& f : c.firms) f.sigma = 0.0;
    const auto rows = sweep_costs(c.market(), {1e6, 1e8, 1e9}, c.grid(), PathEnsemble(1, 3), 0.1, {}, 1);
    for (const auto& r : rows) {
        EXPECT_LT(test::rel(r.cost_static, r.cost_optimal), 1e-14);
        EXPECT_LT(test::rel(r.cost_msr, r.cost_optimal), 1e-9);
    }
}

TEST(Simulate, WritesTablesDeterministically) {
    auto c = parse_config(nlohmann::json::parse(kSmall));
    const auto d1 = scratch("sim1"), d2 = scratch("sim2");
    const auto r1 = run_simulate(c, "all", d1);
    c.simulation.threads = 3;
    run_simulate(c, "all", d2);
    ASSERT_EQ(r1.files.size(), 5u);
    for (const auto& f : r1.files) EXPECT_EQ(slurp(f), slurp(d2 / f.filename())) << f;
    const auto rows = [&] {
        std::ifstream in(d1 / "trajectory_static.csv");
        return read_trajectory(in);
    }();
    EXPECT_EQ(rows.size(), 2 * 101u);
    EXPECT_EQ(rows.back().path_id, 1u);
    EXPECT_EQ(rows.back().t, 10.0);
}

TEST(Cli, ExitCodes) {
    const auto dir = scratch("cli");
    const auto cfg = write_file(dir / "small.json", kSmall);
    const auto log = dir / "log.txt";
    EXPECT_EQ(run_cli("simulate --config " + cfg.string() + " --policy static --out " + (dir / "a").string(), log),
              0);
    EXPECT_TRUE(fs::exists(dir / "a" / "trajectory_static.csv"));
    EXPECT_TRUE(fs::exists(dir / "a" / "summary.csv"));
    // --seed overrides the config and changes the output
    EXPECT_EQ(run_cli("simulate --config " + cfg.string() + " --policy static --seed 99 --out " +
                          (dir / "b").string(),
                      log),
              0);
    EXPECT_NE(slurp(dir / "a" / "summary.csv"), slurp(dir / "b" / "summary.csv"));
    EXPECT_EQ(run_cli("compare --config " + cfg.string() + " --etas 1e6,1e9 --paths 5 --steps 50 --out " +
                          (dir / "c").string(),
                      log),
              0);
    EXPECT_TRUE(fs::exists(dir / "c" / "sweep.csv"));
    EXPECT_EQ(run_cli("calibrate-eta --qv 14.531718697922453 --sigma2 5813333333333333.3 --lambda 7.5e-7 --horizon 10",
                      log),
              0);
    EXPECT_LT(test::rel(std::stod(slurp(log)), 6e8), 1e-9);

    EXPECT_EQ(run_cli("calibrate-eta --qv 1e9 --sigma2 1 --lambda 1 --horizon 1", log), 2);
    EXPECT_EQ(run_cli("simulate --config " + (dir / "missing.json").string(), log), 2);
    const auto bad = write_file(dir / "bad.json", R"({"preset": "paper-2020-base", "market": {"rho": 2}})");
    EXPECT_EQ(run_cli("simulate --config " + bad.string(), log), 2);
    EXPECT_NE(slurp(log).find("rho"), std::string::npos);
    EXPECT_EQ(run_cli("simulate --config " + cfg.string() + " --policy nonsense", log), 2);
    EXPECT_EQ(run_cli("simulate --config " + cfg.string() + " --paths 0", log), 2);
    EXPECT_EQ(run_cli("frobnicate", log), 2);
    EXPECT_EQ(run_cli("", log), 2);

    // Euler stepping of a stiff price on a coarse grid: the Monte Carlo cost drifts away
    // from the closed form and the run is flagged as a diagnostic failure.
    const auto stiff = write_file(dir / "stiff.json", R"({"preset": "paper-2020-base",
        "firms": {"firm": {"eta": 1e6}},
        "simulation": {"n_paths": 4000, "n_steps": 1, "stepping": "left_point", "threads": 1}})");
    EXPECT_EQ(run_cli("simulate --config " + stiff.string() + " --policy static --out " + (dir / "d").string(), log),
              4);
    EXPECT_NE(slurp(dir / "d" / "summary.csv").find("false"), std::string::npos);
}
