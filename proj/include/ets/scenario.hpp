#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ets/errors.hpp"
#include "ets/monte_carlo.hpp"
#include "ets/params.hpp"
#include "ets/policies.hpp"

namespace ets {

enum class Units { Tons, Gigatons };

inline double unit_scale(Units u) { return u == Units::Tons ? 1.0 : 1e-9; }
inline std::string unit_name(Units u) { return u == Units::Tons ? "tons" : "Gt"; }

struct SimulationBlock {
    std::size_t n_paths = 1000;
    std::size_t n_steps = 2000;
    std::uint64_t seed = 1;
    unsigned threads = 0;  // 0: hardware concurrency
    std::size_t trajectory_paths = 1;
    SimulationOptions options;
};

struct OutputBlock {
    std::string directory = ".";
    Units units = Units::Tons;
};

struct ScenarioConfig {
    std::vector<FirmParams> firms;
    double horizon = 0.0;
    double rho = 0.0;
    double lambda = 0.0;
    Depth nu = Depth::frictionless();
    PolicySpec policy;
    SimulationBlock simulation;
    OutputBlock output;

    MarketParams market() const { return MarketParams(firms, lambda, nu, horizon, rho); }
    TimeGrid grid() const { return TimeGrid(horizon, simulation.n_steps); }
    unsigned threads() const { return simulation.threads == 0 ? default_threads() : simulation.threads; }
};

inline ScenarioConfig preset(const std::string& name) {
    ScenarioConfig c;
    double h = 25.0;
    if (name == "paper-2020-alt") h = 25.0 / 6.0;
    else if (name != "paper-2020-base") throw ConfigError("preset: unknown preset '" + name + "'");
    const int n = 6;
    FirmParams f;
    f.mu = 2e9 / n;
    f.sigma = 0.2e9 / std::sqrt(static_cast<double>(n));
    f.k = 0.92;
    f.h = h;
    f.eta = 6e8;
    c.firms.assign(n, f);
    c.horizon = 10.0;
    c.rho = 0.8;
    c.lambda = 7.5e-7;
    c.nu = Depth::frictionless();
    c.policy = PolicySpec::optimal();
    c.policy.delta = 0.1;
    return c;
}

namespace detail {

using nlohmann::json;

// Checks that an object only carries known keys and reads typed fields with located errors.
class Block {
public:
    Block(const json& j, std::string where, std::set<std::string> allowed) : j_(j), where_(std::move(where)) {
        if (!j.is_object()) throw ConfigError(where_ + ": expected an object");
        for (auto it = j.begin(); it != j.end(); ++it)
            if (!allowed.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
    }

    bool has(const std::string& key) const { return j_.contains(key); }
    const json& at(const std::string& key) const { return j_.at(key); }
    std::string path(const std::string& key) const { return where_ + "." + key; }

    double number(const std::string& key) const {
        const auto& v = j_.at(key);
        if (!v.is_number()) throw ConfigError(path(key) + ": expected a number");
        return v.get<double>();
    }
    void read(const std::string& key, double& out) const {
        if (has(key)) out = number(key);
    }
    void read_count(const std::string& key, std::size_t& out) const {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_number_unsigned()) throw ConfigError(path(key) + ": expected a non-negative integer");
        out = v.get<std::size_t>();
    }
    std::string text(const std::string& key) const {
        const auto& v = j_.at(key);
        if (!v.is_string()) throw ConfigError(path(key) + ": expected a string");
        return v.get<std::string>();
    }

private:
    const json& j_;
    std::string where_;
};

inline FirmParams read_firm(const json& j, const std::string& where, FirmParams f = {}) {
    Block b(j, where, {"mu", "sigma", "k", "h", "eta"});
    b.read("mu", f.mu);
    b.read("sigma", f.sigma);
    b.read("k", f.k);
    b.read("h", f.h);
    b.read("eta", f.eta);
    return f;
}

inline std::vector<double> read_vector(const json& j, const std::string& where) {
    if (!j.is_array()) throw ConfigError(where + ": expected an array");
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ConfigError(where + "[" + std::to_string(i) + "]: expected a number");
        out.push_back(j[i].get<double>());
    }
    return out;
}

}  // namespace detail

inline ScenarioConfig parse_config(const nlohmann::json& j) {
    using detail::Block;
    Block root(j, "config", {"preset", "market", "firms", "policy", "simulation", "output"});
    ScenarioConfig c;
    bool have_market = false;
    if (root.has("preset")) {
        c = preset(root.text("preset"));
        have_market = true;
    }

    if (root.has("market")) {
        Block m(root.at("market"), "market", {"horizon", "rho", "lambda", "nu"});
        m.read("horizon", c.horizon);
        m.read("rho", c.rho);
        m.read("lambda", c.lambda);
        if (m.has("nu")) {
            const auto& v = m.at("nu");
            if (v.is_string()) {
                if (v.get<std::string>() != "inf") throw ConfigError("market.nu: expected a number or \"inf\"");
                c.nu = Depth::frictionless();
            } else if (v.is_number()) {
                try {
                    c.nu = Depth::finite(v.get<double>());
                } catch (const ConfigError& e) {
                    throw ConfigError(std::string("market.nu: ") + e.what());
                }
            } else {
                throw ConfigError("market.nu: expected a number or \"inf\"");
            }
        }
    } else if (!have_market) {
        throw ConfigError("config: either 'preset' or 'market' is required");
    }

    if (root.has("firms")) {
        const auto& fj = root.at("firms");
        if (fj.is_array()) {
            c.firms.clear();
            for (std::size_t i = 0; i < fj.size(); ++i)
                c.firms.push_back(detail::read_firm(fj[i], "firms[" + std::to_string(i) + "]"));
        } else {
            // {"count": N, "firm": {...}}: N identical firms, unspecified fields kept from the preset
            Block fb(fj, "firms", {"count", "firm"});
            std::size_t count = c.firms.size();
            fb.read_count("count", count);
            FirmParams base = c.firms.empty() ? FirmParams{} : c.firms.front();
            if (fb.has("firm")) base = detail::read_firm(fb.at("firm"), "firms.firm", base);
            c.firms.assign(count, base);
        }
    }
    if (c.firms.empty()) throw ConfigError("firms: at least one firm is required");
    for (std::size_t i = 0; i < c.firms.size(); ++i) {
        try {
            c.firms[i].validate();
        } catch (const ConfigError& e) {
            throw ConfigError("firms[" + std::to_string(i) + "]: " + e.what());
        }
    }

    if (root.has("policy")) {
        Block p(root.at("policy"), "policy", {"kind", "delta", "m0", "gamma", "require_target"});
        if (p.has("kind")) c.policy.kind = parse_policy_kind(p.text("kind"));
        p.read("delta", c.policy.delta);
        if (!(c.policy.delta > 0.0)) throw ConfigError("policy.delta: must be > 0");
        if (p.has("m0")) c.policy.m0 = detail::read_vector(p.at("m0"), "policy.m0");
        if (p.has("gamma")) {
            const auto& g = p.at("gamma");
            if (!g.is_array()) throw ConfigError("policy.gamma: expected an array of rows");
            c.policy.gamma.clear();
            for (std::size_t i = 0; i < g.size(); ++i)
                c.policy.gamma.push_back(detail::read_vector(g[i], "policy.gamma[" + std::to_string(i) + "]"));
        }
        if (p.has("require_target")) {
            if (!p.at("require_target").is_boolean()) throw ConfigError("policy.require_target: expected a boolean");
            c.policy.require_target = p.at("require_target").get<bool>();
        }
    }

    if (root.has("simulation")) {
        Block s(root.at("simulation"), "simulation",
                {"n_paths", "n_steps", "seed", "threads", "trajectory_paths", "stepping", "msr_scheme", "beta"});
        s.read_count("n_paths", c.simulation.n_paths);
        s.read_count("n_steps", c.simulation.n_steps);
        if (s.has("seed")) {
            if (!s.at("seed").is_number_unsigned()) throw ConfigError("simulation.seed: expected a non-negative integer");
            c.simulation.seed = s.at("seed").get<std::uint64_t>();
        }
        std::size_t threads = c.simulation.threads;
        s.read_count("threads", threads);
        c.simulation.threads = static_cast<unsigned>(threads);
        s.read_count("trajectory_paths", c.simulation.trajectory_paths);
        if (s.has("stepping")) {
            const auto v = s.text("stepping");
            if (v == "variance_matched") c.simulation.options.stepping = PriceStepping::VarianceMatched;
            else if (v == "left_point") c.simulation.options.stepping = PriceStepping::LeftPoint;
            else throw ConfigError("simulation.stepping: expected variance_matched or left_point");
        }
        if (s.has("msr_scheme")) {
            const auto v = s.text("msr_scheme");
            if (v == "exact_law") c.simulation.options.msr = MsrScheme::ExactLaw;
            else if (v == "coupled_euler") c.simulation.options.msr = MsrScheme::CoupledEuler;
            else throw ConfigError("simulation.msr_scheme: expected exact_law or coupled_euler");
        }
        if (s.has("beta")) {
            const auto v = s.text("beta");
            if (v == "hindsight") c.simulation.options.beta = BetaSelection::HindsightConstant;
            else if (v == "adapted") c.simulation.options.beta = BetaSelection::Adapted;
            else throw ConfigError("simulation.beta: expected hindsight or adapted");
        }
    }
    if (c.simulation.n_paths == 0) throw ConfigError("simulation.n_paths: must be >= 1");
    if (c.simulation.n_steps == 0) throw ConfigError("simulation.n_steps: must be >= 1");

    if (root.has("output")) {
        Block o(root.at("output"), "output", {"directory", "units"});
        if (o.has("directory")) c.output.directory = o.text("directory");
        if (o.has("units")) {
            const auto v = o.text("units");
            if (v == "tons") c.output.units = Units::Tons;
            else if (v == "Gt") c.output.units = Units::Gigatons;
            else throw ConfigError("output.units: expected tons or Gt");
        }
    }

    // surface parameter errors with the block they belong to
    try {
        (void)c.market();
    } catch (const SingularityError&) {
        throw;
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("market: ") + e.what());
    }
    return c;
}

inline ScenarioConfig load_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot read config file " + file.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return parse_config(j);
}

// ---- tables ----

inline constexpr const char* kTrajectoryVersion = "# ets-trajectory v1";
inline constexpr const char* kSweepVersion = "# ets-sweep v1";
inline constexpr const char* kSummaryVersion = "# ets-summary v1";

inline std::string fmt17(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::vector<std::string> trajectory_columns() {
    return {"path_id", "t", "price", "total_bank", "total_emissions", "avg_abatement", "net_allocation_minus_initial"};
}

inline void write_trajectory(std::ostream& out, const std::vector<PolicyPath>& paths, const TimeGrid& grid,
                             const std::string& policy, Units units) {
    const double s = unit_scale(units);
    out << kTrajectoryVersion << " policy=" << policy << " units=" << unit_name(units) << "\n";
    const auto cols = trajectory_columns();
    for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c];
    out << "\n";
    for (std::size_t p = 0; p < paths.size(); ++p) {
        const auto& r = paths[p];
        for (std::size_t k = 0; k < grid.knots(); ++k) {
            out << p << ',' << fmt17(grid.time(k)) << ',' << fmt17(r.price[k]) << ',' << fmt17(r.total_bank[k] * s)
                << ',' << fmt17(r.total_emissions[k] * s) << ',' << fmt17(r.avg_abatement[k] * s) << ','
                << fmt17(r.gross_allocation_change[k] * s) << "\n";
        }
    }
}

struct TrajectoryRow {
    std::size_t path_id = 0;
    double t = 0, price = 0, total_bank = 0, total_emissions = 0, avg_abatement = 0, net_allocation = 0;
};

// Reads a trajectory table back, converting quantities to tons.
inline std::vector<TrajectoryRow> read_trajectory(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind(kTrajectoryVersion, 0) != 0)
        throw ConfigError("not a trajectory table (missing version line)");
    double back = 1.0;
    if (line.find("units=Gt") != std::string::npos) back = 1e9;
    else if (line.find("units=tons") == std::string::npos) throw ConfigError("trajectory table has no units");
    if (!std::getline(in, line)) throw ConfigError("trajectory table has no header");
    std::vector<TrajectoryRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 7) throw ConfigError("trajectory row with wrong column count");
        TrajectoryRow r;
        r.path_id = std::stoul(cells[0]);
        r.t = std::stod(cells[1]);
        r.price = std::stod(cells[2]);
        r.total_bank = std::stod(cells[3]) * back;
        r.total_emissions = std::stod(cells[4]) * back;
        r.avg_abatement = std::stod(cells[5]) * back;
        r.net_allocation = std::stod(cells[6]) * back;
        rows.push_back(r);
    }
    return rows;
}

inline void write_summary(std::ostream& out, const std::vector<CostReport>& reports, Units units) {
    const double s = unit_scale(units);
    out << kSummaryVersion << " costs=EUR emissions_units=" << unit_name(units) << "\n";
    out << "policy,closed_form,mc_estimate,mc_stderr,n_paths,abatement,trading,penalty,tax,"
           "expected_total_emissions,emissions_stderr,consistent\n";
    for (const auto& r : reports) {
        out << r.name() << ',' << (r.closed_form ? fmt17(*r.closed_form) : std::string()) << ','
            << fmt17(r.mc_estimate) << ',' << fmt17(r.mc_stderr) << ',' << r.n_paths << ',' << fmt17(r.abatement)
            << ',' << fmt17(r.trading) << ',' << fmt17(r.penalty) << ',' << fmt17(r.tax) << ','
            << fmt17(r.expected_total_emissions * s) << ',' << fmt17(r.emissions_stderr * s) << ','
            << (r.consistent ? "true" : "false") << "\n";
    }
}

struct SweepRow {
    double eta = 0, cost_optimal = 0, cost_static = 0, cost_msr = 0, cost_tax = 0, delta_stat = 0, mc_stderr_msr = 0;
};

inline void write_sweep(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << kSweepVersion << " costs=EUR\n";
    out << "eta,cost_optimal,cost_static,cost_msr,cost_tax,delta_stat,mc_stderr_msr\n";
    for (const auto& r : rows)
        out << fmt17(r.eta) << ',' << fmt17(r.cost_optimal) << ',' << fmt17(r.cost_static) << ','
            << fmt17(r.cost_msr) << ',' << fmt17(r.cost_tax) << ',' << fmt17(r.delta_stat) << ','
            << fmt17(r.mc_stderr_msr) << "\n";
}

// ---- commands ----

struct SimulateResult {
    std::vector<std::filesystem::path> files;
    std::vector<CostReport> reports;
};

inline std::vector<PolicySpec> requested_policies(const ScenarioConfig& c, const std::string& policy_arg) {
    std::vector<PolicySpec> out;
    std::string list = policy_arg.empty() ? c.policy.name() : policy_arg;
    if (list == "all") list = "optimal_dynamic,static,tax,msr";
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        PolicySpec s = c.policy;
        s.kind = parse_policy_kind(item);
        out.push_back(s);
    }
    if (out.empty()) throw ConfigError("--policy: no policy given");
    return out;
}

inline SimulateResult run_simulate(const ScenarioConfig& c, const std::string& policy_arg,
                                   const std::filesystem::path& out_dir) {
    const auto mkt = c.market();
    const auto grid = c.grid();
    const auto policies = requested_policies(c, policy_arg);
    const PathEnsemble ensemble(c.simulation.seed, c.simulation.n_paths);

    std::filesystem::create_directories(out_dir);
    SimulateResult result;

    const std::size_t shown = std::min(c.simulation.trajectory_paths, c.simulation.n_paths);
    std::vector<PolicySimulator> sims;
    for (const auto& p : policies) sims.emplace_back(mkt, p, grid, c.simulation.options);
    std::vector<std::vector<PolicyPath>> traj(sims.size());
    for (std::size_t p = 0; p < shown; ++p) {
        const auto noise = ensemble.path(p, grid, mkt.firms());  // shared by all policies
        for (std::size_t a = 0; a < sims.size(); ++a) traj[a].push_back(sims[a].run(noise));
    }
    for (std::size_t a = 0; a < sims.size(); ++a) {
        const auto file = out_dir / ("trajectory_" + policies[a].name() + ".csv");
        std::ofstream out(file);
        if (!out) throw ConfigError("cannot write " + file.string());
        write_trajectory(out, traj[a], grid, policies[a].name(), c.output.units);
        result.files.push_back(file);
    }

    CompareOptions opts;
    opts.simulation = c.simulation.options;
    opts.threads = c.threads();
    opts.enforce = false;
    auto cmp = compare_policies(mkt, policies, ensemble, grid, opts);
    result.reports = cmp.reports;
    const auto file = out_dir / "summary.csv";
    std::ofstream out(file);
    if (!out) throw ConfigError("cannot write " + file.string());
    write_summary(out, result.reports, c.output.units);
    out.close();
    result.files.push_back(file);
    for (const auto& r : result.reports)
        if (!r.consistent)
            throw DiagnosticError("Monte Carlo cost of " + r.name() + " is inconsistent with its closed form");
    return result;
}

// Accepts "1e6,1e7" or "logspace:1e6:1e9:20".
inline std::vector<double> parse_eta_list(const std::string& text) {
    std::vector<double> out;
    auto number = [&](const std::string& s) {
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("--etas: cannot parse '" + s + "'");
        }
    };
    if (text.rfind("logspace:", 0) == 0) {
        std::stringstream ss(text.substr(9));
        std::string a, b, n;
        if (!std::getline(ss, a, ':') || !std::getline(ss, b, ':') || !std::getline(ss, n))
            throw ConfigError("--etas: logspace needs lo:hi:count");
        const double lo = number(a), hi = number(b);
        const int count = static_cast<int>(number(n));
        if (!(lo > 0 && hi > 0) || count < 1) throw ConfigError("--etas: logspace needs positive bounds and count");
        for (int i = 0; i < count; ++i) {
            const double w = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
            double v = std::pow(10.0, std::log10(lo) + w * (std::log10(hi) - std::log10(lo)));
            if (i == count - 1) v = hi;
            if (i == 0) v = lo;
            out.push_back(v);
        }
    } else {
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(number(item));
    }
    if (out.empty()) throw ConfigError("--etas: no values");
    for (double v : out)
        if (!(v > 0.0)) throw ConfigError("--etas: values must be > 0");
    return out;
}

inline MarketParams with_eta(const MarketParams& mkt, double eta) {
    auto firms = mkt.firms();
    for (auto& f : firms) f.eta = eta;
    return mkt.with_firms(std::move(firms));
}

// Costs of the four policies for each flexibility value. MSR is estimated by Monte Carlo on
// noise shared across the sweep.
inline std::vector<SweepRow> sweep_costs(const MarketParams& base, const std::vector<double>& etas,
                                         const TimeGrid& grid, const PathEnsemble& ensemble, double delta,
                                         SimulationOptions sim, unsigned threads) {
    require_homogeneous_eta(base, "eta sweep");
    std::vector<MarketParams> markets;
    std::vector<PolicySimulator> msr;
    std::vector<SweepRow> rows;
    for (double eta : etas) {
        markets.push_back(with_eta(base, eta));
        const auto& m = markets.back();
        SweepRow r;
        r.eta = eta;
        r.cost_optimal = optimal_dynamic_policy(m).cost;
        const auto st = static_policy(m);
        r.cost_static = st.cost;
        r.delta_stat = st.delta;
        r.cost_tax = tax_policy(m).cost;
        rows.push_back(r);
        msr.emplace_back(m, PolicySpec::msr(delta), grid, sim);
    }
    std::vector<Moments> acc(etas.size());
    for_each_path_ordered(
        ensemble.n_paths(), threads,
        [&](std::size_t p) {
            const auto noise = ensemble.path(p, grid, base.firms());
            std::vector<double> c(etas.size());
            for (std::size_t e = 0; e < etas.size(); ++e) c[e] = msr[e].run(noise).social_cost();
            return c;
        },
        [&](std::size_t, std::vector<double>&& c) {
            for (std::size_t e = 0; e < c.size(); ++e) acc[e].add(c[e]);
        });
    for (std::size_t e = 0; e < etas.size(); ++e) {
        rows[e].cost_msr = acc[e].mean();
        rows[e].mc_stderr_msr = acc[e].stderr_of_mean();
    }
    return rows;
}

inline std::filesystem::path run_compare(const ScenarioConfig& c, const std::vector<double>& etas,
                                         const std::filesystem::path& out_dir) {
    const auto mkt = c.market();
    const auto rows = sweep_costs(mkt, etas, c.grid(), PathEnsemble(c.simulation.seed, c.simulation.n_paths),
                                  c.policy.delta, c.simulation.options, c.threads());
    std::filesystem::create_directories(out_dir);
    const auto file = out_dir / "sweep.csv";
    std::ofstream out(file);
    if (!out) throw ConfigError("cannot write " + file.string());
    write_sweep(out, rows);
    return file;
}

inline double run_calibrate_eta(double qv, double sigma_sq, double lambda, double horizon) {
    return estimate_eta_from_qv(qv, sigma_sq, lambda, horizon);
}

}  // namespace ets
