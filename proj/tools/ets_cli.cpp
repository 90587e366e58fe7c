#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ets/scenario.hpp"

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kSingular = 3, kDiagnostic = 4 };

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::optional<std::size_t> steps;

    void apply(ets::ScenarioConfig& c) const {
        if (seed) c.simulation.seed = *seed;
        if (paths) {
            if (*paths == 0) throw ets::ConfigError("--paths must be >= 1");
            c.simulation.n_paths = *paths;
        }
        if (steps) {
            if (*steps == 0) throw ets::ConfigError("--steps must be >= 1");
            c.simulation.n_steps = *steps;
        }
    }
};

void add_overrides(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--seed", o.seed, "Root seed (overrides the config)");
    cmd->add_option("--paths", o.paths, "Number of Monte Carlo paths");
    cmd->add_option("--steps", o.steps, "Number of time steps");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulation and policy comparison for a dynamically regulated emissions market"};
    app.require_subcommand(1);

    std::string config_file, policy, out_dir, etas;
    Overrides sim_over, cmp_over;
    double qv = 0, sigma2 = 0, lambda = 0, horizon = 0;

    auto* sim = app.add_subcommand("simulate", "Simulate trajectories and costs of one or more policies");
    sim->add_option("--config", config_file, "Scenario file (JSON)")->required();
    sim->add_option("--policy", policy, "optimal_dynamic, static, tax, msr, custom, a comma list, or all");
    sim->add_option("--out", out_dir, "Output directory (overrides the config)");
    add_overrides(sim, sim_over);

    auto* cmp = app.add_subcommand("compare", "Policy costs over a range of abatement flexibilities");
    cmp->add_option("--config", config_file, "Scenario file (JSON)")->required();
    cmp->add_option("--etas", etas, "Comma list, or logspace:lo:hi:count")->required();
    cmp->add_option("--out", out_dir, "Output directory (overrides the config)");
    add_overrides(cmp, cmp_over);

    auto* cal = app.add_subcommand("calibrate-eta", "Flexibility implied by the price quadratic variation");
    cal->add_option("--qv", qv, "Quadratic variation of the price over the horizon")->required();
    cal->add_option("--sigma2", sigma2, "Variance rate of the average shock, t^2/yr")->required();
    cal->add_option("--lambda", lambda, "Terminal penalty, EUR/t^2")->required();
    cal->add_option("--horizon", horizon, "Horizon T, years")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (*sim) {
            auto c = ets::load_config(config_file);
            sim_over.apply(c);
            const auto dir = out_dir.empty() ? c.output.directory : out_dir;
            const auto r = ets::run_simulate(c, policy, dir);
            for (const auto& f : r.files) std::cout << f.string() << "\n";
        } else if (*cmp) {
            auto c = ets::load_config(config_file);
            cmp_over.apply(c);
            const auto dir = out_dir.empty() ? c.output.directory : out_dir;
            std::cout << ets::run_compare(c, ets::parse_eta_list(etas), dir).string() << "\n";
        } else if (*cal) {
            std::cout << ets::fmt17(ets::run_calibrate_eta(qv, sigma2, lambda, horizon)) << "\n";
        }
    } catch (const ets::SingularityError& e) {
        std::cerr << "numerical singularity: " << e.what() << "\n";
        return kSingular;
    } catch (const ets::DiagnosticError& e) {
        std::cerr << "diagnostic failure: " << e.what() << "\n";
        return kDiagnostic;
    } catch (const ets::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const ets::UnsupportedInput& e) {
        std::cerr << "unsupported input: " << e.what() << "\n";
        return kConfig;
    } catch (const ets::InfeasibleObservation& e) {
        std::cerr << "infeasible observation: " << e.what() << "\n";
        return kConfig;
    } catch (const ets::DomainError& e) {
        std::cerr << "domain error: " << e.what() << "\n";
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kOk;
}
