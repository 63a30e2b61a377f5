#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "twostop/cli.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"Two-stage optimal stopping solver and simulator"};
    app.set_version_flag("--version", std::string(twostop::tool_version));
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<std::string> format;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON problem configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
        sub->add_option("--seed", seed, "simulation seed (overrides simulation.seed)");
        sub->add_option("--threads", threads, "worker thread cap (0: all cores)");
        sub->add_option("--format", format, "summary format")->check(CLI::IsMember({"csv", "json"}));
    };

    auto* solve = app.add_subcommand("solve", "solve both stages and export value, delay and boundary tables");
    common(solve);

    auto* simulate = app.add_subcommand("simulate", "Monte Carlo estimate of a policy");
    common(simulate);
    std::string policy_name = "solved";
    std::uint64_t trajectories = 0;
    std::optional<std::uint64_t> replications;
    simulate->add_option("--policy", policy_name, "solved, threshold, baseline or never-stop")
        ->check(CLI::IsMember({"solved", "threshold", "baseline", "stop-now", "never-stop"}));
    simulate->add_option("--trajectories", trajectories, "dump the first N rollouts");
    simulate->add_option("--replications", replications, "number of rollouts (overrides simulation.replications)");

    auto* compare = app.add_subcommand("compare", "solver vs Monte Carlo vs perturbed policies, finite-K decay");
    common(compare);
    int max_k = 10;
    compare->add_option("--max-k", max_k, "largest finite horizon K in the decay curve")->check(CLI::Range(1, 1000));
    compare->add_option("--replications", replications, "number of rollouts (overrides simulation.replications)");

    auto* sweep = app.add_subcommand("sweep", "one solve per value of a parameter");
    common(sweep);
    std::string parameter;
    std::vector<double> values;
    sweep->add_option("--param", parameter, "dotted parameter path, e.g. site2.inter_arrival.rate")->required();
    sweep->add_option("--values", values, "parameter values")->expected(0, -1);

    CLI11_PARSE(app, argc, argv);

    twostop::RunConfig cfg;
    try {
        cfg = twostop::load_config(config_path);
    } catch (const twostop::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return twostop::exit_invalid;
    }
    if (out_dir) cfg.out_dir = *out_dir;
    if (seed) cfg.simulation.seed = *seed;
    if (threads) cfg.solver.threads = *threads;
    if (format) cfg.format = *format;
    if (replications) cfg.simulation.replications = *replications;

    if (*solve)
        return twostop::cmd_solve(cfg);
    if (*simulate)
        return twostop::cmd_simulate(cfg, *twostop::parse_policy_source(policy_name), trajectories);
    if (*compare)
        return twostop::cmd_compare(cfg, max_k);
    return twostop::cmd_sweep(cfg, parameter, values);
}
