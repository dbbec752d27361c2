// remest command-line entry point: parses flags (and an optional INI config
// whose sections name subcommands) into a RunConfig and dispatches.

#include "cli.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace remest;
using namespace remest::cli;

int main(int argc, char** argv) {
    CLI::App app{"Remote estimation of a Markov source over a costly channel"};
    app.set_config("--config", "", "Config file of key=value lines; [section] names a subcommand");
    app.require_subcommand(1);

    RunConfig cfg;
    std::vector<std::string> alg_names;
    std::string fault;

    auto chain_opt = [&](CLI::App* sub, const std::string& help) {
        sub->add_option("--chain", cfg.chains, help);
    };
    auto solver_opts = [&](CLI::App* sub) {
        sub->add_option("--alg", alg_names,
                        "occupancy, heuristic, alternating, uniform, heuristic-no-implicit or randomized")
            ->delimiter(',');
        sub->add_option("--lambda", cfg.lambda, "Transmission cost");
        sub->add_option("--n-max", cfg.n_max, "Alternating truncation and largest uniform period (0 = 4|S|)");
        sub->add_option("--q", cfg.q, "Occupancy belief resolution")->check(CLI::PositiveNumber);
        sub->add_option("--u", cfg.u, "Uniform transmission period")->check(CLI::PositiveNumber);
        sub->add_option("--p-tx", cfg.p_tx, "Randomized transmission probability")->check(CLI::Range(0.0, 1.0));
        sub->add_option("--out", cfg.out, "Output file (default stdout)");
    };
    auto seed_opt = [&](CLI::App* sub) {
        sub->add_option("--seed", cfg.seed, "Random seed")->envname("REMEST_SEED");
    };

    const std::string chain_help = "Chain file, builtin:NAME, or inline rows separated by ';'";

    auto* solve = app.add_subcommand("solve", "Solve one algorithm; write its policy and a metrics line");
    chain_opt(solve, chain_help);
    solver_opts(solve);

    auto* simulate = app.add_subcommand("simulate", "Solve, then Monte-Carlo simulate the policy");
    chain_opt(simulate, chain_help);
    solver_opts(simulate);
    seed_opt(simulate);
    simulate->add_option("--steps", cfg.steps, "Steps per run")->check(CLI::PositiveNumber);
    simulate->add_option("--runs", cfg.runs, "Independent runs")->check(CLI::PositiveNumber);

    auto add_sweep_opts = [&](CLI::App* sub) {
        chain_opt(sub, chain_help);
        solver_opts(sub);
        seed_opt(sub);
        sub->add_option("--lambda-grid", cfg.lambda_grid, "Comma-separated lambda values")->delimiter(',');
        sub->add_option("--threads", cfg.threads, "Worker threads (0 = all cores)");
    };
    auto* sweep = app.add_subcommand("sweep", "Trade-off CSV for all algorithms");
    add_sweep_opts(sweep);
    auto* compare = app.add_subcommand("compare", "Time-sharing hull values at fixed utilization levels");
    add_sweep_opts(compare);

    auto* verify = app.add_subcommand("verify", "Run the property checks and write a JSON report");
    verify->add_option("--chain", cfg.chains, chain_help + " (default: bundled chains)");
    verify->add_flag("--no-bundled", cfg.no_bundled, "Do not fall back to the bundled chains");
    verify->add_option("--out", cfg.out, "Report file (default stdout)");
    verify->add_option("--inject-fault", fault, "Test hook: monitor-tie-break")
        ->check(CLI::IsMember({"monitor-tie-break"}));
    seed_opt(verify);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kInputError;
    }

    try {
        for (const auto& name : alg_names) cfg.algs.push_back(parse_algorithm(name));
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInputError;
    }
    cfg.fault_monitor_tie = fault == "monitor-tie-break";

    if (solve->parsed()) return cmd_solve(cfg, std::cout, std::cerr);
    if (simulate->parsed()) return cmd_simulate(cfg, std::cout, std::cerr);
    if (sweep->parsed()) return cmd_sweep(cfg, std::cout, std::cerr);
    if (compare->parsed()) return cmd_compare(cfg, std::cout, std::cerr);
    return cmd_verify(cfg, std::cout, std::cerr);
}
