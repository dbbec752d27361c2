#pragma once

// Command implementations behind the remest executable. Argument parsing
// lives in remest.cpp; everything here takes a filled RunConfig and writes
// to the given streams, so tests can drive the commands directly.

#include <remest/remest.hpp>

#include <json.hpp>

#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace remest::cli {

enum ExitCode : int { kOk = 0, kSolverError = 1, kInputError = 2, kVerifyFailed = 3 };

struct RunConfig {
    /// Chain arguments as accepted by load_chain.
    std::vector<std::string> chains;
    std::vector<Algorithm> algs;
    std::optional<double> lambda;
    std::vector<double> lambda_grid = default_lambda_grid();
    std::size_t n_max = 0;
    double q = 1e-4;
    std::size_t steps = 1000000;
    std::size_t runs = 1;
    std::uint64_t seed = 1;
    std::string out;
    std::size_t u = 2;
    double p_tx = 0.5;
    std::size_t threads = 0;
    /// verify only: skip the bundled chains when no --chain is given.
    bool no_bundled = false;
    /// verify only: the monitor breaks argmax ties towards the highest index.
    bool fault_monitor_tie = false;
};

inline int exit_code_for(const Error& e) {
    switch (e.code()) {
    case Errc::NoConvergence:
    case Errc::CapExceeded:
    case Errc::InvariantViolation:
    case Errc::ZeroSilenceMass: return kSolverError;
    default: return kInputError;
    }
}

/// Type-erased step policy.
struct AnyPolicy {
    std::function<void()> do_reset;
    std::function<StepOutcome(StateIndex, RngStream&)> do_step;
    void reset() { do_reset(); }
    StepOutcome step(StateIndex s, RngStream& rng) { return do_step(s, rng); }

    template <StepPolicy P>
    static AnyPolicy wrap(P policy) {
        auto p = std::make_shared<P>(std::move(policy));
        return {[p] { p->reset(); }, [p](StateIndex s, RngStream& rng) { return p->step(s, rng); }};
    }
};

struct Solved {
    Algorithm alg;
    double lambda = std::numeric_limits<double>::quiet_NaN();
    Metrics metrics;
    std::string dump;
    std::function<AnyPolicy()> make;
};

inline double require_lambda(const RunConfig& cfg, Algorithm alg) {
    if (!cfg.lambda)
        throw Error(Errc::InvalidArgument, "--lambda is required for " + std::string(algorithm_name(alg)));
    if (!(*cfg.lambda >= 0.0) || !std::isfinite(*cfg.lambda))
        throw Error(Errc::InvalidArgument, "--lambda must be finite and >= 0");
    return *cfg.lambda;
}

inline std::string blind_table(const TransitionMatrix& chain, std::size_t lags, std::size_t lag_cap) {
    std::ostringstream os;
    os << "# monitor: s_m n -> estimate\n";
    BlindPredictor blind(chain, lag_cap);
    for (std::size_t n = 0; n <= lags; ++n)
        for (StateIndex s_m = 0; s_m < chain.size(); ++s_m)
            os << s_m << ' ' << n << " -> " << blind.estimate(s_m, n) << '\n';
    return os.str();
}

/// Runs the selected solver (or exact evaluator) for one chain.
inline Solved solve_algorithm(const TransitionMatrix& chain, Algorithm alg, const RunConfig& cfg) {
    require_communicating(chain);
    Solved out{alg};
    std::ostringstream dump;
    const std::size_t S = chain.size();
    switch (alg) {
    case Algorithm::Heuristic: {
        out.metrics = heuristic_rate_exact(chain);
        dump << "# heuristic: transmit iff s differs from the prediction made after the previous state\n"
             << "# previous -> prediction\n";
        for (StateIndex x = 0; x < S; ++x)
            dump << x << " -> " << argmax_belief(belief_predict(chain, Belief::basis(S, x))) << '\n';
        out.make = [chain] { return AnyPolicy::wrap(HeuristicPolicy(chain)); };
        break;
    }
    case Algorithm::HeuristicNoImplicit: {
        const std::size_t cap = default_lag_cap(S);
        out.metrics = heuristic_no_implicit_exact(chain, cap);
        dump << "# heuristic-no-implicit: transmit iff s differs from the blind estimate\n"
             << blind_table(chain, cap, cap);
        out.make = [chain, cap] { return AnyPolicy::wrap(NoImplicitPolicy(chain, cap)); };
        break;
    }
    case Algorithm::Uniform:
    case Algorithm::Randomized: {
        const auto spec = alg == Algorithm::Uniform ? BaselineSpec::uniform(cfg.u) : BaselineSpec::randomized(cfg.p_tx);
        const std::size_t cap = default_lag_cap(S);
        out.metrics = baseline_exact(chain, spec, cap);
        if (alg == Algorithm::Uniform)
            dump << "# uniform: transmit every " << cfg.u << " steps\n" << blind_table(chain, cfg.u - 1, 0);
        else
            dump << "# randomized: transmit with probability " << format_number(cfg.p_tx) << '\n'
                 << blind_table(chain, cap, cap);
        out.make = [chain, spec, cap] { return AnyPolicy::wrap(BaselinePolicy(chain, spec, cap)); };
        break;
    }
    case Algorithm::Alternating: {
        AlternatingOptions ao;
        ao.lambda = out.lambda = require_lambda(cfg, alg);
        ao.n_max = cfg.n_max;
        auto res = alternate(chain, ao);
        out.metrics = res.metrics;
        dump << "# alternating sensor: s s_m n -> transmit\n";
        write_sensor_policy(dump, res.sensor);
        dump << "# alternating monitor: s_m n -> estimate\n";
        write_monitor_policy(dump, res.monitor);
        auto shared = std::make_shared<AlternatingResult>(std::move(res));
        out.make = [shared] { return AnyPolicy::wrap(AlternatingPolicy(*shared)); };
        break;
    }
    case Algorithm::Occupancy: {
        OccupancyOptions oo;
        oo.lambda = out.lambda = require_lambda(cfg, alg);
        oo.q = cfg.q;
        std::vector<SensorPolicy> seeds;
        if (oo.lambda > 0.0) {
            AlternatingOptions ao;
            ao.lambda = oo.lambda;
            ao.n_max = cfg.n_max;
            seeds.push_back(alternate(chain, ao).sensor);
        }
        auto sol = solve_occupancy_lazy(chain, oo, seeds);
        out.metrics = sol.metrics;
        write_occupancy_policy(dump, sol, oo.lambda);
        auto policy = std::make_shared<OccupancyPolicy>(std::move(sol.policy));
        out.make = [chain, policy] { return AnyPolicy::wrap(OccupancyStepPolicy(chain, *policy)); };
        break;
    }
    }
    out.dump = dump.str();
    return out;
}

inline std::string metrics_line(Algorithm alg, double lambda, const Metrics& m, bool with_stderr = false) {
    std::ostringstream os;
    os << "algorithm=" << algorithm_name(alg) << " lambda=" << format_number(lambda)
       << " utilization=" << format_number(m.utilization) << " reconstruction=" << format_number(m.reconstruction)
       << " avg_reward=" << format_number(m.avg_reward);
    if (with_stderr)
        os << " stderr_util=" << format_number(m.stderr_util) << " stderr_rec=" << format_number(m.stderr_rec);
    return os.str();
}

/// Writes `text` to cfg.out when set, else to `fallback`.
inline void emit(const RunConfig& cfg, std::ostream& fallback, const std::string& text) {
    if (cfg.out.empty()) {
        fallback << text;
        return;
    }
    std::ofstream f(cfg.out, std::ios::binary);
    if (!f) throw Error(Errc::InvalidArgument, "cannot write " + cfg.out);
    f << text;
}

inline TransitionMatrix single_chain(const RunConfig& cfg) {
    if (cfg.chains.size() != 1) throw Error(Errc::InvalidArgument, "exactly one --chain is required");
    return load_chain(cfg.chains.front());
}

inline Algorithm single_alg(const RunConfig& cfg) {
    if (cfg.algs.size() != 1) throw Error(Errc::InvalidArgument, "exactly one --alg is required");
    return cfg.algs.front();
}

/// Wraps a command body with the exit-code contract.
template <class Body>
int guarded(std::ostream& err, Body&& body) {
    try {
        return body();
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kSolverError;
    }
}

inline int cmd_solve(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const auto chain = single_chain(cfg);
        const Algorithm alg = single_alg(cfg);
        const auto solved = solve_algorithm(chain, alg, cfg);
        emit(cfg, out, solved.dump);
        out << metrics_line(alg, solved.lambda, solved.metrics) << '\n';
        return int(kOk);
    });
}

inline int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const auto chain = single_chain(cfg);
        const Algorithm alg = single_alg(cfg);
        const auto solved = solve_algorithm(chain, alg, cfg);
        SimulationOptions so;
        so.steps = cfg.steps;
        so.seed = cfg.seed;
        so.lambda = solved.lambda;
        const auto rep = simulate_replicated(chain, solved.make, so, cfg.runs);
        std::ostringstream os;
        os << "# exact " << metrics_line(alg, solved.lambda, solved.metrics) << '\n'
           << metrics_line(alg, solved.lambda, cfg.runs == 1 ? rep.runs.front() : rep.pooled, true)
           << " steps=" << cfg.steps << " runs=" << cfg.runs << " seed=" << cfg.seed << '\n';
        emit(cfg, out, os.str());
        return int(kOk);
    });
}

inline SweepConfig sweep_config(const RunConfig& cfg) {
    SweepConfig sc;
    sc.lambdas = cfg.lambda_grid;
    sc.n_max = cfg.n_max;
    sc.q = cfg.q;
    sc.threads = cfg.threads;
    return sc;
}

inline std::vector<Algorithm> selected_algs(const RunConfig& cfg) {
    return cfg.algs.empty() ? std::vector<Algorithm>(kAllAlgorithms.begin(), kAllAlgorithms.end()) : cfg.algs;
}

inline int cmd_sweep(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const auto chain = single_chain(cfg);
        const auto algs = selected_algs(cfg);
        std::ostringstream os;
        write_tradeoff_csv(os, sweep_all(chain, sweep_config(cfg), algs));
        emit(cfg, out, os.str());
        return int(kOk);
    });
}

inline constexpr std::array<double, 5> kCompareLevels{0.1, 0.3, 0.5, 0.7, 0.9};

/// Hull value of every algorithm at a few utilization levels.
inline int cmd_compare(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const auto chain = single_chain(cfg);
        const auto algs = selected_algs(cfg);
        const auto sc = sweep_config(cfg);
        std::vector<std::vector<TradeoffPoint>> hulls;
        for (Algorithm a : algs) hulls.push_back(time_sharing_hull(algorithm_points(chain, a, sc)));
        std::ostringstream os;
        os << "utilization";
        for (Algorithm a : algs) os << ',' << algorithm_name(a);
        os << '\n';
        for (double u : kCompareLevels) {
            os << format_number(u);
            for (const auto& h : hulls) os << ',' << format_number(hull_value_at(h, u));
            os << '\n';
        }
        emit(cfg, out, os.str());
        return int(kOk);
    });
}

// ------------------------------------------------------------------ verify

struct Check {
    std::string chain;
    std::string property;
    bool passed;
    std::string detail;
};

inline Check check_alternating_monotone(const std::string& name, const TransitionMatrix& chain) {
    std::ostringstream detail;
    bool ok = true;
    for (double lambda : {0.1, 0.5, 1.0}) {
        AlternatingOptions ao;
        ao.lambda = lambda;
        try {
            const auto res = alternate(chain, ao);
            for (std::size_t i = 1; i < res.trace.size(); ++i)
                if (res.trace[i] < res.trace[i - 1] - 1e-9) ok = false;
            detail << "lambda=" << lambda << " rounds=" << res.trace.size() << "; ";
        } catch (const Error& e) {
            ok = false;
            detail << "lambda=" << lambda << " " << e.what() << "; ";
        }
    }
    return {name, "alternating-monotone", ok, detail.str()};
}

/// The brute-force minimum rate over perfect-reconstruction policies equals
/// the heuristic's rate, and a monitor replaying the heuristic never errs.
inline Check check_perfect_reconstruction(const std::string& name, const TransitionMatrix& chain, std::uint64_t seed,
                                          TieBreak monitor_tie) {
    std::ostringstream detail;
    bool ok = true;
    const double rate = heuristic_rate_exact(chain).utilization;
    if (chain.size() <= 4) {
        const double oracle = brute_force_perfect_reconstruction_oracle(chain).rate;
        ok = std::abs(oracle - rate) <= 1e-12;
        detail << "oracle=" << format_number(oracle) << " heuristic=" << format_number(rate) << "; ";
    } else {
        detail << "oracle skipped above 4 states; ";
    }
    RngStream rng(seed, 0x1ed9e5);
    const auto rep = dual_ledger_check(chain, 20000, rng, monitor_tie);
    ok = ok && rep.consistent();
    detail << "ledger steps=" << rep.steps << " estimate_errors=" << rep.estimate_errors
           << " belief_mismatches=" << rep.belief_mismatches;
    return {name, "perfect-reconstruction-oracle", ok, detail.str()};
}

inline Check check_argmax_estimate(const std::string& name, const TransitionMatrix& chain, std::uint64_t seed) {
    const std::size_t S = chain.size();
    RngStream rng(seed, 0xa29a);
    std::size_t bad = 0;
    const std::size_t samples = 10000;
    for (std::size_t i = 0; i < samples; ++i) {
        std::vector<double> w(S);
        for (auto& x : w) x = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
        if (std::accumulate(w.begin(), w.end(), 0.0) == 0.0) w[0] = 1.0;
        const Belief b = Belief::normalize(w);
        const auto rule = DecisionRule::from_mask(static_cast<std::uint32_t>(rng.next_u64() % (1u << S)), S);
        const double best = occupancy_reward(b, rule, 0.5);
        for (StateIndex e = 0; e < S; ++e)
            if (occupancy_reward(b, rule, 0.5, e) > best + 1e-15) ++bad;
    }
    return {name, "argmax-estimate", bad == 0,
            "samples=" + std::to_string(samples) + " counterexamples=" + std::to_string(bad)};
}

inline int cmd_verify(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        std::vector<NamedChain> chains;
        if (!cfg.chains.empty()) {
            for (const auto& c : cfg.chains) chains.push_back({c, load_chain(c)});
        } else if (!cfg.no_bundled) {
            chains = bundled_chains();
        }
        nlohmann::ordered_json report;
        report["version"] = 1;
        report["seed"] = cfg.seed;
        report["fault"] = cfg.fault_monitor_tie ? "monitor-tie-break" : "none";
        report["warnings"] = nlohmann::json::array();
        if (chains.empty()) {
            report["warnings"].push_back("empty chain set; nothing was checked");
            err << "warning: empty chain set; nothing was checked\n";
        }
        std::vector<Check> checks;
        const TieBreak tie = cfg.fault_monitor_tie ? TieBreak::Highest : TieBreak::Lowest;
        for (const auto& nc : chains) {
            if (!nc.chain.communicating()) {
                checks.push_back({nc.name, "communicating", false, "chain has more than one communicating class"});
                continue;
            }
            checks.push_back(check_alternating_monotone(nc.name, nc.chain));
            checks.push_back(check_perfect_reconstruction(nc.name, nc.chain, cfg.seed, tie));
            checks.push_back(check_argmax_estimate(nc.name, nc.chain, cfg.seed));
        }
        std::size_t failed = 0;
        report["checks"] = nlohmann::json::array();
        for (const auto& c : checks) {
            failed += !c.passed;
            report["checks"].push_back(
                {{"chain", c.chain}, {"property", c.property}, {"passed", c.passed}, {"detail", c.detail}});
        }
        report["summary"] = {{"total", checks.size()}, {"passed", checks.size() - failed}, {"failed", failed}};
        emit(cfg, out, report.dump(2) + "\n");
        return int(failed ? kVerifyFailed : kOk);
    });
}

} // namespace remest::cli
