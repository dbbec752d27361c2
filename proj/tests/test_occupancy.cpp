#include <remest/alternating.hpp>
#include <remest/bundled.hpp>
#include <remest/occupancy.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

using namespace remest;

namespace {

TransitionMatrix sym(double p) { return validate_chain({{1 - p, p}, {p, 1 - p}}); }

Belief random_belief(std::size_t n, RngStream& rng) {
    std::vector<double> w(n);
    for (auto& x : w) x = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
    if (std::accumulate(w.begin(), w.end(), 0.0) == 0.0) w[0] = 1.0;
    return Belief::normalize(w);
}

DecisionRule random_rule(std::size_t n, RngStream& rng) {
    return DecisionRule::from_mask(static_cast<std::uint32_t>(rng.next_u64() % (1u << n)), n);
}

double closed_form_rate(const TransitionMatrix& chain) {
    const auto pi = stationary_distribution(chain);
    double rate = 1.0;
    for (std::size_t x = 0; x < chain.size(); ++x) {
        double m = 0.0;
        for (std::size_t j = 0; j < chain.size(); ++j) m = std::max(m, chain(x, j));
        rate -= pi[x] * m;
    }
    return rate;
}

// Finite-horizon oracle over explicit source paths. The rule at each step is
// a function of the observation history; the monitor estimate is the most
// likely current state among the paths consistent with the history, found by
// summing path weights (no belief recursion involved).
using History = std::vector<int>; // -1 for silence, else the transmitted state
using RuleFn = std::function<DecisionRule(const History&)>;

std::pair<double, double> path_oracle(const TransitionMatrix& chain, const Belief& b0, const RuleFn& rule,
                                      std::size_t horizon) {
    const std::size_t S = chain.size();
    std::size_t n_paths = 1;
    for (std::size_t t = 0; t < horizon; ++t) n_paths *= S;
    std::vector<std::vector<std::size_t>> paths(n_paths, std::vector<std::size_t>(horizon));
    std::vector<double> weight(n_paths);
    for (std::size_t k = 0; k < n_paths; ++k) {
        std::size_t code = k;
        for (std::size_t t = 0; t < horizon; ++t) {
            paths[k][t] = code % S;
            code /= S;
        }
        double w = b0[paths[k][0]];
        for (std::size_t t = 1; t < horizon; ++t) w *= chain(paths[k][t - 1], paths[k][t]);
        weight[k] = w;
    }
    std::vector<History> hist(n_paths);
    double rec = 0.0, util = 0.0;
    for (std::size_t t = 0; t < horizon; ++t) {
        for (std::size_t k = 0; k < n_paths; ++k) {
            const bool tx = rule(hist[k]).transmits(paths[k][t]);
            hist[k].push_back(tx ? static_cast<int>(paths[k][t]) : -1);
        }
        std::map<History, std::vector<double>> mass;
        for (std::size_t k = 0; k < n_paths; ++k) {
            auto& m = mass[hist[k]];
            m.resize(S, 0.0);
            m[paths[k][t]] += weight[k];
        }
        for (std::size_t k = 0; k < n_paths; ++k) {
            const auto& m = mass[hist[k]];
            std::size_t est = 0;
            for (std::size_t j = 1; j < S; ++j)
                if (m[j] > m[est] + 1e-15) est = j;
            rec += weight[k] * (est == paths[k][t] ? 1.0 : 0.0);
            util += weight[k] * (hist[k].back() >= 0 ? 1.0 : 0.0);
        }
    }
    return {rec, util};
}

// The same quantity through the occupancy recursion.
std::pair<double, double> occupancy_horizon(const TransitionMatrix& chain, const Belief& b, const RuleFn& rule,
                                            History h, std::size_t steps) {
    if (steps == 0) return {0.0, 0.0};
    const DecisionRule d = rule(h);
    const auto o = occupancy_outcome(b, d);
    double rec = o.reconstruction, util = o.utilization;
    for (StateIndex s = 0; s < b.size(); ++s) {
        if (!d.transmits(s) || b[s] == 0.0) continue;
        History hs = h;
        hs.push_back(static_cast<int>(s));
        auto [r, u] = occupancy_horizon(chain, belief_predict(chain, post_transmission_belief(b, d, s)), rule, hs,
                                        steps - 1);
        rec += b[s] * r;
        util += b[s] * u;
    }
    const double silent = silence_mass(b, d);
    if (silent > 0.0) {
        History hs = h;
        hs.push_back(-1);
        auto [r, u] = occupancy_horizon(chain, belief_predict(chain, belief_condition_on_silence(b, d)), rule, hs,
                                        steps - 1);
        rec += silent * r;
        util += silent * u;
    }
    return {rec, util};
}

OccupancyOptions options(double lambda, double q) {
    OccupancyOptions o;
    o.lambda = lambda;
    o.q = q;
    return o;
}

} // namespace

TEST(Quantization, UnitsForResolution) {
    EXPECT_EQ(units_for_resolution(1e-4), 10000u);
    EXPECT_EQ(units_for_resolution(0.5), 2u);
    EXPECT_THROW(units_for_resolution(0.3), Error);
    EXPECT_THROW(units_for_resolution(0.0), Error);
    EXPECT_THROW(units_for_resolution(-1e-3), Error);
}

TEST(Quantization, LargestRemainderExample) {
    const double third = 1.0 / 3.0;
    EXPECT_EQ(quantize_key(Belief({third, third, third}), 10), (BeliefKey{4, 3, 3}));
    EXPECT_EQ(quantize_key(Belief({0.25, 0.75}), 10), (BeliefKey{3, 7}));
    EXPECT_EQ(quantize_key(Belief({1.0, 0.0}), 10000), (BeliefKey{10000, 0}));
}

TEST(Quantization, KeysSumToUnitsAndStayWithinOneUnit) {
    RngStream rng(31, 0);
    for (int i = 0; i < 2000; ++i) {
        const Belief b = random_belief(2 + i % 6, rng);
        for (std::uint32_t units : {10u, 1000u, 10000u}) {
            const auto key = quantize_key(b, units);
            EXPECT_EQ(std::accumulate(key.begin(), key.end(), 0ull), units);
            const Belief d = decode_key(key, units);
            for (std::size_t s = 0; s < b.size(); ++s) EXPECT_LT(std::abs(d[s] - b[s]), 1.0 / units + 1e-15);
        }
    }
}

TEST(OccupancyModel, PostTransmissionBelief) {
    const Belief b({0.5, 0.3, 0.2});
    const auto rule = DecisionRule::from_bits("010");
    EXPECT_EQ(post_transmission_belief(b, rule, 1), Belief::basis(3, 1));
    const auto post = post_transmission_belief(b, rule, 0);
    EXPECT_NEAR(post[0], 0.5 / 0.7, 1e-15);
    EXPECT_EQ(post[1], 0.0);
    EXPECT_NEAR(post[2], 0.2 / 0.7, 1e-15);
}

TEST(OccupancyModel, TransitionExample) {
    const auto chain = sym(0.1);
    const auto next = occupancy_transition(chain, Belief({0.5, 0.5}), DecisionRule::from_bits("01"));
    ASSERT_EQ(next.size(), 2u);
    EXPECT_NEAR(next[0].prob, 0.5, 1e-15);
    EXPECT_NEAR(next[0].belief[1], 0.9, 1e-15);
    EXPECT_NEAR(next[1].prob, 0.5, 1e-15);
    EXPECT_NEAR(next[1].belief[0], 0.9, 1e-15);
}

TEST(OccupancyModel, RewardExamples) {
    const Belief b({0.7, 0.3});
    EXPECT_NEAR(occupancy_reward(b, DecisionRule::all_silent(2), 1.0), 0.7, 1e-15);
    EXPECT_EQ(occupancy_reward(b, DecisionRule::all_transmit(2), 0.4), 1.0 - 0.4);
    // Transmit in state 0, silence reveals state 1.
    EXPECT_NEAR(occupancy_reward(b, DecisionRule::from_bits("10"), 0.5), 1.0 - 0.5 * 0.7, 1e-15);
    EXPECT_NEAR(occupancy_reward(b, DecisionRule::all_silent(2), 0.0, 1), 0.3, 1e-15);
}

TEST(OccupancyModel, TransitionAndRewardInvariants) {
    RngStream rng(77, 0);
    for (int i = 0; i < 3000; ++i) {
        const std::size_t n = 2 + i % 5;
        const auto chain = random_chain(n, 1000 + i);
        const Belief b = random_belief(n, rng);
        const DecisionRule rule = random_rule(n, rng);
        const double lambda = 3.0 * rng.uniform();
        double total = 0.0;
        for (const auto& wb : occupancy_transition(chain, b, rule)) total += wb.prob;
        EXPECT_NEAR(total, 1.0, 1e-12);
        const double r = occupancy_reward(b, rule, lambda);
        EXPECT_GE(r, -lambda - 1e-12);
        EXPECT_LE(r, 1.0 + 1e-12);
        EXPECT_EQ(occupancy_reward(b, DecisionRule::all_transmit(n), lambda), 1.0 - lambda);
    }
}

TEST(OccupancyModel, ArgmaxEstimateIsBestForSilence) {
    RngStream rng(2024, 1);
    int counterexamples = 0;
    for (int i = 0; i < 10000; ++i) {
        const std::size_t n = 2 + i % 6;
        const Belief b = random_belief(n, rng);
        const DecisionRule rule = random_rule(n, rng);
        const double best = occupancy_reward(b, rule, 0.5);
        for (StateIndex e = 0; e < n; ++e)
            if (occupancy_reward(b, rule, 0.5, e) > best + 1e-15) ++counterexamples;
    }
    EXPECT_EQ(counterexamples, 0);
}

TEST(OccupancyModel, BeliefRecursionMatchesPathEnumeration) {
    RngStream rng(5, 5);
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        const std::size_t S = 2 + seed % 2;
        const auto chain = random_chain(S, seed);
        const Belief b0 = stationary_distribution(chain);
        // Rules keyed by a hash of the observation history.
        const std::uint64_t salt = rng.next_u64();
        RuleFn rule = [&, salt](const History& h) {
            std::uint64_t x = salt;
            for (int o : h) x = (x ^ static_cast<std::uint64_t>(o + 2)) * 0x9e3779b97f4a7c15ull;
            return DecisionRule::from_mask(static_cast<std::uint32_t>((x >> 20) % (1u << S)), S);
        };
        const std::size_t horizon = S == 2 ? 7 : 5;
        const auto [rec_o, util_o] = path_oracle(chain, b0, rule, horizon);
        const auto [rec, util] = occupancy_horizon(chain, b0, rule, {}, horizon);
        EXPECT_NEAR(rec, rec_o, 1e-12) << "seed " << seed;
        EXPECT_NEAR(util, util_o, 1e-12) << "seed " << seed;
    }
}

TEST(OccupancyMdp, InitialNodes) {
    const auto chain = random_chain(3, 9);
    OccupancyMdp mdp(chain, Belief::uniform(3), 0.5, 1e-4);
    EXPECT_EQ(mdp.num_nodes(), 7u);
    EXPECT_EQ(mdp.num_expanded(), 0u);
    for (StateIndex s = 0; s < 3; ++s) {
        EXPECT_EQ(mdp.anchor(s), s);
        EXPECT_EQ(mdp.node(mdp.basis(s)).value, Belief::basis(3, s));
    }
    for (std::size_t i = 0; i < mdp.num_nodes(); ++i) {
        ASSERT_EQ(mdp.actions(i).size(), 1u);
        EXPECT_EQ(mdp.actions(i)[0].mask, 7u);
        double total = 0.0;
        for (const auto& t : mdp.actions(i)[0].successors) {
            EXPECT_LT(t.to, 3u);
            total += t.prob;
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
}

TEST(OccupancyMdp, ExpansionMergesRulesOffSupport) {
    const auto chain = random_chain(3, 9);
    OccupancyMdp mdp(chain, Belief::uniform(3), 0.5, 1e-4);
    mdp.expand(mdp.basis(1));
    mdp.expand(mdp.b0_node());
    EXPECT_EQ(mdp.actions(mdp.basis(1)).size(), 2u);
    EXPECT_EQ(mdp.actions(mdp.basis(1))[0].mask, 0u);
    EXPECT_EQ(mdp.actions(mdp.b0_node()).size(), 8u);
    for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(mdp.actions(mdp.b0_node())[k].mask, k);
    EXPECT_EQ(mdp.action_for(mdp.basis(1), 5u), std::optional<std::size_t>(0));
    EXPECT_EQ(mdp.num_expanded(), 2u);
}

TEST(OccupancyMdp, RejectsBadInput) {
    try {
        OccupancyMdp(validate_chain({{1, 0}, {0, 1}}), Belief::uniform(2), 0.1, 1e-3);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::NotCommunicating);
    }
    try {
        const auto big = random_chain(13, 1);
        OccupancyMdp(big, Belief::uniform(13), 0.1, 1e-3);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::TooLarge);
    }
    EXPECT_THROW(OccupancyMdp(sym(0.1), Belief::uniform(2), -1.0, 1e-3), Error);
    EXPECT_THROW(OccupancyMdp(sym(0.1), Belief::uniform(3), 0.1, 1e-3), Error);
}

TEST(ExpandReachableGraph, ClosesOnTwoStateChain) {
    const auto chain = sym(0.1);
    const auto mdp = expand_reachable_graph(chain, stationary_distribution(chain), 0.5, 1e-3, 10000);
    EXPECT_EQ(mdp.num_expanded(), mdp.num_nodes());
    EXPECT_LT(mdp.num_nodes(), 200u);
}

TEST(ExpandReachableGraph, ThrowsAtCap) {
    const auto chain = random_chain(4, 2);
    try {
        expand_reachable_graph(chain, stationary_distribution(chain), 0.5, 1e-4, 500);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::CapExceeded);
    }
}

TEST(SolveOccupancy, MatchesGenericRvi) {
    const auto chain = sym(0.2);
    const auto mdp = expand_reachable_graph(chain, stationary_distribution(chain), 0.7, 1e-3, 10000);
    const auto sol = solve_occupancy(mdp);
    RviOptions opt;
    opt.tol = 1e-10;
    const auto generic = relative_value_iteration(mdp.to_tabular(), opt);
    EXPECT_NEAR(sol.rvi_gain, generic.gain, 1e-8);
    EXPECT_NEAR(sol.gain, generic.gain, 1e-8);
}

TEST(SolveOccupancy, UniformChainClosedForm) {
    // Silence carries no information about the future, so a rule transmitting
    // in k states yields (k + 1)/3 - lambda k/3 (k < 3) or 1 - lambda.
    const double third = 1.0 / 3.0;
    const auto chain = validate_chain({{third, third, third}, {third, third, third}, {third, third, third}});
    for (double lambda : {0.0, 0.1, 0.5, 0.9, 1.0, 2.0}) {
        double best = 1.0 - lambda;
        for (int k = 0; k < 3; ++k) best = std::max(best, (k + 1) / 3.0 - lambda * k / 3.0);
        const auto sol = solve_occupancy_lazy(chain, options(lambda, 1e-4));
        EXPECT_NEAR(sol.gain, best, 1e-9) << "lambda " << lambda;
    }
}

TEST(SolveOccupancy, DeterministicCycleNeedsNoTransmissions) {
    const auto chain = validate_chain({{0, 1}, {1, 0}});
    for (double lambda : {0.1, 1.0, 5.0}) {
        const auto sol = solve_occupancy_lazy(chain, options(lambda, 1e-4));
        EXPECT_NEAR(sol.gain, 1.0, 1e-12);
        EXPECT_NEAR(sol.metrics.utilization, 0.0, 1e-12);
    }
}

TEST(SolveOccupancy, LazyMatchesFullClosureOnTwoStateChains) {
    for (double p : {0.05, 0.1, 0.3, 0.45, 0.7}) {
        const auto chain = sym(p);
        for (double lambda : {0.05, 0.3, 1.0, 2.5}) {
            const auto full =
                solve_occupancy(expand_reachable_graph(chain, stationary_distribution(chain), lambda, 1e-3, 100000));
            const auto lazy = solve_occupancy_lazy(chain, options(lambda, 1e-3));
            EXPECT_NEAR(lazy.gain, full.gain, 1e-8) << "p " << p << " lambda " << lambda;
            EXPECT_FALSE(lazy.explore_capped);
        }
    }
}

TEST(SolveOccupancy, StableUnderHalvingResolution) {
    for (double p : {0.1, 0.3}) {
        const auto chain = validate_chain({{1 - p, p}, {2 * p / 3, 1 - 2 * p / 3}});
        for (double lambda : {0.2, 1.0, 2.0}) {
            const auto coarse = solve_occupancy_lazy(chain, options(lambda, 1e-3));
            const auto fine = solve_occupancy_lazy(chain, options(lambda, 5e-4));
            EXPECT_NEAR(coarse.gain, fine.gain, 1e-3) << "p " << p << " lambda " << lambda;
        }
    }
}

TEST(SolveOccupancy, OptimisticBoundCertifiesSmallChains) {
    for (const auto& nc : bundled_chains())
        for (double lambda : {0.1, 0.5, 1.0, 2.0}) {
            auto opt = options(lambda, 1e-2);
            opt.explore_cap = 100000;
            const auto sol = solve_occupancy_lazy(nc.chain, opt);
            ASSERT_FALSE(sol.explore_capped) << nc.name;
            EXPECT_NEAR(sol.upper_bound, sol.gain, 1e-6) << nc.name << " lambda " << lambda;
        }
}

TEST(SolveOccupancy, NotWorseThanAlternating) {
    const auto suite = random_suite(12, 99);
    for (const auto& chain : suite)
        for (double lambda : {0.1, 0.5, 1.0}) {
            AlternatingOptions aopt;
            aopt.lambda = lambda;
            const auto alt = alternate(chain, aopt);
            const std::vector<SensorPolicy> seeds{alt.sensor};
            const auto sol = solve_occupancy_lazy(chain, options(lambda, 1e-3), seeds);
            EXPECT_GE(sol.gain, alt.metrics.avg_reward - 1e-4) << "lambda " << lambda;
        }
}

TEST(SolveOccupancy, PerfectReconstructionEndMatchesClosedFormRate) {
    std::vector<TransitionMatrix> chains;
    for (const auto& nc : bundled_chains()) chains.push_back(nc.chain);
    for (const auto& c : random_suite(10, 7)) chains.push_back(c);
    for (const auto& chain : chains) {
        const auto sol = solve_occupancy_lazy(chain, options(1e-3, 1e-4));
        EXPECT_NEAR(sol.metrics.reconstruction, 1.0, 1e-9);
        EXPECT_NEAR(sol.metrics.utilization, closed_form_rate(chain), 2e-4 * chain.size());
    }
}

TEST(SolveOccupancy, MetricsIdentity) {
    const auto chain = random_chain(4, 3);
    const auto sol = solve_occupancy_lazy(chain, options(0.8, 1e-3));
    EXPECT_NEAR(sol.gain, sol.metrics.reconstruction - 0.8 * sol.metrics.utilization, 1e-12);
    EXPECT_NEAR(sol.gain, sol.rvi_gain, 1e-6);
}

TEST(ExecuteOccupancy, EmpiricalMatchesExact) {
    const auto chain = random_chain(4, 1);
    const auto sol = solve_occupancy_lazy(chain, options(0.5, 1e-4));
    RngStream rng(11, 3);
    const std::size_t T = 400000;
    const auto run = execute_occupancy(chain, sol.policy, T, rng, 0.5);
    EXPECT_NEAR(run.metrics.utilization, sol.metrics.utilization, 0.01);
    EXPECT_NEAR(run.metrics.reconstruction, sol.metrics.reconstruction, 0.01);
    EXPECT_LT(run.fallbacks, T / 100);
}

TEST(ExecuteOccupancy, TrajectoryIsConsistentAndReproducible) {
    const auto chain = random_chain(3, 2);
    const auto sol = solve_occupancy_lazy(chain, options(1.0, 1e-3));
    RngStream a(5, 0), b(5, 0);
    const auto ra = execute_occupancy(chain, sol.policy, 2000, a, 1.0, std::nullopt, true);
    const auto rb = execute_occupancy(chain, sol.policy, 2000, b, 1.0, std::nullopt, true);
    ASSERT_EQ(ra.trajectory.size(), 2000u);
    for (std::size_t t = 0; t < ra.trajectory.size(); ++t) {
        EXPECT_EQ(ra.trajectory[t].state, rb.trajectory[t].state);
        EXPECT_EQ(ra.trajectory[t].transmit, rb.trajectory[t].transmit);
        if (ra.trajectory[t].transmit) EXPECT_EQ(ra.trajectory[t].estimate, ra.trajectory[t].state);
    }
    EXPECT_EQ(ra.metrics.utilization, rb.metrics.utilization);
}

TEST(OccupancyPolicy, FallsBackToNearestKey) {
    OccupancyPolicy p(2, 10);
    p.set({10, 0}, DecisionRule::from_bits("01"));
    p.set({2, 8}, DecisionRule::from_bits("10"));
    bool fell = false;
    EXPECT_EQ(p.rule_for(Belief({1.0, 0.0}), &fell), DecisionRule::from_bits("01"));
    EXPECT_FALSE(fell);
    EXPECT_EQ(p.rule_for(Belief({0.35, 0.65}), &fell), DecisionRule::from_bits("10"));
    EXPECT_TRUE(fell);
    EXPECT_THROW(OccupancyPolicy(2, 10).rule_for(Belief::uniform(2)), Error);
}

TEST(OccupancyPolicy, RoundTripsThroughText) {
    const auto chain = random_chain(3, 4);
    const auto sol = solve_occupancy_lazy(chain, options(0.5, 1e-3));
    std::stringstream ss;
    write_occupancy_policy(ss, sol, 0.5);
    const std::string text = ss.str();
    EXPECT_EQ(text.rfind("# remest occupancy policy v1\n", 0), 0u);
    EXPECT_NE(text.find("# gain "), std::string::npos);
    const auto back = read_occupancy_policy(ss);
    ASSERT_EQ(back.size(), sol.policy.size());
    EXPECT_EQ(back.units(), sol.policy.units());
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_EQ(back.key(i), sol.policy.key(i));
        EXPECT_EQ(back.rule(i), sol.policy.rule(i));
    }
}

TEST(OccupancyPolicy, ParseErrors) {
    auto parse = [](const std::string& s) {
        std::istringstream is(s);
        return read_occupancy_policy(is);
    };
    auto code_of = [&](const std::string& s) {
        try {
            parse(s);
        } catch (const Error& e) {
            return e.code();
        }
        return Errc::InvariantViolation;
    };
    EXPECT_EQ(code_of(""), Errc::ParseError);
    EXPECT_EQ(code_of("10,0 -> 01\n"), Errc::ParseError);
    EXPECT_EQ(code_of("# n_states 2\n# units 10\n10,0 01\n"), Errc::ParseError);
    EXPECT_EQ(code_of("# n_states 2\n# units 10\n10,0,0 -> 01\n"), Errc::ParseError);
    EXPECT_EQ(code_of("# n_states 2\n# units 10\n10,0 -> 0x\n"), Errc::ParseError);
    EXPECT_EQ(parse("# n_states 2\n# units 10\n10,0 -> 01\n").size(), 1u);
}
