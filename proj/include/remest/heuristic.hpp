#pragma once

// Perfect-reconstruction heuristic: the sensor transmits exactly when the
// monitor's guess (argmax of the shared belief) would be wrong, so silence
// tells the monitor that its guess is right and both sides collapse the
// belief onto it. Also the variant whose monitor ignores silence.

#include "remest/core/blind_predictor.hpp"
#include "remest/core/chain.hpp"
#include "remest/core/markov_average.hpp"
#include "remest/core/metrics.hpp"
#include "remest/core/step.hpp"

#include <optional>
#include <vector>

namespace remest {

/// Shared sensor/monitor belief before the transmission slot.
struct HeuristicState {
    Belief b;
};

struct HeuristicStep {
    bool transmit;
    StateIndex estimate;
    HeuristicState next;
};

inline HeuristicStep heuristic_step(const TransitionMatrix& chain, const HeuristicState& state, StateIndex s) {
    const StateIndex guess = argmax_belief(state.b);
    const bool transmit = s != guess;
    const StateIndex estimate = transmit ? s : guess;
    return {transmit, estimate, {belief_predict(chain, Belief::basis(chain.size(), estimate))}};
}

/// Monitor side of the heuristic, driven only by what it receives. `tie`
/// selects its argmax tie-break; anything but the sensor's rule (lowest
/// index) desynchronizes the two ledgers on tied beliefs.
class HeuristicMonitor {
public:
    HeuristicMonitor(TransitionMatrix chain, Belief b0, TieBreak tie = TieBreak::Lowest)
        : chain_(std::move(chain)), b_(std::move(b0)), tie_(tie) {}

    const Belief& belief() const noexcept { return b_; }

    /// Consumes one slot (a message or silence) and returns the estimate.
    StateIndex observe(std::optional<StateIndex> message) {
        const StateIndex est = message ? *message : argmax_belief(b_, tie_);
        b_ = belief_predict(chain_, Belief::basis(chain_.size(), est));
        return est;
    }

private:
    TransitionMatrix chain_;
    Belief b_;
    TieBreak tie_;
};

struct LedgerReport {
    std::size_t steps = 0;
    std::size_t transmissions = 0;
    /// Steps where the monitor's belief differed from the sensor's.
    std::size_t belief_mismatches = 0;
    /// Steps where the monitor's estimate differed from the source state.
    std::size_t estimate_errors = 0;
    bool consistent() const noexcept { return belief_mismatches == 0 && estimate_errors == 0; }
};

/// Runs the sensor with heuristic_step and an independent HeuristicMonitor
/// that sees only the channel, comparing their beliefs every step.
inline LedgerReport dual_ledger_check(const TransitionMatrix& chain, std::size_t steps, RngStream& rng,
                                      TieBreak monitor_tie = TieBreak::Lowest) {
    const Belief b0 = stationary_distribution(chain);
    HeuristicState sensor{b0};
    HeuristicMonitor monitor(chain, b0, monitor_tie);
    StateIndex s = sample_from(b0, rng);
    LedgerReport rep;
    for (std::size_t t = 0; t < steps; ++t) {
        if (!(monitor.belief() == sensor.b)) ++rep.belief_mismatches;
        auto step = heuristic_step(chain, sensor, s);
        const StateIndex est = monitor.observe(step.transmit ? std::optional<StateIndex>(s) : std::nullopt);
        rep.estimate_errors += est != s;
        rep.transmissions += step.transmit;
        sensor = std::move(step.next);
        s = sample_next(chain, s, rng);
        ++rep.steps;
    }
    return rep;
}

/// Exact long-run metrics of the heuristic. After the first step the belief
/// is always P^T e_x with x the previous source state, so the pair
/// (previous state, current state) is a Markov chain and the heuristic
/// transmits on pairs where the current state is not the prediction.
inline Metrics heuristic_rate_exact(const TransitionMatrix& chain) {
    require_communicating(chain);
    const std::size_t n = chain.size();
    SparseChain mc;
    std::vector<double> tx(n * n), init(n * n, 0.0);
    std::vector<Transition> row(n);
    const Belief pi = stationary_distribution(chain);
    for (StateIndex prev = 0; prev < n; ++prev) {
        const StateIndex guess = argmax_index(chain.row(prev));
        for (StateIndex s = 0; s < n; ++s) {
            for (StateIndex s2 = 0; s2 < n; ++s2) row[s2] = {s * n + s2, chain(s, s2)};
            mc.add_row(row);
            tx[prev * n + s] = s != guess ? 1.0 : 0.0;
            init[prev * n + s] = pi[prev] * chain(prev, s);
        }
    }
    const auto occ = long_run_occupation(mc, init);
    return Metrics::exact(1.0, weighted_sum(occ, tx), std::numeric_limits<double>::quiet_NaN());
}

struct PassiveAssignment {
    double rate;
    /// Passive (silent) state used at belief P^T e_x, per x.
    std::vector<StateIndex> passive;
};

/// Exhaustive search over perfect-reconstruction policies with one passive
/// state per distinct belief P^T e_x. Each assignment's transmit rate is
/// evaluated exactly; returns the minimum (first found on ties).
inline PassiveAssignment brute_force_perfect_reconstruction_oracle(const TransitionMatrix& chain,
                                                                   std::size_t max_states = 4) {
    require_communicating(chain);
    const std::size_t n = chain.size();
    if (max_states > 4 || n > max_states)
        throw Error(Errc::TooLarge, "brute-force oracle is limited to 4 states");
    // Group source states with identical rows: they share a belief.
    std::vector<std::size_t> group(n);
    std::vector<StateIndex> reps;
    for (StateIndex x = 0; x < n; ++x) {
        group[x] = reps.size();
        for (std::size_t g = 0; g < reps.size(); ++g) {
            bool same = true;
            for (StateIndex j = 0; j < n; ++j) same = same && chain(x, j) == chain(reps[g], j);
            if (same) {
                group[x] = g;
                break;
            }
        }
        if (group[x] == reps.size()) reps.push_back(x);
    }
    std::size_t total = 1;
    for (std::size_t g = 0; g < reps.size(); ++g) total *= n;

    const Belief pi = stationary_distribution(chain);
    PassiveAssignment best{std::numeric_limits<double>::infinity(), {}};
    std::vector<StateIndex> choice(reps.size());
    std::vector<Transition> row(n);
    for (std::size_t code = 0; code < total; ++code) {
        std::size_t c = code;
        for (auto& a : choice) {
            a = c % n;
            c /= n;
        }
        SparseChain mc;
        std::vector<double> tx(n * n), init(n * n);
        for (StateIndex prev = 0; prev < n; ++prev)
            for (StateIndex s = 0; s < n; ++s) {
                for (StateIndex s2 = 0; s2 < n; ++s2) row[s2] = {s * n + s2, chain(s, s2)};
                mc.add_row(row);
                tx[prev * n + s] = s != choice[group[prev]] ? 1.0 : 0.0;
                init[prev * n + s] = pi[prev] * chain(prev, s);
            }
        const double rate = weighted_sum(long_run_occupation(mc, init), tx);
        if (rate < best.rate - 1e-15) {
            best.rate = rate;
            best.passive.assign(n, 0);
            for (StateIndex x = 0; x < n; ++x) best.passive[x] = choice[group[x]];
        }
    }
    return best;
}

inline std::size_t default_lag_cap(std::size_t n_states) { return 20 * n_states; }

struct NoImplicitStep {
    bool transmit;
    StateIndex estimate;
    StateIndex s_m;
    std::size_t n;
};

/// Heuristic whose monitor ignores silence: it predicts the argmax of
/// (P^{n+1})^T e_{s_m}, and the sensor transmits whenever that is wrong.
inline NoImplicitStep heuristic_no_implicit_step(BlindPredictor& blind, StateIndex s_m, std::size_t n,
                                                 StateIndex s) {
    const StateIndex predicted = blind.estimate(s_m, n + 1);
    if (s != predicted) return {true, s, s, 0};
    return {false, predicted, s_m, n + 1};
}

/// Exact metrics of the no-implicit heuristic over (s, s_m, n), lags folded
/// as in BlindPredictor with the given cap.
inline Metrics heuristic_no_implicit_exact(const TransitionMatrix& chain, std::size_t lag_cap = 0) {
    require_communicating(chain);
    const std::size_t S = chain.size();
    BlindPredictor blind(chain, lag_cap ? lag_cap : default_lag_cap(S));
    const std::size_t L = blind.lag_cap();
    auto idx = [&](StateIndex s, StateIndex s_m, std::size_t n) { return (n * S + s_m) * S + s; };
    const std::size_t N = S * S * (L + 1);
    SparseChain mc;
    std::vector<double> tx(N), init(N, 0.0);
    std::vector<Transition> row(S);
    const Belief pi = stationary_distribution(chain);
    for (std::size_t n = 0; n <= L; ++n)
        for (StateIndex s_m = 0; s_m < S; ++s_m)
            for (StateIndex s = 0; s < S; ++s) {
                const auto step = heuristic_no_implicit_step(blind, s_m, n, s);
                const std::size_t n2 = blind.fold(step.n);
                for (StateIndex s2 = 0; s2 < S; ++s2) row[s2] = {idx(s2, step.s_m, n2), chain(s, s2)};
                mc.add_row(row);
                tx[idx(s, s_m, n)] = step.transmit ? 1.0 : 0.0;
            }
    // Start right after a transmission from a stationary state.
    for (StateIndex s_m = 0; s_m < S; ++s_m)
        for (StateIndex s = 0; s < S; ++s) init[idx(s, s_m, 0)] = pi[s_m] * chain(s_m, s);
    const auto occ = long_run_occupation(mc, init);
    return Metrics::exact(1.0, weighted_sum(occ, tx), std::numeric_limits<double>::quiet_NaN());
}

/// Step-by-step runner of the heuristic for simulation.
class HeuristicPolicy {
public:
    explicit HeuristicPolicy(TransitionMatrix chain)
        : chain_(std::move(chain)), b0_(stationary_distribution(chain_)), state_{b0_} {}

    void reset() { state_ = HeuristicState{b0_}; }

    StepOutcome step(StateIndex s, RngStream&) {
        auto out = heuristic_step(chain_, state_, s);
        state_ = std::move(out.next);
        return {out.transmit, out.estimate};
    }

private:
    TransitionMatrix chain_;
    Belief b0_;
    HeuristicState state_;
};

/// Step-by-step runner of the no-implicit heuristic. The first step is a
/// forced transmission.
class NoImplicitPolicy {
public:
    explicit NoImplicitPolicy(const TransitionMatrix& chain, std::size_t lag_cap = 0)
        : blind_(chain, lag_cap ? lag_cap : default_lag_cap(chain.size())) {}

    void reset() { started_ = false; }

    StepOutcome step(StateIndex s, RngStream&) {
        if (!started_) {
            started_ = true;
            s_m_ = s;
            n_ = 0;
            return {true, s};
        }
        const auto out = heuristic_no_implicit_step(blind_, s_m_, n_, s);
        s_m_ = out.s_m;
        n_ = blind_.fold(out.n);
        return {out.transmit, out.estimate};
    }

private:
    BlindPredictor blind_;
    bool started_ = false;
    StateIndex s_m_ = 0;
    std::size_t n_ = 0;
};

} // namespace remest
