#pragma once

// Alternating best responses between the sensor (transmission policy, solved
// as an average-reward MDP over (s, s_m, n)) and the monitor (belief argmax
// over (s_m, n)), iterated to a Nash equilibrium.
//
// Indexing convention: the monitor acts at n = 0 right after a transmission;
// the sensor's next decision after a transmission is at n = 1. At n = n_max
// the sensor transmits whatever its action says.

#include "remest/core/blind_predictor.hpp"
#include "remest/core/chain.hpp"
#include "remest/core/markov_average.hpp"
#include "remest/core/metrics.hpp"
#include "remest/core/rvi.hpp"
#include "remest/core/step.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace remest {

struct SensorState {
    StateIndex s;
    StateIndex s_m;
    std::size_t n;
};

struct MonitorState {
    StateIndex s_m;
    std::size_t n;
};

/// Dense enumeration of sensor states. Index 0 is (s=0, s_m=0, n=1).
class SensorSpace {
public:
    SensorSpace(std::size_t n_states, std::size_t n_max) : n_states_(n_states), n_max_(n_max) {}

    std::size_t n_states() const noexcept { return n_states_; }
    std::size_t n_max() const noexcept { return n_max_; }
    std::size_t size() const noexcept { return n_states_ * n_states_ * n_max_; }

    std::size_t index(const SensorState& x) const {
        return ((x.n - 1) * n_states_ + x.s_m) * n_states_ + x.s;
    }
    SensorState state(std::size_t idx) const {
        SensorState x;
        x.s = idx % n_states_;
        idx /= n_states_;
        x.s_m = idx % n_states_;
        x.n = idx / n_states_ + 1;
        return x;
    }

private:
    std::size_t n_states_;
    std::size_t n_max_;
};

/// Deterministic transmission policy over (s, s_m, n). Entries at n = n_max
/// always read as transmit.
class SensorPolicy {
public:
    SensorPolicy(std::size_t n_states, std::size_t n_max)
        : space_(n_states, n_max), transmit_(space_.size(), 0) {
        for (std::size_t i = 0; i < transmit_.size(); ++i)
            if (space_.state(i).n == n_max) transmit_[i] = 1;
    }

    const SensorSpace& space() const noexcept { return space_; }
    bool transmits(const SensorState& x) const { return transmit_[space_.index(x)] != 0; }
    bool transmits(std::size_t idx) const { return transmit_[idx] != 0; }
    void set(std::size_t idx, bool transmit) {
        transmit_[idx] = (transmit || space_.state(idx).n == space_.n_max()) ? 1 : 0;
    }

    /// Per-state rule at a fixed (s_m, n).
    DecisionRule rule_at(StateIndex s_m, std::size_t n) const {
        std::vector<bool> flags(space_.n_states());
        for (StateIndex s = 0; s < flags.size(); ++s) flags[s] = transmits(SensorState{s, s_m, n});
        return DecisionRule(flags);
    }

    friend bool operator==(const SensorPolicy& a, const SensorPolicy& b) {
        return a.space_.n_states() == b.space_.n_states() && a.space_.n_max() == b.space_.n_max() &&
               a.transmit_ == b.transmit_;
    }

    static SensorPolicy always_transmit(std::size_t n_states, std::size_t n_max) {
        SensorPolicy p(n_states, n_max);
        for (auto& t : p.transmit_) t = 1;
        return p;
    }

private:
    SensorSpace space_;
    std::vector<std::uint8_t> transmit_;
};

/// Estimation policy over (s_m, n), n in [0, n_max).
class MonitorPolicy {
public:
    MonitorPolicy(std::size_t n_states, std::size_t n_max)
        : n_states_(n_states), n_max_(n_max), estimate_(n_states * n_max, 0) {}

    std::size_t n_states() const noexcept { return n_states_; }
    std::size_t n_max() const noexcept { return n_max_; }
    StateIndex estimate(StateIndex s_m, std::size_t n) const { return estimate_[n * n_states_ + s_m]; }
    void set(StateIndex s_m, std::size_t n, StateIndex est) { estimate_[n * n_states_ + s_m] = est; }

    friend bool operator==(const MonitorPolicy&, const MonitorPolicy&) = default;

private:
    std::size_t n_states_;
    std::size_t n_max_;
    std::vector<StateIndex> estimate_;
};

/// Monitor beliefs b(s_m, n) under a fixed sensor policy. Cells that silence
/// cannot reach are flagged and hold no belief.
class BeliefTable {
public:
    BeliefTable(std::size_t n_states, std::size_t n_max)
        : n_states_(n_states), n_max_(n_max), cells_(n_states * n_max) {}

    std::size_t n_states() const noexcept { return n_states_; }
    std::size_t n_max() const noexcept { return n_max_; }
    bool reachable(StateIndex s_m, std::size_t n) const { return cells_[n * n_states_ + s_m].has_value(); }
    const Belief& at(StateIndex s_m, std::size_t n) const {
        const auto& c = cells_[n * n_states_ + s_m];
        if (!c) throw Error(Errc::InvalidArgument, "belief cell is unreachable");
        return *c;
    }
    void set(StateIndex s_m, std::size_t n, Belief b) { cells_[n * n_states_ + s_m] = std::move(b); }

private:
    std::size_t n_states_;
    std::size_t n_max_;
    std::vector<std::optional<Belief>> cells_;
};

struct SensorMdp {
    TabularMdp mdp;
    SensorSpace space;
    double lambda;
};

struct ValueFunction {
    std::vector<double> v;
    double gain = 0.0;
    double span = 0.0;
    std::size_t sweeps = 0;
};

inline std::size_t default_n_max(std::size_t n_states) { return 4 * n_states; }

/// Monitor that ignores implicit information: argmax of (P^n)^T e_{s_m}.
inline MonitorPolicy initial_monitor_policy(const TransitionMatrix& chain, std::size_t n_max) {
    BlindPredictor blind(chain);
    MonitorPolicy pol(chain.size(), n_max);
    for (std::size_t n = 0; n < n_max; ++n)
        for (StateIndex s_m = 0; s_m < chain.size(); ++s_m) pol.set(s_m, n, blind.estimate(s_m, n));
    return pol;
}

/// Sensor MDP against a fixed monitor. Action order is (silent, transmit), so
/// RVI prefers silence on ties.
inline SensorMdp build_sensor_mdp(const TransitionMatrix& chain, const MonitorPolicy& monitor,
                                  double lambda, std::size_t n_max) {
    if (!(lambda >= 0.0)) throw Error(Errc::InvalidArgument, "lambda must be non-negative");
    if (n_max < 2) throw Error(Errc::InvalidArgument, "n_max must be at least 2");
    if (monitor.n_states() != chain.size() || monitor.n_max() != n_max)
        throw Error(Errc::InvalidArgument, "monitor policy dimensions do not match");
    const std::size_t S = chain.size();
    SensorMdp out{TabularMdp{}, SensorSpace(S, n_max), lambda};
    std::vector<Transition> silent(S), transmit(S);
    for (std::size_t idx = 0; idx < out.space.size(); ++idx) {
        const auto x = out.space.state(idx);
        out.mdp.add_state();
        for (StateIndex s2 = 0; s2 < S; ++s2) {
            transmit[s2] = {out.space.index({s2, x.s, 1}), chain(x.s, s2)};
            if (x.n < n_max) silent[s2] = {out.space.index({s2, x.s_m, x.n + 1}), chain(x.s, s2)};
        }
        if (x.n == n_max) {
            out.mdp.add_action(0, 1.0 - lambda, transmit);
            out.mdp.add_action(1, 1.0 - lambda, transmit);
        } else {
            const double hit = monitor.estimate(x.s_m, x.n) == x.s ? 1.0 : 0.0;
            out.mdp.add_action(0, hit, silent);
            out.mdp.add_action(1, 1.0 - lambda, transmit);
        }
    }
    return out;
}

inline std::pair<ValueFunction, SensorPolicy> relative_value_iteration(const SensorMdp& mdp,
                                                                       double tol = 1e-10,
                                                                       std::size_t max_sweeps = 200000) {
    RviOptions opt;
    opt.tol = tol;
    opt.max_sweeps = max_sweeps;
    auto res = relative_value_iteration(mdp.mdp, opt);
    SensorPolicy policy(mdp.space.n_states(), mdp.space.n_max());
    for (std::size_t x = 0; x < mdp.space.size(); ++x) policy.set(x, mdp.mdp.label(res.greedy[x]) == 1);
    return {ValueFunction{std::move(res.values), res.gain, res.span, res.sweeps}, std::move(policy)};
}

inline BeliefTable monitor_beliefs(const TransitionMatrix& chain, const SensorPolicy& sensor,
                                   std::size_t n_max) {
    const std::size_t S = chain.size();
    BeliefTable table(S, n_max);
    for (StateIndex s_m = 0; s_m < S; ++s_m) {
        Belief b = Belief::basis(S, s_m);
        table.set(s_m, 0, b);
        for (std::size_t n = 1; n < n_max; ++n) {
            const Belief predicted = belief_predict(chain, b);
            const DecisionRule rule = sensor.rule_at(s_m, n);
            if (!(silence_mass(predicted, rule) > 0.0)) break;
            b = belief_condition_on_silence(predicted, rule);
            table.set(s_m, n, b);
        }
    }
    return table;
}

/// Belief argmax in reachable cells; unreachable cells keep the
/// no-implicit-information estimate so the policy stays total.
inline MonitorPolicy improve_monitor(const TransitionMatrix& chain, const BeliefTable& table) {
    BlindPredictor blind(chain);
    MonitorPolicy pol(table.n_states(), table.n_max());
    for (std::size_t n = 0; n < table.n_max(); ++n)
        for (StateIndex s_m = 0; s_m < table.n_states(); ++s_m)
            pol.set(s_m, n, table.reachable(s_m, n) ? argmax_belief(table.at(s_m, n)) : blind.estimate(s_m, n));
    return pol;
}

/// Exact long-run metrics of a joint policy. The run starts with a
/// transmission from a stationary-distributed source state.
inline Metrics evaluate_joint(const TransitionMatrix& chain, const SensorPolicy& sensor,
                              const MonitorPolicy& monitor, double lambda, std::size_t n_max) {
    const Belief pi = stationary_distribution(chain);
    const std::size_t S = chain.size();
    const SensorSpace space(S, n_max);
    SparseChain mc;
    std::vector<double> rec(space.size()), util(space.size()), init(space.size(), 0.0);
    std::vector<Transition> row(S);
    for (std::size_t idx = 0; idx < space.size(); ++idx) {
        const auto x = space.state(idx);
        const bool tx = x.n == n_max || sensor.transmits(idx);
        for (StateIndex s2 = 0; s2 < S; ++s2)
            row[s2] = {tx ? space.index({s2, x.s, 1}) : space.index({s2, x.s_m, x.n + 1}), chain(x.s, s2)};
        mc.add_row(row);
        util[idx] = tx ? 1.0 : 0.0;
        rec[idx] = tx ? 1.0 : (monitor.estimate(x.s_m, x.n) == x.s ? 1.0 : 0.0);
        if (x.n == n_max && x.s_m == 0) init[idx] = pi[x.s];
    }
    const auto occ = long_run_occupation(mc, init);
    return Metrics::exact(weighted_sum(occ, rec), weighted_sum(occ, util), lambda);
}

struct AlternatingOptions {
    double lambda = 0.0;
    std::size_t n_max = 0; ///< 0 selects default_n_max()
    double tol = 1e-9;
    double rvi_tol = 1e-10;
    std::size_t max_rounds = 50;
};

struct AlternatingResult {
    SensorPolicy sensor;
    MonitorPolicy monitor;
    Metrics metrics;
    std::vector<double> trace;
    std::size_t n_max;
};

class AlternatingNoConvergence : public Error {
public:
    AlternatingNoConvergence(std::size_t rounds, std::vector<double> trace)
        : Error(Errc::NoConvergence, "alternating policies did not converge in " + std::to_string(rounds) +
                                         " rounds"),
          trace_(std::move(trace)) {}
    const std::vector<double>& trace() const noexcept { return trace_; }

private:
    std::vector<double> trace_;
};

/// Alternates sensor best response (RVI) and monitor best response (belief
/// argmax) until the monitor policy is a fixed point, or the pair revisits an
/// earlier monitor policy with unchanged J.
inline AlternatingResult alternate(const TransitionMatrix& chain, const AlternatingOptions& opt) {
    require_communicating(chain);
    const std::size_t n_max = opt.n_max ? opt.n_max : default_n_max(chain.size());
    MonitorPolicy monitor = initial_monitor_policy(chain, n_max);
    std::vector<MonitorPolicy> seen;
    std::vector<double> trace;
    for (std::size_t round = 1; round <= opt.max_rounds; ++round) {
        const auto mdp = build_sensor_mdp(chain, monitor, opt.lambda, n_max);
        auto [vf, sensor] = relative_value_iteration(mdp, opt.rvi_tol);
        auto next = improve_monitor(chain, monitor_beliefs(chain, sensor, n_max));
        const Metrics m = evaluate_joint(chain, sensor, next, opt.lambda, n_max);
        if (!trace.empty() && m.avg_reward < trace.back() - 1e-9)
            throw Error(Errc::InvariantViolation, "alternating trace decreased from " +
                                                      std::to_string(trace.back()) + " to " +
                                                      std::to_string(m.avg_reward));
        const bool flat = !trace.empty() && std::abs(m.avg_reward - trace.back()) < opt.tol;
        trace.push_back(m.avg_reward);
        bool done = next == monitor;
        if (!done && flat)
            for (const auto& old : seen)
                if (old == next) done = true;
        if (done) return AlternatingResult{std::move(sensor), std::move(next), m, std::move(trace), n_max};
        seen.push_back(std::move(monitor));
        monitor = std::move(next);
    }
    throw AlternatingNoConvergence(opt.max_rounds, std::move(trace));
}

/// Step-by-step runner for a sensor/monitor pair. Starts at n = n_max, so
/// the first step is a forced transmission as in evaluate_joint.
class AlternatingPolicy {
public:
    AlternatingPolicy(SensorPolicy sensor, MonitorPolicy monitor)
        : sensor_(std::move(sensor)), monitor_(std::move(monitor)) {
        if (sensor_.space().n_states() != monitor_.n_states() || sensor_.space().n_max() != monitor_.n_max())
            throw Error(Errc::InvalidArgument, "sensor and monitor policy dimensions do not match");
        reset();
    }
    explicit AlternatingPolicy(const AlternatingResult& r) : AlternatingPolicy(r.sensor, r.monitor) {}

    void reset() {
        s_m_ = 0;
        n_ = sensor_.space().n_max();
    }

    StepOutcome step(StateIndex s, RngStream&) {
        if (n_ == sensor_.space().n_max() || sensor_.transmits(SensorState{s, s_m_, n_})) {
            s_m_ = s;
            n_ = 1;
            return {true, s};
        }
        return {false, monitor_.estimate(s_m_, n_++)};
    }

private:
    SensorPolicy sensor_;
    MonitorPolicy monitor_;
    StateIndex s_m_ = 0;
    std::size_t n_ = 0;
};

inline void write_sensor_policy(std::ostream& os, const SensorPolicy& p) {
    const auto& sp = p.space();
    for (std::size_t idx = 0; idx < sp.size(); ++idx) {
        const auto x = sp.state(idx);
        os << x.s << ' ' << x.s_m << ' ' << x.n << " -> " << (p.transmits(idx) ? 1 : 0) << '\n';
    }
}

inline void write_monitor_policy(std::ostream& os, const MonitorPolicy& p) {
    for (StateIndex s_m = 0; s_m < p.n_states(); ++s_m)
        for (std::size_t n = 0; n < p.n_max(); ++n) os << s_m << ' ' << n << " -> " << p.estimate(s_m, n) << '\n';
}

} // namespace remest
