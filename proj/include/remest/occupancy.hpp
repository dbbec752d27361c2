#pragma once

// Occupancy-state formulation: a single-agent MDP whose state is the
// monitor's belief and whose action is the sensor's per-state decision rule.
// The monitor is folded into the environment (it always estimates the
// belief argmax). The continuous belief space is discretized by keying each
// belief at a fixed resolution q; the reachable part of the resulting graph
// is expanded either completely (expand_reachable_graph) or lazily along the
// current greedy policy (solve_occupancy_lazy).

#include "remest/alternating.hpp"
#include "remest/core/chain.hpp"
#include "remest/core/markov_average.hpp"
#include "remest/core/metrics.hpp"
#include "remest/core/rvi.hpp"
#include "remest/core/step.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace remest {

inline constexpr std::size_t kMaxOccupancyStates = 12;

using BeliefKey = std::vector<std::uint32_t>;

struct BeliefKeyHash {
    std::size_t operator()(const BeliefKey& k) const noexcept {
        std::uint64_t h = 1469598103934665603ull;
        for (auto v : k) {
            h ^= v;
            h *= 1099511628211ull;
        }
        return static_cast<std::size_t>(h);
    }
};

/// Number of probability units per belief at resolution q (q must divide 1).
inline std::uint32_t units_for_resolution(double q) {
    if (!(q > 0.0) || q > 0.5) throw Error(Errc::InvalidArgument, "resolution must be in (0, 0.5]");
    const double m = std::round(1.0 / q);
    if (std::abs(m * q - 1.0) > 1e-9 || m > 4e9)
        throw Error(Errc::InvalidArgument, "1/q must be an integer");
    return static_cast<std::uint32_t>(m);
}

/// Fixed-point key: each entry becomes an integer count of 1/units, with the
/// remaining units handed to the largest fractional remainders (lowest index
/// first). Every decoded entry is within one unit of the input.
inline BeliefKey quantize_key(const Belief& b, std::uint32_t units) {
    const std::size_t n = b.size();
    BeliefKey key(n);
    std::vector<double> rem(n);
    std::int64_t used = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = b[i] * units;
        const double f = std::floor(x);
        key[i] = static_cast<std::uint32_t>(f);
        rem[i] = x - f;
        used += key[i];
    }
    std::int64_t left = static_cast<std::int64_t>(units) - used;
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) { return rem[a] > rem[c]; });
    for (std::size_t k = 0; left > 0; k = (k + 1) % n, --left) ++key[order[k]];
    for (std::size_t k = n; left < 0; ++left) {
        // Only reachable through rounding noise in the input mass.
        k = k == 0 ? n - 1 : k - 1;
        while (key[order[k]] == 0) k = k == 0 ? n - 1 : k - 1;
        --key[order[k]];
    }
    return key;
}

inline Belief decode_key(const BeliefKey& key, std::uint32_t units) {
    std::vector<double> p(key.size());
    for (std::size_t i = 0; i < key.size(); ++i) p[i] = static_cast<double>(key[i]) / units;
    return Belief::normalize(std::move(p));
}

/// A belief together with its discretization key.
struct QuantizedBelief {
    BeliefKey key;
    Belief value;
};

inline QuantizedBelief quantize(const Belief& b, std::uint32_t units) { return {quantize_key(b, units), b}; }

/// Belief after the transmission slot: e_s if s transmitted, otherwise the
/// silence-conditioned belief.
inline Belief post_transmission_belief(const Belief& b, const DecisionRule& rule, StateIndex s) {
    if (rule.transmits(s)) return Belief::basis(b.size(), s);
    return belief_condition_on_silence(b, rule);
}

struct WeightedBelief {
    Belief belief;
    double prob;
};

/// Successor beliefs P^T b' with their probabilities. Transmitting states
/// lead to P^T e_s; all silent states share one successor carrying their
/// total mass.
inline std::vector<WeightedBelief> occupancy_transition(const TransitionMatrix& chain, const Belief& b,
                                                        const DecisionRule& rule) {
    std::vector<WeightedBelief> out;
    double silent = 0.0;
    for (StateIndex s = 0; s < b.size(); ++s) {
        if (!rule.transmits(s)) {
            silent += b[s];
            continue;
        }
        if (b[s] > 0.0) out.push_back({belief_predict(chain, Belief::basis(b.size(), s)), b[s]});
    }
    if (silent > 0.0) out.push_back({belief_predict(chain, belief_condition_on_silence(b, rule)), silent});
    return out;
}

/// Expected reconstruction and channel use of one decision rule at belief b,
/// with the monitor guessing the argmax of its post-transmission belief.
struct RuleOutcome {
    double reconstruction = 0.0;
    double utilization = 0.0;
};

inline RuleOutcome occupancy_outcome(const Belief& b, const DecisionRule& rule) {
    RuleOutcome o;
    double silent = 0.0;
    for (StateIndex s = 0; s < b.size(); ++s) {
        if (rule.transmits(s))
            o.utilization += b[s];
        else
            silent += b[s];
    }
    if (!(silent > 0.0)) return {1.0, 1.0};
    o.reconstruction = o.utilization + b[argmax_belief(belief_condition_on_silence(b, rule))];
    return o;
}

inline double occupancy_reward(const Belief& b, const DecisionRule& rule, double lambda) {
    const auto o = occupancy_outcome(b, rule);
    return o.reconstruction - lambda * o.utilization;
}

/// Reward when the monitor answers silence with a fixed `estimate`.
inline double occupancy_reward(const Belief& b, const DecisionRule& rule, double lambda, StateIndex estimate) {
    double util = 0.0, hit = 0.0;
    for (StateIndex s = 0; s < b.size(); ++s) {
        if (rule.transmits(s))
            util += b[s];
        else if (s == estimate)
            hit += b[s];
    }
    if (!(silence_mass(b, rule) > 0.0)) return 1.0 - lambda;
    return util + hit - lambda * util;
}

/// Discretized occupancy-state MDP. Nodes are keyed beliefs whose value is
/// the exact belief first seen for that key. Expanded nodes offer every
/// decision rule (rules identical on the belief's support are merged, the
/// lowest mask kept); unexpanded nodes only offer transmit-all, which leads
/// to the always-present anchors P^T e_s.
class OccupancyMdp {
public:
    struct Action {
        std::uint32_t mask;
        RuleOutcome outcome;
        std::vector<Transition> successors;
    };

    OccupancyMdp(TransitionMatrix chain, const Belief& b0, double lambda, double q)
        : chain_(std::move(chain)), lambda_(lambda), units_(units_for_resolution(q)), q_(q) {
        require_communicating(chain_);
        if (chain_.size() > kMaxOccupancyStates)
            throw Error(Errc::TooLarge, "occupancy solver supports at most " +
                                            std::to_string(kMaxOccupancyStates) + " source states");
        if (!(lambda >= 0.0)) throw Error(Errc::InvalidArgument, "lambda must be non-negative");
        if (b0.size() != chain_.size()) throw Error(Errc::InvalidArgument, "b0 has the wrong size");
        const std::size_t n = chain_.size();
        for (StateIndex s = 0; s < n; ++s) anchors_.push_back(intern(belief_predict(chain_, Belief::basis(n, s))));
        for (StateIndex s = 0; s < n; ++s) nodes_[anchors_[s]].actions[0] = transmit_all(anchors_[s]);
        for (StateIndex s = 0; s < n; ++s) basis_.push_back(intern(Belief::basis(n, s)));
        b0_ = intern(b0);
    }

    const TransitionMatrix& chain() const noexcept { return chain_; }
    double lambda() const noexcept { return lambda_; }
    double resolution() const noexcept { return q_; }
    std::uint32_t units() const noexcept { return units_; }
    std::size_t num_nodes() const noexcept { return nodes_.size(); }
    std::size_t num_expanded() const noexcept { return n_expanded_; }
    std::size_t b0_node() const noexcept { return b0_; }
    std::size_t anchor(StateIndex s) const { return anchors_.at(s); }
    std::size_t basis(StateIndex s) const { return basis_.at(s); }
    const QuantizedBelief& node(std::size_t i) const { return nodes_[i].belief; }
    bool expanded(std::size_t i) const { return nodes_[i].expanded; }
    std::span<const Action> actions(std::size_t i) const { return nodes_[i].actions; }

    std::optional<std::size_t> find(const BeliefKey& key) const {
        auto it = index_.find(key);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    /// Node for this belief's key, created unexpanded if new.
    std::size_t intern(const Belief& b) {
        auto key = quantize_key(b, units_);
        auto it = index_.find(key);
        if (it != index_.end()) return it->second;
        const std::size_t id = nodes_.size();
        index_.emplace(key, id);
        nodes_.push_back(Node{{std::move(key), b}, false, {}});
        nodes_.back().actions.push_back(transmit_all(id));
        return id;
    }

    void expand(std::size_t id) {
        if (nodes_[id].expanded) return;
        const std::size_t n = chain_.size();
        const Belief b = nodes_[id].belief.value;
        std::uint32_t support = 0;
        for (StateIndex s = 0; s < n; ++s)
            if (b[s] > 0.0) support |= (1u << s);
        const std::uint32_t full = (1u << n) - 1u;

        std::vector<Action> acts;
        std::vector<char> seen(std::size_t{1} << n, 0);
        for (std::uint32_t mask = 0; mask <= full; ++mask) {
            const std::uint32_t canon = (mask & support) | (~support & full);
            if (seen[canon]) continue;
            seen[canon] = 1;
            const DecisionRule rule = DecisionRule::from_mask(mask, n);
            Action a{mask, occupancy_outcome(b, rule), {}};
            double silent = 0.0;
            for (StateIndex s = 0; s < n; ++s) {
                if (b[s] <= 0.0) continue;
                if (rule.transmits(s))
                    add_successor(a.successors, anchors_[s], b[s]);
                else
                    silent += b[s];
            }
            if (silent > 0.0) {
                const std::size_t next = intern(belief_predict(chain_, belief_condition_on_silence(b, rule)));
                add_successor(a.successors, next, silent);
            }
            acts.push_back(std::move(a));
        }
        nodes_[id].actions = std::move(acts);
        nodes_[id].expanded = true;
        ++n_expanded_;
    }

    /// Index of the action using `mask` in node i (after support merging).
    std::optional<std::size_t> action_for(std::size_t i, std::uint32_t mask) const {
        const auto& acts = nodes_[i].actions;
        const Belief& b = nodes_[i].belief.value;
        std::uint32_t support = 0;
        for (StateIndex s = 0; s < b.size(); ++s)
            if (b[s] > 0.0) support |= (1u << s);
        for (std::size_t k = 0; k < acts.size(); ++k)
            if ((acts[k].mask & support) == (mask & support)) return k;
        return std::nullopt;
    }

    /// Flattened MDP with reward r - lambda * c; action labels are local indices.
    TabularMdp to_tabular() const {
        TabularMdp t;
        for (const auto& node : nodes_) {
            t.add_state();
            for (std::size_t k = 0; k < node.actions.size(); ++k) {
                const auto& a = node.actions[k];
                t.add_action(static_cast<int>(k), a.outcome.reconstruction - lambda_ * a.outcome.utilization,
                             a.successors);
            }
        }
        return t;
    }

private:
    struct Node {
        QuantizedBelief belief;
        bool expanded;
        std::vector<Action> actions;
    };

    static void add_successor(std::vector<Transition>& succ, std::size_t to, double p) {
        for (auto& t : succ)
            if (t.to == to) {
                t.prob += p;
                return;
            }
        succ.push_back({to, p});
    }

    Action transmit_all(std::size_t id) {
        const std::size_t n = chain_.size();
        Action a{(1u << n) - 1u, {1.0, 1.0}, {}};
        // The anchors' own transmit-all actions are filled in by the constructor.
        if (anchors_.size() < n) return a;
        const Belief& b = nodes_[id].belief.value;
        for (StateIndex s = 0; s < n; ++s)
            if (b[s] > 0.0) add_successor(a.successors, anchors_[s], b[s]);
        return a;
    }

    TransitionMatrix chain_;
    double lambda_;
    std::uint32_t units_;
    double q_;
    std::vector<Node> nodes_;
    std::unordered_map<BeliefKey, std::size_t, BeliefKeyHash> index_;
    std::vector<std::size_t> anchors_;
    std::vector<std::size_t> basis_;
    std::size_t b0_ = 0;
    std::size_t n_expanded_ = 0;
};

/// Breadth-first closure of the discretized graph under all decision rules,
/// starting from b0 and the anchors.
inline OccupancyMdp expand_reachable_graph(const TransitionMatrix& chain, const Belief& b0, double lambda,
                                           double q, std::size_t cap) {
    OccupancyMdp mdp(chain, b0, lambda, q);
    for (std::size_t next = 0; next < mdp.num_nodes(); ++next) {
        mdp.expand(next);
        if (mdp.num_nodes() > cap)
            throw Error(Errc::CapExceeded, "reachable belief graph exceeds " + std::to_string(cap) +
                                               " states (frontier " + std::to_string(mdp.num_nodes() - next - 1) +
                                               ")");
    }
    return mdp;
}

/// Deterministic stationary policy over belief keys.
class OccupancyPolicy {
public:
    OccupancyPolicy() = default;
    OccupancyPolicy(std::size_t n_states, std::uint32_t units) : n_states_(n_states), units_(units) {}

    std::size_t n_states() const noexcept { return n_states_; }
    std::uint32_t units() const noexcept { return units_; }
    std::size_t size() const noexcept { return keys_.size(); }
    const BeliefKey& key(std::size_t i) const { return keys_[i]; }
    const DecisionRule& rule(std::size_t i) const { return rules_[i]; }

    void set(const BeliefKey& key, DecisionRule rule) {
        auto it = index_.find(key);
        if (it != index_.end()) {
            rules_[it->second] = std::move(rule);
            return;
        }
        index_.emplace(key, keys_.size());
        keys_.push_back(key);
        rules_.push_back(std::move(rule));
        centers_.push_back(decode_key(key, units_));
    }

    const DecisionRule* find(const BeliefKey& key) const {
        auto it = index_.find(key);
        return it == index_.end() ? nullptr : &rules_[it->second];
    }

    /// Rule for an exact belief; unseen keys fall back to the stored key
    /// nearest in L1 distance (first on ties).
    const DecisionRule& rule_for(const Belief& b, bool* fell_back = nullptr) const {
        if (keys_.empty()) throw Error(Errc::InvalidArgument, "empty occupancy policy");
        if (const auto* r = find(quantize_key(b, units_))) {
            if (fell_back) *fell_back = false;
            return *r;
        }
        if (fell_back) *fell_back = true;
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < centers_.size(); ++i) {
            double d = 0.0;
            for (std::size_t s = 0; s < b.size(); ++s) d += std::abs(centers_[i][s] - b[s]);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        return rules_[best];
    }

private:
    std::size_t n_states_ = 0;
    std::uint32_t units_ = 1;
    std::vector<BeliefKey> keys_;
    std::vector<DecisionRule> rules_;
    std::vector<Belief> centers_;
    std::unordered_map<BeliefKey, std::size_t, BeliefKeyHash> index_;
};

struct OccupancySolution {
    OccupancyPolicy policy;
    /// Gain of the greedy policy by exact evaluation of its induced chain from b0.
    double gain = 0.0;
    double rvi_gain = 0.0;
    /// Optimistic-bound gain when the lazy solver certified it, NaN otherwise.
    double upper_bound = 0.0;
    Metrics metrics;
    std::vector<double> values;
    /// Local action index chosen at each node.
    std::vector<std::size_t> choice;
    std::size_t nodes = 0;
    std::size_t expanded = 0;
    std::size_t rounds = 1;
    bool cap_reached = false;
    bool explore_capped = false;
};

/// Exact metrics of a node-level policy (local action index per node),
/// started from the b0 node.
inline Metrics evaluate_occupancy_choice(const OccupancyMdp& mdp, std::span<const std::size_t> choice) {
    const std::size_t n = mdp.num_nodes();
    // Restrict to nodes reachable from b0 so the linear systems stay small.
    std::vector<std::size_t> local(n, static_cast<std::size_t>(-1));
    std::vector<std::size_t> order{mdp.b0_node()};
    local[mdp.b0_node()] = 0;
    for (std::size_t head = 0; head < order.size(); ++head) {
        const auto& a = mdp.actions(order[head])[choice[order[head]]];
        for (const auto& t : a.successors)
            if (local[t.to] == static_cast<std::size_t>(-1)) {
                local[t.to] = order.size();
                order.push_back(t.to);
            }
    }
    SparseChain mc;
    std::vector<double> rec(order.size()), util(order.size()), init(order.size(), 0.0);
    std::vector<Transition> row;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto& a = mdp.actions(order[k])[choice[order[k]]];
        row.clear();
        for (const auto& t : a.successors) row.push_back({local[t.to], t.prob});
        mc.add_row(row);
        rec[k] = a.outcome.reconstruction;
        util[k] = a.outcome.utilization;
    }
    init[0] = 1.0;
    const auto occ = long_run_occupation(mc, init);
    return Metrics::exact(weighted_sum(occ, rec), weighted_sum(occ, util), mdp.lambda());
}

enum class FrontierBound {
    /// Unexpanded nodes are valued by their only action, transmit-all.
    Pessimistic,
    /// Unexpanded nodes are valued by sum_s b(s) V(e_s), an upper bound since
    /// the optimal relative value function is convex in the belief.
    Optimistic,
};

struct OccupancyRvi {
    std::vector<double> values;
    double gain = 0.0;
    double span = 0.0;
    std::size_t sweeps = 0;
    /// Local action index chosen at each node (0 at bounded frontier nodes).
    std::vector<std::size_t> choice;
};

/// RVI specialised to the discretized graph, with aperiodicity transform and
/// reference node 0. Under the optimistic bound, frontier nodes carry no
/// dynamics of their own and are refreshed after each sweep.
inline OccupancyRvi occupancy_rvi(const OccupancyMdp& mdp, FrontierBound bound, const RviOptions& opt) {
    const std::size_t n = mdp.num_nodes();
    const std::size_t S = mdp.chain().size();
    const double tau = opt.aperiodicity, keep = 1.0 - tau, lambda = mdp.lambda();
    const bool optimistic = bound == FrontierBound::Optimistic;
    OccupancyRvi res;
    res.values = opt.warm_start.size() == n ? opt.warm_start : std::vector<double>(n, 0.0);
    auto& v = res.values;
    std::vector<double> next(n);
    const double scale = std::max(1.0, lambda);
    const double tol = opt.tol * scale, tie = opt.tie_tolerance * scale;

    auto q_value = [&](const OccupancyMdp::Action& a) {
        double acc = 0.0;
        for (const auto& t : a.successors) acc += t.prob * v[t.to];
        return a.outcome.reconstruction - lambda * a.outcome.utilization + keep * acc;
    };
    auto bounded = [&](std::size_t i, const std::vector<double>& w) {
        const Belief& b = mdp.node(i).value;
        double acc = 0.0;
        for (StateIndex s = 0; s < S; ++s) acc += b[s] * w[mdp.basis(s)];
        return acc;
    };

    for (std::size_t sweep = 1;; ++sweep) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t i = 0; i < n; ++i) {
            if (optimistic && !mdp.expanded(i)) continue;
            double best = -std::numeric_limits<double>::infinity();
            for (const auto& a : mdp.actions(i)) best = std::max(best, q_value(a));
            next[i] = best + tau * v[i];
            lo = std::min(lo, next[i] - v[i]);
            hi = std::max(hi, next[i] - v[i]);
        }
        const double ref = next[0];
        res.gain = ref - v[0];
        for (std::size_t i = 0; i < n; ++i)
            if (!optimistic || mdp.expanded(i)) v[i] = next[i] - ref;
        if (optimistic)
            for (std::size_t i = 0; i < n; ++i)
                if (!mdp.expanded(i)) v[i] = bounded(i, v);
        res.span = hi - lo;
        res.sweeps = sweep;
        if (res.span < tol) break;
        if (sweep >= opt.max_sweeps)
            throw Error(Errc::NoConvergence, "occupancy RVI did not converge in " +
                                                 std::to_string(opt.max_sweeps) + " sweeps (span " +
                                                 std::to_string(res.span) + ")");
    }

    res.choice.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (optimistic && !mdp.expanded(i)) continue;
        const auto acts = mdp.actions(i);
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& a : acts) best = std::max(best, q_value(a));
        for (std::size_t k = 0; k < acts.size(); ++k)
            if (q_value(acts[k]) >= best - tie) {
                res.choice[i] = k;
                break;
            }
    }
    return res;
}

namespace detail {

inline OccupancySolution extract_solution(const OccupancyMdp& mdp, OccupancyRvi&& rvi) {
    OccupancySolution sol;
    sol.rvi_gain = rvi.gain;
    sol.choice = std::move(rvi.choice);
    sol.values = std::move(rvi.values);
    sol.metrics = evaluate_occupancy_choice(mdp, sol.choice);
    sol.gain = sol.metrics.avg_reward;
    sol.upper_bound = std::numeric_limits<double>::quiet_NaN();
    sol.policy = OccupancyPolicy(mdp.chain().size(), mdp.units());
    for (std::size_t i = 0; i < mdp.num_nodes(); ++i)
        sol.policy.set(mdp.node(i).key,
                       DecisionRule::from_mask(mdp.actions(i)[sol.choice[i]].mask, mdp.chain().size()));
    sol.nodes = mdp.num_nodes();
    sol.expanded = mdp.num_expanded();
    return sol;
}

/// Unexpanded nodes the node policy visits from b0; frontier nodes are not
/// followed further.
inline std::vector<std::size_t> greedy_frontier(const OccupancyMdp& mdp, std::span<const std::size_t> choice) {
    std::vector<char> seen(mdp.num_nodes(), 0);
    std::vector<std::size_t> stack{mdp.b0_node()}, frontier;
    seen[mdp.b0_node()] = 1;
    while (!stack.empty()) {
        const std::size_t i = stack.back();
        stack.pop_back();
        if (!mdp.expanded(i)) {
            frontier.push_back(i);
            continue;
        }
        for (const auto& t : mdp.actions(i)[choice[i]].successors)
            if (!seen[t.to]) {
                seen[t.to] = 1;
                stack.push_back(t.to);
            }
    }
    std::sort(frontier.begin(), frontier.end());
    return frontier;
}

} // namespace detail

/// Average-reward RVI on the discretized MDP (unexpanded nodes transmit);
/// the returned gain is certified by exact evaluation of the greedy
/// policy's induced chain from b0.
inline OccupancySolution solve_occupancy(const OccupancyMdp& mdp, double tol = 1e-9,
                                         std::size_t max_sweeps = 200000) {
    RviOptions opt;
    opt.tol = tol;
    opt.max_sweeps = max_sweeps;
    return detail::extract_solution(mdp, occupancy_rvi(mdp, FrontierBound::Pessimistic, opt));
}

struct OccupancyOptions {
    double lambda = 0.0;
    double q = 1e-4;
    std::size_t cap = 200000;
    double tol = 1e-9;
    /// RVI tolerance of the intermediate expansion rounds.
    double coarse_tol = 1e-3;
    std::size_t max_sweeps = 200000;
    std::size_t max_rounds = 100000;
    /// Node budget for growth along the optimistic greedy policy (0 disables it).
    std::size_t explore_cap = 10000;
    /// Greedy expansion steps taken past each frontier node per round.
    std::size_t lookahead = 16;
    std::optional<Belief> b0; ///< defaults to the stationary distribution
};

/// Expands the nodes a sensor policy visits, so that its lift (rule
/// pi(., s_m, n) at the belief reached after n - 1 silent steps from s_m) is
/// available in the discretized MDP.
inline void seed_with_sensor_policy(OccupancyMdp& mdp, const SensorPolicy& sensor) {
    const std::size_t n = mdp.chain().size();
    const std::size_t n_max = sensor.space().n_max();
    for (StateIndex s_m = 0; s_m < n; ++s_m) {
        std::size_t node = mdp.anchor(s_m);
        for (std::size_t k = 1; k < n_max; ++k) {
            mdp.expand(node);
            const DecisionRule rule = sensor.rule_at(s_m, k);
            const Belief& b = mdp.node(node).value;
            if (!(silence_mass(b, rule) > 0.0)) break;
            node = mdp.intern(belief_predict(mdp.chain(), belief_condition_on_silence(b, rule)));
        }
    }
}

/// Occupancy MDP solved over a lazily grown graph. Starting from the anchors,
/// basis beliefs, b0 and any seed policies, it alternates RVI with expansion
/// of every unexpanded node the current greedy policy visits until that
/// policy stays on expanded nodes or the node cap is reached. Growth is
/// driven by the optimistic bound, then by the pessimistic one; the final
/// policy comes from a pessimistic solve. When optimistic growth finishes
/// under the cap, `upper_bound` equals the gain up to solver tolerance.
inline OccupancySolution solve_occupancy_lazy(const TransitionMatrix& chain, const OccupancyOptions& opt,
                                              std::span<const SensorPolicy> seeds = {}) {
    const Belief b0 = opt.b0 ? *opt.b0 : stationary_distribution(chain);
    OccupancyMdp mdp(chain, b0, opt.lambda, opt.q);
    for (StateIndex s = 0; s < chain.size(); ++s) {
        mdp.expand(mdp.anchor(s));
        mdp.expand(mdp.basis(s));
    }
    mdp.expand(mdp.b0_node());
    for (const auto& seed : seeds) seed_with_sensor_policy(mdp, seed);

    RviOptions ropt;
    ropt.tol = opt.tol;
    ropt.max_sweeps = opt.max_sweeps;
    const std::size_t per_node = std::size_t{1} << chain.size();
    bool cap_reached = false;
    std::size_t round = 0;
    double upper = std::numeric_limits<double>::quiet_NaN();

    // Intermediate rounds only steer expansion, so they run at a coarse
    // tolerance; a round with an empty frontier is re-checked at full precision.
    const double coarse = std::max(opt.tol, opt.coarse_tol);
    auto grow = [&](FrontierBound bound, std::size_t cap) {
        std::vector<double> warm;
        bool fine = false;
        for (;;) {
            ++round;
            warm.resize(mdp.num_nodes(), 0.0);
            ropt.warm_start = warm;
            ropt.tol = fine ? opt.tol : coarse;
            auto rvi = occupancy_rvi(mdp, bound, ropt);
            warm = rvi.values;
            const auto frontier = detail::greedy_frontier(mdp, rvi.choice);
            if (frontier.empty()) {
                if (fine) return rvi.gain;
                fine = true;
                continue;
            }
            fine = false;
            if (round >= opt.max_rounds) return std::numeric_limits<double>::quiet_NaN();
            // Expand each frontier node, then follow the one-step greedy action
            // under the current values for up to `lookahead` further nodes.
            std::vector<std::pair<std::size_t, std::size_t>> todo;
            for (auto it = frontier.rbegin(); it != frontier.rend(); ++it) todo.push_back({*it, 0});
            while (!todo.empty()) {
                const auto [i, depth] = todo.back();
                todo.pop_back();
                if (mdp.expanded(i)) continue;
                if (mdp.num_nodes() + per_node > cap) {
                    cap_reached = true;
                    return std::numeric_limits<double>::quiet_NaN();
                }
                mdp.expand(i);
                if (depth >= opt.lookahead) continue;
                auto value = [&](std::size_t j) {
                    if (j < warm.size()) return warm[j];
                    double acc = 0.0;
                    for (StateIndex s = 0; s < chain.size(); ++s) acc += mdp.node(j).value[s] * warm[mdp.basis(s)];
                    return acc;
                };
                const OccupancyMdp::Action* best = nullptr;
                double best_q = -std::numeric_limits<double>::infinity();
                for (const auto& a : mdp.actions(i)) {
                    double q = a.outcome.reconstruction - opt.lambda * a.outcome.utilization;
                    for (const auto& t : a.successors) q += t.prob * value(t.to);
                    if (q > best_q + ropt.tie_tolerance * std::max(1.0, opt.lambda)) {
                        best_q = q;
                        best = &a;
                    }
                }
                for (const auto& t : best->successors)
                    if (!mdp.expanded(t.to)) todo.push_back({t.to, depth + 1});
            }
        }
    };

    if (opt.explore_cap > 0) upper = grow(FrontierBound::Optimistic, std::min(opt.explore_cap, opt.cap));
    bool explore_capped = cap_reached;
    cap_reached = false;
    grow(FrontierBound::Pessimistic, opt.cap);
    ropt.warm_start.clear();
    ropt.tol = opt.tol;
    auto sol = detail::extract_solution(mdp, occupancy_rvi(mdp, FrontierBound::Pessimistic, ropt));
    sol.upper_bound = upper;
    sol.rounds = round;
    sol.cap_reached = cap_reached;
    sol.explore_capped = explore_capped;
    return sol;
}

struct StepRecord {
    StateIndex state;
    bool transmit;
    StateIndex estimate;
};

struct ExecutionResult {
    Metrics metrics;
    std::size_t fallbacks = 0;
    std::vector<StepRecord> trajectory;
};

/// Runs the sensor/monitor loop driven by an occupancy policy on exact
/// beliefs: rule = policy(b); transmit iff rule(s); Bayes update; estimate =
/// argmax; predict.
inline ExecutionResult execute_occupancy(const TransitionMatrix& chain, const OccupancyPolicy& policy,
                                         std::size_t steps, RngStream& rng, double lambda = 0.0,
                                         std::optional<Belief> b0 = std::nullopt, bool record = false) {
    ExecutionResult out;
    Belief b = b0 ? *b0 : stationary_distribution(chain);
    StateIndex s = sample_from(b, rng);
    std::size_t hits = 0, sends = 0;
    for (std::size_t t = 0; t < steps; ++t) {
        bool fell_back = false;
        const DecisionRule& rule = policy.rule_for(b, &fell_back);
        out.fallbacks += fell_back;
        const bool tx = rule.transmits(s);
        b = tx ? Belief::basis(chain.size(), s) : belief_condition_on_silence(b, rule);
        const StateIndex est = argmax_belief(b);
        hits += est == s;
        sends += tx;
        if (record) out.trajectory.push_back({s, tx, est});
        b = belief_predict(chain, b);
        s = sample_next(chain, s, rng);
    }
    out.metrics = Metrics::exact(double(hits) / steps, double(sends) / steps, lambda);
    return out;
}

/// Step-by-step runner with the same dynamics as execute_occupancy. Counts
/// how often a belief fell outside the policy table.
class OccupancyStepPolicy {
public:
    OccupancyStepPolicy(TransitionMatrix chain, OccupancyPolicy policy, std::optional<Belief> b0 = std::nullopt)
        : chain_(std::move(chain)), policy_(std::move(policy)),
          b0_(b0 ? std::move(*b0) : stationary_distribution(chain_)), b_(b0_) {}

    void reset() {
        b_ = b0_;
        fallbacks_ = 0;
    }

    StepOutcome step(StateIndex s, RngStream&) {
        bool fell_back = false;
        const DecisionRule& rule = policy_.rule_for(b_, &fell_back);
        fallbacks_ += fell_back;
        const bool tx = rule.transmits(s);
        b_ = tx ? Belief::basis(chain_.size(), s) : belief_condition_on_silence(b_, rule);
        const StateIndex est = argmax_belief(b_);
        b_ = belief_predict(chain_, b_);
        return {tx, est};
    }

    std::size_t fallbacks() const noexcept { return fallbacks_; }

private:
    TransitionMatrix chain_;
    OccupancyPolicy policy_;
    Belief b0_;
    Belief b_;
    std::size_t fallbacks_ = 0;
};

inline std::string format_key(const BeliefKey& key) {
    std::string out;
    for (std::size_t i = 0; i < key.size(); ++i) {
        if (i) out.push_back(',');
        out += std::to_string(key[i]);
    }
    return out;
}

/// Text form: a '#'-prefixed header block with solver metadata, then one
/// `belief-key -> rule-bitstring` line per node.
inline void write_occupancy_policy(std::ostream& os, const OccupancySolution& sol, double lambda) {
    const auto& p = sol.policy;
    std::ostringstream num;
    num.precision(17);
    num << "# remest occupancy policy v1\n"
        << "# n_states " << p.n_states() << '\n'
        << "# units " << p.units() << '\n'
        << "# lambda " << lambda << '\n'
        << "# gain " << sol.gain << '\n'
        << "# rvi_gain " << sol.rvi_gain << '\n'
        << "# utilization " << sol.metrics.utilization << '\n'
        << "# reconstruction " << sol.metrics.reconstruction << '\n'
        << "# nodes " << sol.nodes << '\n'
        << "# expanded " << sol.expanded << '\n';
    os << num.str();
    for (std::size_t i = 0; i < p.size(); ++i) os << format_key(p.key(i)) << " -> " << p.rule(i).bits() << '\n';
}

inline OccupancyPolicy read_occupancy_policy(std::istream& is) {
    std::size_t n_states = 0;
    std::uint32_t units = 0;
    std::string line;
    OccupancyPolicy policy;
    bool started = false;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream hs(line.substr(1));
            std::string name;
            hs >> name;
            if (name == "n_states") hs >> n_states;
            if (name == "units") hs >> units;
            continue;
        }
        if (!started) {
            if (n_states == 0 || units == 0)
                throw Error(Errc::ParseError, "policy header lacks n_states/units");
            policy = OccupancyPolicy(n_states, units);
            started = true;
        }
        const auto arrow = line.find(" -> ");
        if (arrow == std::string::npos)
            throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": missing ' -> '");
        BeliefKey key;
        std::istringstream ks(line.substr(0, arrow));
        std::string item;
        while (std::getline(ks, item, ',')) {
            std::size_t used = 0;
            unsigned long v = 0;
            try {
                v = std::stoul(item, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != item.size())
                throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": bad belief key");
            key.push_back(static_cast<std::uint32_t>(v));
        }
        auto rule = DecisionRule::from_bits(line.substr(arrow + 4));
        if (key.size() != n_states || rule.size() != n_states)
            throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": wrong arity");
        policy.set(key, std::move(rule));
    }
    if (!started) throw Error(Errc::ParseError, "policy file has no entries");
    return policy;
}

} // namespace remest
