#pragma once

#include "remest/core/error.hpp"
#include "remest/core/markov_average.hpp"

#include <algorithm>
#include <cstddef>
#include <limits>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace remest {

/// Finite MDP in compressed form: states own contiguous action ranges, actions
/// own contiguous successor ranges. Action order within a state is the
/// greedy tie-break preference (earlier wins).
class TabularMdp {
public:
    TabularMdp() { state_begin_.push_back(0); succ_begin_.push_back(0); }

    /// Opens a new state; following add_action() calls attach to it.
    std::size_t add_state() {
        state_begin_.push_back(state_begin_.back());
        return state_begin_.size() - 2;
    }

    void add_action(int label, double reward, std::span<const Transition> successors) {
        labels_.push_back(label);
        rewards_.push_back(reward);
        for (const auto& t : successors) succ_.push_back(t);
        succ_begin_.push_back(succ_.size());
        ++state_begin_.back();
    }

    std::size_t num_states() const noexcept { return state_begin_.size() - 1; }
    std::size_t first_action(std::size_t s) const { return state_begin_[s]; }
    std::size_t end_action(std::size_t s) const { return state_begin_[s + 1]; }
    int label(std::size_t a) const { return labels_[a]; }
    double reward(std::size_t a) const { return rewards_[a]; }
    std::span<const Transition> successors(std::size_t a) const {
        return {succ_.data() + succ_begin_[a], succ_begin_[a + 1] - succ_begin_[a]};
    }

private:
    std::vector<std::size_t> state_begin_;
    std::vector<int> labels_;
    std::vector<double> rewards_;
    std::vector<std::size_t> succ_begin_;
    std::vector<Transition> succ_;
};

/// Both tolerances are scaled by max(1, largest |reward|), so huge costs do
/// not push the stopping rule below floating-point resolution.
struct RviOptions {
    double tol = 1e-10;
    std::size_t max_sweeps = 200000;
    /// Self-loop weight of the aperiodicity transform P -> tau I + (1 - tau) P.
    double aperiodicity = 0.1;
    std::size_t reference = 0;
    /// Q-values this close to the best count as ties.
    double tie_tolerance = 1e-10;
    std::vector<double> warm_start;
};

struct RviResult {
    std::vector<double> values;
    double gain = 0.0;
    double span = 0.0;
    std::size_t sweeps = 0;
    /// Global action index chosen in each state.
    std::vector<std::size_t> greedy;
};

/// Relative value iteration for average-reward MDPs:
///   V <- max_a [r(x,a) + E V(x')] - (same)(ref)
/// run on the aperiodic transform, which leaves gains and gain-optimal
/// policies unchanged. Stops when span(TV - V) < tol.
inline RviResult relative_value_iteration(const TabularMdp& mdp, const RviOptions& opt = {}) {
    const std::size_t n = mdp.num_states();
    if (n == 0) throw Error(Errc::InvalidArgument, "empty MDP");
    if (opt.reference >= n) throw Error(Errc::InvalidArgument, "reference state out of range");
    const double tau = opt.aperiodicity;
    const double keep = 1.0 - tau;

    RviResult res;
    res.values = opt.warm_start.size() == n ? opt.warm_start : std::vector<double>(n, 0.0);
    std::vector<double> next(n);
    auto& v = res.values;
    double scale = 1.0;
    for (std::size_t a = 0; a < mdp.end_action(n - 1); ++a) scale = std::max(scale, std::abs(mdp.reward(a)));
    const double tol = opt.tol * scale, tie = opt.tie_tolerance * scale;

    auto q_value = [&](std::size_t a) {
        double acc = 0.0;
        for (const auto& t : mdp.successors(a)) acc += t.prob * v[t.to];
        return mdp.reward(a) + keep * acc;
    };

    for (std::size_t sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t x = 0; x < n; ++x) {
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t a = mdp.first_action(x); a < mdp.end_action(x); ++a)
                best = std::max(best, q_value(a));
            next[x] = best + tau * v[x];
            const double diff = next[x] - v[x];
            lo = std::min(lo, diff);
            hi = std::max(hi, diff);
        }
        const double ref = next[opt.reference];
        res.gain = ref - v[opt.reference];
        for (std::size_t x = 0; x < n; ++x) v[x] = next[x] - ref;
        res.span = hi - lo;
        res.sweeps = sweep;
        if (res.span < tol) break;
        if (sweep == opt.max_sweeps)
            throw Error(Errc::NoConvergence, "RVI did not converge in " + std::to_string(opt.max_sweeps) +
                                                 " sweeps (span " + std::to_string(res.span) + ")");
    }

    res.greedy.resize(n);
    for (std::size_t x = 0; x < n; ++x) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t a = mdp.first_action(x); a < mdp.end_action(x); ++a)
            best = std::max(best, q_value(a));
        for (std::size_t a = mdp.first_action(x); a < mdp.end_action(x); ++a)
            if (q_value(a) >= best - tie) {
                res.greedy[x] = a;
                break;
            }
    }
    return res;
}

} // namespace remest
