#pragma once

#include "remest/core/error.hpp"
#include "remest/core/markov_average.hpp"
#include "remest/core/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace remest {

using StateIndex = std::size_t;

/// Entries within this distance of the maximum count as tied.
inline constexpr double kTieTolerance = 1e-12;
/// Input rows may deviate from unit sum by at most this much.
inline constexpr double kStochasticTolerance = 1e-9;

enum class TieBreak { Lowest, Highest };

/// Row-stochastic source transition matrix. Construct through validate_chain().
class TransitionMatrix {
public:
    std::size_t size() const noexcept { return n_; }
    double operator()(StateIndex from, StateIndex to) const { return p_[from * n_ + to]; }
    std::span<const double> row(StateIndex from) const { return {p_.data() + from * n_, n_}; }
    bool communicating() const noexcept { return communicating_; }

    std::vector<std::vector<double>> rows() const {
        std::vector<std::vector<double>> out(n_);
        for (std::size_t i = 0; i < n_; ++i) out[i].assign(row(i).begin(), row(i).end());
        return out;
    }

    friend TransitionMatrix validate_chain(const std::vector<std::vector<double>>& rows);

private:
    std::size_t n_ = 0;
    std::vector<double> p_;
    bool communicating_ = false;
};

inline TransitionMatrix validate_chain(const std::vector<std::vector<double>>& rows) {
    const std::size_t n = rows.size();
    if (n < 2) throw Error(Errc::InvalidArgument, "chain needs at least 2 states");
    TransitionMatrix m;
    m.n_ = n;
    m.p_.resize(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        if (rows[i].size() != n)
            throw Error(Errc::InvalidArgument, "row " + std::to_string(i) + " has " +
                                                   std::to_string(rows[i].size()) +
                                                   " entries, expected " + std::to_string(n));
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double v = rows[i][j];
            if (!std::isfinite(v))
                throw Error(Errc::InvalidArgument, "row " + std::to_string(i) + " has a non-finite entry");
            if (v < 0.0)
                throw Error(Errc::NegativeEntry, "row " + std::to_string(i) + " column " +
                                                     std::to_string(j) + " is negative");
            sum += v;
        }
        if (std::abs(sum - 1.0) > kStochasticTolerance)
            throw Error(Errc::NonStochasticRow,
                        "row " + std::to_string(i) + " sums to " + std::to_string(sum));
        for (std::size_t j = 0; j < n; ++j) m.p_[i * n + j] = rows[i][j] / sum;
    }

    std::vector<std::vector<std::size_t>> adj(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (m.p_[i * n + j] > 0.0) adj[i].push_back(j);
    auto [comp, n_comp] = strongly_connected_components(
        n, [&](std::size_t v) { return std::span<const std::size_t>(adj[v]); });
    m.communicating_ = (n_comp == 1);
    return m;
}

inline void require_communicating(const TransitionMatrix& chain) {
    if (!chain.communicating())
        throw Error(Errc::NotCommunicating, "source chain has more than one communicating class");
}

/// Probability vector over source states.
class Belief {
public:
    Belief() = default;

    /// Validates non-negativity and unit mass (within 1e-9), then renormalizes.
    explicit Belief(std::vector<double> probs) : p_(std::move(probs)) {
        double sum = 0.0;
        for (double v : p_) {
            if (!(v >= 0.0)) throw Error(Errc::InvalidArgument, "belief entries must be non-negative");
            sum += v;
        }
        if (p_.empty() || std::abs(sum - 1.0) > kStochasticTolerance)
            throw Error(Errc::InvalidArgument, "belief must sum to 1");
        for (double& v : p_) v /= sum;
    }

    static Belief basis(std::size_t n, StateIndex i) {
        std::vector<double> p(n, 0.0);
        p.at(i) = 1.0;
        return from_normalized(std::move(p));
    }

    static Belief uniform(std::size_t n) { return from_normalized(std::vector<double>(n, 1.0 / n)); }

    /// Scales a non-negative vector with positive mass onto the simplex.
    static Belief normalize(std::vector<double> weights) {
        double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
        if (!(sum > 0.0)) throw Error(Errc::ZeroSilenceMass, "cannot normalize a zero vector");
        for (double& v : weights) v /= sum;
        return from_normalized(std::move(weights));
    }

    std::size_t size() const noexcept { return p_.size(); }
    double operator[](StateIndex i) const { return p_[i]; }
    std::span<const double> probs() const noexcept { return p_; }

    friend bool operator==(const Belief&, const Belief&) = default;

private:
    static Belief from_normalized(std::vector<double> p) {
        Belief b;
        b.p_ = std::move(p);
        return b;
    }

    std::vector<double> p_;
};

/// Per-state transmit flags; one action of the occupancy-state MDP.
class DecisionRule {
public:
    DecisionRule() = default;
    explicit DecisionRule(std::vector<bool> transmit) : transmit_(transmit.begin(), transmit.end()) {}

    static DecisionRule from_mask(std::uint32_t mask, std::size_t n) {
        DecisionRule r;
        r.transmit_.resize(n);
        for (std::size_t s = 0; s < n; ++s) r.transmit_[s] = (mask >> s) & 1u;
        return r;
    }
    static DecisionRule all_transmit(std::size_t n) { return from_mask((1u << n) - 1u, n); }
    static DecisionRule all_silent(std::size_t n) { return from_mask(0u, n); }

    /// Parses a bit string, character i being the flag of state i.
    static DecisionRule from_bits(const std::string& bits) {
        DecisionRule r;
        for (char c : bits) {
            if (c != '0' && c != '1') throw Error(Errc::ParseError, "bad rule bit string: " + bits);
            r.transmit_.push_back(c == '1');
        }
        return r;
    }

    std::size_t size() const noexcept { return transmit_.size(); }
    bool transmits(StateIndex s) const { return transmit_[s] != 0; }

    std::uint32_t mask() const {
        std::uint32_t m = 0;
        for (std::size_t s = 0; s < transmit_.size(); ++s)
            if (transmit_[s]) m |= (1u << s);
        return m;
    }

    std::string bits() const {
        std::string out;
        for (auto t : transmit_) out.push_back(t ? '1' : '0');
        return out;
    }

    friend bool operator==(const DecisionRule&, const DecisionRule&) = default;

private:
    std::vector<std::uint8_t> transmit_;
};

/// Index of the largest entry; entries within kTieTolerance of the maximum
/// are ties, resolved towards the lowest (default) or highest index.
inline StateIndex argmax_index(std::span<const double> v, TieBreak tie = TieBreak::Lowest) {
    const double best = *std::max_element(v.begin(), v.end());
    if (tie == TieBreak::Lowest) {
        for (std::size_t i = 0; i < v.size(); ++i)
            if (v[i] >= best - kTieTolerance) return i;
    } else {
        for (std::size_t i = v.size(); i-- > 0;)
            if (v[i] >= best - kTieTolerance) return i;
    }
    return 0;
}

inline StateIndex argmax_belief(const Belief& b, TieBreak tie = TieBreak::Lowest) {
    return argmax_index(b.probs(), tie);
}

/// One-step prediction P^T b.
inline Belief belief_predict(const TransitionMatrix& chain, const Belief& b) {
    const std::size_t n = chain.size();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double bi = b[i];
        if (bi == 0.0) continue;
        auto row = chain.row(i);
        for (std::size_t j = 0; j < n; ++j) out[j] += bi * row[j];
    }
    return Belief::normalize(std::move(out));
}

/// Mass of the states that stay silent under `rule`.
inline double silence_mass(const Belief& b, const DecisionRule& rule) {
    double mass = 0.0;
    for (std::size_t s = 0; s < b.size(); ++s)
        if (!rule.transmits(s)) mass += b[s];
    return mass;
}

/// Posterior after observing silence: normalize(b o (1 - rule)).
inline Belief belief_condition_on_silence(const Belief& b, const DecisionRule& rule) {
    if (rule.size() != b.size()) throw Error(Errc::InvalidArgument, "rule and belief sizes differ");
    std::vector<double> masked(b.size(), 0.0);
    double mass = 0.0;
    for (std::size_t s = 0; s < b.size(); ++s)
        if (!rule.transmits(s)) {
            masked[s] = b[s];
            mass += b[s];
        }
    if (!(mass > 0.0)) throw Error(Errc::ZeroSilenceMass, "silence has zero probability under this rule");
    return Belief::normalize(std::move(masked));
}

/// Inverse-CDF draw of the next state; consumes exactly one uniform.
inline StateIndex sample_next(const TransitionMatrix& chain, StateIndex s, RngStream& rng) {
    const double u = rng.uniform();
    auto row = chain.row(s);
    double cum = 0.0;
    StateIndex last_positive = 0;
    for (std::size_t j = 0; j < row.size(); ++j) {
        if (row[j] <= 0.0) continue;
        cum += row[j];
        last_positive = j;
        if (u < cum) return j;
    }
    return last_positive;
}

inline StateIndex sample_from(const Belief& b, RngStream& rng) {
    const double u = rng.uniform();
    double cum = 0.0;
    StateIndex last_positive = 0;
    for (std::size_t j = 0; j < b.size(); ++j) {
        if (b[j] <= 0.0) continue;
        cum += b[j];
        last_positive = j;
        if (u < cum) return j;
    }
    return last_positive;
}

inline SparseChain to_sparse(const TransitionMatrix& chain) {
    SparseChain sc;
    std::vector<Transition> row;
    for (std::size_t i = 0; i < chain.size(); ++i) {
        row.clear();
        for (std::size_t j = 0; j < chain.size(); ++j) row.push_back({j, chain(i, j)});
        sc.add_row(row);
    }
    return sc;
}

inline Belief stationary_distribution(const TransitionMatrix& chain) {
    require_communicating(chain);
    std::vector<std::size_t> all(chain.size());
    std::iota(all.begin(), all.end(), 0);
    return Belief::normalize(stationary_on_class(to_sparse(chain), all));
}

/// Period of a communicating chain (gcd of its cycle lengths).
inline std::size_t chain_period(const TransitionMatrix& chain) {
    require_communicating(chain);
    const std::size_t n = chain.size();
    constexpr std::size_t unset = static_cast<std::size_t>(-1);
    std::vector<std::size_t> level(n, unset);
    std::vector<std::size_t> queue{0};
    level[0] = 0;
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const std::size_t u = queue[head];
        for (std::size_t v = 0; v < n; ++v)
            if (chain(u, v) > 0.0 && level[v] == unset) {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
    }
    std::size_t d = 0;
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = 0; v < n; ++v)
            if (chain(u, v) > 0.0) {
                const auto diff = static_cast<long long>(level[u] + 1) - static_cast<long long>(level[v]);
                d = std::gcd(d, static_cast<std::size_t>(diff < 0 ? -diff : diff));
            }
    return d == 0 ? 1 : d;
}

} // namespace remest
