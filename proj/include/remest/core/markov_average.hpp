#pragma once

#include "remest/core/error.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

namespace remest {

struct Transition {
    std::size_t to;
    double prob;
};

/// Finite Markov chain in compressed-row form. Rows are appended in state
/// order; each row must be a probability distribution.
class SparseChain {
public:
    SparseChain() { row_begin_.push_back(0); }

    void add_row(std::span<const Transition> row) {
        for (const auto& t : row) {
            if (t.prob > 0.0) {
                targets_.push_back(t.to);
                probs_.push_back(t.prob);
            }
        }
        row_begin_.push_back(targets_.size());
    }

    std::size_t size() const noexcept { return row_begin_.size() - 1; }

    std::span<const std::size_t> targets(std::size_t i) const {
        return {targets_.data() + row_begin_[i], row_begin_[i + 1] - row_begin_[i]};
    }
    std::span<const double> probs(std::size_t i) const {
        return {probs_.data() + row_begin_[i], row_begin_[i + 1] - row_begin_[i]};
    }

private:
    std::vector<std::size_t> row_begin_;
    std::vector<std::size_t> targets_;
    std::vector<double> probs_;
};

/// Strongly connected components of a directed graph given as adjacency
/// lists. Iterative Tarjan; returns (component id per vertex, component count).
template <class Successors>
std::pair<std::vector<std::size_t>, std::size_t> strongly_connected_components(std::size_t n,
                                                                               Successors&& succ) {
    constexpr std::size_t unvisited = static_cast<std::size_t>(-1);
    std::vector<std::size_t> index(n, unvisited), low(n, 0), comp(n, unvisited);
    std::vector<char> on_stack(n, 0);
    std::vector<std::size_t> stack;
    std::size_t next_index = 0, n_comp = 0;

    struct Frame {
        std::size_t v;
        std::size_t edge;
    };
    std::vector<Frame> call;

    for (std::size_t root = 0; root < n; ++root) {
        if (index[root] != unvisited) continue;
        call.push_back({root, 0});
        index[root] = low[root] = next_index++;
        stack.push_back(root);
        on_stack[root] = 1;
        while (!call.empty()) {
            auto& f = call.back();
            auto edges = succ(f.v);
            if (f.edge < edges.size()) {
                std::size_t w = edges[f.edge++];
                if (index[w] == unvisited) {
                    index[w] = low[w] = next_index++;
                    stack.push_back(w);
                    on_stack[w] = 1;
                    call.push_back({w, 0});
                } else if (on_stack[w]) {
                    low[f.v] = std::min(low[f.v], index[w]);
                }
                continue;
            }
            std::size_t v = f.v;
            call.pop_back();
            if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
            if (low[v] == index[v]) {
                std::size_t w;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack[w] = 0;
                    comp[w] = n_comp;
                } while (w != v);
                ++n_comp;
            }
        }
    }
    return {std::move(comp), n_comp};
}

namespace detail {

inline std::vector<double> solve_sparse(Eigen::SparseMatrix<double>& a, const Eigen::VectorXd& rhs) {
    a.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success)
        throw Error(Errc::NoConvergence, "sparse LU factorization failed");
    Eigen::VectorXd x = lu.solve(rhs);
    if (lu.info() != Eigen::Success) throw Error(Errc::NoConvergence, "sparse LU solve failed");
    return {x.data(), x.data() + x.size()};
}

} // namespace detail

/// Stationary distribution of the chain restricted to a closed class.
/// `members` lists the class states; the result is indexed like `members`.
inline std::vector<double> stationary_on_class(const SparseChain& chain,
                                               std::span<const std::size_t> members) {
    const std::size_t m = members.size();
    if (m == 1) return {1.0};
    std::vector<std::size_t> local(chain.size(), static_cast<std::size_t>(-1));
    for (std::size_t k = 0; k < m; ++k) local[members[k]] = k;

    // Solve (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1.
    std::vector<Eigen::Triplet<double>> trip;
    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t i = members[k];
        auto to = chain.targets(i);
        auto pr = chain.probs(i);
        for (std::size_t e = 0; e < to.size(); ++e) {
            const std::size_t j = local[to[e]];
            if (j + 1 != m) trip.emplace_back(static_cast<int>(j), static_cast<int>(k), pr[e]);
        }
        if (k + 1 != m) trip.emplace_back(static_cast<int>(k), static_cast<int>(k), -1.0);
        trip.emplace_back(static_cast<int>(m - 1), static_cast<int>(k), 1.0);
    }
    Eigen::SparseMatrix<double> a(static_cast<int>(m), static_cast<int>(m));
    a.setFromTriplets(trip.begin(), trip.end());
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<int>(m));
    rhs(static_cast<int>(m - 1)) = 1.0;
    auto pi = detail::solve_sparse(a, rhs);
    double total = 0.0;
    for (auto& v : pi) {
        v = std::max(v, 0.0);
        total += v;
    }
    for (auto& v : pi) v /= total;
    return pi;
}

/// Long-run (Cesaro) state occupation of a finite chain started from
/// `initial`. Handles any number of closed classes: each class contributes
/// its stationary distribution weighted by the absorption probability.
inline std::vector<double> long_run_occupation(const SparseChain& chain,
                                               std::span<const double> initial) {
    const std::size_t n = chain.size();
    if (initial.size() != n) throw Error(Errc::InvalidArgument, "initial distribution size mismatch");

    auto [comp, n_comp] =
        strongly_connected_components(n, [&](std::size_t v) { return chain.targets(v); });

    std::vector<char> closed(n_comp, 1);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j : chain.targets(i))
            if (comp[j] != comp[i]) closed[comp[i]] = 0;

    std::vector<std::vector<std::size_t>> members(n_comp);
    for (std::size_t i = 0; i < n; ++i)
        if (closed[comp[i]]) members[comp[i]].push_back(i);

    // Absorption mass of each closed class.
    std::vector<double> absorb(n_comp, 0.0);
    std::vector<std::size_t> transient;
    for (std::size_t i = 0; i < n; ++i) {
        if (closed[comp[i]])
            absorb[comp[i]] += initial[i];
        else
            transient.push_back(i);
    }
    double transient_mass = 0.0;
    for (std::size_t t : transient) transient_mass += initial[t];

    std::size_t n_closed = 0, last_closed = 0;
    for (std::size_t c = 0; c < n_comp; ++c)
        if (closed[c]) {
            ++n_closed;
            last_closed = c;
        }

    if (n_closed == 1) {
        absorb.assign(n_comp, 0.0);
        absorb[last_closed] = 1.0;
    } else if (transient_mass > 0.0) {
        // Expected visits y to transient states: (I - Q)^T y = initial_T.
        const std::size_t m = transient.size();
        std::vector<std::size_t> local(n, static_cast<std::size_t>(-1));
        for (std::size_t k = 0; k < m; ++k) local[transient[k]] = k;
        std::vector<Eigen::Triplet<double>> trip;
        Eigen::VectorXd rhs(static_cast<int>(m));
        for (std::size_t k = 0; k < m; ++k) {
            const std::size_t i = transient[k];
            rhs(static_cast<int>(k)) = initial[i];
            trip.emplace_back(static_cast<int>(k), static_cast<int>(k), 1.0);
            auto to = chain.targets(i);
            auto pr = chain.probs(i);
            for (std::size_t e = 0; e < to.size(); ++e) {
                const std::size_t l = local[to[e]];
                if (l != static_cast<std::size_t>(-1))
                    trip.emplace_back(static_cast<int>(l), static_cast<int>(k), -pr[e]);
            }
        }
        Eigen::SparseMatrix<double> a(static_cast<int>(m), static_cast<int>(m));
        a.setFromTriplets(trip.begin(), trip.end());
        auto visits = detail::solve_sparse(a, rhs);
        for (std::size_t k = 0; k < m; ++k) {
            const std::size_t i = transient[k];
            auto to = chain.targets(i);
            auto pr = chain.probs(i);
            for (std::size_t e = 0; e < to.size(); ++e)
                if (closed[comp[to[e]]]) absorb[comp[to[e]]] += visits[k] * pr[e];
        }
    }

    std::vector<double> occupation(n, 0.0);
    for (std::size_t c = 0; c < n_comp; ++c) {
        if (!closed[c] || absorb[c] <= 0.0) continue;
        auto pi = stationary_on_class(chain, members[c]);
        for (std::size_t k = 0; k < members[c].size(); ++k)
            occupation[members[c][k]] += absorb[c] * pi[k];
    }
    double total = std::accumulate(occupation.begin(), occupation.end(), 0.0);
    for (auto& v : occupation) v /= total;
    return occupation;
}

inline double weighted_sum(std::span<const double> weights, std::span<const double> values) {
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) acc += weights[i] * values[i];
    return acc;
}

} // namespace remest
