#pragma once

#include "remest/core/chain.hpp"
#include "remest/core/rng.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace remest {

/// Dense random chain: entries are cubed uniforms, rows normalized. Cubing
/// skews rows towards a few likely successors so the estimation problem is
/// not trivial. All entries are positive, hence communicating and aperiodic.
inline TransitionMatrix random_chain(std::size_t n_states, std::uint64_t seed) {
    RngStream rng(seed, 0xc4a1);
    std::vector<std::vector<double>> rows(n_states, std::vector<double>(n_states));
    for (auto& r : rows) {
        double sum = 0.0;
        for (auto& v : r) {
            const double u = 0.02 + 0.98 * rng.uniform();
            v = u * u * u;
            sum += v;
        }
        for (auto& v : r) v /= sum;
    }
    return validate_chain(rows);
}

struct NamedChain {
    std::string name;
    TransitionMatrix chain;
};

/// The desk-scale evaluation suite.
inline std::vector<NamedChain> bundled_chains() {
    std::vector<NamedChain> out;
    out.push_back({"sym2", validate_chain({{0.9, 0.1}, {0.1, 0.9}})});
    out.push_back({"cycle2", validate_chain({{0.0, 1.0}, {1.0, 0.0}})});
    const double third = 1.0 / 3.0;
    out.push_back({"uniform3", validate_chain({{third, third, third}, {third, third, third}, {third, third, third}})});
    for (std::uint64_t seed : {1u, 2u, 3u})
        out.push_back({"random4_" + std::to_string(seed), random_chain(4, seed)});
    return out;
}

/// Seeded 3-5 state chains used by the property and acceptance suites.
inline std::vector<TransitionMatrix> random_suite(std::size_t count, std::uint64_t seed) {
    RngStream rng(seed, 0x5717e);
    std::vector<TransitionMatrix> out;
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t n = 3 + rng.next_u64() % 3;
        out.push_back(random_chain(n, rng.next_u64()));
    }
    return out;
}

} // namespace remest
