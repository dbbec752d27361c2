// Solves every algorithm on a small chain and prints its exact operating
// point, then checks one of them by simulation.

#include <remest/remest.hpp>

#include <cstdio>

using namespace remest;

int main() {
    const auto chain = validate_chain({{0.8, 0.15, 0.05}, {0.1, 0.7, 0.2}, {0.25, 0.25, 0.5}});
    const double lambda = 0.4;

    const auto alt = alternate(chain, {.lambda = lambda});
    std::printf("alternating  lambda=%.2f  utilization=%.4f  reconstruction=%.4f  rounds=%zu\n", lambda,
                alt.metrics.utilization, alt.metrics.reconstruction, alt.trace.size());

    OccupancyOptions oo;
    oo.lambda = lambda;
    oo.q = 1e-3;
    const std::vector<SensorPolicy> seeds{alt.sensor};
    const auto occ = solve_occupancy_lazy(chain, oo, seeds);
    std::printf("occupancy    lambda=%.2f  utilization=%.4f  reconstruction=%.4f  nodes=%zu\n", lambda,
                occ.metrics.utilization, occ.metrics.reconstruction, occ.nodes);

    const auto h = heuristic_rate_exact(chain);
    std::printf("heuristic    utilization=%.4f  reconstruction=%.4f\n", h.utilization, h.reconstruction);
    const auto ni = heuristic_no_implicit_exact(chain);
    std::printf("no-implicit  utilization=%.4f  reconstruction=%.4f\n", ni.utilization, ni.reconstruction);
    for (std::size_t u : {2, 4}) {
        const auto m = baseline_exact(chain, BaselineSpec::uniform(u));
        std::printf("uniform(%zu)   utilization=%.4f  reconstruction=%.4f\n", u, m.utilization, m.reconstruction);
    }

    AlternatingPolicy policy(alt);
    SimulationOptions so;
    so.steps = 200000;
    so.lambda = lambda;
    const auto sim = simulate(chain, policy, so);
    std::printf("alternating simulated: utilization=%.4f (+-%.4f)  reconstruction=%.4f (+-%.4f)\n",
                sim.utilization, sim.stderr_util, sim.reconstruction, sim.stderr_rec);
    return 0;
}
