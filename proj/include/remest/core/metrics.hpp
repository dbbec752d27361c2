#pragma once

#include <cmath>
#include <limits>

namespace remest {

/// Long-run performance of a transmission/estimation pair. Exact evaluators
/// leave the stderr fields at zero.
struct Metrics {
    double avg_reward = 0.0;
    double utilization = 0.0;
    double reconstruction = 0.0;
    double lambda = std::numeric_limits<double>::quiet_NaN();
    double stderr_util = 0.0;
    double stderr_rec = 0.0;

    static Metrics exact(double reconstruction, double utilization, double lambda) {
        Metrics m;
        m.reconstruction = reconstruction;
        m.utilization = utilization;
        m.lambda = lambda;
        m.avg_reward = reconstruction - (std::isnan(lambda) ? 0.0 : lambda) * utilization;
        return m;
    }
};

} // namespace remest
