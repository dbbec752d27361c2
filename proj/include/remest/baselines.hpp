#pragma once

// Comparison policies that ignore implicit information: periodic and i.i.d.
// random transmission, both paired with the blind monitor that estimates
// argmax (P^n)^T e_{s_m} after n silent steps.

#include "remest/core/blind_predictor.hpp"
#include "remest/core/chain.hpp"
#include "remest/core/markov_average.hpp"
#include "remest/core/metrics.hpp"
#include "remest/core/step.hpp"
#include "remest/heuristic.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace remest {

struct BaselineSpec {
    enum class Kind { Uniform, Randomized };
    Kind kind = Kind::Uniform;
    std::size_t u = 1;
    double p_tx = 1.0;

    static BaselineSpec uniform(std::size_t u) {
        if (u < 1) throw Error(Errc::InvalidArgument, "uniform period must be at least 1");
        return {Kind::Uniform, u, 0.0};
    }
    static BaselineSpec randomized(double p) {
        if (!(p >= 0.0 && p <= 1.0)) throw Error(Errc::InvalidArgument, "p_tx must lie in [0, 1]");
        return {Kind::Randomized, 0, p};
    }

    std::string name() const { return kind == Kind::Uniform ? "uniform" : "randomized"; }
};

struct BaselineStep {
    bool transmit;
    StateIndex estimate;
    StateIndex s_m;
    std::size_t n;
};

/// One step from monitor state (s_m, n), n counting silent steps since the
/// last transmission. Randomized always consumes exactly one draw.
inline BaselineStep baseline_step(BlindPredictor& blind, const BaselineSpec& spec, StateIndex s_m, std::size_t n,
                                  StateIndex s, RngStream& rng) {
    bool transmit;
    if (spec.kind == BaselineSpec::Kind::Uniform)
        transmit = n + 1 >= spec.u;
    else
        transmit = rng.uniform() < spec.p_tx;
    if (transmit) return {true, s, s, 0};
    return {false, blind.estimate(s_m, n + 1), s_m, n + 1};
}

/// Exact long-run metrics. Neither baseline looks at the source state when
/// deciding to transmit, so the state process stays stationary and the mass
/// at lag n with last-received state a is the vector y_n^a over the current
/// state: y_0^a = pi_a P(a, .), y_{n+1}^a = (1 - p_n) P^T y_n^a. Uniform lags
/// stop at u - 1. Randomized lags beyond `lag_cap` fold back by the chain
/// period d, which closes a cycle solved by one dense S x S system (or, at
/// p = 0, by the Cesaro limit of the d-step chain). Utilization is exactly p.
inline Metrics baseline_exact(const TransitionMatrix& chain, const BaselineSpec& spec, std::size_t lag_cap = 0,
                              double lambda = std::numeric_limits<double>::quiet_NaN()) {
    require_communicating(chain);
    const std::size_t S = chain.size();
    const int Si = static_cast<int>(S);
    const bool uniform = spec.kind == BaselineSpec::Kind::Uniform;
    BlindPredictor blind(chain, uniform ? 0 : (lag_cap ? lag_cap : default_lag_cap(S)));
    const std::size_t L = uniform ? spec.u - 1 : blind.lag_cap();
    const std::size_t d = blind.period();
    const std::size_t cycle = uniform ? L + 1 : L - d + 1;
    auto p_at = [&](std::size_t n) { return uniform ? (n + 1 >= spec.u ? 1.0 : 0.0) : spec.p_tx; };

    Eigen::MatrixXd Pt(Si, Si);
    for (std::size_t i = 0; i < S; ++i)
        for (std::size_t j = 0; j < S; ++j) Pt(static_cast<int>(j), static_cast<int>(i)) = chain(i, j);
    const Belief pi = stationary_distribution(chain);

    double mass = 0.0, rec = 0.0, util = 0.0;
    auto account = [&](StateIndex a, std::size_t n, const Eigen::VectorXd& y) {
        const double w = y.sum(), p = p_at(n);
        mass += w;
        util += w * p;
        rec += w * p + (1.0 - p) * y(static_cast<int>(blind.estimate(a, n + 1)));
    };

    for (StateIndex a = 0; a < S; ++a) {
        Eigen::VectorXd y(Si);
        for (std::size_t j = 0; j < S; ++j) y(static_cast<int>(j)) = pi[a] * chain(a, j);
        if (uniform || spec.p_tx > 0.0) {
            for (std::size_t n = 0; n < cycle; ++n) {
                account(a, n, y);
                y = (1.0 - p_at(n)) * (Pt * y);
            }
            if (uniform) continue;
            const Eigen::MatrixXd step = (1.0 - spec.p_tx) * Pt;
            Eigen::MatrixXd loop = Eigen::MatrixXd::Identity(Si, Si);
            for (std::size_t k = 0; k < d; ++k) loop = step * loop;
            y = (Eigen::MatrixXd::Identity(Si, Si) - loop).partialPivLu().solve(y);
            for (std::size_t j = 0; j < d; ++j) {
                account(a, cycle + j, y);
                y = step * y;
            }
        } else {
            // No transmissions: lags never reset, so take the Cesaro limit of
            // the d-step chain from the distribution at the cycle entry.
            for (std::size_t n = 0; n < cycle; ++n) y = Pt * y;
            Eigen::MatrixXd Pd = Eigen::MatrixXd::Identity(Si, Si);
            for (std::size_t k = 0; k < d; ++k) Pd = Pt * Pd;
            SparseChain dstep;
            std::vector<Transition> row;
            for (std::size_t i = 0; i < S; ++i) {
                row.clear();
                for (std::size_t j = 0; j < S; ++j) row.push_back({j, Pd(static_cast<int>(j), static_cast<int>(i))});
                dstep.add_row(row);
            }
            if (pi[a] <= 0.0) continue;
            std::vector<double> init(y.data(), y.data() + S);
            for (auto& v : init) v /= pi[a];
            const auto lim = long_run_occupation(dstep, init);
            for (std::size_t j = 0; j < S; ++j) y(static_cast<int>(j)) = pi[a] * lim[j];
            for (std::size_t j = 0; j < d; ++j) {
                account(a, cycle + j, y);
                y = Pt * y;
            }
        }
    }
    return Metrics::exact(rec / mass, util / mass, lambda);
}

/// Step-by-step runner; the first step is a forced transmission.
class BaselinePolicy {
public:
    BaselinePolicy(const TransitionMatrix& chain, BaselineSpec spec, std::size_t lag_cap = 0)
        : spec_(spec),
          blind_(chain, spec.kind == BaselineSpec::Kind::Uniform ? 0
                                                                 : (lag_cap ? lag_cap : default_lag_cap(chain.size()))) {}

    void reset() { started_ = false; }

    StepOutcome step(StateIndex s, RngStream& rng) {
        if (!started_) {
            started_ = true;
            s_m_ = s;
            n_ = 0;
            return {true, s};
        }
        const auto out = baseline_step(blind_, spec_, s_m_, n_, s, rng);
        s_m_ = out.s_m;
        n_ = blind_.fold(out.n);
        return {out.transmit, out.estimate};
    }

private:
    BaselineSpec spec_;
    BlindPredictor blind_;
    bool started_ = false;
    StateIndex s_m_ = 0;
    std::size_t n_ = 0;
};

} // namespace remest
