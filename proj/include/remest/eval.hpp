#pragma once

// Monte-Carlo simulation of step policies, lambda sweeps over the solvers,
// time-sharing hulls and the trade-off CSV.

#include "remest/alternating.hpp"
#include "remest/baselines.hpp"
#include "remest/core/chain.hpp"
#include "remest/core/error.hpp"
#include "remest/core/metrics.hpp"
#include "remest/core/rng.hpp"
#include "remest/core/step.hpp"
#include "remest/heuristic.hpp"
#include "remest/occupancy.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <ostream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace remest {

// ---------------------------------------------------------------- simulation

struct SimulationOptions {
    std::size_t steps = 1000000;
    /// Discarded leading steps; npos selects steps / 10.
    std::size_t burn_in = static_cast<std::size_t>(-1);
    std::uint64_t seed = 1;
    /// Replication index; selects independent streams under the same seed.
    std::uint64_t run = 0;
    double lambda = std::numeric_limits<double>::quiet_NaN();
    std::size_t batches = 20;
};

/// Runs `policy` against a stationary source for `steps` steps and averages
/// the steps after burn-in. Standard errors come from batch means. The source
/// and the policy draw from separate streams.
template <StepPolicy P>
Metrics simulate(const TransitionMatrix& chain, P& policy, const SimulationOptions& opt) {
    const std::size_t burn = opt.burn_in == static_cast<std::size_t>(-1) ? opt.steps / 10 : opt.burn_in;
    if (opt.steps == 0 || burn >= opt.steps) throw Error(Errc::InvalidArgument, "simulation needs steps > burn_in");
    if (opt.steps < 10 * burn) throw Error(Errc::InvalidArgument, "simulation needs steps >= 10 * burn_in");
    RngStream src(opt.seed, 2 * opt.run + 1), aux(opt.seed, 2 * opt.run + 2);
    policy.reset();
    StateIndex s = sample_from(stationary_distribution(chain), src);
    for (std::size_t t = 0; t < burn; ++t) {
        policy.step(s, aux);
        s = sample_next(chain, s, src);
    }
    const std::size_t measured = opt.steps - burn;
    const std::size_t B = std::max<std::size_t>(1, std::min(opt.batches, measured));
    const std::size_t per = measured / B;
    std::vector<double> bu(B, 0.0), br(B, 0.0);
    std::size_t tx = 0, hits = 0;
    for (std::size_t t = 0; t < measured; ++t) {
        const StepOutcome out = policy.step(s, aux);
        const std::size_t b = std::min(t / per, B - 1);
        tx += out.transmit;
        hits += out.estimate == s;
        bu[b] += out.transmit;
        br[b] += out.estimate == s;
        s = sample_next(chain, s, src);
    }
    Metrics m = Metrics::exact(double(hits) / measured, double(tx) / measured, opt.lambda);
    if (B > 1) {
        auto stderr_of = [&](std::vector<double>& sums) {
            double mean = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                sums[b] /= double(b + 1 == B ? measured - per * (B - 1) : per);
                mean += sums[b];
            }
            mean /= B;
            double var = 0.0;
            for (double v : sums) var += (v - mean) * (v - mean);
            return std::sqrt(var / (B - 1) / B);
        };
        m.stderr_util = stderr_of(bu);
        m.stderr_rec = stderr_of(br);
    }
    return m;
}

struct ReplicatedMetrics {
    /// Mean over runs; stderr fields are the standard error of that mean.
    Metrics pooled;
    std::vector<Metrics> runs;
};

/// Independent replications with run indices 0..runs-1. `make` builds a
/// fresh policy per run.
template <class Make>
ReplicatedMetrics simulate_replicated(const TransitionMatrix& chain, Make&& make, SimulationOptions opt,
                                      std::size_t runs) {
    if (runs == 0) throw Error(Errc::InvalidArgument, "need at least one run");
    ReplicatedMetrics out;
    double su = 0.0, sr = 0.0;
    for (std::size_t r = 0; r < runs; ++r) {
        opt.run = r;
        auto policy = make();
        out.runs.push_back(simulate(chain, policy, opt));
        su += out.runs.back().utilization;
        sr += out.runs.back().reconstruction;
    }
    out.pooled = Metrics::exact(sr / runs, su / runs, opt.lambda);
    if (runs > 1) {
        double vu = 0.0, vr = 0.0;
        for (const auto& m : out.runs) {
            vu += (m.utilization - out.pooled.utilization) * (m.utilization - out.pooled.utilization);
            vr += (m.reconstruction - out.pooled.reconstruction) * (m.reconstruction - out.pooled.reconstruction);
        }
        out.pooled.stderr_util = std::sqrt(vu / (runs - 1) / runs);
        out.pooled.stderr_rec = std::sqrt(vr / (runs - 1) / runs);
    }
    return out;
}

/// Transmits every step.
struct AlwaysTransmitPolicy {
    void reset() {}
    StepOutcome step(StateIndex s, RngStream&) { return {true, s}; }
};

// ------------------------------------------------------------------- sweeps

enum class Algorithm { Occupancy, Heuristic, Alternating, Uniform, HeuristicNoImplicit, Randomized };

inline constexpr std::array<Algorithm, 6> kAllAlgorithms{Algorithm::Occupancy,   Algorithm::Heuristic,
                                                         Algorithm::Alternating, Algorithm::Uniform,
                                                         Algorithm::HeuristicNoImplicit, Algorithm::Randomized};

inline std::string_view algorithm_name(Algorithm a) {
    switch (a) {
    case Algorithm::Occupancy: return "occupancy";
    case Algorithm::Heuristic: return "heuristic";
    case Algorithm::Alternating: return "alternating";
    case Algorithm::Uniform: return "uniform";
    case Algorithm::HeuristicNoImplicit: return "heuristic-no-implicit";
    case Algorithm::Randomized: return "randomized";
    }
    return "?";
}

inline Algorithm parse_algorithm(std::string_view name) {
    for (Algorithm a : kAllAlgorithms)
        if (algorithm_name(a) == name) return a;
    throw Error(Errc::InvalidArgument, "unknown algorithm '" + std::string(name) + "'");
}

struct TradeoffPoint {
    std::string algorithm;
    /// NaN for algorithms without a cost parameter; +inf for the
    /// never-transmit anchor.
    double lambda = std::numeric_limits<double>::quiet_NaN();
    double utilization = 0.0;
    double reconstruction = 0.0;
    double avg_reward = 0.0;
    double stderr_util = 0.0;
    double stderr_rec = 0.0;

    static TradeoffPoint from(std::string_view alg, double lambda, const Metrics& m) {
        return {std::string(alg), lambda, m.utilization, m.reconstruction, m.avg_reward, m.stderr_util, m.stderr_rec};
    }
};

/// 0 followed by 21 geometric values from 1e-3 to 2.
inline std::vector<double> default_lambda_grid() {
    std::vector<double> g{0.0};
    for (int k = 0; k <= 20; ++k) g.push_back(1e-3 * std::pow(2000.0, k / 20.0));
    return g;
}

/// 0, 0.05, ..., 1.
inline std::vector<double> default_p_grid() {
    std::vector<double> g;
    for (int k = 0; k <= 20; ++k) g.push_back(k / 20.0);
    return g;
}

struct SweepConfig {
    std::vector<double> lambdas = default_lambda_grid();
    /// Alternating truncation and the largest uniform period; 0 selects 4 * |S|.
    std::size_t n_max = 0;
    double q = 1e-4;
    std::vector<double> p_grid = default_p_grid();
    /// Blind-monitor lag cap; 0 selects 20 * |S|.
    std::size_t lag_cap = 0;
    /// Remaining occupancy solver settings; lambda and q are overwritten.
    OccupancyOptions occupancy;
    /// Expand the nodes the alternating sensor visits at the same lambda.
    bool seed_occupancy = true;
    /// Worker threads; 0 selects the hardware concurrency.
    std::size_t threads = 0;
    /// Extra occupancy solves spent at the slopes of hull segments (0 disables).
    std::size_t refine_budget = 24;
    /// Smallest gain above a hull chord that counts as a new hull point;
    /// 0 selects q, below which gains are quantization noise.
    double refine_tol = 0.0;
};

namespace detail {

/// Runs fn(0..n-1) on a small worker pool; rethrows the first failure.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex mu;
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next++) < n;) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!failure) failure = std::current_exception();
                    next = n;
                }
            }
        });
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

inline bool point_less(const TradeoffPoint& a, const TradeoffPoint& b) {
    if (a.utilization != b.utilization) return a.utilization < b.utilization;
    if (a.reconstruction != b.reconstruction) return a.reconstruction > b.reconstruction;
    return a.lambda < b.lambda;
}

/// Sorts by utilization and drops points whose coordinates repeat.
inline std::vector<TradeoffPoint> sort_unique(std::vector<TradeoffPoint> pts) {
    std::stable_sort(pts.begin(), pts.end(), point_less);
    std::vector<TradeoffPoint> out;
    for (auto& p : pts)
        if (out.empty() || out.back().utilization != p.utilization || out.back().reconstruction != p.reconstruction)
            out.push_back(std::move(p));
    return out;
}

} // namespace detail

/// Never-transmit limit: the blind monitor's long-run accuracy at zero
/// utilization, tagged lambda = +inf.
inline TradeoffPoint never_transmit_point(const TransitionMatrix& chain, Algorithm alg, std::size_t lag_cap = 0) {
    const Metrics m = baseline_exact(chain, BaselineSpec::randomized(0.0), lag_cap);
    TradeoffPoint p = TradeoffPoint::from(algorithm_name(alg), std::numeric_limits<double>::infinity(), m);
    p.avg_reward = m.reconstruction;
    return p;
}

inline std::vector<TradeoffPoint> time_sharing_hull(std::vector<TradeoffPoint> points);

/// Solves the alternating or occupancy problem per lambda and returns exact
/// points sorted by utilization, repeated lambdas and repeated points removed,
/// plus the never-transmit anchor. At lambda = 0 every perfect-reconstruction
/// policy is optimal; the always-transmit point (1, 1) is reported.
///
/// For occupancy the grid is then refined: each hull segment's slope is a
/// lambda at which both endpoints tie, and solving there either confirms the
/// segment or finds a point above it. Rounds repeat until no segment moves or
/// the budget is spent.
inline std::vector<TradeoffPoint> sweep_lambda(const TransitionMatrix& chain, Algorithm alg,
                                               std::vector<double> lambdas, const SweepConfig& cfg = {}) {
    if (alg != Algorithm::Alternating && alg != Algorithm::Occupancy)
        throw Error(Errc::InvalidArgument, "sweep_lambda supports alternating and occupancy only");
    require_communicating(chain);
    for (double l : lambdas)
        if (!(l >= 0.0) || !std::isfinite(l)) throw Error(Errc::InvalidArgument, "lambda values must be finite and >= 0");
    std::sort(lambdas.begin(), lambdas.end());
    lambdas.erase(std::unique(lambdas.begin(), lambdas.end()), lambdas.end());

    const std::string_view name = algorithm_name(alg);
    auto solve_at = [&](double lambda) {
        if (lambda == 0.0) return TradeoffPoint::from(name, 0.0, Metrics::exact(1.0, 1.0, 0.0));
        AlternatingOptions ao;
        ao.lambda = lambda;
        ao.n_max = cfg.n_max;
        if (alg == Algorithm::Alternating) return TradeoffPoint::from(name, lambda, alternate(chain, ao).metrics);
        OccupancyOptions oo = cfg.occupancy;
        oo.lambda = lambda;
        oo.q = cfg.q;
        std::vector<SensorPolicy> seeds;
        if (cfg.seed_occupancy) seeds.push_back(alternate(chain, ao).sensor);
        return TradeoffPoint::from(name, lambda, solve_occupancy_lazy(chain, oo, seeds).metrics);
    };

    std::vector<TradeoffPoint> pts(lambdas.size());
    detail::parallel_for(lambdas.size(), cfg.threads, [&](std::size_t i) { pts[i] = solve_at(lambdas[i]); });
    pts.push_back(never_transmit_point(chain, alg, cfg.lag_cap));

    std::size_t budget = alg == Algorithm::Occupancy ? cfg.refine_budget : 0;
    auto tried = [&](double l) {
        return std::any_of(lambdas.begin(), lambdas.end(),
                           [&](double x) { return std::abs(x - l) <= 1e-12 * std::max(1.0, l); });
    };
    const double refine_tol = cfg.refine_tol > 0.0 ? cfg.refine_tol : cfg.q;
    while (budget > 0) {
        const auto hull = time_sharing_hull(pts);
        std::vector<double> next;
        std::vector<double> chord; // chord value at the new lambda: r_a - lambda * u_a
        for (std::size_t k = 1; k < hull.size() && next.size() < budget; ++k) {
            const auto &a = hull[k - 1], &b = hull[k];
            const double l = (b.reconstruction - a.reconstruction) / (b.utilization - a.utilization);
            if (!(l > 0.0) || !std::isfinite(l) || tried(l)) continue;
            next.push_back(l);
            chord.push_back(a.reconstruction - l * a.utilization);
        }
        if (next.empty()) break;
        budget -= next.size();
        lambdas.insert(lambdas.end(), next.begin(), next.end());
        std::vector<TradeoffPoint> found(next.size());
        detail::parallel_for(next.size(), cfg.threads, [&](std::size_t i) { found[i] = solve_at(next[i]); });
        bool moved = false;
        for (std::size_t i = 0; i < found.size(); ++i) {
            moved = moved || found[i].avg_reward > chord[i] + refine_tol;
            pts.push_back(found[i]);
        }
        if (!moved) break;
    }
    return detail::sort_unique(std::move(pts));
}

/// Exact trade-off points of one algorithm, anchor included. Uniform runs
/// u = 1..n_max, randomized runs the p grid, the heuristics give one point.
inline std::vector<TradeoffPoint> algorithm_points(const TransitionMatrix& chain, Algorithm alg,
                                                   const SweepConfig& cfg = {}) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const std::string_view name = algorithm_name(alg);
    const std::size_t n_max = cfg.n_max ? cfg.n_max : default_n_max(chain.size());
    std::vector<TradeoffPoint> pts;
    switch (alg) {
    case Algorithm::Occupancy:
    case Algorithm::Alternating:
        return sweep_lambda(chain, alg, cfg.lambdas, cfg);
    case Algorithm::Heuristic:
        pts.push_back(TradeoffPoint::from(name, nan, heuristic_rate_exact(chain)));
        break;
    case Algorithm::HeuristicNoImplicit:
        pts.push_back(TradeoffPoint::from(name, nan, heuristic_no_implicit_exact(chain, cfg.lag_cap)));
        break;
    case Algorithm::Uniform:
        for (std::size_t u = 1; u <= n_max; ++u)
            pts.push_back(TradeoffPoint::from(name, nan, baseline_exact(chain, BaselineSpec::uniform(u))));
        break;
    case Algorithm::Randomized:
        for (double p : cfg.p_grid)
            pts.push_back(
                TradeoffPoint::from(name, nan, baseline_exact(chain, BaselineSpec::randomized(p), cfg.lag_cap)));
        break;
    }
    pts.push_back(never_transmit_point(chain, alg, cfg.lag_cap));
    return detail::sort_unique(std::move(pts));
}

/// Points of several algorithms, grouped in the order given.
inline std::vector<TradeoffPoint> sweep_all(const TransitionMatrix& chain, const SweepConfig& cfg = {},
                                            std::span<const Algorithm> algs = kAllAlgorithms) {
    std::vector<TradeoffPoint> out;
    for (Algorithm a : algs) {
        auto pts = algorithm_points(chain, a, cfg);
        out.insert(out.end(), pts.begin(), pts.end());
    }
    return out;
}

// -------------------------------------------------------------------- hulls

/// Upper concave envelope of the points in (utilization, reconstruction).
/// Points on a segment between two hull vertices are dropped.
inline std::vector<TradeoffPoint> time_sharing_hull(std::vector<TradeoffPoint> points) {
    if (points.empty()) throw Error(Errc::InvalidArgument, "hull needs at least one point");
    std::stable_sort(points.begin(), points.end(), detail::point_less);
    std::vector<TradeoffPoint> hull;
    for (auto& p : points) {
        if (!hull.empty() && hull.back().utilization == p.utilization) continue; // lower duplicate
        while (hull.size() >= 2) {
            const auto& o = hull[hull.size() - 2];
            const auto& a = hull.back();
            const double cross = (a.utilization - o.utilization) * (p.reconstruction - o.reconstruction) -
                                 (a.reconstruction - o.reconstruction) * (p.utilization - o.utilization);
            if (cross < 0.0) break;
            hull.pop_back();
        }
        hull.push_back(std::move(p));
    }
    return hull;
}

/// Reconstruction of the hull at utilization u by time-sharing its two
/// neighbouring vertices; NaN outside the hull's utilization range.
inline double hull_value_at(std::span<const TradeoffPoint> hull, double u) {
    if (hull.empty() || u < hull.front().utilization || u > hull.back().utilization)
        return std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i + 1 < hull.size(); ++i) {
        const auto& a = hull[i];
        const auto& b = hull[i + 1];
        if (u <= b.utilization) {
            const double t = (u - a.utilization) / (b.utilization - a.utilization);
            return a.reconstruction + t * (b.reconstruction - a.reconstruction);
        }
    }
    return hull.back().reconstruction;
}

// ---------------------------------------------------------------------- CSV

inline constexpr std::string_view kTradeoffCsvVersion = "# remest-tradeoff v1";
inline constexpr std::string_view kTradeoffCsvHeader =
    "algorithm,lambda,utilization,reconstruction,avg_reward,stderr_util,stderr_rec";

/// %.12g, with nan and inf spelled out so output is the same everywhere.
inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v == 0.0 ? 0.0 : v);
    return buf;
}

inline void write_tradeoff_csv(std::ostream& os, std::span<const TradeoffPoint> points) {
    os << kTradeoffCsvVersion << '\n' << kTradeoffCsvHeader << '\n';
    for (const auto& p : points)
        os << p.algorithm << ',' << format_number(p.lambda) << ',' << format_number(p.utilization) << ','
           << format_number(p.reconstruction) << ',' << format_number(p.avg_reward) << ','
           << format_number(p.stderr_util) << ',' << format_number(p.stderr_rec) << '\n';
}

} // namespace remest
