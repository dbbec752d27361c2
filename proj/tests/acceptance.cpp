// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include "cli.hpp"

#include <remest/remest.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace remest;

namespace {

struct Verdict {
    bool passed = true;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// Collects the first few failure messages from worker threads.
class Failures {
public:
    void add(std::string msg) {
        std::lock_guard lock(mu_);
        if (++count_ <= 5) msgs_ += (msgs_.empty() ? "" : "; ") + msg;
    }
    std::size_t count() const { return count_; }
    std::string summary() const { return count_ ? fmt("%zu failures: ", count_) + msgs_ : std::string(); }

private:
    std::mutex mu_;
    std::size_t count_ = 0;
    std::string msgs_;
};

Verdict heuristic_perfect_reconstruction() {
    Verdict v;
    double slowest = 0.0;
    for (const auto& nc : bundled_chains()) {
        const auto t0 = Clock::now();
        HeuristicPolicy policy(nc.chain);
        SimulationOptions so;
        so.steps = 1000000;
        so.burn_in = 0;
        const Metrics m = simulate(nc.chain, policy, so);
        const double dt = seconds_since(t0);
        slowest = std::max(slowest, dt);
        if (m.reconstruction != 1.0 || dt >= 5.0) {
            v.passed = false;
            v.detail += fmt("%s rec=%.12g time=%.2fs; ", nc.name.c_str(), m.reconstruction, dt);
        }
    }
    v.detail += fmt("%zu chains, 1e6 steps each, slowest %.2fs", bundled_chains().size(), slowest);
    return v;
}

Verdict heuristic_rate_symmetric() {
    const auto chain = validate_chain({{0.9, 0.1}, {0.1, 0.9}});
    const double rate = heuristic_rate_exact(chain).utilization;
    HeuristicPolicy policy(chain);
    SimulationOptions so;
    so.steps = 1000000;
    so.burn_in = 0;
    const Metrics m = simulate(chain, policy, so);
    Verdict v;
    v.passed = std::abs(rate - 0.1) <= 1e-12 && std::abs(m.utilization - 0.1) <= 1e-3;
    v.detail = fmt("exact=%.15g simulated=%.6f", rate, m.utilization);
    return v;
}

Verdict oracle_matches_heuristic() {
    Verdict v;
    const auto t0 = Clock::now();
    std::size_t checked = 0;
    double worst = 0.0;
    for (const auto& nc : bundled_chains()) {
        if (nc.chain.size() > 4) continue;
        ++checked;
        const double oracle = brute_force_perfect_reconstruction_oracle(nc.chain).rate;
        const double rate = heuristic_rate_exact(nc.chain).utilization;
        worst = std::max(worst, std::abs(oracle - rate));
        if (std::abs(oracle - rate) > 1e-12) {
            v.passed = false;
            v.detail += fmt("%s oracle=%.15g heuristic=%.15g; ", nc.name.c_str(), oracle, rate);
        }
    }
    const double dt = seconds_since(t0);
    if (dt >= 30.0) v.passed = false;
    v.detail += fmt("%zu chains, max gap %.3g, %.2fs", checked, worst, dt);
    return v;
}

constexpr std::array<double, 3> kSuiteLambdas{0.1, 0.5, 1.0};

Verdict alternating_monotone_nash(const std::vector<TransitionMatrix>& suite, std::vector<std::optional<AlternatingResult>>& out) {
    Failures fails;
    std::atomic<std::size_t> max_rounds{0};
    out.resize(suite.size() * kSuiteLambdas.size());
    detail::parallel_for(out.size(), 0, [&](std::size_t k) {
        const auto& chain = suite[k / kSuiteLambdas.size()];
        const double lambda = kSuiteLambdas[k % kSuiteLambdas.size()];
        const std::string tag = fmt("chain %zu lambda %g", k / kSuiteLambdas.size(), lambda);
        try {
            auto res = alternate(chain, {.lambda = lambda});
            for (std::size_t i = 1; i < res.trace.size(); ++i)
                if (res.trace[i] < res.trace[i - 1] - 1e-9) fails.add(tag + " trace decreased");
            std::size_t prev = max_rounds.load();
            while (prev < res.trace.size() && !max_rounds.compare_exchange_weak(prev, res.trace.size())) {}
            if (res.trace.size() > 50) fails.add(tag + " took more than 50 rounds");

            const double J = res.metrics.avg_reward;
            auto [vf, sensor_dev] = relative_value_iteration(build_sensor_mdp(chain, res.monitor, lambda, res.n_max));
            const double J_sensor = evaluate_joint(chain, sensor_dev, res.monitor, lambda, res.n_max).avg_reward;
            const auto monitor_dev = improve_monitor(chain, monitor_beliefs(chain, res.sensor, res.n_max));
            const double J_monitor = evaluate_joint(chain, res.sensor, monitor_dev, lambda, res.n_max).avg_reward;
            if (std::abs(J_sensor - J) >= 1e-6 || std::abs(J_monitor - J) >= 1e-6)
                fails.add(tag + fmt(" deviation gains %.9g/%.9g vs J=%.9g", J_sensor, J_monitor, J));
            out[k] = std::move(res);
        } catch (const std::exception& e) {
            fails.add(tag + ": " + e.what());
        }
    });
    Verdict v;
    v.passed = fails.count() == 0;
    v.detail = fails.summary() + fmt("%zu runs, at most %zu rounds", out.size(), max_rounds.load());
    return v;
}

Verdict occupancy_dominance(const std::vector<TransitionMatrix>& suite, const std::vector<std::optional<AlternatingResult>>& alt) {
    const double q = 1e-4;
    Failures fails;
    const auto t0 = Clock::now();
    const std::size_t L = kSuiteLambdas.size();
    std::vector<double> gaps(suite.size() * L, 0.0), pr_gaps(suite.size(), 0.0);
    detail::parallel_for(suite.size() * (L + 1), 0, [&](std::size_t k) {
        const std::size_t c = k / (L + 1), j = k % (L + 1);
        const auto& chain = suite[c];
        OccupancyOptions opt;
        opt.q = q;
        try {
            if (j < L) {
                if (!alt[c * L + j]) {
                    fails.add(fmt("chain %zu lambda %g has no alternating result", c, kSuiteLambdas[j]));
                    return;
                }
                const auto& res = *alt[c * L + j];
                opt.lambda = kSuiteLambdas[j];
                const std::vector<SensorPolicy> seeds{res.sensor};
                const auto sol = solve_occupancy_lazy(chain, opt, seeds);
                gaps[c * L + j] = res.metrics.avg_reward - sol.gain;
                if (sol.gain < res.metrics.avg_reward - q)
                    fails.add(fmt("chain %zu lambda %g occupancy %.9g < alternating %.9g", c, opt.lambda, sol.gain,
                                  res.metrics.avg_reward));
            } else {
                opt.lambda = 1e-3;
                const auto sol = solve_occupancy_lazy(chain, opt);
                const auto h = heuristic_rate_exact(chain);
                pr_gaps[c] = std::abs(sol.metrics.utilization - h.utilization);
                if (pr_gaps[c] > 2 * q * chain.size() || std::abs(sol.metrics.reconstruction - 1.0) > 1e-9)
                    fails.add(fmt("chain %zu perfect-reconstruction end (%.9g, %.12g) vs heuristic %.9g", c,
                                  sol.metrics.utilization, sol.metrics.reconstruction, h.utilization));
            }
        } catch (const std::exception& e) {
            fails.add(fmt("chain %zu: ", c) + e.what());
        }
    });
    const double dt = seconds_since(t0);
    Verdict v;
    v.passed = fails.count() == 0 && dt < 600.0;
    v.detail = fails.summary() +
               fmt("max alternating-occupancy gap %.3g, max rate gap at lambda=1e-3 %.3g, %.1fs",
                   *std::max_element(gaps.begin(), gaps.end()), *std::max_element(pr_gaps.begin(), pr_gaps.end()), dt);
    return v;
}

Verdict argmax_estimate_property() {
    RngStream rng(20240, 6);
    std::size_t bad = 0;
    double worst = 0.0;
    const std::size_t samples = 10000;
    for (std::size_t i = 0; i < samples; ++i) {
        const std::size_t S = 2 + rng.next_u64() % 4;
        std::vector<double> w(S);
        for (auto& x : w) x = rng.uniform() < 0.25 ? 0.0 : rng.uniform();
        if (std::accumulate(w.begin(), w.end(), 0.0) == 0.0) w[rng.next_u64() % S] = 1.0;
        const Belief b = Belief::normalize(w);
        const auto rule = DecisionRule::from_mask(static_cast<std::uint32_t>(rng.next_u64() % (1u << S)), S);
        const double lambda = rng.uniform() * 2.0;
        const double chosen = occupancy_reward(b, rule, lambda);
        // Independent best silent guess: the largest silent-state mass.
        double silent_best = 0.0, tx = 0.0, silent = 0.0;
        for (StateIndex s = 0; s < S; ++s) {
            if (rule.transmits(s)) {
                tx += b[s];
            } else {
                silent += b[s];
                silent_best = std::max(silent_best, b[s]);
            }
        }
        const double oracle = silent > 0.0 ? tx + silent_best - lambda * tx : 1.0 - lambda;
        worst = std::max(worst, std::abs(chosen - oracle));
        bool ok = std::abs(chosen - oracle) <= 1e-12;
        for (StateIndex e = 0; e < S; ++e) ok = ok && occupancy_reward(b, rule, lambda, e) <= chosen + 1e-15;
        bad += !ok;
    }
    return {bad == 0, fmt("%zu samples, %zu counterexamples, max gap to oracle %.3g", samples, bad, worst)};
}

Verdict baseline_exactness() {
    Failures fails;
    std::size_t sims = 0;
    double worst_z = 0.0;
    auto check_sim = [&](const std::string& tag, const TransitionMatrix& chain, BaselineSpec spec, const Metrics& ex) {
        SimulationOptions so;
        so.steps = 100000;
        const auto rep = simulate_replicated(chain, [&] { return BaselinePolicy(chain, spec); }, so, 20);
        ++sims;
        const auto& p = rep.pooled;
        for (auto [sim, exact, se] : {std::tuple{p.utilization, ex.utilization, p.stderr_util},
                                     std::tuple{p.reconstruction, ex.reconstruction, p.stderr_rec}}) {
            const double dev = std::abs(sim - exact);
            if (se > 0.0 && dev > 1e-12) worst_z = std::max(worst_z, dev / se);
            if (dev > 3.0 * se + 1e-12) fails.add(tag + fmt(" simulated %.6f vs exact %.6f (3se %.2g)", sim, exact, 3 * se));
        }
    };
    for (const auto& nc : bundled_chains()) {
        for (std::size_t u = 1; u <= 5; ++u) {
            const auto spec = BaselineSpec::uniform(u);
            const Metrics ex = baseline_exact(nc.chain, spec);
            const std::string tag = nc.name + fmt(" uniform(%zu)", u);
            if (std::abs(ex.utilization - 1.0 / u) > 1e-12) fails.add(tag + fmt(" utilization %.15g", ex.utilization));
            check_sim(tag, nc.chain, spec, ex);
        }
        const std::size_t cap = default_lag_cap(nc.chain.size());
        for (double p : {0.1, 0.3, 0.5, 0.9}) {
            const auto spec = BaselineSpec::randomized(p);
            const Metrics ex = baseline_exact(nc.chain, spec);
            const std::string tag = nc.name + fmt(" randomized(%g)", p);
            if (std::abs(ex.utilization - p) > std::pow(1.0 - p, double(cap)) + 1e-12)
                fails.add(tag + fmt(" utilization %.15g", ex.utilization));
            check_sim(tag, nc.chain, spec, ex);
        }
    }
    Verdict v;
    v.passed = fails.count() == 0;
    v.detail = fails.summary() + fmt("%zu configurations x 20 runs, largest |z| %.2f", sims, worst_z);
    return v;
}

Verdict fig_ordering() {
    Failures fails;
    const std::array<double, 5> levels{0.1, 0.3, 0.5, 0.7, 0.9};
    const double tol = 1e-4; // occupancy quantization
    double margin_occ = 1.0, margin_alt = 1.0, margin_uni = 1.0;
    SweepConfig cfg;
    for (const auto& nc : bundled_chains()) {
        auto hull = [&](Algorithm a) { return time_sharing_hull(algorithm_points(nc.chain, a, cfg)); };
        const auto occ = hull(Algorithm::Occupancy), alt = hull(Algorithm::Alternating),
                   uni = hull(Algorithm::Uniform), rnd = hull(Algorithm::Randomized);
        for (double u : levels) {
            const double o = hull_value_at(occ, u), a = hull_value_at(alt, u), un = hull_value_at(uni, u),
                         r = hull_value_at(rnd, u);
            margin_occ = std::min(margin_occ, o - a);
            margin_alt = std::min(margin_alt, a - un);
            margin_uni = std::min(margin_uni, un - (r - 0.01));
            if (!(o >= a - tol && a >= un - tol && un >= r - 0.01))
                fails.add(nc.name + fmt(" at %.1f: occ %.6f alt %.6f uni %.6f rnd %.6f", u, o, a, un, r));
        }
        const auto h = heuristic_rate_exact(nc.chain);
        const auto ni = heuristic_no_implicit_exact(nc.chain);
        if (!(h.utilization <= ni.utilization + 1e-12 && h.reconstruction >= ni.reconstruction - 1e-12))
            fails.add(nc.name + fmt(" heuristic (%.6f, %.6f) vs no-implicit (%.6f, %.6f)", h.utilization,
                                    h.reconstruction, ni.utilization, ni.reconstruction));
    }
    Verdict v;
    v.passed = fails.count() == 0;
    v.detail = fails.summary() + fmt("min margins occ-alt %.3g, alt-uni %.3g, uni-(rnd-0.01) %.3g", margin_occ,
                                     margin_alt, margin_uni);
    return v;
}

Verdict sweep_determinism() {
    cli::RunConfig cfg;
    cfg.chains = {"builtin:random4_1"};
    cfg.seed = 7;
    std::ostringstream a, b, err;
    const int ca = cli::cmd_sweep(cfg, a, err);
    const int cb = cli::cmd_sweep(cfg, b, err);
    Verdict v;
    v.passed = ca == 0 && cb == 0 && a.str() == b.str() && !a.str().empty();
    v.detail = fmt("%zu bytes, exit %d/%d", a.str().size(), ca, cb) + (err.str().empty() ? "" : " " + err.str());
    return v;
}

} // namespace

int main() {
    int failed = 0;
    auto report = [&](int id, const char* title, const std::function<Verdict()>& fn) {
        Verdict v;
        const auto t0 = Clock::now();
        try {
            v = fn();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failed += !v.passed;
        std::printf("%s %d %s: %s [%.1fs]\n", v.passed ? "PASS" : "FAIL", id, title, v.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    };

    const auto suite = random_suite(50, 4242);
    std::vector<std::optional<AlternatingResult>> alt;
    report(1, "heuristic perfect reconstruction", heuristic_perfect_reconstruction);
    report(2, "heuristic rate on symmetric chain", heuristic_rate_symmetric);
    report(3, "brute-force oracle equals heuristic rate", oracle_matches_heuristic);
    report(4, "alternating monotone and Nash", [&] { return alternating_monotone_nash(suite, alt); });
    report(5, "occupancy dominates alternating", [&] { return occupancy_dominance(suite, alt); });
    report(6, "argmax estimate is optimal under silence", argmax_estimate_property);
    report(7, "baseline exact metrics", baseline_exactness);
    report(8, "trade-off ordering", fig_ordering);
    report(9, "sweep determinism", sweep_determinism);
    std::printf("%d of 9 criteria failed\n", failed);
    return failed ? 1 : 0;
}
