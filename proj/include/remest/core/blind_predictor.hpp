#pragma once

#include "remest/core/chain.hpp"

#include <cstddef>
#include <vector>

namespace remest {

/// Memoized no-implicit-information monitor: argmax of (P^n)^T e_{s_m} for
/// every last-received state s_m and lag n. Grows lazily with the largest
/// lag requested; one instance per execution context.
///
/// With a lag cap L > 0, lags beyond L are folded back by the chain period d
/// (lag -> L - d + 1 + (lag - L - 1) mod d), so the predictor only ever
/// stores L + 1 lags. Exact evaluators that track lags up to L use the same
/// fold, which keeps them consistent with simulation.
class BlindPredictor {
public:
    explicit BlindPredictor(TransitionMatrix chain, std::size_t lag_cap = 0)
        : chain_(std::move(chain)), lag_cap_(lag_cap) {
        const std::size_t n = chain_.size();
        if (lag_cap_ > 0) {
            period_ = chain_period(chain_);
            if (lag_cap_ < period_) lag_cap_ = period_;
        }
        current_.reserve(n);
        for (std::size_t s = 0; s < n; ++s) current_.push_back(Belief::basis(n, s));
        record();
    }

    std::size_t lag_cap() const noexcept { return lag_cap_; }
    std::size_t period() const noexcept { return period_; }

    /// Folded lag; identity when there is no cap or lag <= cap.
    std::size_t fold(std::size_t lag) const {
        if (lag_cap_ == 0 || lag <= lag_cap_) return lag;
        return lag_cap_ - period_ + 1 + (lag - lag_cap_ - 1) % period_;
    }

    const TransitionMatrix& chain() const noexcept { return chain_; }

    StateIndex estimate(StateIndex s_m, std::size_t lag) {
        lag = fold(lag);
        extend(lag);
        return estimate_[lag * chain_.size() + s_m];
    }

    /// Probability that the estimate at this lag is correct, i.e. the largest
    /// entry of (P^lag)^T e_{s_m}.
    double hit_probability(StateIndex s_m, std::size_t lag) {
        lag = fold(lag);
        extend(lag);
        return mass_[lag * chain_.size() + s_m];
    }

private:
    void extend(std::size_t lag) {
        while (computed_ <= lag) {
            for (auto& b : current_) b = belief_predict(chain_, b);
            record();
        }
    }

    void record() {
        for (const auto& b : current_) {
            const StateIndex e = argmax_belief(b);
            estimate_.push_back(e);
            mass_.push_back(b[e]);
        }
        ++computed_;
    }

    TransitionMatrix chain_;
    std::size_t lag_cap_ = 0;
    std::size_t period_ = 1;
    std::vector<Belief> current_;
    std::vector<StateIndex> estimate_;
    std::vector<double> mass_;
    std::size_t computed_ = 0;
};

} // namespace remest
