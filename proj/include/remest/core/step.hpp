#pragma once

#include "remest/core/chain.hpp"
#include "remest/core/rng.hpp"

#include <concepts>

namespace remest {

/// What happened in one time step: did the sensor transmit, and what did the
/// monitor estimate.
struct StepOutcome {
    bool transmit;
    StateIndex estimate;
};

/// A joint sensor/monitor policy driven one step at a time. `reset` starts a
/// fresh run; `step` sees the current source state and may draw from `rng`.
template <class P>
concept StepPolicy = requires(P p, StateIndex s, RngStream& rng) {
    { p.reset() };
    { p.step(s, rng) } -> std::same_as<StepOutcome>;
};

} // namespace remest
