#pragma once

// Everything in one include.

#include "remest/alternating.hpp"
#include "remest/baselines.hpp"
#include "remest/bundled.hpp"
#include "remest/core/blind_predictor.hpp"
#include "remest/core/chain.hpp"
#include "remest/core/error.hpp"
#include "remest/core/markov_average.hpp"
#include "remest/core/metrics.hpp"
#include "remest/core/rng.hpp"
#include "remest/core/rvi.hpp"
#include "remest/core/step.hpp"
#include "remest/eval.hpp"
#include "remest/heuristic.hpp"
#include "remest/io.hpp"
#include "remest/occupancy.hpp"
