#pragma once

// Causal excursion-effect estimation for micro-randomized trials: weighted,
// centered least squares with clustered small-sample inference, a GEE
// comparison fitter, scenario simulators, and a local-polynomial sensitivity
// analysis of the effect-versus-time curve.

#include "mrt/csv.hpp"
#include "mrt/dataset.hpp"
#include "mrt/design.hpp"
#include "mrt/error.hpp"
#include "mrt/estimator.hpp"
#include "mrt/gee.hpp"
#include "mrt/loess.hpp"
#include "mrt/rng.hpp"
#include "mrt/simulate.hpp"
#include "mrt/stats.hpp"
