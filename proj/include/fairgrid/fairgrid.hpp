#pragma once

// Post-processing of regression models toward demographic parity without
// sensitive attributes at prediction time: predictions are discretized onto a
// uniform grid and a smooth convex dual of the parity-constrained problem is
// minimized with accelerated stochastic gradient methods.

#include "common.hpp"
#include "core.hpp"
#include "data.hpp"
#include "dual.hpp"
#include "metrics.hpp"
#include "models.hpp"
#include "optimize.hpp"
#include "pipeline.hpp"
