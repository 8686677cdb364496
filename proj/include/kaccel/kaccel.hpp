#pragma once

// Umbrella header for the krylov-accel library.

#include "kaccel/anderson.hpp"
#include "kaccel/baselines.hpp"
#include "kaccel/diagnostics.hpp"
#include "kaccel/frechet.hpp"
#include "kaccel/linear_solvers.hpp"
#include "kaccel/matrix_market.hpp"
#include "kaccel/nltgcr.hpp"
#include "kaccel/operator.hpp"
#include "kaccel/problems.hpp"
#include "kaccel/residual_map.hpp"
#include "kaccel/rng.hpp"
#include "kaccel/stochastic.hpp"
#include "kaccel/trace.hpp"
#include "kaccel/types.hpp"
#include "kaccel/window.hpp"

namespace kaccel {
inline constexpr const char* kVersion = "0.1.0";
}
