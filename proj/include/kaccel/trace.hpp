#pragma once

#include "kaccel/types.hpp"

#include <cstdint>
#include <vector>

namespace kaccel {

/// Per-step bookkeeping for the nonlinear solvers.
struct StepRecord {
  Vector y;                       // projection coefficients (empty on safeguard steps)
  Vector delta;                   // x_{j+1} - x_j
  bool residual_check_pass = true;
  int linesearch_backtracks = 0;
  bool safeguard_taken = false;
};

/// Universal per-iteration record emitted by every solver. Entry 0 always
/// describes the initial point; iteration k appends entry k.
struct SolveTrace {
  std::vector<double> residual_norms;   // ||r_j|| (linear) or ||F(x_j)||
  std::vector<double> objective;        // optional; empty or aligned with residual_norms
  std::vector<double> error_to_star;    // optional; filled when x* is known
  std::vector<Vector> iterates;         // optional (small dims or on request)
  std::vector<Vector> step_coeffs;      // alpha_j (size 1) or y_j per step
  std::vector<long> fevals_at;          // cumulative F evals, aligned with residual_norms
  std::vector<long> matvecs_at;         // cumulative A-applications, aligned
  std::vector<std::int64_t> wall_nanos; // optional per-iteration timing
  std::vector<StepRecord> steps;        // nonlinear solvers only
  std::vector<int> grad_batches;        // stochastic solvers only
  std::vector<int> hess_batches;        // stochastic solvers only

  long feval_count = 0;
  long matvec_count = 0;
  long ortho_dot_count = 0;   // length-n inner products against stored history
  Termination termination = Termination::MaxIter;

  std::size_t iterations() const {
    return residual_norms.empty() ? 0 : residual_norms.size() - 1;
  }
  double initial_residual() const { return residual_norms.empty() ? 0.0 : residual_norms.front(); }
  double final_residual() const { return residual_norms.empty() ? 0.0 : residual_norms.back(); }
  bool converged() const { return termination == Termination::Converged; }
};

}  // namespace kaccel
