#pragma once

#include "kaccel/residual_map.hpp"
#include "kaccel/trace.hpp"
#include "kaccel/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>

namespace kaccel {

/// Config shared by the first-order baselines (gradient descent, nonlinear
/// CG). Convergence is on the gradient norm; the line search is plain
/// Armijo with doubling warm starts.
struct BaselineConfig {
  std::size_t max_iter = 500;
  double rtol = 1e-10;
  double atol = 0.0;
  double armijo = 1e-4;
  int max_backtracks = 50;
  bool store_iterates = false;
  std::optional<Vector> x_star;
};

using LossFn = std::function<double(const Vector&)>;

namespace detail {

struct BaselineRun {
  SolveTrace trace;
  const ResidualMap& grad_map;
  const LossFn& loss_fn;
  const BaselineConfig& cfg;
  bool store;

  Vector grad(const Vector& x) {
    ++trace.feval_count;
    return grad_map.eval(x);
  }
  double loss(const Vector& x) {
    ++trace.feval_count;
    return loss_fn(x);
  }
  void record(double gnorm, double f, const Vector& x) {
    trace.residual_norms.push_back(gnorm);
    trace.objective.push_back(f);
    trace.fevals_at.push_back(trace.feval_count);
    trace.matvecs_at.push_back(trace.matvec_count);
    if (cfg.x_star) trace.error_to_star.push_back((x - *cfg.x_star).norm());
    if (store) trace.iterates.push_back(x);
  }
};

}  // namespace detail

/// Gradient descent with Armijo backtracking and step doubling.
inline SolveTrace gd_solve(const ResidualMap& grad_map, const LossFn& loss, const Vector& x0,
                           const BaselineConfig& cfg = {}) {
  require_dim(x0, grad_map.dim(), "gd_solve x0");
  detail::BaselineRun run{SolveTrace{}, grad_map, loss, cfg,
                          cfg.store_iterates || grad_map.dim() <= 1024};

  Vector x = x0;
  Vector g = run.grad(x);
  double f = run.loss(x);
  double gnorm = g.norm();
  const double gnorm0 = gnorm;
  const double thresh = std::max(cfg.atol, cfg.rtol * gnorm0);
  run.record(gnorm, f, x);

  double t = 1.0 / std::max(1.0, gnorm);
  for (std::size_t j = 0; j < cfg.max_iter && gnorm > thresh; ++j) {
    t = std::min(t * 2.0, 1e8);
    const double gg = g.squaredNorm();
    double f_trial = 0.0;
    bool accepted = false;
    for (int bt = 0; bt <= cfg.max_backtracks; ++bt) {
      f_trial = run.loss(x - t * g);
      if (f_trial <= f - cfg.armijo * t * gg) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      run.trace.termination = Termination::Breakdown;
      return run.trace;
    }
    x -= t * g;
    f = f_trial;
    g = run.grad(x);
    gnorm = g.norm();
    run.record(gnorm, f, x);
    if (!std::isfinite(gnorm)) {
      run.trace.termination = Termination::Diverged;
      return run.trace;
    }
  }
  run.trace.termination = gnorm <= thresh ? Termination::Converged : Termination::MaxIter;
  return run.trace;
}

/// Polak-Ribiere+ nonlinear conjugate gradient with Armijo backtracking.
/// Restarts to steepest descent whenever the CG direction stops being a
/// descent direction.
inline SolveTrace ncg_solve(const ResidualMap& grad_map, const LossFn& loss, const Vector& x0,
                            const BaselineConfig& cfg = {}) {
  require_dim(x0, grad_map.dim(), "ncg_solve x0");
  detail::BaselineRun run{SolveTrace{}, grad_map, loss, cfg,
                          cfg.store_iterates || grad_map.dim() <= 1024};

  Vector x = x0;
  Vector g = run.grad(x);
  double f = run.loss(x);
  double gnorm = g.norm();
  const double gnorm0 = gnorm;
  const double thresh = std::max(cfg.atol, cfg.rtol * gnorm0);
  run.record(gnorm, f, x);

  Vector d = -g;
  double t = 1.0 / std::max(1.0, gnorm);
  for (std::size_t j = 0; j < cfg.max_iter && gnorm > thresh; ++j) {
    double gdp = g.dot(d);
    if (gdp >= 0.0) {  // lost descent: restart
      d = -g;
      gdp = -g.squaredNorm();
    }
    t = std::min(t * 2.0, 1e8);
    double f_trial = 0.0;
    bool accepted = false;
    for (int bt = 0; bt <= cfg.max_backtracks; ++bt) {
      f_trial = run.loss(x + t * d);
      if (f_trial <= f + cfg.armijo * t * gdp) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      run.trace.termination = Termination::Breakdown;
      return run.trace;
    }
    x += t * d;
    f = f_trial;
    Vector g_new = run.grad(x);
    const double beta = std::max(0.0, g_new.dot(g_new - g) / g.squaredNorm());
    d = -g_new + beta * d;
    g = std::move(g_new);
    gnorm = g.norm();
    run.record(gnorm, f, x);
    if (!std::isfinite(gnorm)) {
      run.trace.termination = Termination::Diverged;
      return run.trace;
    }
  }
  run.trace.termination = gnorm <= thresh ? Termination::Converged : Termination::MaxIter;
  return run.trace;
}

}  // namespace kaccel
