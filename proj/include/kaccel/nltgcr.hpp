#pragma once

#include "kaccel/frechet.hpp"
#include "kaccel/operator.hpp"
#include "kaccel/residual_map.hpp"
#include "kaccel/trace.hpp"
#include "kaccel/types.hpp"
#include "kaccel/window.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>

namespace kaccel {

enum class UpdateMode { NonlinearUpdate, LinearizedUpdate };
enum class OnCheckFail { LineSearch, SafeguardRestart, Ignore };

/// Armijo backtracking parameters. alpha must stay below 1/2 for the local
/// fast-convergence theory to apply; theta brackets the shrink factor.
struct LineSearchParams {
  double alpha = 0.25;
  double theta_min = 0.25;
  double theta_max = 0.75;
  double eps_star = 0.1;
  int max_backtracks = 40;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 0.5)) throw SolverError("linesearch: alpha in (0, 1/2) required");
    if (!(theta_min > 0.0 && theta_min <= theta_max && theta_max < 1.0))
      throw SolverError("linesearch: 0 < theta_min <= theta_max < 1 required");
    if (eps_star <= 0.0) throw SolverError("linesearch: eps_star > 0 required");
  }
};

struct ResidualCheckConfig {
  double eta = 0.9;                 // in [0, 1)
  OnCheckFail on_fail = OnCheckFail::LineSearch;
  bool forcing = false;             // eta_n = min(eta, ||F(x_n)||)
  int max_safeguards = 10;          // consecutive safeguard steps before giving up
  double safeguard_damping = 1.0;   // beta0 of the fallback step x - beta0 F
};

struct NonlinearSolveConfig {
  std::size_t m = 1;
  std::size_t max_iter = 500;
  double rtol = 1e-10;
  double atol = 0.0;
  UpdateMode update_mode = UpdateMode::NonlinearUpdate;
  FrechetPolicy frechet;
  bool use_exact_jvp = true;        // take F's exact jvp when it has one
  std::optional<ResidualCheckConfig> residual_check;
  LineSearchParams linesearch;
  std::optional<std::size_t> restart_period;  // window reset (and cycle length when linearized)
  bool solve_small_least_squares = false;     // y by LS on V instead of V^T r
  int mgs_passes = 1;
  bool store_iterates = false;
  std::optional<Vector> x_star;     // known root, for error traces

  void validate() const {
    if (m < 1) throw SolverError("NonlinearSolveConfig: m >= 1 required");
    if (max_iter == 0) throw SolverError("NonlinearSolveConfig: max_iter >= 1 required");
    if (!(rtol > 0.0 && rtol < 1.0)) throw SolverError("NonlinearSolveConfig: rtol in (0,1) required");
    if (atol < 0.0) throw SolverError("NonlinearSolveConfig: atol >= 0 required");
    if (residual_check && !(residual_check->eta >= 0.0 && residual_check->eta < 1.0))
      throw SolverError("NonlinearSolveConfig: eta in [0,1) required");
    linesearch.validate();
    if (update_mode == UpdateMode::LinearizedUpdate && !restart_period)
      throw SolverError("NonlinearSolveConfig: linearized update requires restart_period");
  }
};

/// Acceptance test ||F_x + V_j y|| <= eta ||F_x||, evaluated from the stored
/// images only -- no extra F evaluations.
struct ResidualCheckResult {
  bool pass = false;
  double lhs = 0.0;
};

inline ResidualCheckResult residual_check(const DirectionWindow& window, const Vector& y,
                                          const Vector& f_x, double eta) {
  if (window.empty()) throw SolverError("residual_check: empty window");
  Vector model = f_x;
  for (std::size_t i = 0; i < window.size(); ++i) model += y[static_cast<Index>(i)] * window.v(i);
  ResidualCheckResult out;
  out.lhs = model.norm();
  out.pass = out.lhs <= eta * f_x.norm();
  return out;
}

struct LineSearchResult {
  double step = 0.0;
  int evals = 0;       // phi evaluations consumed
  bool success = false;
  double phi = 0.0;    // phi at the accepted point
};

/// Backtracking on phi along a descent direction p. The initial trial is
/// beta = max(1, eps* |grad_dot_p| / ||p||^2); failures shrink beta by the
/// midpoint of [theta_min, theta_max] until the Armijo bound
/// phi(x + beta p) <= phi(x) + alpha beta grad_dot_p holds.
template <typename PhiFn>
LineSearchResult backtracking_linesearch(PhiFn&& phi, double phi0, double grad_dot_p,
                                         const Vector& x, const Vector& p,
                                         const LineSearchParams& params) {
  params.validate();
  if (!(grad_dot_p < 0.0)) throw SolverError("backtracking_linesearch: not a descent direction");
  const double pnorm2 = p.squaredNorm();
  if (pnorm2 == 0.0) throw ZeroDirection("backtracking_linesearch: zero direction");

  LineSearchResult out;
  double beta = std::max(1.0, params.eps_star * std::abs(grad_dot_p) / pnorm2);
  const double shrink = 0.5 * (params.theta_min + params.theta_max);
  for (int t = 0; t <= params.max_backtracks; ++t) {
    const double trial = phi(Vector(x + beta * p));
    ++out.evals;
    if (trial <= phi0 + params.alpha * beta * grad_dot_p) {
      out.step = beta;
      out.phi = trial;
      out.success = true;
      return out;
    }
    beta *= shrink;
  }
  return out;  // caller falls back to a safeguard
}

namespace detail {

struct NlRecorder {
  SolveTrace& trace;
  const ResidualMap& f;
  const NonlinearSolveConfig& cfg;
  bool store;

  void operator()(double fnorm, const Vector& x) const {
    trace.residual_norms.push_back(fnorm);
    trace.objective.push_back(0.5 * fnorm * fnorm);
    trace.fevals_at.push_back(f.feval_count());
    trace.matvecs_at.push_back(trace.matvec_count);
    if (cfg.x_star) trace.error_to_star.push_back((x - *cfg.x_star).norm());
    if (store) trace.iterates.push_back(x);
  }
};

inline Vector window_coeffs(const DirectionWindow& window, const Vector& r, bool least_squares,
                            long* dots) {
  const Matrix v = window.vmat();
  if (least_squares) {
    return v.colPivHouseholderQr().solve(r);
  }
  if (dots) *dots += static_cast<long>(window.size());
  return v.transpose() * r;
}

}  // namespace detail

/// Nonlinear truncated GCR. Directions are orthonormalized in image space
/// against a moving window; each step takes x += P_j y_j with y_j the
/// projection of the current residual onto the stored images. Costs two F
/// evaluations per iteration in Frechet mode and one with an exact jvp.
/// The optional residual check guards each step and falls back to a line
/// search or a damped-residual safeguard restart.
inline SolveTrace nltgcr_solve(const ResidualMap& f, const Vector& x0,
                               const NonlinearSolveConfig& cfg) {
  cfg.validate();
  if (cfg.update_mode != UpdateMode::NonlinearUpdate)
    throw SolverError("nltgcr_solve: use nltgcr_linearized_solve for LinearizedUpdate");
  require_dim(x0, f.dim(), "nltgcr_solve x0");
  require_finite(x0, "nltgcr_solve x0");

  SolveTrace trace;
  const bool store = cfg.store_iterates || f.dim() <= 1024;
  const bool exact_jvp = cfg.use_exact_jvp && f.has_exact_jvp();
  const OrthoOptions ortho{cfg.mgs_passes, 1e-14};
  detail::NlRecorder record{trace, f, cfg, store};

  auto jvp = [&](const Vector& x, const Vector& u, const Vector& fx) {
    return exact_jvp ? f.jvp_exact(x, u) : frechet_jvp(f, x, u, cfg.frechet, &fx);
  };

  Vector x = x0;
  Vector fx = f.eval(x);
  double fnorm = fx.norm();
  const double fnorm0 = fnorm;
  const double thresh = std::max(cfg.atol, cfg.rtol * fnorm0);
  record(fnorm, x);
  trace.feval_count = f.feval_count();
  if (fnorm <= thresh) {
    trace.termination = Termination::Converged;
    return trace;
  }

  DirectionWindow window(cfg.m, WindowMode::MovingWindow);
  auto seed_window = [&]() -> bool {
    Vector r = -fx;
    Vector v = jvp(x, r, fx);
    OrthoResult o = window_orthonormalize(std::move(r), std::move(v), window, ortho,
                                          &trace.ortho_dot_count);
    if (o.breakdown) return false;
    window.push(std::move(o.p), std::move(o.v));
    return true;
  };
  if (!seed_window()) {
    trace.termination = Termination::Breakdown;
    trace.feval_count = f.feval_count();
    return trace;
  }

  int consecutive_safeguards = 0;
  for (std::size_t j = 0; j < cfg.max_iter; ++j) {
    Vector r = -fx;
    Vector y = detail::window_coeffs(window, r, cfg.solve_small_least_squares,
                                     &trace.ortho_dot_count);
    StepRecord step;

    bool need_reseed = false;
    double eta_n = 0.0;
    bool check_pass = true;
    if (cfg.residual_check) {
      eta_n = cfg.residual_check->forcing ? std::min(cfg.residual_check->eta, fnorm)
                                          : cfg.residual_check->eta;
      const ResidualCheckResult rc = residual_check(window, y, fx, eta_n);
      check_pass = rc.pass;
      step.residual_check_pass = rc.pass;
    }

    const double ynorm = y.norm();
    const bool stagnant = ynorm <= 1e-15 * std::max(1.0, fnorm);

    if ((check_pass || !cfg.residual_check ||
         cfg.residual_check->on_fail == OnCheckFail::Ignore) &&
        !stagnant) {
      // plain projection step
      Vector delta = window.pmat() * y;
      x += delta;
      fx = f.eval(x);
      step.y = y;
      step.delta = std::move(delta);
      if (check_pass) consecutive_safeguards = 0;
    } else if (!stagnant && cfg.residual_check->on_fail == OnCheckFail::LineSearch) {
      // Armijo along P_j y_j; grad phi . p = (F, [J]P y) = -(r, V y)
      Vector dir = window.pmat() * y;
      Vector vy = window.vmat() * y;
      const double grad_dot_p = -r.dot(vy);
      if (grad_dot_p < 0.0) {
        Vector fx_trial;
        auto phi = [&](const Vector& z) {
          fx_trial = f.eval(z);
          return 0.5 * fx_trial.squaredNorm();
        };
        const LineSearchResult ls =
            backtracking_linesearch(phi, 0.5 * fnorm * fnorm, grad_dot_p, x, dir, cfg.linesearch);
        step.linesearch_backtracks = ls.evals - 1;
        if (ls.success) {
          x += ls.step * dir;
          fx = fx_trial;  // phi's last accepted evaluation
          step.y = y;
          step.delta = ls.step * dir;
          consecutive_safeguards = 0;
        } else {
          need_reseed = true;  // line search exhausted: safeguard below
        }
      } else {
        need_reseed = true;  // not a descent direction: safeguard below
      }
      if (need_reseed) {
        const double b0 = cfg.residual_check->safeguard_damping;
        x += b0 * r;
        fx = f.eval(x);
        window.clear();
        step.safeguard_taken = true;
        ++consecutive_safeguards;
      }
    } else {
      // SafeguardRestart (or stagnation): damped residual step, history reset
      const double b0 = cfg.residual_check ? cfg.residual_check->safeguard_damping : 1.0;
      x += b0 * r;
      fx = f.eval(x);
      window.clear();
      step.safeguard_taken = true;
      ++consecutive_safeguards;
      need_reseed = true;
    }

    fnorm = fx.norm();
    trace.steps.push_back(std::move(step));
    record(fnorm, x);
    trace.feval_count = f.feval_count();

    if (!std::isfinite(fnorm) || fnorm > 1e8 * fnorm0) {
      trace.termination = Termination::Diverged;
      return trace;
    }
    if (fnorm <= thresh) {
      trace.termination = Termination::Converged;
      return trace;
    }
    if (cfg.residual_check && consecutive_safeguards > cfg.residual_check->max_safeguards) {
      trace.termination = Termination::SafeguardExhausted;
      return trace;
    }
    if (j + 1 == cfg.max_iter) break;

    if (cfg.restart_period && (j + 1) % *cfg.restart_period == 0) {
      window.clear();
    }

    if (window.empty()) {
      if (!seed_window()) {
        trace.termination = Termination::Breakdown;
        trace.feval_count = f.feval_count();
        return trace;
      }
      continue;
    }

    Vector p = -fx;
    Vector v = jvp(x, p, fx);
    OrthoResult next = window_orthonormalize(std::move(p), std::move(v), window, ortho,
                                             &trace.ortho_dot_count);
    if (next.breakdown) {
      // new direction absorbed by the window: drop the history and reseed
      window.clear();
      if (!seed_window()) {
        trace.termination = Termination::Breakdown;
        trace.feval_count = f.feval_count();
        return trace;
      }
    } else {
      window.push(std::move(next.p), std::move(next.v));
    }
  }
  trace.termination = Termination::MaxIter;
  trace.feval_count = f.feval_count();
  return trace;
}

/// Linearized-update variant: an inexact Newton outer loop whose inner
/// solver is truncated GCR on the frozen Jacobian system
/// J(x_n) delta = -F(x_n). One restart cycle performs exactly
/// restart_period inner steps (or stops early once the inner residual
/// passes the eta_n check when a residual check is configured). Trace
/// entries are per outer step.
inline SolveTrace nltgcr_linearized_solve(const ResidualMap& f, const Vector& x0,
                                          const NonlinearSolveConfig& cfg) {
  cfg.validate();
  if (cfg.update_mode != UpdateMode::LinearizedUpdate)
    throw SolverError("nltgcr_linearized_solve: config must select LinearizedUpdate");
  require_dim(x0, f.dim(), "nltgcr_linearized_solve x0");
  require_finite(x0, "nltgcr_linearized_solve x0");

  SolveTrace trace;
  const bool store = cfg.store_iterates || f.dim() <= 1024;
  const bool exact_jvp = cfg.use_exact_jvp && f.has_exact_jvp();
  const OrthoOptions ortho{cfg.mgs_passes, 1e-14};
  detail::NlRecorder record{trace, f, cfg, store};
  const std::size_t cycle_len = *cfg.restart_period;

  Vector x = x0;
  Vector fx = f.eval(x);
  double fnorm = fx.norm();
  const double fnorm0 = fnorm;
  const double thresh = std::max(cfg.atol, cfg.rtol * fnorm0);
  record(fnorm, x);
  trace.feval_count = f.feval_count();
  if (fnorm <= thresh) {
    trace.termination = Termination::Converged;
    return trace;
  }

  int consecutive_safeguards = 0;
  for (std::size_t n = 0; n < cfg.max_iter; ++n) {
    const Vector x_base = x;
    const Vector f_base = fx;
    const double eta_n = cfg.residual_check
                             ? (cfg.residual_check->forcing
                                    ? std::min(cfg.residual_check->eta, fnorm)
                                    : cfg.residual_check->eta)
                             : 0.0;

    // inner: TGCR(m) on J(x_base) delta = -F(x_base)
    auto jvp_base = [&](const Vector& u) {
      return exact_jvp ? f.jvp_exact(x_base, u) : frechet_jvp(f, x_base, u, cfg.frechet, &f_base);
    };
    DirectionWindow window(cfg.m, WindowMode::MovingWindow);
    Vector r = -f_base;
    Vector delta = Vector::Zero(f.dim());
    bool inner_breakdown = false;
    {
      Vector v = jvp_base(r);
      OrthoResult o = window_orthonormalize(r, std::move(v), window, ortho,
                                            &trace.ortho_dot_count);
      if (o.breakdown) inner_breakdown = true;
      else window.push(std::move(o.p), std::move(o.v));
    }
    std::size_t inner_done = 0;
    while (!inner_breakdown && inner_done < cycle_len) {
      Vector y = detail::window_coeffs(window, r, cfg.solve_small_least_squares,
                                       &trace.ortho_dot_count);
      delta += window.pmat() * y;
      r -= window.vmat() * y;
      ++inner_done;
      if (cfg.residual_check && r.norm() <= eta_n * fnorm) break;
      if (inner_done == cycle_len) break;
      Vector p = r;
      Vector v = jvp_base(p);
      OrthoResult o = window_orthonormalize(std::move(p), std::move(v), window, ortho,
                                            &trace.ortho_dot_count);
      if (o.breakdown) break;  // inner space exhausted; use what we have
      window.push(std::move(o.p), std::move(o.v));
    }

    StepRecord step;
    if (inner_breakdown || delta.squaredNorm() == 0.0) {
      // inner solve produced nothing: damped residual safeguard
      const double b0 = cfg.residual_check ? cfg.residual_check->safeguard_damping : 1.0;
      x = x_base - b0 * f_base;
      fx = f.eval(x);
      step.safeguard_taken = true;
      ++consecutive_safeguards;
    } else if (cfg.residual_check && cfg.residual_check->on_fail == OnCheckFail::LineSearch) {
      // global strategy: Armijo along delta with grad phi . delta = (F, J delta)
      const double grad_dot_p = f_base.dot(-f_base - r);  // J delta = -F - r_model
      if (grad_dot_p < 0.0) {
        Vector fx_trial;
        auto phi = [&](const Vector& z) {
          fx_trial = f.eval(z);
          return 0.5 * fx_trial.squaredNorm();
        };
        const LineSearchResult ls = backtracking_linesearch(
            phi, 0.5 * fnorm * fnorm, grad_dot_p, x_base, delta, cfg.linesearch);
        step.linesearch_backtracks = ls.evals - 1;
        if (ls.success) {
          x = x_base + ls.step * delta;
          fx = fx_trial;
          step.delta = ls.step * delta;
          consecutive_safeguards = 0;
        } else {
          const double b0 = cfg.residual_check->safeguard_damping;
          x = x_base - b0 * f_base;
          fx = f.eval(x);
          step.safeguard_taken = true;
          ++consecutive_safeguards;
        }
      } else {
        const double b0 = cfg.residual_check->safeguard_damping;
        x = x_base - b0 * f_base;
        fx = f.eval(x);
        step.safeguard_taken = true;
        ++consecutive_safeguards;
      }
    } else {
      x = x_base + delta;
      fx = f.eval(x);
      step.delta = std::move(delta);
      consecutive_safeguards = 0;
    }

    fnorm = fx.norm();
    trace.steps.push_back(std::move(step));
    record(fnorm, x);
    trace.feval_count = f.feval_count();

    if (!std::isfinite(fnorm) || fnorm > 1e8 * fnorm0) {
      trace.termination = Termination::Diverged;
      return trace;
    }
    if (fnorm <= thresh) {
      trace.termination = Termination::Converged;
      return trace;
    }
    if (cfg.residual_check && consecutive_safeguards > cfg.residual_check->max_safeguards) {
      trace.termination = Termination::SafeguardExhausted;
      return trace;
    }
  }
  trace.termination = Termination::MaxIter;
  return trace;
}

}  // namespace kaccel
