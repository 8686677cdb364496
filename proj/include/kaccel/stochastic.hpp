#pragma once

#include "kaccel/nltgcr.hpp"
#include "kaccel/rng.hpp"
#include "kaccel/trace.hpp"
#include "kaccel/types.hpp"
#include "kaccel/window.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace kaccel {

struct FiniteSumConstants {
  double mu = 0.0;     // strong convexity of the full objective
  double L = 0.0;      // smoothness / Hessian upper bound
  double M = 0.0;      // Hessian Lipschitz constant
  double sigma = 0.0;  // single-sample Hessian deviation (spectral norm, RMS)
  double C = 0.0;      // single-sample gradient covariance trace bound (sqrt)
};

/// Finite-sum problem (1/N) sum_i f_i(x) exposed through per-component
/// gradient and Hessian-vector oracles. Oracle purity: results depend only
/// on (x, index), so batching and seeding live entirely in the solvers.
struct FiniteSumProblem {
  Index dim = 0;
  int num_components = 0;
  std::function<Vector(const Vector&, int)> component_grad;
  std::function<Vector(const Vector&, int, const Vector&)> component_hvp;
  std::function<double(const Vector&)> objective;  // full objective, optional
  std::optional<Vector> x_star;
  std::optional<FiniteSumConstants> constants;

  Vector batch_gradient(const Vector& x, const std::vector<std::size_t>& idx) const {
    Vector g = Vector::Zero(dim);
    for (std::size_t i : idx) g += component_grad(x, static_cast<int>(i));
    return g / static_cast<double>(idx.size());
  }

  Vector batch_hvp(const Vector& x, const std::vector<std::size_t>& idx, const Vector& u) const {
    Vector h = Vector::Zero(dim);
    for (std::size_t i : idx) h += component_hvp(x, static_cast<int>(i), u);
    return h / static_cast<double>(idx.size());
  }

  Matrix batch_hessian(const Vector& x, const std::vector<std::size_t>& idx) const {
    Matrix h(dim, dim);
    Vector e = Vector::Zero(dim);
    for (Index j = 0; j < dim; ++j) {
      e[j] = 1.0;
      h.col(j) = batch_hvp(x, idx, e);
      e[j] = 0.0;
    }
    return h;
  }

  Vector full_gradient(const Vector& x) const {
    std::vector<std::size_t> all(static_cast<std::size_t>(num_components));
    std::iota(all.begin(), all.end(), std::size_t{0});
    return batch_gradient(x, all);
  }
};

/// Gradient batch-size schedule |G_i| plus the constant Hessian batch.
/// Deterministic under the stored seed.
struct BatchSchedule {
  std::function<std::size_t(std::size_t)> grad_batch;  // iteration -> raw size
  std::size_t hess_batch = 1;
  std::uint64_t seed = 0;

  static BatchSchedule constant(std::size_t grad, std::size_t hess, std::uint64_t seed) {
    return BatchSchedule{[grad](std::size_t) { return grad; }, hess, seed};
  }

  /// |G_i| = ceil(growth^i), growth > 1.
  static BatchSchedule geometric(double growth, std::size_t hess, std::uint64_t seed) {
    if (!(growth > 1.0)) throw SolverError("BatchSchedule: growth > 1 required");
    return BatchSchedule{
        [growth](std::size_t i) {
          return static_cast<std::size_t>(std::ceil(std::pow(growth, static_cast<double>(i))));
        },
        hess, seed};
  }
};

struct StochasticOptions {
  double momentum = 0.0;  // in [0, 1); adds momentum * (x_n - x_{n-1})
};

namespace detail {

inline std::vector<std::size_t> draw_batch(const FiniteSumProblem& problem, std::size_t raw,
                                           std::uint64_t seed, std::uint64_t salt) {
  const auto n = static_cast<std::size_t>(problem.num_components);
  const std::size_t size = std::clamp<std::size_t>(raw, 1, n);
  if (size == n) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  Rng rng(derive_seed(seed, salt));
  return rng.sample_without_replacement(n, size);
}

}  // namespace detail

/// nlTGCR driven by subsampled gradient and Hessian oracles. Control flow
/// mirrors nltgcr_solve; fresh independent batches are drawn per iteration
/// for the residual and for the Hessian-vector product. A failed residual
/// check falls back to the damped-residual safeguard (line searches on
/// noisy objectives are not meaningful, so OnCheckFail::LineSearch is
/// treated the same way here).
inline SolveTrace stochastic_nltgcr(const FiniteSumProblem& problem, const Vector& x0,
                                    const NonlinearSolveConfig& cfg, const BatchSchedule& schedule,
                                    const StochasticOptions& opts = {}) {
  cfg.validate();
  require_dim(x0, problem.dim, "stochastic_nltgcr x0");
  require_finite(x0, "stochastic_nltgcr x0");
  if (!schedule.grad_batch) throw SolverError("stochastic_nltgcr: schedule.grad_batch unset");

  SolveTrace trace;
  const bool store = cfg.store_iterates || problem.dim <= 1024;
  const OrthoOptions ortho{cfg.mgs_passes, 1e-14};

  auto record = [&](double fnorm, const Vector& x, int gbatch, int hbatch) {
    trace.residual_norms.push_back(fnorm);
    if (problem.objective) trace.objective.push_back(problem.objective(x));
    trace.fevals_at.push_back(trace.feval_count);
    trace.matvecs_at.push_back(trace.matvec_count);
    trace.grad_batches.push_back(gbatch);
    trace.hess_batches.push_back(hbatch);
    if (problem.x_star) trace.error_to_star.push_back((x - *problem.x_star).norm());
    if (store) trace.iterates.push_back(x);
  };

  Vector x = x0;
  Vector x_prev = x0;
  std::uint64_t draw = 0;

  auto gradient_at = [&](const Vector& at, std::size_t iter) {
    const auto idx = detail::draw_batch(problem, schedule.grad_batch(iter), schedule.seed, draw++);
    trace.feval_count += static_cast<long>(idx.size());
    return std::make_pair(problem.batch_gradient(at, idx), static_cast<int>(idx.size()));
  };
  auto hvp_at = [&](const Vector& at, const Vector& u) {
    const auto idx = detail::draw_batch(problem, schedule.hess_batch, schedule.seed, draw++);
    trace.matvec_count += static_cast<long>(idx.size());
    return std::make_pair(problem.batch_hvp(at, idx, u), static_cast<int>(idx.size()));
  };

  auto [fx, gb0] = gradient_at(x, 0);
  double fnorm = fx.norm();
  const double fnorm0 = fnorm;
  const double thresh = std::max(cfg.atol, cfg.rtol * fnorm0);
  record(fnorm, x, gb0, 0);
  if (fnorm <= thresh) {
    trace.termination = Termination::Converged;
    return trace;
  }

  DirectionWindow window(cfg.m, WindowMode::MovingWindow);
  auto seed_window = [&]() -> std::pair<bool, int> {
    Vector r = -fx;
    auto [v, hb] = hvp_at(x, r);
    OrthoResult o =
        window_orthonormalize(std::move(r), std::move(v), window, ortho, &trace.ortho_dot_count);
    if (o.breakdown) return {false, hb};
    window.push(std::move(o.p), std::move(o.v));
    return {true, hb};
  };
  if (!seed_window().first) {
    trace.termination = Termination::Breakdown;
    return trace;
  }

  int consecutive_safeguards = 0;
  for (std::size_t j = 0; j < cfg.max_iter; ++j) {
    Vector r = -fx;
    Vector y = detail::window_coeffs(window, r, cfg.solve_small_least_squares,
                                     &trace.ortho_dot_count);
    StepRecord step;

    bool check_pass = true;
    if (cfg.residual_check) {
      const double eta_n = cfg.residual_check->forcing
                               ? std::min(cfg.residual_check->eta, fnorm)
                               : cfg.residual_check->eta;
      const ResidualCheckResult rc = residual_check(window, y, fx, eta_n);
      check_pass = rc.pass;
      step.residual_check_pass = rc.pass;
    }
    const bool stagnant = y.norm() <= 1e-15 * std::max(1.0, fnorm);

    const Vector x_before = x;
    if (check_pass && !stagnant) {
      Vector delta = window.pmat() * y;
      if (opts.momentum > 0.0) delta += opts.momentum * (x - x_prev);
      x += delta;
      step.y = y;
      step.delta = std::move(delta);
      consecutive_safeguards = 0;
    } else if (!check_pass &&
               cfg.residual_check->on_fail == OnCheckFail::Ignore && !stagnant) {
      Vector delta = window.pmat() * y;
      x += delta;
      step.y = y;
      step.delta = std::move(delta);
    } else {
      const double b0 = cfg.residual_check ? cfg.residual_check->safeguard_damping : 1.0;
      x += b0 * r;
      window.clear();
      step.safeguard_taken = true;
      ++consecutive_safeguards;
    }
    x_prev = x_before;

    auto [fnew, gb] = gradient_at(x, j + 1);
    fx = std::move(fnew);
    fnorm = fx.norm();
    trace.steps.push_back(std::move(step));

    if (!std::isfinite(fnorm)) {
      record(fnorm, x, gb, 0);
      trace.termination = Termination::Diverged;
      return trace;
    }
    if (fnorm <= thresh) {
      record(fnorm, x, gb, 0);
      trace.termination = Termination::Converged;
      return trace;
    }
    if (cfg.residual_check && consecutive_safeguards > cfg.residual_check->max_safeguards) {
      record(fnorm, x, gb, 0);
      trace.termination = Termination::SafeguardExhausted;
      return trace;
    }
    if (j + 1 == cfg.max_iter) {
      record(fnorm, x, gb, 0);
      break;
    }

    if (cfg.restart_period && (j + 1) % *cfg.restart_period == 0) window.clear();

    int hb = 0;
    if (window.empty()) {
      auto [ok, hb2] = seed_window();
      hb = hb2;
      if (!ok) {
        record(fnorm, x, gb, hb);
        trace.termination = Termination::Breakdown;
        return trace;
      }
    } else {
      Vector p = -fx;
      auto [v, hb2] = hvp_at(x, p);
      hb = hb2;
      OrthoResult next = window_orthonormalize(std::move(p), std::move(v), window, ortho,
                                               &trace.ortho_dot_count);
      if (next.breakdown) {
        window.clear();
        auto [ok, hb3] = seed_window();
        hb = hb3;
        if (!ok) {
          record(fnorm, x, gb, hb);
          trace.termination = Termination::Breakdown;
          return trace;
        }
      } else {
        window.push(std::move(next.p), std::move(next.v));
      }
    }
    record(fnorm, x, gb, hb);
  }
  trace.termination = Termination::MaxIter;
  return trace;
}

struct NewtonStepPolicy {
  double step = 1.0;
  std::size_t max_iter = 100;
  double rtol = 1e-10;
  double atol = 0.0;
};

/// Subsampled exact Newton baseline:
/// x <- x - s J(x; H)^{-1} F(x; G) with dense subsampled Hessians.
/// A singular Hessian factorization falls back to Tikhonov damping with
/// lambda = 1e-8 trace/d.
inline SolveTrace subsampled_newton(const FiniteSumProblem& problem, const Vector& x0,
                                    const BatchSchedule& schedule, const NewtonStepPolicy& policy) {
  require_dim(x0, problem.dim, "subsampled_newton x0");
  if (problem.dim > 512) throw DimensionMismatch("subsampled_newton: dense Hessian limited to d <= 512");

  SolveTrace trace;
  const bool store = problem.dim <= 1024;
  auto record = [&](double gnorm, const Vector& x, int gbatch, int hbatch) {
    trace.residual_norms.push_back(gnorm);
    if (problem.objective) trace.objective.push_back(problem.objective(x));
    trace.fevals_at.push_back(trace.feval_count);
    trace.matvecs_at.push_back(trace.matvec_count);
    trace.grad_batches.push_back(gbatch);
    trace.hess_batches.push_back(hbatch);
    if (problem.x_star) trace.error_to_star.push_back((x - *problem.x_star).norm());
    if (store) trace.iterates.push_back(x);
  };

  Vector x = x0;
  std::uint64_t draw = 0;
  double gnorm0 = 0.0;
  for (std::size_t i = 0; i <= policy.max_iter; ++i) {
    const auto gidx = detail::draw_batch(problem, schedule.grad_batch(i), schedule.seed,
                                         derive_seed(1, draw++));
    trace.feval_count += static_cast<long>(gidx.size());
    const Vector g = problem.batch_gradient(x, gidx);
    const double gnorm = g.norm();
    if (i == 0) gnorm0 = gnorm;
    record(gnorm, x, static_cast<int>(gidx.size()), 0);
    if (!std::isfinite(gnorm)) {
      trace.termination = Termination::Diverged;
      return trace;
    }
    if (gnorm <= std::max(policy.atol, policy.rtol * gnorm0)) {
      trace.termination = Termination::Converged;
      return trace;
    }
    if (i == policy.max_iter) break;

    const auto hidx =
        detail::draw_batch(problem, schedule.hess_batch, schedule.seed, derive_seed(2, draw++));
    trace.matvec_count += static_cast<long>(hidx.size()) * problem.dim;
    Matrix h = problem.batch_hessian(x, hidx);

    Vector delta;
    double damp = 0.0;
    for (int attempt = 0; attempt < 8; ++attempt) {
      Eigen::LDLT<Matrix> ldlt(h + damp * Matrix::Identity(problem.dim, problem.dim));
      if (ldlt.info() == Eigen::Success) {
        delta = ldlt.solve(g);
        if (delta.allFinite()) break;
      }
      damp = damp == 0.0 ? 1e-8 * h.trace() / static_cast<double>(problem.dim) : damp * 10.0;
      delta.resize(0);
    }
    if (delta.size() == 0) {
      trace.termination = Termination::Breakdown;
      return trace;
    }
    x -= policy.step * delta;
  }
  trace.termination = Termination::MaxIter;
  return trace;
}

/// Constructive realization of the stochastic assumptions: components
/// f_i(x) = 1/2 (x - c_i)^T H_i (x - c_i) with H_i = Q diag(lam_i) Q^T,
/// spectra inside [mu, L] (endpoints hit by component 0), exact x*, and
/// measured sigma / C constants. Quadratics make the Hessian-Lipschitz
/// constant exactly zero.
inline FiniteSumProblem make_quadratic_finite_sum(Index d, int n_components, double mu, double L,
                                                  std::uint64_t seed, double center_spread = 1.0) {
  if (!(mu > 0.0 && mu <= L)) throw SolverError("make_quadratic_finite_sum: 0 < mu <= L required");
  if (d < 1 || n_components < 1) throw SolverError("make_quadratic_finite_sum: bad sizes");

  Rng rng(derive_seed(seed, 0xf1f0));
  struct State {
    Matrix q;        // shared eigenvectors
    Matrix lambdas;  // N x d spectra
    Matrix centers;  // N x d
  };
  auto st = std::make_shared<State>();
  st->q = rng.orthogonal(d);
  st->lambdas.resize(n_components, d);
  st->centers.resize(n_components, d);
  for (int i = 0; i < n_components; ++i) {
    for (Index j = 0; j < d; ++j) st->lambdas(i, j) = rng.uniform(mu, L);
    st->centers.row(i) = center_spread * rng.normal_vector(d).transpose();
  }
  // pin the declared band exactly
  st->lambdas(0, 0) = mu;
  if (d > 1) st->lambdas(0, d - 1) = L;
  else if (n_components > 1) st->lambdas(1, 0) = L;

  FiniteSumProblem problem;
  problem.dim = d;
  problem.num_components = n_components;
  problem.component_grad = [st](const Vector& x, int i) {
    const Vector z = st->q.transpose() * (x - st->centers.row(i).transpose());
    return Vector(st->q * st->lambdas.row(i).transpose().cwiseProduct(z));
  };
  problem.component_hvp = [st](const Vector&, int i, const Vector& u) {
    const Vector z = st->q.transpose() * u;
    return Vector(st->q * st->lambdas.row(i).transpose().cwiseProduct(z));
  };
  const int n = n_components;
  problem.objective = [st, n](const Vector& x) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      const Vector z = st->q.transpose() * (x - st->centers.row(i).transpose());
      acc += 0.5 * z.dot(st->lambdas.row(i).transpose().cwiseProduct(z));
    }
    return acc / static_cast<double>(n);
  };

  // exact minimizer of the mean: (sum H_i)^{-1} sum H_i c_i, in Q-coordinates
  const Vector lam_mean = st->lambdas.colwise().mean().transpose();
  Vector weighted = Vector::Zero(d);
  for (int i = 0; i < n; ++i) {
    weighted += st->lambdas.row(i).transpose().cwiseProduct(
        Vector(st->q.transpose() * st->centers.row(i).transpose()));
  }
  weighted /= static_cast<double>(n);
  problem.x_star = Vector(st->q * weighted.cwiseQuotient(lam_mean));

  FiniteSumConstants constants;
  constants.mu = mu;
  constants.L = L;
  constants.M = 0.0;
  // sigma: RMS single-sample Hessian deviation in spectral norm
  {
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      acc += std::pow((st->lambdas.row(i).transpose() - lam_mean).cwiseAbs().maxCoeff(), 2);
    constants.sigma = std::sqrt(acc / static_cast<double>(n));
  }
  // C: max over probe points of sqrt(tr Cov1(F)); probes cover the region
  // tests operate in (around x*, radius up to the center spread + margin)
  {
    Rng probe_rng(derive_seed(seed, 0xcc));
    const double radius = st->centers.rowwise().norm().maxCoeff() + 3.0;
    double worst = 0.0;
    for (int t = 0; t < 8; ++t) {
      Vector x = *problem.x_star;
      if (t > 0) x += radius * probe_rng.normal_vector(d).normalized() * (t % 3 + 1) / 3.0;
      const Vector mean = problem.full_gradient(x);
      double tr = 0.0;
      for (int i = 0; i < n; ++i) tr += (problem.component_grad(x, i) - mean).squaredNorm();
      worst = std::max(worst, tr / static_cast<double>(n));
    }
    constants.C = std::sqrt(worst);
  }
  problem.constants = constants;
  return problem;
}

}  // namespace kaccel
