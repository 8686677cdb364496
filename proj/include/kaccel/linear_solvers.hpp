#pragma once

#include "kaccel/operator.hpp"
#include "kaccel/trace.hpp"
#include "kaccel/types.hpp"
#include "kaccel/window.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace kaccel {

struct LinearSolveConfig {
  std::size_t m = 1;                 // window size; kFullMemory = keep everything
  std::size_t max_iter = 1000;
  double rtol = 1e-10;
  double atol = 0.0;
  WindowMode window_mode = WindowMode::MovingWindow;
  std::optional<std::size_t> restart_period;  // Restart mode: clear every k iterations
  int mgs_passes = 1;
  bool store_iterates = false;       // forced on when dim <= 1024

  void validate() const {
    if (m < 1) throw SolverError("LinearSolveConfig: m >= 1 required");
    if (!(rtol > 0.0 && rtol < 1.0)) throw SolverError("LinearSolveConfig: rtol in (0,1) required");
    if (atol < 0.0) throw SolverError("LinearSolveConfig: atol >= 0 required");
    if (max_iter == 0) throw SolverError("LinearSolveConfig: max_iter >= 1 required");
  }
};

namespace detail {

inline bool should_store(const LinearSolveConfig& cfg, Index dim) {
  return cfg.store_iterates || dim <= 1024;
}

inline void record(SolveTrace& t, double rnorm, bool store, const Vector& x) {
  t.residual_norms.push_back(rnorm);
  t.fevals_at.push_back(t.feval_count);
  t.matvecs_at.push_back(t.matvec_count);
  if (store) t.iterates.push_back(x);
}

}  // namespace detail

/// Truncated generalized conjugate residual, moving window of m direction
/// pairs. Each step minimizes ||b - A x|| over the current window span; the
/// stored images A p_i stay orthonormal so the step reduces to a single dot
/// product alpha_j = (r_j, v_j).
inline SolveTrace tgcr_solve(const LinearOperator& a, const Vector& b, const Vector& x0,
                             const LinearSolveConfig& cfg) {
  cfg.validate();
  require_dim(b, a.dim(), "tgcr_solve b");
  require_dim(x0, a.dim(), "tgcr_solve x0");
  require_finite(b, "tgcr_solve b");
  require_finite(x0, "tgcr_solve x0");

  SolveTrace trace;
  const bool store = detail::should_store(cfg, a.dim());
  const OrthoOptions ortho{cfg.mgs_passes, 1e-14};

  Vector x = x0;
  Vector r;
  if (x0.isZero(0.0)) {
    r = b;
  } else {
    r = b - a.apply(x0);
    ++trace.matvec_count;
  }
  double rnorm = r.norm();
  const double rnorm0 = rnorm;
  const double thresh = std::max(cfg.atol, cfg.rtol * rnorm0);
  detail::record(trace, rnorm, store, x);
  if (rnorm <= thresh) {
    trace.termination = Termination::Converged;
    return trace;
  }

  DirectionWindow window(cfg.m, cfg.window_mode);
  Vector v = a.apply(r);
  ++trace.matvec_count;
  {
    OrthoResult init = window_orthonormalize(r, v, window, ortho, &trace.ortho_dot_count);
    if (init.breakdown) {
      trace.termination = Termination::Breakdown;
      return trace;
    }
    window.push(std::move(init.p), std::move(init.v));
  }

  for (std::size_t j = 0; j < cfg.max_iter; ++j) {
    const double alpha = r.dot(window.newest_v());
    ++trace.ortho_dot_count;
    x += alpha * window.newest_p();
    r -= alpha * window.newest_v();
    rnorm = r.norm();
    trace.step_coeffs.push_back(Vector::Constant(1, alpha));
    detail::record(trace, rnorm, store, x);

    if (!std::isfinite(rnorm) || rnorm > 1e8 * rnorm0) {
      trace.termination = Termination::Diverged;
      return trace;
    }

    if (cfg.window_mode == WindowMode::Restart && cfg.restart_period &&
        (j + 1) % *cfg.restart_period == 0) {
      window.clear();
    }

    // the loop always prepares the next direction (one A.r per step); a
    // breakdown here at a converged residual is just lucky termination
    Vector p = r;
    v = a.apply(p);
    ++trace.matvec_count;
    trace.matvecs_at.back() = trace.matvec_count;
    const bool converged = rnorm <= thresh;
    OrthoResult next = window_orthonormalize(std::move(p), std::move(v), window, ortho,
                                             &trace.ortho_dot_count);
    if (converged) {
      trace.termination = Termination::Converged;
      return trace;
    }
    if (next.breakdown) {
      trace.termination = Termination::Breakdown;
      return trace;
    }
    window.push(std::move(next.p), std::move(next.v));
  }
  trace.termination = Termination::MaxIter;
  return trace;
}

/// Full GCR: TGCR with the entire direction history retained.
inline SolveTrace gcr_solve(const LinearOperator& a, const Vector& b, const Vector& x0,
                            LinearSolveConfig cfg) {
  cfg.m = kFullMemory;
  return tgcr_solve(a, b, x0, cfg);
}

/// Textbook conjugate gradient. Negative curvature (p, Ap) <= 0 terminates
/// with Breakdown; that is the expected failure mode on indefinite systems.
inline SolveTrace cg_solve(const LinearOperator& a, const Vector& b, const Vector& x0,
                           const LinearSolveConfig& cfg) {
  cfg.validate();
  require_dim(b, a.dim(), "cg_solve b");
  require_dim(x0, a.dim(), "cg_solve x0");

  SolveTrace trace;
  const bool store = detail::should_store(cfg, a.dim());
  Vector x = x0;
  Vector r;
  if (x0.isZero(0.0)) {
    r = b;
  } else {
    r = b - a.apply(x0);
    ++trace.matvec_count;
  }
  double rnorm = r.norm();
  const double rnorm0 = rnorm;
  const double thresh = std::max(cfg.atol, cfg.rtol * rnorm0);
  detail::record(trace, rnorm, store, x);
  if (rnorm <= thresh) {
    trace.termination = Termination::Converged;
    return trace;
  }

  Vector p = r;
  double rr = r.squaredNorm();
  for (std::size_t j = 0; j < cfg.max_iter; ++j) {
    const Vector ap = a.apply(p);
    ++trace.matvec_count;
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) {
      trace.termination = Termination::Breakdown;
      return trace;
    }
    const double alpha = rr / pap;
    x += alpha * p;
    r -= alpha * ap;
    rnorm = r.norm();
    trace.step_coeffs.push_back(Vector::Constant(1, alpha));
    detail::record(trace, rnorm, store, x);
    if (!std::isfinite(rnorm) || rnorm > 1e8 * rnorm0) {
      trace.termination = Termination::Diverged;
      return trace;
    }
    if (rnorm <= thresh) {
      trace.termination = Termination::Converged;
      return trace;
    }
    const double rr_new = r.squaredNorm();
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  trace.termination = Termination::MaxIter;
  return trace;
}

/// Full-memory GMRES (MGS Arnoldi + Givens). Happy breakdown counts as
/// convergence. No restarts: the comparisons this backs use full GMRES.
inline SolveTrace gmres_solve(const LinearOperator& a, const Vector& b, const Vector& x0,
                              const LinearSolveConfig& cfg) {
  cfg.validate();
  require_dim(b, a.dim(), "gmres_solve b");
  require_dim(x0, a.dim(), "gmres_solve x0");

  SolveTrace trace;
  const bool store = detail::should_store(cfg, a.dim());
  const Index n = a.dim();
  Vector x = x0;
  Vector r;
  if (x0.isZero(0.0)) {
    r = b;
  } else {
    r = b - a.apply(x0);
    ++trace.matvec_count;
  }
  const double beta0 = r.norm();
  const double thresh = std::max(cfg.atol, cfg.rtol * beta0);
  detail::record(trace, beta0, store, x);
  if (beta0 <= thresh) {
    trace.termination = Termination::Converged;
    return trace;
  }

  const std::size_t kmax = std::min<std::size_t>(cfg.max_iter, static_cast<std::size_t>(n));
  Matrix basis(n, kmax + 1);
  Matrix hess = Matrix::Zero(kmax + 1, kmax);
  std::vector<double> cs(kmax), sn(kmax);
  Vector g = Vector::Zero(kmax + 1);
  g[0] = beta0;
  basis.col(0) = r / beta0;

  auto reconstruct = [&](std::size_t k) {
    // solve the k x k triangular system R y = g
    Vector y(k);
    for (Index i = static_cast<Index>(k) - 1; i >= 0; --i) {
      double acc = g[i];
      for (Index l = i + 1; l < static_cast<Index>(k); ++l) acc -= hess(i, l) * y[l];
      y[i] = acc / hess(i, i);
    }
    Vector sol = x0;
    for (std::size_t l = 0; l < k; ++l) sol += y[l] * basis.col(static_cast<Index>(l));
    return sol;
  };

  std::size_t k = 0;
  bool happy = false;
  for (; k < kmax; ++k) {
    Vector w = a.apply(basis.col(static_cast<Index>(k)));
    ++trace.matvec_count;
    for (std::size_t i = 0; i <= k; ++i) {
      const double h = w.dot(basis.col(static_cast<Index>(i)));
      ++trace.ortho_dot_count;
      hess(static_cast<Index>(i), static_cast<Index>(k)) = h;
      w -= h * basis.col(static_cast<Index>(i));
    }
    const double hk1 = w.norm();
    ++trace.ortho_dot_count;
    hess(static_cast<Index>(k) + 1, static_cast<Index>(k)) = hk1;
    if (hk1 > 1e-14 * std::max(1.0, beta0)) {
      basis.col(static_cast<Index>(k) + 1) = w / hk1;
    } else {
      happy = true;
    }

    // apply stored rotations, then the new one
    for (std::size_t i = 0; i < k; ++i) {
      const double t1 = cs[i] * hess(i, k) + sn[i] * hess(i + 1, k);
      const double t2 = -sn[i] * hess(i, k) + cs[i] * hess(i + 1, k);
      hess(static_cast<Index>(i), static_cast<Index>(k)) = t1;
      hess(static_cast<Index>(i) + 1, static_cast<Index>(k)) = t2;
    }
    const double denom = std::hypot(hess(k, k), hess(k + 1, k));
    cs[k] = hess(k, k) / denom;
    sn[k] = hess(k + 1, k) / denom;
    hess(static_cast<Index>(k), static_cast<Index>(k)) = denom;
    hess(static_cast<Index>(k) + 1, static_cast<Index>(k)) = 0.0;
    g[k + 1] = -sn[k] * g[k];
    g[k] *= cs[k];

    const double rnorm = std::abs(g[k + 1]);
    x = reconstruct(k + 1);
    detail::record(trace, rnorm, store, x);
    if (rnorm <= thresh || happy) {
      trace.termination = Termination::Converged;
      return trace;
    }
  }
  trace.termination = Termination::MaxIter;
  return trace;
}

/// Brute-force optimal Krylov residual: min ||f(A) r0|| over residual
/// polynomials f of degree k with f(0) = 1, computed from an explicit
/// orthonormal basis of K_k(A, r0) and a dense least-squares solve. This is
/// the oracle the iterative solvers are checked against; it shares no code
/// path with them.
inline double krylov_optimal_residual(const LinearOperator& a, const Vector& r0, std::size_t k) {
  require_dim(r0, a.dim(), "krylov_optimal_residual r0");
  const double r0norm = r0.norm();
  if (k == 0 || r0norm == 0.0) return r0norm;
  k = std::min<std::size_t>(k, static_cast<std::size_t>(a.dim()));

  // Orthonormal basis W of K_k(A, r0); stop early if the space degenerates.
  std::vector<Vector> basis;
  Vector w = r0 / r0norm;
  basis.push_back(w);
  for (std::size_t j = 1; j < k; ++j) {
    Vector t = a.apply(basis.back());
    for (int pass = 0; pass < 2; ++pass)
      for (const Vector& q : basis) t -= q.dot(t) * q;
    const double tn = t.norm();
    if (tn <= 1e-12 * std::max(1.0, r0norm)) break;  // degenerate: exact min over smaller space
    basis.push_back(t / tn);
  }

  const Index dim = a.dim();
  const Index s = static_cast<Index>(basis.size());
  Matrix aw(dim, s);
  for (Index j = 0; j < s; ++j) aw.col(j) = a.apply(basis[static_cast<std::size_t>(j)]);
  // min_y || r0 - AW y ||
  Vector y = aw.colPivHouseholderQr().solve(r0);
  return (r0 - aw * y).norm();
}

}  // namespace kaccel
