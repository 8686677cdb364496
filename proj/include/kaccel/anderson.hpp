#pragma once

#include "kaccel/residual_map.hpp"
#include "kaccel/trace.hpp"
#include "kaccel/types.hpp"

#include <algorithm>
#include <deque>
#include <optional>

namespace kaccel {

/// Sliding history of iterate and residual differences for AA(m).
class AAHistory {
 public:
  AAHistory(Index dim, std::size_t capacity, double beta_mix)
      : dim_(dim), capacity_(capacity), beta_mix_(beta_mix) {}

  void push(Vector dx, Vector df) {
    dx_.push_back(std::move(dx));
    df_.push_back(std::move(df));
    if (capacity_ != kFullMemory && dx_.size() > capacity_) {
      dx_.pop_front();
      df_.pop_front();
    }
  }

  void clear() {
    dx_.clear();
    df_.clear();
  }

  std::size_t size() const { return dx_.size(); }
  bool empty() const { return dx_.empty(); }
  Index dim() const { return dim_; }
  double beta_mix() const { return beta_mix_; }

  Matrix xmat() const { return stack(dx_); }
  Matrix fmat() const { return stack(df_); }

 private:
  Matrix stack(const std::deque<Vector>& cols) const {
    Matrix m(dim_, static_cast<Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) m.col(static_cast<Index>(j)) = cols[j];
    return m;
  }

  Index dim_;
  std::size_t capacity_;
  double beta_mix_;
  std::deque<Vector> dx_;
  std::deque<Vector> df_;
};

struct AAConfig {
  std::size_t max_iter = 500;
  double rtol = 1e-10;
  double atol = 0.0;
  bool store_iterates = false;
  std::optional<Vector> x_star;
};

/// Anderson acceleration on F(x) = H(x) - x = 0. The mixing coefficients
/// solve argmin_theta ||F_j - dF theta||_2 by a rank-revealing
/// factorization (minimum-norm solution when the difference matrix is rank
/// deficient); the update is x_{j+1} = x_j + beta F_j - (dX + beta dF) theta.
inline SolveTrace aa_solve(const ResidualMap& f, const Vector& x0, std::size_t m, double beta,
                           const AAConfig& cfg = {}) {
  if (m < 1) throw SolverError("aa_solve: m >= 1 required");
  if (beta < 0.0) throw SolverError("aa_solve: beta >= 0 required");
  require_dim(x0, f.dim(), "aa_solve x0");
  require_finite(x0, "aa_solve x0");

  SolveTrace trace;
  const bool store = cfg.store_iterates || f.dim() <= 1024;
  auto record = [&](double fnorm, const Vector& x) {
    trace.residual_norms.push_back(fnorm);
    trace.fevals_at.push_back(f.feval_count());
    trace.matvecs_at.push_back(trace.matvec_count);
    if (cfg.x_star) trace.error_to_star.push_back((x - *cfg.x_star).norm());
    if (store) trace.iterates.push_back(x);
  };

  AAHistory history(f.dim(), m, beta);
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

  // first step: plain damped fixed-point move (beta = 0 still needs a kick)
  const double beta0 = beta > 0.0 ? beta : 1.0;
  Vector x_prev = x;
  Vector f_prev = fx;
  x += beta0 * fx;

  for (std::size_t j = 1; j <= cfg.max_iter; ++j) {
    fx = f.eval(x);
    fnorm = fx.norm();
    if (!fx.allFinite()) {
      record(fnorm, x);
      trace.feval_count = f.feval_count();
      trace.termination = Termination::Diverged;
      return trace;
    }
    history.push(x - x_prev, fx - f_prev);
    record(fnorm, x);
    trace.feval_count = f.feval_count();
    if (fnorm <= thresh) {
      trace.termination = Termination::Converged;
      return trace;
    }
    if (fnorm > 1e8 * std::max(1.0, fnorm0)) {
      trace.termination = Termination::Diverged;
      return trace;
    }
    if (j == cfg.max_iter) break;

    const Matrix fdiff = history.fmat();
    const Matrix xdiff = history.xmat();
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(fdiff);
    const Vector theta = cod.solve(fx);
    // instrumented cost of the small least-squares problem: a Householder
    // sweep over s columns of length n plus the projected right-hand side
    const long s = static_cast<long>(history.size());
    trace.ortho_dot_count += s * (s + 1) / 2 + s;
    trace.step_coeffs.push_back(theta);

    x_prev = x;
    f_prev = fx;
    x += beta * fx - (xdiff + beta * fdiff) * theta;
  }
  trace.termination = Termination::MaxIter;
  return trace;
}

/// Multisecant approximate inverse Jacobian implied by the AA history:
/// G = dX pinv(dF), i.e. the minimizer of ||G||_F under G dF = dX. Empty
/// history yields the zero matrix (the G_{j-m} = 0 convention).
inline Matrix aa_multisecant_matrix(const AAHistory& history) {
  const Index n = history.dim();
  if (history.empty()) return Matrix::Zero(n, n);
  const Matrix fdiff = history.fmat();
  const Matrix xdiff = history.xmat();
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(fdiff);
  return xdiff * cod.pseudoInverse();
}

}  // namespace kaccel
