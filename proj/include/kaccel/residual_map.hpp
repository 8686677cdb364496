#pragma once

#include "kaccel/types.hpp"

#include <functional>
#include <memory>
#include <utility>

namespace kaccel {

/// Nonlinear map F(x) with an evaluation counter and an optional exact
/// Jacobian-vector product. One instance per solve: the counter is plain
/// (solvers are single-threaded; run concurrent solves on distinct instances).
class ResidualMap {
 public:
  using EvalFn = std::function<Vector(const Vector&)>;
  using JvpFn = std::function<Vector(const Vector&, const Vector&)>;

  ResidualMap(Index dim, EvalFn eval, JvpFn jvp_exact = nullptr)
      : dim_(dim), eval_(std::move(eval)), jvp_(std::move(jvp_exact)) {
    if (dim_ <= 0) throw DimensionMismatch("ResidualMap: dim must be positive");
  }

  Vector eval(const Vector& x) const {
    require_dim(x, dim_, "ResidualMap::eval");
    ++feval_count_;
    Vector f = eval_(x);
    if (f.size() != dim_) throw DimensionMismatch("ResidualMap::eval: map changed dimension");
    return f;
  }

  bool has_exact_jvp() const { return static_cast<bool>(jvp_); }

  /// J(x) u via the user-supplied exact product. Does not count as an eval.
  Vector jvp_exact(const Vector& x, const Vector& u) const {
    if (!jvp_) throw SolverError("ResidualMap: no exact jvp available");
    require_dim(x, dim_, "ResidualMap::jvp_exact");
    require_dim(u, dim_, "ResidualMap::jvp_exact");
    return jvp_(x, u);
  }

  Index dim() const { return dim_; }
  long feval_count() const { return feval_count_; }
  void reset_feval_count() const { feval_count_ = 0; }

 private:
  Index dim_;
  EvalFn eval_;
  JvpFn jvp_;
  mutable long feval_count_ = 0;
};

/// F(x) = A x - b as a ResidualMap (exact jvp = A u).
template <typename Op>
ResidualMap affine_residual(const Op& a, const Vector& b) {
  return ResidualMap(
      a.dim(), [&a, b](const Vector& x) { return Vector(a.apply(x) - b); },
      [&a](const Vector&, const Vector& u) { return a.apply(u); });
}

}  // namespace kaccel
