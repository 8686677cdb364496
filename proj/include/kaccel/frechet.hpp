#pragma once

#include "kaccel/residual_map.hpp"
#include "kaccel/types.hpp"

#include <cmath>
#include <limits>
#include <optional>

namespace kaccel {

/// Step-size policy for the forward-difference Jacobian-vector product
/// v = (F(x + eps u) - F(x)) / eps. The default scaling
/// eps = sqrt(machine eps) * (1 + ||x||) / ||u|| is the customary
/// Newton-Krylov choice; a fixed eps can be forced for experiments.
struct FrechetPolicy {
  double base = std::sqrt(std::numeric_limits<double>::epsilon());
  std::optional<double> fixed_eps;

  double step(const Vector& x, double unorm) const {
    if (fixed_eps) return *fixed_eps;
    return base * (1.0 + x.norm()) / unorm;
  }
};

/// Forward-difference J(x) u. Consumes two evals of F, or one when the
/// caller already has F(x).
inline Vector frechet_jvp(const ResidualMap& f, const Vector& x, const Vector& u,
                          const FrechetPolicy& policy = {},
                          const Vector* fx_cached = nullptr) {
  require_finite(x, "frechet_jvp x");
  const double unorm = u.norm();
  if (unorm == 0.0) throw ZeroDirection("frechet_jvp: zero direction");
  const double eps = policy.step(x, unorm);
  const Vector fx = fx_cached ? *fx_cached : f.eval(x);
  const Vector fp = f.eval(x + eps * u);
  Vector v = (fp - fx) / eps;
  if (!v.allFinite()) throw NonFiniteError("frechet_jvp: non-finite difference quotient");
  return v;
}

/// J(x) u by whichever route the map supports; exact product preferred.
inline Vector apply_jacobian(const ResidualMap& f, const Vector& x, const Vector& u,
                             const FrechetPolicy& policy = {},
                             const Vector* fx_cached = nullptr) {
  if (f.has_exact_jvp()) return f.jvp_exact(x, u);
  return frechet_jvp(f, x, u, policy, fx_cached);
}

}  // namespace kaccel
