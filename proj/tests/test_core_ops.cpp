#include <catch2/catch_amalgamated.hpp>

#include "kaccel/frechet.hpp"
#include "kaccel/operator.hpp"
#include "kaccel/residual_map.hpp"
#include "kaccel/rng.hpp"
#include "kaccel/window.hpp"

using namespace kaccel;

namespace {

ResidualMap quadratic_map() {
  // F(x) = (x1^2, x2^2), J(x) = diag(2 x1, 2 x2)
  return ResidualMap(
      2, [](const Vector& x) { return Vector(x.array().square()); },
      [](const Vector& x, const Vector& u) { return Vector(2.0 * x.array() * u.array()); });
}

}  // namespace

TEST_CASE("frechet_jvp is exact for affine maps") {
  Matrix a(2, 2);
  a << 2, 0, 0, 3;
  auto op = LinearOperator::from_dense(a);
  Vector b = Vector::Zero(2);
  ResidualMap f = affine_residual(op, b);

  Vector x = Vector::Zero(2);
  Vector u(2);
  u << 1, 0;
  Vector v = frechet_jvp(f, x, u);
  REQUIRE(v[0] == Catch::Approx(2.0).margin(1e-12));
  REQUIRE(v[1] == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(f.feval_count() == 2);

  // identity residual
  ResidualMap id(2, [](const Vector& z) { return z; });
  Vector ones = Vector::Ones(2);
  Vector w = frechet_jvp(id, x, ones);
  REQUIRE((w - ones).norm() < 1e-12);

  // relative error <= 1e-10 across the policy range, independent of eps
  Vector xg(2);
  xg << 0.3, -1.7;
  const Vector exact = f.jvp_exact(xg, u);
  for (double eps : {1e-3, 1e-4, 1e-5}) {
    FrechetPolicy pol;
    pol.fixed_eps = eps;
    const double rel = (frechet_jvp(f, xg, u, pol) - exact).norm() / exact.norm();
    REQUIRE(rel <= 1e-10);
  }
}

TEST_CASE("frechet_jvp matches a hand-differentiated Jacobian") {
  ResidualMap f = quadratic_map();
  Vector x(2);
  x << 1, 2;
  Vector u(2);
  u << 1, 0;
  FrechetPolicy pol;
  pol.fixed_eps = 1e-6;
  Vector v = frechet_jvp(f, x, u, pol);
  // J(x) u = (2 x1 u1, 0) = (2, 0)
  REQUIRE(std::abs(v[0] - 2.0) < 1e-5);
  REQUIRE(std::abs(v[1] - 0.0) < 1e-9);
}

TEST_CASE("frechet_jvp error halves when eps halves") {
  ResidualMap f = quadratic_map();
  Vector x(2);
  x << 1.3, -0.4;
  Vector u = Vector::Ones(2).normalized();
  const Vector exact = f.jvp_exact(x, u);

  double prev_err = -1.0;
  for (double eps : {1e-4, 5e-5, 2.5e-5}) {
    FrechetPolicy pol;
    pol.fixed_eps = eps;
    const double err = (frechet_jvp(f, x, u, pol) - exact).norm() / exact.norm();
    if (prev_err > 0) {
      const double ratio = prev_err / err;
      REQUIRE(ratio > 2.0 / 4.0);
      REQUIRE(ratio < 2.0 * 4.0);
    }
    prev_err = err;
  }
}

TEST_CASE("frechet_jvp rejects zero directions and uses cached F(x)") {
  ResidualMap f = quadratic_map();
  Vector x = Vector::Ones(2);
  REQUIRE_THROWS_AS(frechet_jvp(f, x, Vector::Zero(2)), ZeroDirection);

  f.reset_feval_count();
  Vector fx = f.eval(x);
  REQUIRE(f.feval_count() == 1);
  frechet_jvp(f, x, Vector::Ones(2), {}, &fx);
  REQUIRE(f.feval_count() == 2);  // one extra eval only
}

TEST_CASE("window_orthonormalize: plain normalization on an empty window") {
  DirectionWindow w(3);
  Vector p(2), v(2);
  p << 1, 1;
  v << 1, 2;
  auto res = window_orthonormalize(p, v, w);
  REQUIRE(!res.breakdown);
  REQUIRE(res.betas.empty());
  const double s = std::sqrt(5.0);
  REQUIRE((res.p - Vector(p / s)).norm() < 1e-14);
  REQUIRE((res.v - Vector(v / s)).norm() < 1e-14);
}

TEST_CASE("window_orthonormalize: dependent direction breaks down") {
  DirectionWindow w(2);
  Vector e1(2);
  e1 << 1, 0;
  w.push(e1, e1);
  auto res = window_orthonormalize(e1, e1, w);
  REQUIRE(res.breakdown);
}

TEST_CASE("window_orthonormalize: hand-executed MGS step on diag(1,2)") {
  // window holds the normalized first pair of the diag(1,2) system
  DirectionWindow w(2);
  const double s = std::sqrt(5.0);
  Vector p0(2), v0(2);
  p0 << 1 / s, 1 / s;
  v0 << 1 / s, 2 / s;
  w.push(p0, v0);

  Vector p(2), v(2);
  p << 0.4, -0.2;
  v << 0.4, -0.4;
  auto res = window_orthonormalize(p, v, w);
  REQUIRE(!res.breakdown);
  REQUIRE(res.betas.size() == 1);
  REQUIRE(res.betas[0] == Catch::Approx(-0.4 / s).epsilon(1e-12));
  REQUIRE(res.p[0] == Catch::Approx(0.89443).margin(1e-5));
  REQUIRE(res.p[1] == Catch::Approx(-0.22361).margin(1e-5));
  REQUIRE(res.v[0] == Catch::Approx(0.89443).margin(1e-5));
  REQUIRE(res.v[1] == Catch::Approx(-0.44721).margin(1e-5));
}

TEST_CASE("window_orthonormalize is idempotent on its output") {
  Rng rng(7);
  const Index n = 12;
  DirectionWindow w(4);
  for (int i = 0; i < 4; ++i) {
    auto res = window_orthonormalize(rng.normal_vector(n), rng.normal_vector(n), w);
    REQUIRE(!res.breakdown);
    w.push(res.p, res.v);
  }
  // drop the newest, re-orthonormalize it against the remaining window
  DirectionWindow w3(4);
  for (std::size_t i = 0; i + 1 < w.size(); ++i) w3.push(w.p(i), w.v(i));
  auto again = window_orthonormalize(w.newest_p(), w.newest_v(), w3);
  REQUIRE(!again.breakdown);
  for (double beta : again.betas) REQUIRE(std::abs(beta) <= 1e-10);
}

TEST_CASE("window evicts oldest pair at capacity") {
  DirectionWindow w(2);
  Vector a = Vector::Unit(3, 0), b = Vector::Unit(3, 1), c = Vector::Unit(3, 2);
  w.push(a, a);
  w.push(b, b);
  w.push(c, c);
  REQUIRE(w.size() == 2);
  REQUIRE((w.p(0) - b).norm() == 0.0);
  REQUIRE((w.newest_p() - c).norm() == 0.0);
}

TEST_CASE("LinearOperator symmetry probe") {
  Rng rng(21);
  const Index n = 30;
  Matrix g = rng.normal_matrix(n, n);
  Matrix sym = 0.5 * (g + g.transpose());
  auto op = LinearOperator::from_dense(sym, OperatorStructure::SymmetricIndefinite);
  const double anorm = sym.cwiseAbs().rowwise().sum().maxCoeff();
  for (int t = 0; t < 5; ++t) {
    Vector u = rng.normal_vector(n);
    Vector w = rng.normal_vector(n);
    const double lhs = std::abs(op.apply(u).dot(w) - u.dot(op.apply(w)));
    REQUIRE(lhs <= 1e-10 * u.norm() * w.norm() * anorm);
  }
}

TEST_CASE("ResidualMap counts evals and checks dimensions") {
  ResidualMap f = quadratic_map();
  Vector x = Vector::Ones(2);
  f.eval(x);
  f.eval(x);
  REQUIRE(f.feval_count() == 2);
  REQUIRE_THROWS_AS(f.eval(Vector::Ones(3)), DimensionMismatch);
}
