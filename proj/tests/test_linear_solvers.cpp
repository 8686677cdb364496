#include <catch2/catch_amalgamated.hpp>

#include "kaccel/diagnostics.hpp"
#include "kaccel/linear_solvers.hpp"
#include "kaccel/problems.hpp"
#include "kaccel/rng.hpp"

using namespace kaccel;

namespace {

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

LinearSolveConfig tight(std::size_t m, std::size_t max_iter = 500) {
  LinearSolveConfig cfg;
  cfg.m = m;
  cfg.max_iter = max_iter;
  cfg.rtol = 1e-12;
  return cfg;
}

}  // namespace

TEST_CASE("tgcr: identity system converges in one iteration") {
  const Index n = 5;
  auto op = LinearOperator::from_dense(Matrix::Identity(n, n),
                                       OperatorStructure::SymmetricPositiveDefinite);
  Rng rng(3);
  Vector b = rng.normal_vector(n);
  auto trace = tgcr_solve(op, b, Vector::Zero(n), tight(1));
  REQUIRE(trace.converged());
  REQUIRE(trace.iterations() == 1);
  REQUIRE(trace.final_residual() <= 1e-12);
  REQUIRE((trace.iterates.back() - b).norm() <= 1e-12);
}

TEST_CASE("tgcr: hand-executed steps on diag(1,2)") {
  Matrix a(2, 2);
  a << 1, 0, 0, 2;
  auto op = LinearOperator::from_dense(a, OperatorStructure::SymmetricPositiveDefinite);
  Vector b = Vector::Ones(2);
  auto trace = tgcr_solve(op, b, Vector::Zero(2), tight(1));
  REQUIRE(trace.converged());
  REQUIRE(trace.iterations() == 2);
  // x1 = (0.6, 0.6), ||r1|| = sqrt(0.2)
  REQUIRE((trace.iterates[1] - vec2(0.6, 0.6)).norm() < 1e-12);
  REQUIRE(trace.residual_norms[1] == Catch::Approx(std::sqrt(0.2)).epsilon(1e-12));
  // x2 = (1.0, 0.5) = A^{-1} b
  REQUIRE((trace.iterates[2] - vec2(1.0, 0.5)).norm() < 1e-12);
  REQUIRE(trace.final_residual() <= 1e-12);
  // matvec accounting: 1 + iterations with x0 = 0
  REQUIRE(trace.matvec_count == 1 + static_cast<long>(trace.iterations()));
}

TEST_CASE("tgcr: residual norms are non-increasing and meet the SPD bound") {
  auto sys = gen_linear_system(200, SpdSpec{9.0}, false, 11);
  auto trace = tgcr_solve(sys.op, sys.b, Vector::Zero(200), tight(1, 200));
  REQUIRE(trace.converged());
  const double r0 = trace.residual_norms[0];
  for (std::size_t k = 1; k < trace.residual_norms.size(); ++k) {
    REQUIRE(trace.residual_norms[k] <= trace.residual_norms[k - 1] * (1 + 1e-12));
    REQUIRE(trace.residual_norms[k] / r0 <=
            spd_bound(9.0, static_cast<int>(k)) * (1 + 1e-6));
  }
}

TEST_CASE("gcr equals tgcr(1) on symmetric systems") {
  auto sys = gen_linear_system(100, SpdSpec{30.0}, false, 5);
  LinearSolveConfig cfg = tight(1, 50);
  auto t1 = tgcr_solve(sys.op, sys.b, Vector::Zero(100), cfg);
  auto tfull = gcr_solve(sys.op, sys.b, Vector::Zero(100), cfg);
  const std::size_t iters = std::min(t1.iterates.size(), tfull.iterates.size());
  for (std::size_t j = 0; j < iters; ++j) {
    const double xn = std::max(1.0, t1.iterates[j].norm());
    REQUIRE((t1.iterates[j] - tfull.iterates[j]).norm() / xn < 1e-8);
  }
}

TEST_CASE("gcr matches gmres residuals on a general system") {
  auto sys = gen_linear_system(30, GeneralSpec{}, false, 17);
  LinearSolveConfig cfg = tight(kFullMemory, 30);
  auto g1 = gcr_solve(sys.op, sys.b, Vector::Zero(30), cfg);
  auto g2 = gmres_solve(sys.op, sys.b, Vector::Zero(30), cfg);
  const std::size_t iters = std::min(g1.residual_norms.size(), g2.residual_norms.size());
  for (std::size_t j = 0; j < iters; ++j)
    REQUIRE(std::abs(g1.residual_norms[j] - g2.residual_norms[j]) <=
            1e-8 * std::max(1.0, g1.residual_norms[0]));
}

TEST_CASE("cg: diag(1,2) finishes in two steps; indefinite systems break down") {
  Matrix a(2, 2);
  a << 1, 0, 0, 2;
  auto op = LinearOperator::from_dense(a, OperatorStructure::SymmetricPositiveDefinite);
  auto trace = cg_solve(op, Vector::Ones(2), Vector::Zero(2), tight(1));
  REQUIRE(trace.converged());
  REQUIRE(trace.iterations() == 2);
  REQUIRE((trace.iterates.back() - vec2(1.0, 0.5)).norm() < 1e-12);

  auto indef = gen_linear_system(50, SymIndefSpec{4.0, 4.0, 0.5}, false, 23);
  auto cg = cg_solve(indef.op, indef.b, Vector::Zero(50), tight(1, 100));
  auto tg = tgcr_solve(indef.op, indef.b, Vector::Zero(50), tight(1, 200));
  const bool cg_failed =
      cg.termination == Termination::Breakdown || cg.termination == Termination::Diverged;
  REQUIRE(cg_failed);
  REQUIRE(tg.converged());
}

TEST_CASE("gmres matches the optimal-residual oracle") {
  for (std::uint64_t seed : {1ULL, 2ULL}) {
    auto sys = gen_linear_system(20, GeneralSpec{}, false, seed);
    auto trace = gmres_solve(sys.op, sys.b, Vector::Zero(20), tight(kFullMemory, 20));
    for (std::size_t k = 0; k < trace.residual_norms.size(); ++k) {
      const double oracle = krylov_optimal_residual(sys.op, sys.b, k);
      REQUIRE(std::abs(trace.residual_norms[k] - oracle) <= 1e-9 * std::max(1.0, sys.b.norm()));
    }
  }
}

TEST_CASE("krylov_optimal_residual basics") {
  Matrix a(2, 2);
  a << 1, 0, 0, 2;
  auto op = LinearOperator::from_dense(a);
  Vector r0 = Vector::Ones(2);
  REQUIRE(krylov_optimal_residual(op, r0, 0) == Catch::Approx(r0.norm()));
  REQUIRE(krylov_optimal_residual(op, r0, 1) == Catch::Approx(std::sqrt(0.2)).epsilon(1e-10));

  auto id = LinearOperator::from_dense(Matrix::Identity(4, 4));
  Vector r(4);
  r << 1, -2, 3, 0.5;
  for (std::size_t k = 1; k <= 4; ++k) REQUIRE(krylov_optimal_residual(id, r, k) <= 1e-12);
}

TEST_CASE("tgcr full-memory residuals are optimal and A-conjugate") {
  auto sys = gen_linear_system(25, GeneralSpec{}, false, 9);
  LinearSolveConfig cfg = tight(kFullMemory, 25);
  cfg.store_iterates = true;
  auto trace = tgcr_solve(sys.op, sys.b, Vector::Zero(25), cfg);
  // optimality vs oracle
  for (std::size_t k = 0; k < trace.residual_norms.size(); ++k) {
    const double oracle = krylov_optimal_residual(sys.op, sys.b, k);
    REQUIRE(std::abs(trace.residual_norms[k] - oracle) <= 1e-9 * std::max(1.0, sys.b.norm()));
  }
  // residual A-conjugacy (r_{j+1}, A r_i) = 0 for i <= j in full mode
  std::vector<Vector> residuals;
  for (const auto& x : trace.iterates) residuals.push_back(sys.b - sys.op.apply(x));
  for (std::size_t j = 1; j < residuals.size(); ++j) {
    for (std::size_t i = 0; i < j; ++i) {
      REQUIRE(std::abs(residuals[j].dot(sys.op.apply(residuals[i]))) <=
              1e-9 * std::max(1.0, sys.b.squaredNorm()));
    }
  }
}

TEST_CASE("tgcr window images stay orthonormal (property)") {
  Rng seeds(1234);
  for (std::size_t m : {1u, 2u, 5u}) {
    const auto seed = seeds.next_u64();
    auto sys = gen_linear_system(40, SpdSpec{100.0}, false, seed);
    // instrument by re-running the window updates: solve and then verify the
    // invariant through the solver's own breakdown-free completion plus an
    // independent MGS replay
    DirectionWindow w(m);
    Vector r = sys.b;
    Vector v = sys.op.apply(r);
    auto o = window_orthonormalize(r, v, w);
    w.push(o.p, o.v);
    for (int it = 0; it < 30; ++it) {
      const double alpha = r.dot(w.newest_v());
      r -= alpha * w.newest_v();
      auto next = window_orthonormalize(r, sys.op.apply(r), w);
      if (next.breakdown) break;
      w.push(next.p, next.v);
      for (std::size_t i = 0; i < w.size(); ++i) {
        for (std::size_t j2 = 0; j2 < w.size(); ++j2) {
          const double expected = i == j2 ? 1.0 : 0.0;
          REQUIRE(std::abs(w.v(i).dot(w.v(j2)) - expected) <= 1e-10);
        }
      }
    }
  }
}

TEST_CASE("tgcr restart mode clears the window periodically") {
  auto sys = gen_linear_system(60, SpdSpec{30.0}, false, 77);
  LinearSolveConfig cfg = tight(5, 300);
  cfg.window_mode = WindowMode::Restart;
  cfg.restart_period = 10;
  auto trace = tgcr_solve(sys.op, sys.b, Vector::Zero(60), cfg);
  REQUIRE(trace.converged());
  for (std::size_t k = 1; k < trace.residual_norms.size(); ++k)
    REQUIRE(trace.residual_norms[k] <= trace.residual_norms[k - 1] * (1 + 1e-12));
}

TEST_CASE("config validation") {
  LinearSolveConfig cfg;
  cfg.rtol = 2.0;
  Matrix a = Matrix::Identity(2, 2);
  auto op = LinearOperator::from_dense(a);
  REQUIRE_THROWS_AS(tgcr_solve(op, Vector::Ones(2), Vector::Zero(2), cfg), SolverError);
}
