#pragma once

#include "kaccel/rng.hpp"
#include "kaccel/trace.hpp"
#include "kaccel/types.hpp"
#include "kaccel/window.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace kaccel {

struct DimensionTooLarge : SolverError {
  using SolverError::SolverError;
};

/// G = P_j V_j^T, the approximate inverse Jacobian carried implicitly by a
/// direction window. Dense materialization; refuse silly sizes.
inline Matrix build_inverse_jacobian(const DirectionWindow& window) {
  if (window.empty()) throw SolverError("build_inverse_jacobian: empty window");
  const Index n = window.p(0).size();
  if (n > 2048) throw DimensionTooLarge("build_inverse_jacobian: dim > 2048");
  Matrix g = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < window.size(); ++i) g += window.p(i) * window.v(i).transpose();
  return g;
}

struct SecantReport {
  double secant_residual = 0.0;       // ||G v_j - p_j|| for the newest pair
  double nochange_max = 0.0;          // max ||G q|| over random q perp span(V)
  double multisecant_residual = 0.0;  // ||G V_j - P_j||_F
  double optimality_gap = 0.0;        // filled by verify_inverse_optimality
};

/// Checks the secant identity G v_j = p_j, the multisecant identity
/// G V_j = P_j, and the no-change property G q = 0 on `probes` random
/// vectors orthogonalized against span(V_j). A window whose complement is
/// empty reports nochange_max = 0.
inline SecantReport verify_secant_nochange(const Matrix& g, const DirectionWindow& window,
                                           int probes, std::uint64_t seed = 0) {
  if (window.empty()) throw SolverError("verify_secant_nochange: empty window");
  SecantReport report;
  report.secant_residual = (g * window.newest_v() - window.newest_p()).norm();
  const Matrix v = window.vmat();
  const Matrix p = window.pmat();
  report.multisecant_residual = (g * v - p).norm();

  const Index n = v.rows();
  if (static_cast<Index>(window.size()) >= n) return report;  // empty complement
  Rng rng(derive_seed(seed, 0x5eca47));
  for (int t = 0; t < probes; ++t) {
    Vector q = rng.normal_vector(n);
    for (int pass = 0; pass < 2; ++pass) q -= v * (v.transpose() * q);
    const double qn = q.norm();
    if (qn <= 1e-12) continue;
    q /= qn;
    report.nochange_max = std::max(report.nochange_max, (g * q).norm());
  }
  return report;
}

/// Optimality gap of G = P V^T in ||G J - I||_F against candidates drawn
/// from the feasible set {G' : G' V = P, G' q = 0 for q perp span(V)}.
/// Candidates are produced by projecting random matrices onto the two
/// constraints; the constraints pin the matrix down completely, so the
/// theorem's minimizer can only be tied, never beaten. Returns +inf when
/// sampled with zero candidates.
inline double verify_inverse_optimality(const DirectionWindow& window, const Matrix& j_dense,
                                        int candidates, std::uint64_t seed = 0) {
  if (window.empty()) throw SolverError("verify_inverse_optimality: empty window");
  if (candidates <= 0) return std::numeric_limits<double>::infinity();
  const Matrix g = build_inverse_jacobian(window);
  const Index n = g.rows();
  if (j_dense.rows() != n || j_dense.cols() != n)
    throw DimensionMismatch("verify_inverse_optimality: Jacobian shape");
  const Matrix v = window.vmat();
  const Matrix p = window.pmat();
  const Matrix eye = Matrix::Identity(n, n);
  const double base = (g * j_dense - eye).norm();

  Rng rng(derive_seed(seed, 0x0971a1));
  double gap = std::numeric_limits<double>::infinity();
  for (int c = 0; c < candidates; ++c) {
    Matrix z = rng.normal_matrix(n, n);
    // no-change projection: restrict the row action to span(V)
    Matrix cand = z * v * v.transpose();
    // multisecant correction inside span(V)
    cand += (p - cand * v) * v.transpose();
    gap = std::min(gap, (cand * j_dense - eye).norm() - base);
  }
  return gap;
}

/// Chebyshev-type bound 2 ((sqrt(k)-1)/(sqrt(k)+1))^k for SPD systems.
inline double spd_bound(double kappa, int k) {
  if (kappa < 1.0) throw SolverError("spd_bound: kappa >= 1 required");
  if (k < 0) throw SolverError("spd_bound: k >= 0 required");
  const double s = std::sqrt(kappa);
  return 2.0 * std::pow((s - 1.0) / (s + 1.0), k);
}

/// Two-interval bound 2 ((sqrt(k+k-)-1)/(sqrt(k+k-)+1))^floor(m/2) for
/// symmetric indefinite spectra.
inline double indefinite_bound(double kappa_plus, double kappa_minus, int m) {
  if (kappa_plus < 1.0 || kappa_minus < 1.0)
    throw SolverError("indefinite_bound: kappa+ and kappa- must be >= 1");
  if (m < 0) throw SolverError("indefinite_bound: m >= 0 required");
  const double s = std::sqrt(kappa_plus * kappa_minus);
  return 2.0 * std::pow((s - 1.0) / (s + 1.0), m / 2);
}

enum class RateClass { Linear, Superlinear, Stagnant };

struct RateEstimate {
  RateClass kind = RateClass::Stagnant;
  double rho = 1.0;  // geometric mean tail ratio (Linear); informative otherwise
};

/// Classifies the tail of an error or residual sequence. Superlinear means
/// the successive ratios e_{k+1}/e_k themselves shrink by at least 10% per
/// step over the last (up to) five steps; a geometric-mean ratio >= 0.999
/// reads as stagnation.
inline RateEstimate estimate_rate(const std::vector<double>& values) {
  if (values.size() < 6) throw InsufficientData("estimate_rate: need >= 6 values");
  std::vector<double> ratios;
  for (std::size_t i = 0; i + 1 < values.size(); ++i) {
    if (!(values[i] > 0.0)) break;  // sequence hit zero: nothing further to measure
    if (!(values[i + 1] >= 0.0) || !std::isfinite(values[i + 1])) break;
    ratios.push_back(values[i + 1] / values[i]);
  }
  if (ratios.size() < 2) throw InsufficientData("estimate_rate: too few usable ratios");
  const std::size_t tail = std::min<std::size_t>(5, ratios.size());
  const std::size_t start = ratios.size() - tail;

  double log_sum = 0.0;
  int log_count = 0;
  for (std::size_t i = start; i < ratios.size(); ++i) {
    if (ratios[i] > 0.0) {
      log_sum += std::log(ratios[i]);
      ++log_count;
    }
  }
  RateEstimate out;
  out.rho = log_count > 0 ? std::exp(log_sum / log_count) : 0.0;

  if (out.rho >= 0.999) {
    out.kind = RateClass::Stagnant;
    return out;
  }
  bool superlinear = true;
  for (std::size_t i = start; i + 1 < ratios.size(); ++i) {
    if (!(ratios[i + 1] <= 0.9 * ratios[i])) {
      superlinear = false;
      break;
    }
  }
  out.kind = superlinear ? RateClass::Superlinear : RateClass::Linear;
  return out;
}

/// Convenience overload: prefers recorded errors to x*, falls back to
/// residual norms.
inline RateEstimate estimate_rate(const SolveTrace& trace) {
  if (!trace.error_to_star.empty()) return estimate_rate(trace.error_to_star);
  return estimate_rate(trace.residual_norms);
}

}  // namespace kaccel
