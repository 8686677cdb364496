#pragma once

#include "kaccel/types.hpp"

#include <deque>
#include <utility>
#include <vector>

namespace kaccel {

enum class WindowMode { MovingWindow, Restart };

/// Bounded paired history {(p_i, v_i)} of search directions and their
/// operator images. Index 0 is the oldest stored pair; pushing past the
/// capacity evicts it (moving window). Restart mode keeps the same
/// eviction rule but is cleared wholesale by the owning solver.
class DirectionWindow {
 public:
  explicit DirectionWindow(std::size_t capacity, WindowMode mode = WindowMode::MovingWindow)
      : capacity_(capacity), mode_(mode) {
    if (capacity_ == 0) throw SolverError("DirectionWindow: capacity must be >= 1");
  }

  void push(Vector p, Vector v) {
    ps_.push_back(std::move(p));
    vs_.push_back(std::move(v));
    if (capacity_ != kFullMemory && ps_.size() > capacity_) {
      ps_.pop_front();
      vs_.pop_front();
    }
  }

  void clear() {
    ps_.clear();
    vs_.clear();
  }

  std::size_t size() const { return ps_.size(); }
  bool empty() const { return ps_.empty(); }
  std::size_t capacity() const { return capacity_; }
  WindowMode mode() const { return mode_; }

  const Vector& p(std::size_t i) const { return ps_[i]; }
  const Vector& v(std::size_t i) const { return vs_[i]; }
  const Vector& newest_p() const { return ps_.back(); }
  const Vector& newest_v() const { return vs_.back(); }

  /// Stored directions as columns, oldest first.
  Matrix pmat() const { return stack(ps_); }
  /// Stored operator images as columns, oldest first.
  Matrix vmat() const { return stack(vs_); }

 private:
  static Matrix stack(const std::deque<Vector>& cols) {
    if (cols.empty()) return Matrix();
    Matrix m(cols.front().size(), static_cast<Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) m.col(static_cast<Index>(j)) = cols[j];
    return m;
  }

  std::size_t capacity_;
  WindowMode mode_;
  std::deque<Vector> ps_;
  std::deque<Vector> vs_;
};

struct OrthoOptions {
  int passes = 1;                      // 1 matches the basic loop; 2 = "twice is enough"
  double breakdown_tol_scale = 1e-14;  // relative to max(1, ||v_in||)
};

struct OrthoResult {
  Vector p;
  Vector v;
  std::vector<double> betas;  // MGS coefficients, eviction (oldest-first) order
  double vnorm = 0.0;         // ||v|| after orthogonalization, before normalization
  bool breakdown = false;
};

/// Modified Gram-Schmidt of (p, v) against the stored pairs: v is made unit
/// and orthogonal to every stored v_i, and p picks up the same combination
/// and scaling so the p <-> v pairing is preserved. Breakdown (||v|| below
/// tol after the sweep) is reported, not thrown; the caller decides whether
/// it means lucky convergence or rank deficiency.
inline OrthoResult window_orthonormalize(Vector p, Vector v, const DirectionWindow& window,
                                         const OrthoOptions& opt = {},
                                         long* dot_counter = nullptr) {
  OrthoResult out;
  const double vin_norm = v.norm();
  const double breakdown_tol = opt.breakdown_tol_scale * std::max(1.0, vin_norm);
  out.betas.assign(window.size(), 0.0);
  for (int pass = 0; pass < opt.passes; ++pass) {
    for (std::size_t i = 0; i < window.size(); ++i) {
      const double beta = v.dot(window.v(i));
      if (dot_counter) ++*dot_counter;
      out.betas[i] += beta;
      p -= beta * window.p(i);
      v -= beta * window.v(i);
    }
  }
  out.vnorm = v.norm();
  if (dot_counter) ++*dot_counter;  // the norm
  if (!(out.vnorm > breakdown_tol) || !v.allFinite()) {
    out.breakdown = true;
    out.p = std::move(p);
    out.v = std::move(v);
    return out;
  }
  out.p = p / out.vnorm;
  out.v = v / out.vnorm;
  return out;
}

}  // namespace kaccel
