#pragma once

#include "kaccel/matrix_market.hpp"
#include "kaccel/operator.hpp"
#include "kaccel/residual_map.hpp"
#include "kaccel/rng.hpp"
#include "kaccel/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <variant>
#include <vector>

namespace kaccel {

// ---------------------------------------------------------------------------
// linear system generators
// ---------------------------------------------------------------------------

struct SpdSpec {
  double cond = 10.0;
};

struct SymIndefSpec {
  double kappa_plus = 4.0;
  double kappa_minus = 4.0;
  double split = 0.5;  // fraction of negative eigenvalues
};

struct GeneralSpec {
  double shift = 1.5;  // diagonal shift keeping the spectrum away from 0
};

using StructureSpec = std::variant<SpdSpec, SymIndefSpec, GeneralSpec>;

struct GeneratedSystem {
  LinearOperator op;
  Vector b;
  Vector x_true;
  Vector eigenvalues;     // constructed spectrum (symmetric cases), ascending
  double kappa = 0.0;     // SPD condition number, exact by construction
  double kappa_plus = 0.0;
  double kappa_minus = 0.0;
  double scale = 1.0;     // applied 2-norm rescaling factor
};

/// Builds Q diag(spectrum) Q^T (symmetric cases) or a shifted Gaussian
/// (general case) with the spectrum endpoints placed exactly, so the
/// condition numbers reported back are exact, not estimated. unit_norm
/// rescales A to unit 2-norm (condition numbers are scale invariant).
inline GeneratedSystem gen_linear_system(Index n, const StructureSpec& spec, bool unit_norm,
                                         std::uint64_t seed) {
  if (n < 2) throw SolverError("gen_linear_system: n >= 2 required");
  Rng rng(derive_seed(seed, 0x11a7));

  Matrix a;
  Vector eigs;
  double kappa = 0.0, kplus = 0.0, kminus = 0.0;
  OperatorStructure structure = OperatorStructure::General;

  if (const auto* spd = std::get_if<SpdSpec>(&spec)) {
    if (spd->cond < 1.0) throw SolverError("gen_linear_system: cond >= 1 required");
    eigs = Vector(n);
    eigs[0] = 1.0;
    eigs[n - 1] = spd->cond;
    for (Index i = 1; i + 1 < n; ++i)
      eigs[i] = spd->cond == 1.0 ? 1.0 : std::exp(rng.uniform(0.0, std::log(spd->cond)));
    std::sort(eigs.data(), eigs.data() + n);
    const Matrix q = rng.orthogonal(n);
    a = q * eigs.asDiagonal() * q.transpose();
    a = 0.5 * (a + a.transpose());  // scrub roundoff asymmetry
    kappa = spd->cond;
    structure = OperatorStructure::SymmetricPositiveDefinite;
  } else if (const auto* si = std::get_if<SymIndefSpec>(&spec)) {
    if (si->kappa_plus < 1.0 || si->kappa_minus < 1.0)
      throw SolverError("gen_linear_system: kappa+ and kappa- must be >= 1");
    if (n < 4) throw SolverError("gen_linear_system: indefinite case needs n >= 4");
    const Index n_neg = std::clamp<Index>(static_cast<Index>(std::lround(si->split * n)), 2, n - 2);
    eigs = Vector(n);
    // negative block in [-kappa_minus, -1], positive block in [1, kappa_plus];
    // endpoints placed exactly so kappa+/- are exact
    eigs[0] = -si->kappa_minus;
    for (Index i = 1; i + 1 < n_neg; ++i) eigs[i] = -rng.uniform(1.0, si->kappa_minus);
    eigs[n_neg - 1] = -1.0;
    eigs[n_neg] = 1.0;
    for (Index i = n_neg + 1; i + 1 < n; ++i) eigs[i] = rng.uniform(1.0, si->kappa_plus);
    eigs[n - 1] = si->kappa_plus;
    std::sort(eigs.data(), eigs.data() + n);
    const Matrix q = rng.orthogonal(n);
    a = q * eigs.asDiagonal() * q.transpose();
    a = 0.5 * (a + a.transpose());
    kplus = si->kappa_plus;
    kminus = si->kappa_minus;
    structure = OperatorStructure::SymmetricIndefinite;
  } else {
    const auto& gen = std::get<GeneralSpec>(spec);
    a = rng.normal_matrix(n, n) / std::sqrt(static_cast<double>(n));
    a += gen.shift * Matrix::Identity(n, n);
    structure = OperatorStructure::General;
  }

  double scale = 1.0;
  if (unit_norm) {
    if (eigs.size() > 0) {
      scale = eigs.cwiseAbs().maxCoeff();
    } else {
      // power iteration on A^T A for the 2-norm
      Vector z = rng.normal_vector(n).normalized();
      for (int it = 0; it < 50; ++it) z = (a.transpose() * (a * z)).normalized();
      scale = std::sqrt(z.dot(a.transpose() * (a * z)));
    }
    a /= scale;
    if (eigs.size() > 0) eigs /= scale;
  }

  Vector x_true = rng.normal_vector(n);
  Vector b = a * x_true;
  return GeneratedSystem{LinearOperator::from_dense(std::move(a), structure),
                         std::move(b),
                         std::move(x_true),
                         std::move(eigs),
                         kappa,
                         kplus,
                         kminus,
                         scale};
}

// ---------------------------------------------------------------------------
// softmax regression on synthetic data
// ---------------------------------------------------------------------------

struct SoftmaxDataset {
  Matrix features;          // s x d, one sample per row
  std::vector<int> labels;  // values in [0, k)
  int num_classes = 0;

  Index samples() const { return features.rows(); }
  Index dim() const { return features.cols(); }

  void validate() const {
    if (features.rows() == 0) throw SolverError("SoftmaxDataset: no samples");
    if (!features.allFinite()) throw NonFiniteError("SoftmaxDataset: non-finite features");
    std::vector<int> seen(static_cast<std::size_t>(num_classes), 0);
    for (int y : labels) {
      if (y < 0 || y >= num_classes) throw SolverError("SoftmaxDataset: label out of range");
      seen[static_cast<std::size_t>(y)] = 1;
    }
    for (int c = 0; c < num_classes; ++c)
      if (!seen[static_cast<std::size_t>(c)])
        throw SolverError("SoftmaxDataset: class " + std::to_string(c) + " has no samples");
  }

  /// FNV-1a over the raw feature bytes; regression guard for generators.
  std::uint64_t checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* data, std::size_t len) {
      const auto* bytes = static_cast<const unsigned char*>(data);
      for (std::size_t i = 0; i < len; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
      }
    };
    mix(features.data(), sizeof(double) * static_cast<std::size_t>(features.size()));
    mix(labels.data(), sizeof(int) * labels.size());
    return h;
  }
};

/// Gaussian class clusters with controlled separation. The first k samples
/// take classes 0..k-1 so every class is populated; everything else is
/// seeded-uniform.
inline SoftmaxDataset gen_synthetic_classification(Index s, Index d, int k, double separation,
                                                   std::uint64_t seed) {
  if (k < 2 || s < k) throw SolverError("gen_synthetic_classification: need s >= k >= 2");
  Rng rng(derive_seed(seed, 0xc1a55));
  Matrix means(k, d);
  for (int c = 0; c < k; ++c) {
    Vector dir = rng.normal_vector(d);
    means.row(c) = separation * dir.normalized().transpose();
  }
  SoftmaxDataset ds;
  ds.features.resize(s, d);
  ds.labels.resize(static_cast<std::size_t>(s));
  ds.num_classes = k;
  for (Index i = 0; i < s; ++i) {
    const int y = i < k ? static_cast<int>(i) : static_cast<int>(rng.index(static_cast<std::size_t>(k)));
    ds.labels[static_cast<std::size_t>(i)] = y;
    ds.features.row(i) = means.row(y) + rng.normal_vector(d).transpose();
  }
  ds.validate();
  return ds;
}

inline void export_dataset_csv(const SoftmaxDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("export_dataset_csv: cannot write " + path);
  for (Index j = 0; j < ds.dim(); ++j) out << "f" << j << ",";
  out << "label\n";
  char buf[64];
  for (Index i = 0; i < ds.samples(); ++i) {
    for (Index j = 0; j < ds.dim(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", ds.features(i, j));
      out << buf << ",";
    }
    out << ds.labels[static_cast<std::size_t>(i)] << "\n";
  }
}

/// Unregularized softmax cross-entropy over flattened class weights
/// (k*d unknowns, class-major). Provides the gradient as a ResidualMap with
/// an exact Hessian-vector product, plus counted and quiet loss evaluators
/// for line searches and instrumentation respectively.
class SoftmaxObjective {
 public:
  explicit SoftmaxObjective(SoftmaxDataset ds)
      : data_(std::make_shared<State>(State{std::move(ds), 0})) {
    data_->dataset.validate();
    auto state = data_;
    const Index n = dim();
    gradient_ = std::make_shared<ResidualMap>(
        n, [state](const Vector& w) { return softmax_gradient(state->dataset, w); },
        [state](const Vector& w, const Vector& u) { return softmax_hvp(state->dataset, w, u); });
  }

  Index dim() const { return data_->dataset.dim() * data_->dataset.num_classes; }
  const SoftmaxDataset& dataset() const { return data_->dataset; }
  const ResidualMap& gradient_map() const { return *gradient_; }

  double loss(const Vector& w) const {
    ++data_->loss_evals;
    return softmax_loss(data_->dataset, w);
  }
  /// Tracing-only evaluation; does not touch the work counter.
  double loss_quiet(const Vector& w) const { return softmax_loss(data_->dataset, w); }
  long loss_evals() const { return data_->loss_evals; }
  void reset_counters() const {
    data_->loss_evals = 0;
    gradient_->reset_feval_count();
  }
  /// Oracle calls consumed so far (gradient evals + counted loss evals).
  long work() const { return gradient_->feval_count() + data_->loss_evals; }

  static double softmax_loss(const SoftmaxDataset& ds, const Vector& w) {
    const Index s = ds.samples(), d = ds.dim();
    const int k = ds.num_classes;
    double loss = 0.0;
    for (Index i = 0; i < s; ++i) {
      Vector z(k);
      for (int c = 0; c < k; ++c) z[c] = w.segment(c * d, d).dot(ds.features.row(i));
      const double zmax = z.maxCoeff();
      double lse = 0.0;
      for (int c = 0; c < k; ++c) lse += std::exp(z[c] - zmax);
      lse = zmax + std::log(lse);
      loss -= z[ds.labels[static_cast<std::size_t>(i)]] - lse;
    }
    return loss / static_cast<double>(s);
  }

  static Vector softmax_gradient(const SoftmaxDataset& ds, const Vector& w) {
    const Index s = ds.samples(), d = ds.dim();
    const int k = ds.num_classes;
    Vector g = Vector::Zero(static_cast<Index>(k) * d);
    for (Index i = 0; i < s; ++i) {
      Vector z(k);
      for (int c = 0; c < k; ++c) z[c] = w.segment(c * d, d).dot(ds.features.row(i));
      const double zmax = z.maxCoeff();
      Vector p = (z.array() - zmax).exp();
      p /= p.sum();
      p[ds.labels[static_cast<std::size_t>(i)]] -= 1.0;
      for (int c = 0; c < k; ++c) g.segment(c * d, d) += p[c] * ds.features.row(i).transpose();
    }
    return g / static_cast<double>(s);
  }

  static Vector softmax_hvp(const SoftmaxDataset& ds, const Vector& w, const Vector& u) {
    const Index s = ds.samples(), d = ds.dim();
    const int k = ds.num_classes;
    Vector out = Vector::Zero(static_cast<Index>(k) * d);
    for (Index i = 0; i < s; ++i) {
      Vector z(k), q(k);
      for (int c = 0; c < k; ++c) {
        z[c] = w.segment(c * d, d).dot(ds.features.row(i));
        q[c] = u.segment(c * d, d).dot(ds.features.row(i));
      }
      const double zmax = z.maxCoeff();
      Vector p = (z.array() - zmax).exp();
      p /= p.sum();
      const Vector h = p.cwiseProduct(q) - p * p.dot(q);
      for (int c = 0; c < k; ++c) out.segment(c * d, d) += h[c] * ds.features.row(i).transpose();
    }
    return out / static_cast<double>(s);
  }

 private:
  struct State {
    SoftmaxDataset dataset;
    mutable long loss_evals;
  };
  std::shared_ptr<State> data_;
  std::shared_ptr<ResidualMap> gradient_;
};

// ---------------------------------------------------------------------------
// bilinear minimax games and the simultaneous GDA map
// ---------------------------------------------------------------------------

struct BilinearGame {
  Matrix a;       // full-rank payoff matrix
  Vector b, c;    // linear terms
  double eta;     // GDA step
};

struct GdaProblem {
  LinearOperator step_matrix;   // M = [[I, -eta A], [eta A^T, I]]
  LinearOperator residual_op;   // I - M (skew), the system matrix of F(w) = 0
  Vector rhs;                   // F(w) = (I - M) w - rhs
  ResidualMap residual;
  Vector saddle;                // stacked (x*, y*)
};

/// min_x max_y x^T A y + b^T x + c^T y, with the simultaneous GDA fixed
/// point map w <- M w + s. The saddle solves A y* = -b, A^T x* = -c.
inline BilinearGame make_bilinear_game(Index d, bool spd, std::uint64_t seed,
                                       double eta = 0.0) {
  Rng rng(derive_seed(seed, 0xb111));
  Matrix a;
  if (spd) {
    Vector eigs(d);
    for (Index i = 0; i < d; ++i) eigs[i] = rng.uniform(0.5, 2.0);
    const Matrix q = rng.orthogonal(d);
    a = q * eigs.asDiagonal() * q.transpose();
  } else {
    // singular-value floor keeps the game full rank
    const Matrix q1 = rng.orthogonal(d);
    const Matrix q2 = rng.orthogonal(d);
    Vector sv(d);
    for (Index i = 0; i < d; ++i) sv[i] = rng.uniform(0.5, 2.0);
    a = q1 * sv.asDiagonal() * q2.transpose();
  }
  BilinearGame game;
  game.b = rng.normal_vector(d);
  game.c = rng.normal_vector(d);
  if (eta <= 0.0) {
    Vector z = rng.normal_vector(d).normalized();
    for (int it = 0; it < 50; ++it) z = (a.transpose() * (a * z)).normalized();
    const double norm2 = std::sqrt(z.dot(a.transpose() * (a * z)));
    eta = 0.5 / norm2;
  }
  game.eta = eta;
  game.a = std::move(a);
  return game;
}

inline GdaProblem bilinear_gda_residual(const BilinearGame& game) {
  const Index d = game.a.rows();
  const Index n = 2 * d;
  Eigen::FullPivLU<Matrix> lu(game.a);
  if (!lu.isInvertible()) throw SolverError("bilinear_gda_residual: singular A");

  Matrix m = Matrix::Identity(n, n);
  m.block(0, d, d, d) = -game.eta * game.a;
  m.block(d, 0, d, d) = game.eta * game.a.transpose();
  Matrix imm = Matrix::Identity(n, n) - m;  // [[0, eta A], [-eta A^T, 0]]

  Vector rhs(n);
  rhs.head(d) = -game.eta * game.b;
  rhs.tail(d) = game.eta * game.c;

  Vector saddle(n);
  saddle.tail(d) = lu.solve(-game.b);                       // A y* = -b
  saddle.head(d) = game.a.transpose().fullPivLu().solve(-game.c);  // A^T x* = -c

  auto imm_holder = std::make_shared<Matrix>(imm);
  auto rhs_holder = std::make_shared<Vector>(rhs);
  ResidualMap residual(
      n, [imm_holder, rhs_holder](const Vector& w) { return Vector((*imm_holder) * w - *rhs_holder); },
      [imm_holder](const Vector&, const Vector& u) { return Vector((*imm_holder) * u); });

  return GdaProblem{LinearOperator::from_dense(std::move(m), OperatorStructure::General),
                    LinearOperator::from_dense(std::move(imm), OperatorStructure::SkewLike),
                    std::move(rhs), std::move(residual), std::move(saddle)};
}

}  // namespace kaccel
