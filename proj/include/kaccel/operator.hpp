#pragma once

#include "kaccel/types.hpp"

#include <functional>
#include <memory>
#include <utility>
#include <vector>

namespace kaccel {

enum class OperatorStructure {
  SymmetricPositiveDefinite,
  SymmetricIndefinite,
  General,
  SkewLike,
};

inline bool is_symmetric(OperatorStructure s) {
  return s == OperatorStructure::SymmetricPositiveDefinite ||
         s == OperatorStructure::SymmetricIndefinite;
}

/// Compressed sparse row storage; kept simple, double/real only.
struct CsrMatrix {
  Index rows = 0;
  Index cols = 0;
  std::vector<Index> row_ptr;   // size rows+1
  std::vector<Index> col_idx;   // size nnz
  std::vector<double> values;   // size nnz

  Vector apply(const Vector& x) const {
    Vector y = Vector::Zero(rows);
    for (Index i = 0; i < rows; ++i) {
      double acc = 0.0;
      for (Index k = row_ptr[i]; k < row_ptr[i + 1]; ++k) acc += values[k] * x[col_idx[k]];
      y[i] = acc;
    }
    return y;
  }
};

/// Matrix-free linear operator: the A of Ax = b. Solvers only ever call
/// apply(); dense or CSR backings are retained when the operator was built
/// from explicit storage so that generators and diagnostics can reach them.
class LinearOperator {
 public:
  using ApplyFn = std::function<Vector(const Vector&)>;

  LinearOperator(Index dim, ApplyFn apply, OperatorStructure structure = OperatorStructure::General)
      : dim_(dim), apply_(std::move(apply)), structure_(structure) {
    if (dim_ <= 0) throw DimensionMismatch("LinearOperator: dim must be positive");
  }

  static LinearOperator from_dense(Matrix a, OperatorStructure structure = OperatorStructure::General) {
    if (a.rows() != a.cols()) throw DimensionMismatch("LinearOperator: dense backing must be square");
    auto holder = std::make_shared<Matrix>(std::move(a));
    LinearOperator op(holder->rows(), [holder](const Vector& x) { return Vector((*holder) * x); },
                      structure);
    op.dense_ = holder;
    return op;
  }

  static LinearOperator from_csr(CsrMatrix a, OperatorStructure structure = OperatorStructure::General) {
    if (a.rows != a.cols) throw DimensionMismatch("LinearOperator: CSR backing must be square");
    auto holder = std::make_shared<CsrMatrix>(std::move(a));
    LinearOperator op(holder->rows, [holder](const Vector& x) { return holder->apply(x); },
                      structure);
    op.csr_ = holder;
    return op;
  }

  Vector apply(const Vector& x) const {
    require_dim(x, dim_, "LinearOperator::apply");
    Vector y = apply_(x);
    if (y.size() != dim_) throw DimensionMismatch("LinearOperator::apply: operator changed dimension");
    return y;
  }

  Index dim() const { return dim_; }
  OperatorStructure structure() const { return structure_; }

  const Matrix* dense() const { return dense_ ? dense_.get() : nullptr; }
  const CsrMatrix* csr() const { return csr_ ? csr_.get() : nullptr; }

  /// Materializes the operator column by column. Intended for small dims only.
  Matrix to_dense() const {
    if (dense_) return *dense_;
    Matrix a(dim_, dim_);
    Vector e = Vector::Zero(dim_);
    for (Index j = 0; j < dim_; ++j) {
      e[j] = 1.0;
      a.col(j) = apply_(e);
      e[j] = 0.0;
    }
    return a;
  }

 private:
  Index dim_;
  ApplyFn apply_;
  OperatorStructure structure_;
  std::shared_ptr<const Matrix> dense_;
  std::shared_ptr<const CsrMatrix> csr_;
};

}  // namespace kaccel
