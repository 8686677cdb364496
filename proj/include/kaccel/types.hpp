#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace kaccel {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Sentinel window size meaning "keep the full history".
inline constexpr std::size_t kFullMemory = std::numeric_limits<std::size_t>::max();

/// How a solve run ended.
enum class Termination {
  Converged,
  MaxIter,
  Breakdown,
  Diverged,
  SafeguardExhausted,
};

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::Converged: return "converged";
    case Termination::MaxIter: return "max_iter";
    case Termination::Breakdown: return "breakdown";
    case Termination::Diverged: return "diverged";
    case Termination::SafeguardExhausted: return "safeguard_exhausted";
  }
  return "unknown";
}

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : SolverError {
  using SolverError::SolverError;
};

struct ZeroDirection : SolverError {
  using SolverError::SolverError;
};

struct NonFiniteError : SolverError {
  using SolverError::SolverError;
};

struct InsufficientData : SolverError {
  using SolverError::SolverError;
};

struct ParseError : SolverError {
  using SolverError::SolverError;
};

inline bool all_finite(const Vector& x) { return x.allFinite(); }

inline void require_finite(const Vector& x, const char* what) {
  if (!x.allFinite()) throw NonFiniteError(std::string(what) + ": non-finite entries");
}

inline void require_dim(const Vector& x, Index dim, const char* what) {
  if (x.size() != dim)
    throw DimensionMismatch(std::string(what) + ": size " + std::to_string(x.size()) +
                            ", expected " + std::to_string(dim));
}

}  // namespace kaccel
