#pragma once

#include "kaccel/operator.hpp"
#include "kaccel/types.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace kaccel {

struct UnsupportedField : ParseError {
  using ParseError::ParseError;
};

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

inline CsrMatrix triplets_to_csr(Index rows, Index cols,
                                 std::vector<std::tuple<Index, Index, double>>& trip) {
  std::sort(trip.begin(), trip.end());
  CsrMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.row_ptr.assign(static_cast<std::size_t>(rows) + 1, 0);
  m.col_idx.reserve(trip.size());
  m.values.reserve(trip.size());
  for (const auto& [i, j, v] : trip) {
    ++m.row_ptr[static_cast<std::size_t>(i) + 1];
    m.col_idx.push_back(j);
    m.values.push_back(v);
  }
  for (std::size_t i = 0; i < static_cast<std::size_t>(rows); ++i) m.row_ptr[i + 1] += m.row_ptr[i];
  return m;
}

}  // namespace detail

/// MatrixMarket reader: real coordinate or array files, general / symmetric
/// / skew-symmetric storage. Symmetric storage is expanded to a full CSR
/// operator. Errors carry the offending line number.
inline LinearOperator load_matrix_market(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("matrix market: cannot open " + path);

  std::string line;
  long lineno = 0;
  auto fail = [&](const std::string& what) {
    throw ParseError("matrix market: " + what + " (" + path + ":" + std::to_string(lineno) + ")");
  };

  if (!std::getline(in, line)) fail("empty file");
  ++lineno;
  std::istringstream header(line);
  std::string banner, object, format, field, symmetry;
  header >> banner >> object >> format >> field >> symmetry;
  if (banner != "%%MatrixMarket") fail("missing %%MatrixMarket banner");
  if (detail::lower(object) != "matrix") fail("unsupported object '" + object + "'");
  format = detail::lower(format);
  field = detail::lower(field);
  symmetry = detail::lower(symmetry);
  if (field == "complex") throw UnsupportedField("matrix market: complex field unsupported");
  if (field != "real" && field != "integer" && field != "double")
    throw UnsupportedField("matrix market: field '" + field + "' unsupported");
  if (symmetry != "general" && symmetry != "symmetric" && symmetry != "skew-symmetric")
    fail("symmetry '" + symmetry + "' unsupported");
  if (format != "coordinate" && format != "array") fail("format '" + format + "' unsupported");

  // skip comments / blank lines to the size line
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line[0] != '%') break;
  }
  std::istringstream sizes(line);
  Index rows = 0, cols = 0;
  long long nnz = 0;
  if (format == "coordinate") {
    if (!(sizes >> rows >> cols >> nnz)) fail("bad size line");
  } else {
    if (!(sizes >> rows >> cols)) fail("bad size line");
  }
  if (rows <= 0 || cols <= 0) fail("non-positive dimensions");
  if (rows != cols) fail("operator must be square");

  std::vector<std::tuple<Index, Index, double>> trip;
  if (format == "coordinate") {
    trip.reserve(static_cast<std::size_t>(nnz) * (symmetry == "general" ? 1 : 2));
    for (long long e = 0; e < nnz; ++e) {
      if (!std::getline(in, line)) fail("unexpected end of file");
      ++lineno;
      if (line.empty() || line[0] == '%') {
        --e;
        continue;
      }
      std::istringstream entry(line);
      Index i = 0, j = 0;
      double v = 0.0;
      if (!(entry >> i >> j >> v)) fail("bad entry");
      if (i < 1 || i > rows || j < 1 || j > cols) fail("index out of range");
      trip.emplace_back(i - 1, j - 1, v);
      if (symmetry == "symmetric" && i != j) trip.emplace_back(j - 1, i - 1, v);
      if (symmetry == "skew-symmetric" && i != j) trip.emplace_back(j - 1, i - 1, -v);
    }
  } else {
    // array: dense column-major listing (lower triangle only when symmetric)
    auto next_value = [&](double& v) {
      while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '%') continue;
        std::istringstream entry(line);
        if (!(entry >> v)) fail("bad array value");
        return;
      }
      fail("unexpected end of file");
    };
    for (Index j = 0; j < cols; ++j) {
      const Index i0 = symmetry == "general" ? 0 : j;
      for (Index i = i0; i < rows; ++i) {
        double v = 0.0;
        next_value(v);
        if (v == 0.0) continue;
        trip.emplace_back(i, j, v);
        if (symmetry == "symmetric" && i != j) trip.emplace_back(j, i, v);
        if (symmetry == "skew-symmetric" && i != j) trip.emplace_back(j, i, -v);
      }
    }
  }

  const OperatorStructure structure = symmetry == "symmetric"
                                          ? OperatorStructure::SymmetricIndefinite
                                          : (symmetry == "skew-symmetric"
                                                 ? OperatorStructure::SkewLike
                                                 : OperatorStructure::General);
  return LinearOperator::from_csr(detail::triplets_to_csr(rows, cols, trip), structure);
}

/// Writes a dense matrix in coordinate format; symmetric storage when asked.
inline void save_matrix_market(const Matrix& a, const std::string& path, bool symmetric) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("matrix market: cannot write " + path);
  std::vector<std::tuple<Index, Index, double>> trip;
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = symmetric ? j : 0; i < a.rows(); ++i)
      if (a(i, j) != 0.0) trip.emplace_back(i, j, a(i, j));
  out << "%%MatrixMarket matrix coordinate real " << (symmetric ? "symmetric" : "general") << "\n";
  out << a.rows() << " " << a.cols() << " " << trip.size() << "\n";
  char buf[64];
  for (const auto& [i, j, v] : trip) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << (i + 1) << " " << (j + 1) << " " << buf << "\n";
  }
}

}  // namespace kaccel
