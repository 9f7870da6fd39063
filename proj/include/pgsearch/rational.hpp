#pragma once

// Exact rational scalars and small dense matrices over Q.

#include <gmpxx.h>

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace pgs {

using Rational = mpq_class;

/// Canonical "n/d" (or "n" when d == 1) text of a reduced rational.
std::string to_fraction_string(const Rational& q);

/// Parses "n", "n/d" or a finite decimal such as "0.22" exactly.
Rational parse_rational(std::string_view text);

/// Exact rational of the shortest decimal that round-trips `x` (0.1 -> 1/10).
Rational rational_from_double(double x);

class RationalMatrix {
 public:
  RationalMatrix() = default;
  RationalMatrix(std::size_t rows, std::size_t cols);

  static RationalMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  Rational& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const Rational& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  RationalMatrix transposed() const;
  RationalMatrix operator*(const RationalMatrix& rhs) const;
  bool operator==(const RationalMatrix& rhs) const;

  bool is_zero() const;
  bool row_is_zero(std::size_t r) const;

  /// Reduced row echelon form in place; returns pivot column indices.
  std::vector<std::size_t> rref();

  std::size_t rank() const;

  /// Columns form a basis of {x : A x = 0}; rows() == cols() of this matrix.
  RationalMatrix nullspace() const;

  /// Solves A X = B for square nonsingular A. Returns false if A is singular.
  bool solve(const RationalMatrix& rhs, RationalMatrix& out) const;

  /// Rows r0 and r1 stacked into a 2 x cols() matrix.
  RationalMatrix stack_rows(std::size_t r0, std::size_t r1) const;

  /// Row-major fraction strings joined by ','.
  std::string to_string() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Rational> data_;
};

}  // namespace pgs
