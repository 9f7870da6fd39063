#include "pgsearch/rational.hpp"

#include <charconv>
#include <stdexcept>
#include <system_error>

namespace pgs {

std::string to_fraction_string(const Rational& q) {
  if (q.get_den() == 1) return q.get_num().get_str();
  return q.get_num().get_str() + "/" + q.get_den().get_str();
}

Rational parse_rational(std::string_view text) {
  std::string s(text);
  auto bad = [&] { return std::invalid_argument("not a rational number: '" + s + "'"); };
  if (s.empty()) throw bad();
  if (auto slash = s.find('/'); slash != std::string::npos) {
    Rational q;
    if (q.set_str(s, 10) != 0 || q.get_den() == 0) throw bad();
    q.canonicalize();
    return q;
  }
  std::string mantissa = s;
  long exponent = 0;
  if (auto e = s.find_first_of("eE"); e != std::string::npos) {
    mantissa = s.substr(0, e);
    const auto exp_text = s.substr(e + 1);
    auto [ptr, ec] = std::from_chars(exp_text.data(), exp_text.data() + exp_text.size(), exponent);
    if (ec != std::errc() || ptr != exp_text.data() + exp_text.size()) throw bad();
  }
  std::string digits;
  bool seen_point = false;
  long frac_digits = 0;
  for (std::size_t i = 0; i < mantissa.size(); ++i) {
    const char ch = mantissa[i];
    if ((ch == '-' || ch == '+') && i == 0) {
      if (ch == '-') digits.push_back('-');
    } else if (ch == '.' && !seen_point) {
      seen_point = true;
    } else if (ch >= '0' && ch <= '9') {
      digits.push_back(ch);
      if (seen_point) ++frac_digits;
    } else {
      throw bad();
    }
  }
  if (digits.empty() || digits == "-") throw bad();
  mpz_class num(digits, 10);
  mpz_class scale = 1;
  const long shift = exponent - frac_digits;
  mpz_class ten = 10;
  mpz_class p;
  mpz_pow_ui(p.get_mpz_t(), ten.get_mpz_t(), static_cast<unsigned long>(shift < 0 ? -shift : shift));
  Rational q;
  if (shift >= 0) {
    q = Rational(num * p, 1);
  } else {
    q = Rational(num, p);
  }
  q.canonicalize();
  return q;
}

Rational rational_from_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) throw std::invalid_argument("cannot format double");
  return parse_rational(std::string_view(buf, static_cast<std::size_t>(ptr - buf)));
}

RationalMatrix::RationalMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols) {}

RationalMatrix RationalMatrix::identity(std::size_t n) {
  RationalMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1;
  return m;
}

RationalMatrix RationalMatrix::transposed() const {
  RationalMatrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

RationalMatrix RationalMatrix::operator*(const RationalMatrix& rhs) const {
  if (cols_ != rhs.rows_) throw std::invalid_argument("matrix dimension mismatch");
  RationalMatrix out(rows_, rhs.cols_);
  Rational tmp;
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = 0; k < cols_; ++k) {
      const Rational& a = (*this)(r, k);
      if (sgn(a) == 0) continue;
      for (std::size_t c = 0; c < rhs.cols_; ++c) {
        const Rational& b = rhs(k, c);
        if (sgn(b) == 0) continue;
        tmp = a * b;
        out(r, c) += tmp;
      }
    }
  }
  return out;
}

bool RationalMatrix::operator==(const RationalMatrix& rhs) const {
  return rows_ == rhs.rows_ && cols_ == rhs.cols_ && data_ == rhs.data_;
}

bool RationalMatrix::is_zero() const {
  for (const auto& q : data_)
    if (sgn(q) != 0) return false;
  return true;
}

bool RationalMatrix::row_is_zero(std::size_t r) const {
  for (std::size_t c = 0; c < cols_; ++c)
    if (sgn((*this)(r, c)) != 0) return false;
  return true;
}

std::vector<std::size_t> RationalMatrix::rref() {
  std::vector<std::size_t> pivots;
  std::size_t lead_row = 0;
  Rational factor;
  for (std::size_t c = 0; c < cols_ && lead_row < rows_; ++c) {
    std::size_t pivot = lead_row;
    while (pivot < rows_ && sgn((*this)(pivot, c)) == 0) ++pivot;
    if (pivot == rows_) continue;
    if (pivot != lead_row)
      for (std::size_t k = 0; k < cols_; ++k) std::swap((*this)(pivot, k), (*this)(lead_row, k));
    const Rational inv = 1 / (*this)(lead_row, c);
    for (std::size_t k = c; k < cols_; ++k) (*this)(lead_row, k) *= inv;
    for (std::size_t r = 0; r < rows_; ++r) {
      if (r == lead_row || sgn((*this)(r, c)) == 0) continue;
      factor = (*this)(r, c);
      for (std::size_t k = c; k < cols_; ++k) (*this)(r, k) -= factor * (*this)(lead_row, k);
    }
    pivots.push_back(c);
    ++lead_row;
  }
  return pivots;
}

std::size_t RationalMatrix::rank() const {
  RationalMatrix copy = *this;
  return copy.rref().size();
}

RationalMatrix RationalMatrix::nullspace() const {
  RationalMatrix reduced = *this;
  const auto pivots = reduced.rref();
  std::vector<bool> is_pivot(cols_, false);
  for (auto p : pivots) is_pivot[p] = true;
  std::vector<std::size_t> free_cols;
  for (std::size_t c = 0; c < cols_; ++c)
    if (!is_pivot[c]) free_cols.push_back(c);
  RationalMatrix basis(cols_, free_cols.size());
  for (std::size_t j = 0; j < free_cols.size(); ++j) {
    const std::size_t f = free_cols[j];
    basis(f, j) = 1;
    for (std::size_t i = 0; i < pivots.size(); ++i) basis(pivots[i], j) = -reduced(i, f);
  }
  return basis;
}

bool RationalMatrix::solve(const RationalMatrix& rhs, RationalMatrix& out) const {
  if (rows_ != cols_ || rhs.rows_ != rows_) throw std::invalid_argument("solve: dimension mismatch");
  const std::size_t n = rows_;
  RationalMatrix aug(n, n + rhs.cols_);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) aug(r, c) = (*this)(r, c);
    for (std::size_t c = 0; c < rhs.cols_; ++c) aug(r, n + c) = rhs(r, c);
  }
  const auto pivots = aug.rref();
  if (pivots.size() < n || (n > 0 && pivots[n - 1] != n - 1)) return false;
  out = RationalMatrix(n, rhs.cols_);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < rhs.cols_; ++c) out(r, c) = aug(r, n + c);
  return true;
}

RationalMatrix RationalMatrix::stack_rows(std::size_t r0, std::size_t r1) const {
  RationalMatrix m(2, cols_);
  for (std::size_t c = 0; c < cols_; ++c) {
    m(0, c) = (*this)(r0, c);
    m(1, c) = (*this)(r1, c);
  }
  return m;
}

std::string RationalMatrix::to_string() const {
  std::string s;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (i) s.push_back(',');
    s += to_fraction_string(data_[i]);
  }
  return s;
}

}  // namespace pgs
