#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace oamturb {

using complex_t = std::complex<double>;

// Raised when a series operation needs a nonzero constant term (log, inverse,
// fractional power) but the jet has none.
class SingularSeriesError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Truncated multivariate power series in the four generating variables
// (w_m, w_n, w_u, w_v). Coefficients are stored densely; each per-variable
// degree is capped at d_max and arithmetic silently drops anything above the
// cap. Index (a,b,c,d) holds the coefficient of w_m^a w_n^b w_u^c w_v^d.
class Jet4 {
 public:
  explicit Jet4(int d_max) : d_(checked_cap(d_max)), c_(size_of(d_)) {}

  static Jet4 constant(int d_max, complex_t value) {
    Jet4 j(d_max);
    j.c_[0] = value;
    return j;
  }

  // Monomial coeff * w^orders, e.g. variable(d, 1, {0,1,0,0}) = w_n.
  static Jet4 monomial(int d_max, complex_t coeff, std::array<int, 4> orders) {
    Jet4 j(d_max);
    j.at(orders[0], orders[1], orders[2], orders[3]) = coeff;
    return j;
  }

  int d_max() const { return d_; }

  complex_t coeff(int a, int b, int c, int d) const {
    check_orders(a, b, c, d);
    return c_[flat(a, b, c, d)];
  }

  complex_t& at(int a, int b, int c, int d) {
    check_orders(a, b, c, d);
    return c_[flat(a, b, c, d)];
  }

  complex_t constant_term() const { return c_[0]; }

  bool is_zero() const {
    for (const auto& v : c_)
      if (v != complex_t{0.0, 0.0}) return false;
    return true;
  }

  Jet4& operator+=(const Jet4& o) {
    require_same_cap(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    return *this;
  }
  Jet4& operator-=(const Jet4& o) {
    require_same_cap(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
    return *this;
  }
  Jet4& operator*=(complex_t z) {
    for (auto& v : c_) v *= z;
    return *this;
  }

  friend Jet4 operator+(Jet4 a, const Jet4& b) { return a += b; }
  friend Jet4 operator-(Jet4 a, const Jet4& b) { return a -= b; }
  friend Jet4 operator*(Jet4 a, complex_t z) { return a *= z; }
  friend Jet4 operator*(complex_t z, Jet4 a) { return a *= z; }

  double max_abs() const {
    double m = 0.0;
    for (const auto& v : c_) m = std::max(m, std::abs(v));
    return m;
  }

  const std::vector<complex_t>& raw() const { return c_; }

 private:
  static int checked_cap(int d) {
    if (d < 0) throw std::domain_error("jet degree cap must be non-negative");
    return d;
  }
  static std::size_t size_of(int d) {
    const std::size_t n = static_cast<std::size_t>(d) + 1;
    return n * n * n * n;
  }
  std::size_t flat(int a, int b, int c, int d) const {
    const std::size_t n = static_cast<std::size_t>(d_) + 1;
    return ((static_cast<std::size_t>(a) * n + b) * n + c) * n + d;
  }
  void check_orders(int a, int b, int c, int d) const {
    if (a < 0 || b < 0 || c < 0 || d < 0 || a > d_ || b > d_ || c > d_ || d > d_)
      throw std::domain_error("jet coefficient order exceeds degree cap");
  }
  void require_same_cap(const Jet4& o) const {
    if (d_ != o.d_) throw std::domain_error("jet degree caps differ");
  }

  int d_;
  std::vector<complex_t> c_;
  friend Jet4 mul(const Jet4&, const Jet4&);
};

// Truncated Cauchy product.
inline Jet4 mul(const Jet4& x, const Jet4& y) {
  if (x.d_ != y.d_) throw std::domain_error("jet degree caps differ");
  const int d = x.d_;
  const std::size_t n = static_cast<std::size_t>(d) + 1;
  Jet4 r(d);
  for (int a = 0; a <= d; ++a)
    for (int b = 0; b <= d; ++b)
      for (int c = 0; c <= d; ++c)
        for (int e = 0; e <= d; ++e) {
          complex_t s{0.0, 0.0};
          for (int a1 = 0; a1 <= a; ++a1)
            for (int b1 = 0; b1 <= b; ++b1)
              for (int c1 = 0; c1 <= c; ++c1)
                for (int e1 = 0; e1 <= e; ++e1)
                  s += x.c_[((static_cast<std::size_t>(a1) * n + b1) * n + c1) * n + e1] *
                       y.c_[((static_cast<std::size_t>(a - a1) * n + (b - b1)) * n +
                             (c - c1)) * n + (e - e1)];
          r.c_[((static_cast<std::size_t>(a) * n + b) * n + c) * n + e] = s;
        }
  return r;
}

inline Jet4 operator*(const Jet4& a, const Jet4& b) { return mul(a, b); }

namespace detail {

// Powers 1, u, u^2, ... of the nilpotent (zero constant term) part of a jet.
// With four variables capped at d, u^j vanishes identically for j > 4d.
inline std::vector<Jet4> nilpotent_powers(const Jet4& u) {
  const int jmax = 4 * u.d_max();
  std::vector<Jet4> p;
  p.reserve(jmax + 1);
  p.push_back(Jet4::constant(u.d_max(), 1.0));
  for (int j = 1; j <= jmax; ++j) {
    p.push_back(mul(p.back(), u));
    if (p.back().is_zero()) break;
  }
  return p;
}

}  // namespace detail

// exp of a jet: exp(c0) * sum_j u^j / j! over the nilpotent part u.
inline Jet4 exp(const Jet4& x) {
  Jet4 u = x;
  const complex_t c0 = x.constant_term();
  u.at(0, 0, 0, 0) = 0.0;
  const auto pows = detail::nilpotent_powers(u);
  Jet4 out(x.d_max());
  double fact = 1.0;
  for (std::size_t j = 0; j < pows.size(); ++j) {
    if (j > 0) fact *= static_cast<double>(j);
    out += pows[j] * complex_t(1.0 / fact, 0.0);
  }
  return out * std::exp(c0);
}

// Principal-branch log: log(c0) + sum_j (-1)^(j+1) (u/c0)^j / j.
inline Jet4 log(const Jet4& x) {
  const complex_t c0 = x.constant_term();
  if (c0 == complex_t{0.0, 0.0})
    throw SingularSeriesError("log of a jet with zero constant term");
  Jet4 u = x * (complex_t{1.0, 0.0} / c0);
  u.at(0, 0, 0, 0) = 0.0;
  const auto pows = detail::nilpotent_powers(u);
  Jet4 out = Jet4::constant(x.d_max(), std::log(c0));
  double sign = 1.0;
  for (std::size_t j = 1; j < pows.size(); ++j) {
    out += pows[j] * complex_t(sign / static_cast<double>(j), 0.0);
    sign = -sign;
  }
  return out;
}

// x^p for real (possibly fractional or negative) p, as exp(p * log(x)) on the
// principal branch. For integer p >= 0 this matches repeated multiplication.
inline Jet4 pow_real(const Jet4& x, double p) {
  if (x.constant_term() == complex_t{0.0, 0.0})
    throw SingularSeriesError("fractional power of a jet with zero constant term");
  return exp(log(x) * complex_t(p, 0.0));
}

// Coefficient at the given orders. The 1/(r_m! r_n! r_u! r_v!) weight of a
// mixed derivative at w = 0 is exactly series-coefficient extraction, so no
// factorial correction is applied here.
inline complex_t deriv_coeff(const Jet4& x, std::array<int, 4> orders) {
  return x.coeff(orders[0], orders[1], orders[2], orders[3]);
}

}  // namespace oamturb
