#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "oamturb/modes.hpp"
#include "oamturb/series.hpp"
#include "oamturb/vectorize.hpp"

// Evolution generator for a single photon's modal density matrix in Kolmogorov
// turbulence, in the column-stacking convention of vectorize.hpp:
//
//   d/dz col(rho) = (C_z + D_z) col(rho)
//
// C_z comes from free-space diffraction and is assembled from a closed-form
// mode coupling matrix S. D_z is the turbulence dissipator; its radial
// dependence is generated by a truncated power series in four variables
// (w_m, w_n, w_u, w_v) so that no numerical quadrature is needed anywhere.
// Element-level functions return values per meter of propagation distance;
// the assemble_* functions rescale by the Rayleigh range once, centrally, so
// assembled superoperators generate evolution in the dimensionless distance
// t = z / z_R.
//
// The outer-scale divergence of the Kolmogorov spectrum cancels against the
// homogeneous attenuation term on pair-diagonal entries. That cancellation is
// folded in analytically here: evaluating the Gamma factor below by analytic
// continuation at its negative arguments yields exactly the subtracted finite
// part, so assembled dissipators are already the kappa0 -> 0 limit.

namespace oamturb {

using AzimuthalQuad = std::array<int, 4>;  // (l_m, l_n, l_u, l_v)

// Free-space generator element <m| S |n>, units 1/m. Purely imaginary and
// nonzero only for l_m = l_n with |r_m - r_n| <= 1.
inline complex_t free_space_element(ModeIndex m, ModeIndex n,
                                    const PhysicalParams& params) {
  if (m.l != n.l) return {0.0, 0.0};
  const double zr = params.rayleigh_range();
  if (m.r == n.r) return {0.0, (1.0 + std::abs(m.l) + 2.0 * m.r) / (2.0 * zr)};
  if (std::abs(m.r - n.r) == 1) {
    const double r = 0.5 * (m.r + n.r - 1.0);
    return {0.0,
            std::sqrt(1.0 + std::abs(m.l) + r) * std::sqrt(1.0 + r) / (2.0 * zr)};
  }
  return {0.0, 0.0};
}

// S as a dense N x N matrix, units 1/m.
inline Matrix free_space_matrix(Truncation trunc, const PhysicalParams& params) {
  const int n_dim = dimension(trunc);
  Matrix s(n_dim, n_dim);
  for (int a = 0; a < n_dim; ++a)
    for (int b = 0; b < n_dim; ++b)
      s(a, b) = free_space_element(from_index(a, trunc), from_index(b, trunc), params);
  return s;
}

// Coherent superoperator, (C)_{(m,n),(u,v)} = S_{u,m} delta_{v,n} -
// S_{v,n} delta_{m,u}, rescaled to d/dt units.
inline Matrix assemble_coherent(Truncation trunc, const PhysicalParams& params) {
  params.validate();
  const int n_dim = dimension(trunc);
  const Matrix s = free_space_matrix(trunc, params);
  Matrix c = Matrix::Zero(n_dim * n_dim, n_dim * n_dim);
  for (int m = 0; m < n_dim; ++m)
    for (int n = 0; n < n_dim; ++n) {
      const int row = pair_index(m, n, n_dim);
      for (int u = 0; u < n_dim; ++u)
        c(row, pair_index(u, n, n_dim)) += s(u, m);
      for (int v = 0; v < n_dim; ++v)
        c(row, pair_index(m, v, n_dim)) -= s(v, n);
    }
  return c * params.rayleigh_range();
}

// Homogeneous attenuation rate kept only for diagnostics: the finite
// outer-scale kappa0 piece that the assembled dissipator has already
// cancelled. Units 1/m.
inline double divergent_term(const PhysicalParams& params, double kappa0) {
  if (!(kappa0 > 0.0)) throw std::domain_error("kappa0 must be positive");
  constexpr double pi = std::numbers::pi;
  return 8.0 * pi * pi * pi * params.cn2 /
         (3.0 * std::pow(kappa0, 10.0 / 6.0) * params.wavelength *
          params.wavelength * std::tgamma(1.0 / 3.0));
}

// Sum bound M(a, b) = (|a| + |b| - |a - b|) / 2.
inline int sum_bound(int a, int b) {
  return (std::abs(a) + std::abs(b) - std::abs(a - b)) / 2;
}

namespace detail {

inline double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

// Generalized binomial coefficient C(p, j) for real p.
inline double generalized_binomial(double p, int j) {
  double c = 1.0;
  for (int i = 1; i <= j; ++i) c *= (p - (i - 1)) / i;
  return c;
}

// Gamma with a guard against the poles at non-positive integers; negative
// non-integer arguments use the standard library's analytic continuation.
inline double gamma_checked(double a) {
  if (a <= 0.0 && std::abs(a - std::round(a)) < 1e-9)
    throw std::domain_error("Gamma argument at or too close to a pole: " +
                            std::to_string(a));
  return std::tgamma(a);
}

// Coefficients of Omega(t, w)^p in w, where Omega = (1 - i t) - (1 + i t) w
// and the conjugate flavor flips the sign of t. Length d + 1, zero padded.
inline std::vector<complex_t> omega_power_coeffs(double t, bool conj, int p, int d) {
  const complex_t it{0.0, conj ? -t : t};
  const complex_t base0 = complex_t{1.0, 0.0} - it;
  const complex_t base1 = -(complex_t{1.0, 0.0} + it);
  std::vector<complex_t> c(d + 1, complex_t{0.0, 0.0});
  for (int i = 0; i <= std::min(p, d); ++i) {
    complex_t v{generalized_binomial(static_cast<double>(p), i), 0.0};
    for (int j = 0; j < p - i; ++j) v *= base0;
    for (int j = 0; j < i; ++j) v *= base1;
    c[i] = v;
  }
  return c;
}

// Bivariate table biv[i * (d+1) + k] for Om_a^pa(w_a) Om_b^pb(w_b) times
// (1 - w_a w_b)^(-q) with integer q >= 1.
inline std::vector<complex_t> pair_table(const std::vector<complex_t>& ca,
                                         const std::vector<complex_t>& cb, int q,
                                         int d) {
  std::vector<complex_t> biv((d + 1) * (d + 1), complex_t{0.0, 0.0});
  for (int i = 0; i <= d; ++i)
    for (int k = 0; k <= d; ++k) {
      complex_t s{0.0, 0.0};
      for (int j = 0; j <= std::min(i, k); ++j)
        s += ca[i - j] * cb[k - j] *
             generalized_binomial(static_cast<double>(q - 1 + j), j);
      biv[i * (d + 1) + k] = s;
    }
  return biv;
}

}  // namespace detail

// Per-(truncation, parameters, t) working set for dissipator evaluation. The
// expensive shared piece is the beam-overlap series B and its fractional
// powers; B does not depend on the azimuthal quadruple, so its powers are
// cached here and shared across all matrix elements at this t.
class DissipatorContext {
 public:
  DissipatorContext(Truncation trunc, const PhysicalParams& params, double t)
      : trunc_(trunc), params_(params), t_(t), d_(trunc.l_cut) {
    params_.validate();
    if (!std::isfinite(t) || t < 0.0)
      throw std::invalid_argument("propagation distance t must be finite and >= 0");
    build_b_series();
  }

  Truncation truncation() const { return trunc_; }
  const PhysicalParams& params() const { return params_; }
  double t() const { return t_; }
  int degree_cap() const { return d_; }

  // B^(sigma + 5/6 - sum_abs_l / 2), the fractional beam-overlap power shared
  // by all terms with the same (sum of |l|, s + s').
  const Jet4& b_power(int sum_abs_l, int sigma) const {
    const int key = 3 * sum_abs_l - 6 * sigma;  // 6 * (exponent + 5/6)
    auto it = bpow_.find(key);
    if (it != bpow_.end()) return it->second;
    const double p = -(0.5 * sum_abs_l - sigma - 5.0 / 6.0);
    Jet4 out(d_);
    for (std::size_t j = 0; j < e_pow_.size(); ++j)
      out += e_pow_[j] * complex_t(detail::generalized_binomial(p, static_cast<int>(j)), 0.0);
    out *= std::pow(b0_, p);
    return bpow_.emplace(key, std::move(out)).first->second;
  }

 private:
  void build_b_series() {
    const int d = d_;
    const double t = t_;
    const double w0 = params_.waist;
    auto omega = [&](int var, bool conj) {
      const complex_t it{0.0, conj ? -t : t};
      Jet4 j(d);
      j.at(0, 0, 0, 0) = complex_t{1.0, 0.0} - it;
      std::array<int, 4> ord{0, 0, 0, 0};
      ord[var] = 1;
      j.at(ord[0], ord[1], ord[2], ord[3]) = -(complex_t{1.0, 0.0} + it);
      return j;
    };
    Jet4 one_mu = Jet4::constant(d, 1.0) - Jet4::monomial(d, 1.0, {1, 0, 1, 0});
    Jet4 one_nv = Jet4::constant(d, 1.0) - Jet4::monomial(d, 1.0, {0, 1, 0, 1});
    Jet4 geo_mu(d), geo_nv(d);
    for (int k = 0; k <= d; ++k) {
      std::array<int, 4> mu{k, 0, k, 0}, nv{0, k, 0, k};
      geo_mu += Jet4::monomial(d, 1.0, mu);
      geo_nv += Jet4::monomial(d, 1.0, nv);
    }
    Jet4 num = mul(mul(omega(0, false), omega(2, true)), one_nv) +
               mul(mul(omega(1, true), omega(3, false)), one_mu);
    Jet4 b = mul(mul(num, geo_mu), geo_nv) * complex_t(w0 * w0, 0.0);

    const complex_t b0 = b.constant_term();
    if (b0 == complex_t{0.0, 0.0})
      throw SingularSeriesError(
          "beam-overlap series has zero constant term at t = " + std::to_string(t_));
    b0_ = b0.real();  // 2 w0^2 (1 + t^2), real and positive
    Jet4 e = b * (complex_t{1.0, 0.0} / b0);
    e.at(0, 0, 0, 0) = 0.0;
    e_pow_ = detail::nilpotent_powers(e);
  }

  Truncation trunc_;
  PhysicalParams params_;
  double t_;
  int d_;
  double b0_ = 0.0;
  std::vector<Jet4> e_pow_;
  mutable std::map<int, Jet4> bpow_;
};

// Radial generating jet for one azimuthal quadruple, units 1/m. The radial
// matrix element at (r_m, r_n, r_u, r_v) is the series coefficient at those
// orders times the square-root factorial weight applied in
// dissipator_element below.
inline Jet4 dissipator_generating(const AzimuthalQuad& quad,
                                  const DissipatorContext& ctx) {
  const int lm = quad[0], ln = quad[1], lu = quad[2], lv = quad[3];
  if (lm - lu != ln - lv)
    throw std::domain_error("azimuthal selection rule l_m - l_u = l_n - l_v violated");
  const int alm = std::abs(lm), aln = std::abs(ln), alu = std::abs(lu),
            alv = std::abs(lv);
  const int sum_l = alm + aln + alu + alv;
  const int d = ctx.degree_cap();
  const double t = ctx.t();
  const double w0 = ctx.params().waist;
  constexpr double pi = std::numbers::pi;

  const int i_pow = (((alm + alu - aln - alv) % 4) + 4) % 4;
  static constexpr std::array<complex_t, 4> i_cycle{
      complex_t{1.0, 0.0}, complex_t{0.0, 1.0}, complex_t{-1.0, 0.0},
      complex_t{0.0, -1.0}};
  const complex_t a0 = i_cycle[i_pow] * 5.0 * pi * pi * pi * ctx.params().cn2 *
                       detail::factorial(alm) * detail::factorial(aln) *
                       detail::factorial(alu) * detail::factorial(alv);
  const double d0 = 9.0 * std::sqrt(2.0) * ctx.params().wavelength *
                    ctx.params().wavelength * std::tgamma(1.0 / 3.0);

  const int m1 = sum_bound(lm, lu), m2 = sum_bound(ln, lv);
  std::vector<Jet4> by_sigma(m1 + m2 + 1, Jet4(d));
  const int stride = d + 1;
  for (int s = 0; s <= m1; ++s) {
    const auto biv_mu = detail::pair_table(
        detail::omega_power_coeffs(t, false, alm - s, d),
        detail::omega_power_coeffs(t, true, alu - s, d), alm + alu - s + 1, d);
    for (int sp = 0; sp <= m2; ++sp) {
      const auto biv_nv = detail::pair_table(
          detail::omega_power_coeffs(t, true, aln - sp, d),
          detail::omega_power_coeffs(t, false, alv - sp, d), aln + alv - sp + 1,
          d);
      const int sigma = s + sp;
      const double gamma_arg = 0.5 * sum_l - sigma - 5.0 / 6.0;
      const double sign = (sigma % 2 == 0) ? 1.0 : -1.0;
      const complex_t coef =
          sign * a0 * std::pow(w0, sum_l - 2 * sigma) *
          detail::gamma_checked(gamma_arg) /
          (d0 * detail::factorial(s) * detail::factorial(sp) *
           detail::factorial(alm - s) * detail::factorial(aln - sp) *
           detail::factorial(alu - s) * detail::factorial(alv - sp));
      Jet4& acc = by_sigma[sigma];
      for (int a = 0; a <= d; ++a)
        for (int b = 0; b <= d; ++b)
          for (int c = 0; c <= d; ++c)
            for (int e = 0; e <= d; ++e)
              acc.at(a, b, c, e) +=
                  coef * biv_mu[a * stride + c] * biv_nv[b * stride + e];
    }
  }

  Jet4 out(d);
  for (int sigma = 0; sigma <= m1 + m2; ++sigma) {
    try {
      out += mul(by_sigma[sigma], ctx.b_power(sum_l, sigma));
    } catch (const SingularSeriesError& err) {
      throw SingularSeriesError(
          std::string(err.what()) + " [quadruple (" + std::to_string(lm) + "," +
          std::to_string(ln) + "," + std::to_string(lu) + "," +
          std::to_string(lv) + "), t = " + std::to_string(ctx.t()) + "]");
    }
  }
  return out;
}

inline Jet4 dissipator_generating(const AzimuthalQuad& quad, double t,
                                  const PhysicalParams& params, Truncation trunc) {
  DissipatorContext ctx(trunc, params, t);
  return dissipator_generating(quad, ctx);
}

namespace detail {

// sqrt(r! / (|l| + r)!) through lgamma.
inline double radial_weight(int l, int r) {
  return std::exp(0.5 * (std::lgamma(r + 1.0) - std::lgamma(std::abs(l) + r + 1.0)));
}

}  // namespace detail

// Single dissipator matrix element <(m,n)| D |(u,v)>, units 1/m.
inline complex_t dissipator_element(ModeIndex m, ModeIndex n, ModeIndex u,
                                    ModeIndex v, const DissipatorContext& ctx) {
  if (m.l - u.l != n.l - v.l) return {0.0, 0.0};
  const Jet4 jet = dissipator_generating({m.l, n.l, u.l, v.l}, ctx);
  const double w = detail::radial_weight(m.l, m.r) * detail::radial_weight(n.l, n.r) *
                   detail::radial_weight(u.l, u.r) * detail::radial_weight(v.l, v.r);
  return w * jet.coeff(m.r, n.r, u.r, v.r);
}

inline complex_t dissipator_element(ModeIndex m, ModeIndex n, ModeIndex u,
                                    ModeIndex v, double t,
                                    const PhysicalParams& params, Truncation trunc) {
  DissipatorContext ctx(trunc, params, t);
  return dissipator_element(m, n, u, v, ctx);
}

// Pair indices (m + N*n) of the coherence sector l_m - l_n = delta, ascending.
inline std::vector<int> sector_pairs(Truncation trunc, int delta) {
  const int n_dim = dimension(trunc);
  std::vector<int> out;
  for (int n = 0; n < n_dim; ++n)
    for (int m = 0; m < n_dim; ++m)
      if (from_index(m, trunc).l - from_index(n, trunc).l == delta)
        out.push_back(pair_index(m, n, n_dim));
  return out;
}

namespace detail {

// Shared assembly core: fills rows/columns of the dissipator restricted to the
// pairs listed in `pairs` (global pair indices, ascending). Output is in d/dt
// units. When `pairs` covers all of [0, N^2) this is the full dissipator.
inline Matrix assemble_dissipator_on_pairs(const DissipatorContext& ctx,
                                           const std::vector<int>& pairs) {
  const Truncation trunc = ctx.truncation();
  const int n_dim = dimension(trunc);
  const int lc = trunc.l_cut;
  const int n_r = lc + 1;

  std::vector<int> position(static_cast<std::size_t>(n_dim) * n_dim, -1);
  for (std::size_t i = 0; i < pairs.size(); ++i) position[pairs[i]] = static_cast<int>(i);

  std::vector<double> weight(n_dim);
  for (int i = 0; i < n_dim; ++i) {
    const ModeIndex mi = from_index(i, trunc);
    weight[i] = radial_weight(mi.l, mi.r);
  }

  Matrix out = Matrix::Zero(pairs.size(), pairs.size());
  for (int lm = -lc; lm <= lc; ++lm)
    for (int ln = -lc; ln <= lc; ++ln)
      for (int lu = -lc; lu <= lc; ++lu) {
        const int lv = ln - lm + lu;
        if (lv < -lc || lv > lc) continue;
        // Skip quadruples that touch none of the requested pairs.
        bool row_possible = false, col_possible = false;
        for (int rm = 0; rm < n_r && !row_possible; ++rm)
          for (int rn = 0; rn < n_r && !row_possible; ++rn)
            row_possible =
                position[pair_index(to_index({lm, rm}, trunc),
                                    to_index({ln, rn}, trunc), n_dim)] >= 0;
        for (int ru = 0; ru < n_r && !col_possible; ++ru)
          for (int rv = 0; rv < n_r && !col_possible; ++rv)
            col_possible =
                position[pair_index(to_index({lu, ru}, trunc),
                                    to_index({lv, rv}, trunc), n_dim)] >= 0;
        if (!row_possible || !col_possible) continue;

        const Jet4 jet = dissipator_generating({lm, ln, lu, lv}, ctx);
        for (int rm = 0; rm < n_r; ++rm)
          for (int rn = 0; rn < n_r; ++rn) {
            const int im = to_index({lm, rm}, trunc);
            const int in = to_index({ln, rn}, trunc);
            const int row = position[pair_index(im, in, n_dim)];
            if (row < 0) continue;
            const double wrow = weight[im] * weight[in];
            for (int ru = 0; ru < n_r; ++ru)
              for (int rv = 0; rv < n_r; ++rv) {
                const int iu = to_index({lu, ru}, trunc);
                const int iv = to_index({lv, rv}, trunc);
                const int col = position[pair_index(iu, iv, n_dim)];
                if (col < 0) continue;
                out(row, col) = wrow * weight[iu] * weight[iv] *
                                jet.coeff(rm, rn, ru, rv);
              }
          }
      }
  return out * ctx.params().rayleigh_range();
}

}  // namespace detail

// Full N^2 x N^2 dissipator in d/dt units.
inline Matrix assemble_dissipator(Truncation trunc, const PhysicalParams& params,
                                  double t) {
  DissipatorContext ctx(trunc, params, t);
  const int n_dim = dimension(trunc);
  std::vector<int> all(static_cast<std::size_t>(n_dim) * n_dim);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return detail::assemble_dissipator_on_pairs(ctx, all);
}

// Dissipator block on one coherence sector, in the order of sector_pairs.
inline Matrix assemble_dissipator_sector(const DissipatorContext& ctx, int delta) {
  return detail::assemble_dissipator_on_pairs(
      ctx, sector_pairs(ctx.truncation(), delta));
}

inline Matrix assemble_dissipator_sector(Truncation trunc,
                                         const PhysicalParams& params, double t,
                                         int delta) {
  DissipatorContext ctx(trunc, params, t);
  return assemble_dissipator_sector(ctx, delta);
}

// Coherent superoperator block on one sector, d/dt units.
inline Matrix assemble_coherent_sector(Truncation trunc,
                                       const PhysicalParams& params, int delta) {
  const auto pairs = sector_pairs(trunc, delta);
  const int n_dim = dimension(trunc);
  const Matrix s = free_space_matrix(trunc, params);
  Matrix c = Matrix::Zero(pairs.size(), pairs.size());
  for (std::size_t row = 0; row < pairs.size(); ++row) {
    const int m = pairs[row] % n_dim;
    const int n = pairs[row] / n_dim;
    for (std::size_t col = 0; col < pairs.size(); ++col) {
      const int u = pairs[col] % n_dim;
      const int v = pairs[col] / n_dim;
      complex_t val{0.0, 0.0};
      if (v == n) val += s(u, m);
      if (m == u) val -= s(v, n);
      c(row, col) = val;
    }
  }
  return c * params.rayleigh_range();
}

}  // namespace oamturb
