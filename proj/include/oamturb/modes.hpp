#pragma once

#include <cmath>
#include <cstdlib>
#include <numbers>
#include <stdexcept>
#include <string>

namespace oamturb {

// Laguerre-Gauss mode label: azimuthal index l, radial index r.
struct ModeIndex {
  int l = 0;
  int r = 0;
  friend bool operator==(const ModeIndex&, const ModeIndex&) = default;
};

// Basis truncation: modes with |l| <= l_cut and 0 <= r <= l_cut are kept.
struct Truncation {
  int l_cut = 1;
};

inline int dimension(Truncation trunc) {
  if (trunc.l_cut < 1) throw std::domain_error("truncation cutoff must be >= 1");
  return (2 * trunc.l_cut + 1) * (trunc.l_cut + 1);
}

inline bool contains(Truncation trunc, ModeIndex m) {
  return std::abs(m.l) <= trunc.l_cut && m.r >= 0 && m.r <= trunc.l_cut;
}

// l-major, r-minor layout: (l, r) -> (l + l_cut) * (l_cut + 1) + r. Keeps the
// azimuthal-shift structure of the assembled superoperators visually banded.
inline int to_index(ModeIndex m, Truncation trunc) {
  if (!contains(trunc, m))
    throw std::domain_error("mode (" + std::to_string(m.l) + "," +
                            std::to_string(m.r) + ") outside truncation");
  return (m.l + trunc.l_cut) * (trunc.l_cut + 1) + m.r;
}

inline ModeIndex from_index(int i, Truncation trunc) {
  if (i < 0 || i >= dimension(trunc))
    throw std::domain_error("linear mode index out of range");
  const int stride = trunc.l_cut + 1;
  return ModeIndex{i / stride - trunc.l_cut, i % stride};
}

// N(l,r) = sqrt(r! 2^(|l|+1) / (pi (r+|l|)!)). Factorials go through lgamma
// so the ratio stays finite well past r + |l| ~ 20.
inline double normalization(ModeIndex m) {
  if (m.r < 0) throw std::domain_error("negative radial index");
  const int al = std::abs(m.l);
  const double log_n2 = std::lgamma(m.r + 1.0) + (al + 1.0) * std::numbers::ln2 -
                        std::log(std::numbers::pi) - std::lgamma(m.r + al + 1.0);
  return std::exp(0.5 * log_n2);
}

// Beam and turbulence parameters. Lengths are in meters, cn2 in m^(-2/3).
// The dimensionless propagation distance is t = z / z_R with z_R the
// Rayleigh range pi * waist^2 / wavelength.
struct PhysicalParams {
  double wavelength = 1e-6;
  double waist = 0.01;
  double cn2 = 1e-14;

  double wavenumber() const { return 2.0 * std::numbers::pi / wavelength; }
  double rayleigh_range() const {
    return std::numbers::pi * waist * waist / wavelength;
  }
  double eta() const { return wavelength / waist; }
  double t_from_z(double z) const { return z / rayleigh_range(); }
  double z_from_t(double t) const { return t * rayleigh_range(); }

  void validate() const {
    if (!(wavelength > 0.0) || !std::isfinite(wavelength))
      throw std::invalid_argument("wavelength must be positive and finite");
    if (!(waist > 0.0) || !std::isfinite(waist))
      throw std::invalid_argument("beam waist must be positive and finite");
    if (!(cn2 >= 0.0) || !std::isfinite(cn2))
      throw std::invalid_argument("cn2 must be non-negative and finite");
  }
};

}  // namespace oamturb
