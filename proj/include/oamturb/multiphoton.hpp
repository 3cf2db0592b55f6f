#pragma once

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "oamturb/channel.hpp"
#include "oamturb/vectorize.hpp"

// Collective operators for n closely spaced photons that see the same
// turbulence realization: single-photon operators are lifted to Kronecker
// sums over the photon slots, and the dissipator is rebuilt from the lifted
// jump operators.
//
// Photon 0 owns the most significant digit of a tensor index, so the Hilbert
// index of modes (m_0, ..., m_{n-1}) is sum_k m_k N^(n-1-k).

namespace oamturb {

class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MultiphotonLimits {
  // Largest n-photon Hilbert dimension for which operators are lifted.
  std::int64_t max_lift_dimension = 200000;
  // Largest n-photon Hilbert dimension for which full superoperators
  // (dimension squared on each side) are assembled.
  std::int64_t max_superop_dimension = 1000;
};

namespace detail {

inline std::int64_t checked_power(int base, int n, std::int64_t cap,
                                  const char* what) {
  std::int64_t dim = 1;
  for (int i = 0; i < n; ++i) {
    dim *= base;
    if (dim > cap)
      throw ResourceError(std::string(what) + " refused: dimension " +
                          std::to_string(base) + "^" + std::to_string(n) +
                          " exceeds the cap of " + std::to_string(cap));
  }
  return dim;
}

}  // namespace detail

struct CollectiveOperator {
  int n_photons = 1;
  Matrix base;
  SparseMatrix lifted;

  Matrix dense() const {
    if (lifted.rows() >= 256)
      throw ResourceError(
          "dense form refused at dimension " + std::to_string(lifted.rows()) +
          "; use the sparse representation above 255");
    return Matrix(lifted);
  }
};

// Kronecker sum over the photon slots: sum_i I x ... x base x ... x I.
inline CollectiveOperator lift(const Matrix& base, int n,
                               const MultiphotonLimits& limits = {}) {
  if (n < 1) throw std::domain_error("photon count must be at least 1");
  if (base.rows() == 0 || base.rows() != base.cols())
    throw std::domain_error("lift needs a non-empty square operator");
  const int nb = static_cast<int>(base.rows());
  const std::int64_t dim =
      detail::checked_power(nb, n, limits.max_lift_dimension, "lift");

  std::vector<std::pair<std::pair<int, int>, complex_t>> entries;
  for (int b = 0; b < nb; ++b)
    for (int a = 0; a < nb; ++a)
      if (base(a, b) != 0.0) entries.push_back({{a, b}, base(a, b)});

  std::vector<Eigen::Triplet<complex_t>> trips;
  std::int64_t per_slot = 1;
  for (int i = 1; i < n; ++i) per_slot *= nb;
  trips.reserve(static_cast<std::size_t>(n) * entries.size() *
                static_cast<std::size_t>(per_slot));
  std::int64_t left = 1;
  std::int64_t right = dim / nb;
  for (int i = 0; i < n; ++i) {
    for (std::int64_t l = 0; l < left; ++l)
      for (const auto& [ab, v] : entries)
        for (std::int64_t r = 0; r < right; ++r)
          trips.emplace_back((l * nb + ab.first) * right + r,
                             (l * nb + ab.second) * right + r, v);
    left *= nb;
    right /= nb;
  }

  CollectiveOperator out;
  out.n_photons = n;
  out.base = base;
  out.lifted = SparseMatrix(dim, dim);
  out.lifted.setFromTriplets(trips.begin(), trips.end());
  out.lifted.makeCompressed();
  return out;
}

// Dissipator rebuilt from the lifted jump operators, on the column-stacked
// n-photon density matrix. Negative-weight terms keep their sign, matching
// reconstruct_dissipator.
inline SparseMatrix collective_dissipator(const LindbladSet& set, int n,
                                          const MultiphotonLimits& limits = {}) {
  if (set.dim <= 0) throw std::domain_error("Lindblad set has no dimension");
  const std::int64_t dim = detail::checked_power(
      set.dim, n, limits.max_superop_dimension, "collective dissipator");

  SparseMatrix d(dim * dim, dim * dim);
  SparseMatrix m_signed(dim, dim);
  for (const LindbladTerm& term : set.terms) {
    const double sign = term.eigenvalue < 0.0 ? -1.0 : 1.0;
    const SparseMatrix l = lift(term.op, n, limits).lifted;
    const SparseMatrix lc = l.conjugate();
    d += SparseMatrix(sign * kron_sparse(lc, l));
    m_signed += SparseMatrix(sign * SparseMatrix(l.adjoint() * l));
  }
  SparseMatrix id(dim, dim);
  id.setIdentity();
  d -= SparseMatrix(0.5 * kron_sparse(id, m_signed));
  d -= SparseMatrix(0.5 * kron_sparse(SparseMatrix(m_signed.conjugate()), id));
  d.makeCompressed();
  return d;
}

// Action of expm(op * scale) on a vector by substepped truncated Taylor
// summation; avoids densifying large collective superoperators.
inline Vector apply_exponential(const SparseMatrix& op, double scale,
                                const Vector& v) {
  if (op.rows() != op.cols() || op.rows() != v.size())
    throw std::domain_error("operator and vector sizes do not match");
  double norm1 = 0.0;
  for (int k = 0; k < op.outerSize(); ++k) {
    double col = 0.0;
    for (SparseMatrix::InnerIterator it(op, k); it; ++it)
      col += std::abs(it.value());
    norm1 = std::max(norm1, col);
  }
  const int substeps = std::max(
      1, static_cast<int>(std::ceil(norm1 * std::abs(scale) / 2.0)));
  const double dt = scale / substeps;

  Vector out = v;
  for (int s = 0; s < substeps; ++s) {
    Vector term = out;
    for (int k = 1; k <= 80; ++k) {
      term = (op * term) * (dt / k);
      out += term;
      if (term.norm() <= 1e-18 * out.norm()) break;
    }
  }
  return out;
}

// Index map of a photon permutation on the n-photon Hilbert space: the digit
// at slot k of the new index is the digit at slot perm[k] of the old one.
inline std::vector<std::int64_t> photon_index_map(int base_dim, int n,
                                                  const std::vector<int>& perm) {
  if (base_dim < 1) throw std::domain_error("base dimension must be positive");
  if (static_cast<int>(perm.size()) != n)
    throw std::domain_error("permutation length does not match photon count");
  std::vector<bool> seen(n, false);
  for (int p : perm) {
    if (p < 0 || p >= n || seen[p])
      throw std::domain_error("not a permutation of the photon slots");
    seen[p] = true;
  }

  std::int64_t dim = 1;
  for (int i = 0; i < n; ++i) dim *= base_dim;
  std::vector<std::int64_t> map(dim);
  std::vector<int> digits(n);
  for (std::int64_t idx = 0; idx < dim; ++idx) {
    std::int64_t rest = idx;
    for (int k = n - 1; k >= 0; --k) {
      digits[k] = static_cast<int>(rest % base_dim);
      rest /= base_dim;
    }
    std::int64_t out = 0;
    for (int k = 0; k < n; ++k) out = out * base_dim + digits[perm[k]];
    map[idx] = out;
  }
  return map;
}

// Conjugates a superoperator on the n-photon system by a photon permutation,
// relabeling row and column pair indices consistently. A permutation-covariant
// map comes back unchanged.
inline SparseMatrix permute_photons_superop(const SparseMatrix& superop,
                                            int base_dim, int n,
                                            const std::vector<int>& perm) {
  const std::vector<std::int64_t> map = photon_index_map(base_dim, n, perm);
  const std::int64_t dim = static_cast<std::int64_t>(map.size());
  if (superop.rows() != dim * dim || superop.cols() != dim * dim)
    throw std::domain_error("superoperator size does not match the photon count");

  std::vector<Eigen::Triplet<complex_t>> trips;
  trips.reserve(static_cast<std::size_t>(superop.nonZeros()));
  for (int k = 0; k < superop.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(superop, k); it; ++it) {
      const std::int64_t ra = it.row() % dim, rb = it.row() / dim;
      const std::int64_t ca = it.col() % dim, cb = it.col() / dim;
      trips.emplace_back(map[ra] + dim * map[rb], map[ca] + dim * map[cb],
                         it.value());
    }
  SparseMatrix out(dim * dim, dim * dim);
  out.setFromTriplets(trips.begin(), trips.end());
  out.makeCompressed();
  return out;
}

}  // namespace oamturb
