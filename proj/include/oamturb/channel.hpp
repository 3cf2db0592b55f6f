#pragma once

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "oamturb/ipe.hpp"
#include "oamturb/modes.hpp"
#include "oamturb/vectorize.hpp"

// Discrete Lindblad representation of the dissipator: reshuffle the
// superoperator into its Choi matrix, project out the trace direction, and
// eigendecompose. Each eigenpair (lambda_k, v_k) becomes an operator
// L_k = unvec(sqrt(|lambda_k|) v_k) entering the dissipator as
//
//   D = sum_k sign_k ( conj(L_k) x L_k - 1/2 I x L_k'L_k - 1/2 conj(L_k'L_k) x I )
//
// which reproduces the input exactly when no eigenvalue is discarded.
// Negative eigenvalues (a non-complete-positivity diagnostic at finite
// truncation) are kept with their sign and counted, never silently dropped.

namespace oamturb {

namespace detail {

inline int square_side(const Matrix& x, const char* what) {
  if (x.rows() != x.cols()) throw std::domain_error(std::string(what) + " must be square");
  const int n = static_cast<int>(std::llround(std::sqrt(static_cast<double>(x.rows()))));
  if (static_cast<long long>(n) * n != x.rows())
    throw std::domain_error(std::string(what) + " side is not a perfect square");
  return n;
}

}  // namespace detail

// Index reshuffle between superoperator and Choi orderings:
// Choi[(m,u),(n,v)] = D[(m,n),(u,v)]. Involutive.
inline Matrix choi_reshuffle(const Matrix& d) {
  const int n = detail::square_side(d, "superoperator");
  Matrix choi(d.rows(), d.cols());
  for (int m = 0; m < n; ++m)
    for (int nn = 0; nn < n; ++nn)
      for (int u = 0; u < n; ++u)
        for (int v = 0; v < n; ++v)
          choi(pair_index(m, u, n), pair_index(nn, v, n)) =
              d(pair_index(m, nn, n), pair_index(u, v, n));
  return choi;
}

// D-tilde = P (Choi) P with P = I - col(I)col(I)'/N, then Hermitian
// symmetrization. Removes the trace direction that carries no Lindblad
// content.
inline Matrix project_traceless(const Matrix& choi, int n_dim) {
  if (choi.rows() != choi.cols() ||
      choi.rows() != static_cast<Eigen::Index>(n_dim) * n_dim)
    throw std::domain_error("Choi matrix size does not match the given dimension");
  const Vector id = col_stack(Matrix::Identity(n_dim, n_dim));
  const Matrix proj = Matrix::Identity(choi.rows(), choi.cols()) -
                      id * id.adjoint() / static_cast<double>(n_dim);
  const Matrix out = proj * choi * proj;
  return 0.5 * (out + out.adjoint());
}

struct LindbladTerm {
  double eigenvalue = 0.0;  // signed weight lambda_k
  Matrix op;                // L_k = unvec(sqrt(|lambda_k|) v_k), N x N
};

struct LindbladSet {
  std::vector<LindbladTerm> terms;  // ordered by |lambda| descending
  int dim = 0;
  double tolerance = 0.0;
  int negative_count = 0;
  double negative_magnitude = 0.0;
};

namespace detail {

// Phase convention: rotate so the largest-magnitude entry (lowest flat index
// on near-ties) is real and positive.
inline void fix_phase(Matrix& op) {
  double best = 0.0;
  for (Eigen::Index i = 0; i < op.size(); ++i)
    best = std::max(best, std::abs(op.data()[i]));
  if (best == 0.0) return;
  for (Eigen::Index i = 0; i < op.size(); ++i) {
    const complex_t v = op.data()[i];
    if (std::abs(v) >= best * (1.0 - 1e-12)) {
      op *= std::conj(v) / std::abs(v);
      return;
    }
  }
}

struct RawPair {
  double eigenvalue;
  Vector vec;
  int shift;  // azimuthal shift of the eigenvector's Choi sector, 0 if unknown
};

inline LindbladSet collect_lindblads(std::vector<RawPair> pairs, int n_dim,
                                     double tol) {
  double max_abs = 0.0;
  for (const auto& p : pairs) max_abs = std::max(max_abs, std::abs(p.eigenvalue));

  std::stable_sort(pairs.begin(), pairs.end(), [](const RawPair& a, const RawPair& b) {
    return std::abs(a.eigenvalue) > std::abs(b.eigenvalue);
  });
  // Near-degenerate runs are ordered by descending shift so the raising
  // operator of a +/- pair always comes first.
  for (std::size_t i = 0; i < pairs.size();) {
    std::size_t j = i + 1;
    while (j < pairs.size() &&
           std::abs(std::abs(pairs[j].eigenvalue) - std::abs(pairs[i].eigenvalue)) <=
               1e-8 * std::max(max_abs, 1e-300))
      ++j;
    std::stable_sort(pairs.begin() + i, pairs.begin() + j,
                     [](const RawPair& a, const RawPair& b) { return a.shift > b.shift; });
    i = j;
  }

  LindbladSet set;
  set.dim = n_dim;
  set.tolerance = tol;
  for (const auto& p : pairs) {
    if (std::abs(p.eigenvalue) <= tol * max_abs || p.eigenvalue == 0.0) continue;
    LindbladTerm term;
    term.eigenvalue = p.eigenvalue;
    term.op = unstack(std::sqrt(std::abs(p.eigenvalue)) * p.vec, n_dim);
    fix_phase(term.op);
    if (p.eigenvalue < 0.0) {
      ++set.negative_count;
      set.negative_magnitude += -p.eigenvalue;
    }
    set.terms.push_back(std::move(term));
  }
  return set;
}

inline void require_hermitian(const Matrix& x, const char* what) {
  const double scale = std::max(x.cwiseAbs().maxCoeff(), 1e-300);
  if ((x - x.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::domain_error(std::string(what) + " must be Hermitian");
}

inline void check_eigensolver(const Eigen::SelfAdjointEigenSolver<Matrix>& es,
                              const Matrix& input) {
  if (es.info() == Eigen::Success) return;
  throw std::runtime_error(
      "eigendecomposition failed; matrix max |entry| = " +
      std::to_string(input.cwiseAbs().maxCoeff()) +
      ", size = " + std::to_string(input.rows()));
}

}  // namespace detail

// Eigendecomposition of the projected Choi matrix without mode structure.
// Exactly degenerate subspaces keep the solver's internal basis; use the
// Truncation overload when the azimuthal-shift resolution matters.
inline LindbladSet extract_lindblads(const Matrix& dtilde, double tol = 1e-10) {
  const int n_dim = detail::square_side(dtilde, "projected Choi matrix");
  detail::require_hermitian(dtilde, "projected Choi matrix");
  Eigen::SelfAdjointEigenSolver<Matrix> es(dtilde);
  detail::check_eigensolver(es, dtilde);
  std::vector<detail::RawPair> pairs;
  pairs.reserve(dtilde.rows());
  for (Eigen::Index k = 0; k < dtilde.rows(); ++k)
    pairs.push_back({es.eigenvalues()(k), es.eigenvectors().col(k), 0});
  return detail::collect_lindblads(std::move(pairs), n_dim, tol);
}

// Mode-structured variant: the Choi matrix of the turbulence dissipator is
// exactly block diagonal in the azimuthal shift of its row pair, so each
// sector is solved separately. Eigenvectors then carry a single shift, and
// degenerate +/- twins come out as clean raising and lowering operators.
inline LindbladSet extract_lindblads(const Matrix& dtilde, Truncation trunc,
                                     double tol = 1e-10) {
  const int n_dim = dimension(trunc);
  if (dtilde.rows() != static_cast<Eigen::Index>(n_dim) * n_dim ||
      dtilde.rows() != dtilde.cols())
    throw std::domain_error("projected Choi matrix size does not match truncation");
  detail::require_hermitian(dtilde, "projected Choi matrix");

  std::vector<detail::RawPair> pairs;
  pairs.reserve(dtilde.rows());
  for (int delta = -2 * trunc.l_cut; delta <= 2 * trunc.l_cut; ++delta) {
    const std::vector<int> idx = sector_pairs(trunc, delta);
    const Eigen::Index b = static_cast<Eigen::Index>(idx.size());
    Matrix block(b, b);
    for (Eigen::Index i = 0; i < b; ++i)
      for (Eigen::Index j = 0; j < b; ++j) block(i, j) = dtilde(idx[i], idx[j]);
    Eigen::SelfAdjointEigenSolver<Matrix> es(block);
    detail::check_eigensolver(es, block);
    for (Eigen::Index k = 0; k < b; ++k) {
      Vector full = Vector::Zero(dtilde.rows());
      for (Eigen::Index i = 0; i < b; ++i) full(idx[i]) = es.eigenvectors()(i, k);
      pairs.push_back({es.eigenvalues()(k), std::move(full), delta});
    }
  }
  return detail::collect_lindblads(std::move(pairs), n_dim, tol);
}

// Dissipator superoperator generated by a Lindblad set.
inline Matrix reconstruct_dissipator(const LindbladSet& set) {
  if (set.dim <= 0) throw std::domain_error("Lindblad set carries no dimension");
  const Eigen::Index size = static_cast<Eigen::Index>(set.dim) * set.dim;
  Matrix d = Matrix::Zero(size, size);
  const Matrix id = Matrix::Identity(set.dim, set.dim);
  for (const auto& term : set.terms) {
    const double sign = term.eigenvalue < 0.0 ? -1.0 : 1.0;
    const Matrix m = term.op.adjoint() * term.op;
    d += sign * (sandwich_superop(term.op, term.op.adjoint()) -
                 0.5 * kron(id, m) - 0.5 * kron(m.conjugate(), id));
  }
  return d;
}

}  // namespace oamturb
