#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <complex>
#include <stdexcept>

namespace oamturb {

using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using SparseMatrix = Eigen::SparseMatrix<std::complex<double>>;

// Column-stacking conventions used throughout:
//   col(rho)[m + N*n] = rho(m, n)
//   col(A X B) = kron(B^T, A) col(X)
// so a superoperator row/column is addressed by the pair index m + N*n.

inline int pair_index(int m, int n, int N) { return m + N * n; }

inline Vector col_stack(const Matrix& x) {
  return Eigen::Map<const Vector>(x.data(), x.size());
}

inline Matrix unstack(const Vector& v, int rows) {
  if (rows <= 0 || v.size() % rows != 0)
    throw std::domain_error("vector length is not a multiple of the row count");
  return Eigen::Map<const Matrix>(v.data(), rows, v.size() / rows);
}

inline Matrix kron(const Matrix& p, const Matrix& q) {
  Matrix r(p.rows() * q.rows(), p.cols() * q.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j)
      r.block(i * q.rows(), j * q.cols(), q.rows(), q.cols()) = p(i, j) * q;
  return r;
}

inline SparseMatrix kron_sparse(const SparseMatrix& p, const SparseMatrix& q) {
  SparseMatrix r(p.rows() * q.rows(), p.cols() * q.cols());
  std::vector<Eigen::Triplet<std::complex<double>>> trips;
  trips.reserve(static_cast<std::size_t>(p.nonZeros()) * q.nonZeros());
  for (int kp = 0; kp < p.outerSize(); ++kp)
    for (SparseMatrix::InnerIterator ip(p, kp); ip; ++ip)
      for (int kq = 0; kq < q.outerSize(); ++kq)
        for (SparseMatrix::InnerIterator iq(q, kq); iq; ++iq)
          trips.emplace_back(ip.row() * q.rows() + iq.row(),
                             ip.col() * q.cols() + iq.col(),
                             ip.value() * iq.value());
  r.setFromTriplets(trips.begin(), trips.end());
  return r;
}

// Superoperator of X -> A X B under the conventions above.
inline Matrix sandwich_superop(const Matrix& a, const Matrix& b) {
  return kron(b.transpose(), a);
}

inline Matrix left_mul_superop(const Matrix& a) {
  return sandwich_superop(a, Matrix::Identity(a.cols(), a.cols()));
}

inline Matrix right_mul_superop(const Matrix& b) {
  return sandwich_superop(Matrix::Identity(b.rows(), b.rows()), b);
}

}  // namespace oamturb
