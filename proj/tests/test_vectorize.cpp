#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "oamturb/vectorize.hpp"

using namespace oamturb;

namespace {

Matrix random_matrix(int rows, int cols, std::mt19937& gen) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = {dist(gen), dist(gen)};
  return m;
}

}  // namespace

TEST_CASE("col_stack and unstack round trip") {
  std::mt19937 gen(42);
  Matrix x = random_matrix(4, 4, gen);
  Vector v = col_stack(x);
  REQUIRE(v.size() == 16);
  for (int m = 0; m < 4; ++m)
    for (int n = 0; n < 4; ++n) REQUIRE(v(pair_index(m, n, 4)) == x(m, n));
  REQUIRE((unstack(v, 4) - x).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE_THROWS_AS(unstack(v, 3), std::domain_error);
}

TEST_CASE("sandwich superoperator implements col(AXB)") {
  std::mt19937 gen(7);
  Matrix a = random_matrix(3, 3, gen);
  Matrix b = random_matrix(3, 3, gen);
  Matrix x = random_matrix(3, 3, gen);
  Vector direct = col_stack(a * x * b);
  Vector via = sandwich_superop(a, b) * col_stack(x);
  REQUIRE((direct - via).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("left and right multiplication superoperators") {
  std::mt19937 gen(11);
  Matrix a = random_matrix(3, 3, gen);
  Matrix x = random_matrix(3, 3, gen);
  REQUIRE((left_mul_superop(a) * col_stack(x) - col_stack(a * x)).cwiseAbs().maxCoeff() < 1e-13);
  REQUIRE((right_mul_superop(a) * col_stack(x) - col_stack(x * a)).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("dense and sparse Kronecker products agree") {
  std::mt19937 gen(3);
  Matrix p = random_matrix(3, 2, gen);
  Matrix q = random_matrix(2, 4, gen);
  Matrix dense = kron(p, q);
  REQUIRE(dense.rows() == 6);
  REQUIRE(dense.cols() == 8);
  SparseMatrix ps = p.sparseView();
  SparseMatrix qs = q.sparseView();
  Matrix sparse = Matrix(kron_sparse(ps, qs));
  REQUIRE((dense - sparse).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("kron of identities is the identity") {
  Matrix id2 = Matrix::Identity(2, 2);
  Matrix id3 = Matrix::Identity(3, 3);
  REQUIRE((kron(id2, id3) - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff() == 0.0);
}
