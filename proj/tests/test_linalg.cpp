#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kernbal/error.hpp"
#include "kernbal/linalg.hpp"
#include "oracles.hpp"

#include <random>

using namespace kernbal;
using namespace kernbal::linalg;

namespace {

DenseMatrix random_matrix(std::mt19937_64& gen, Index r, Index c) {
  std::normal_distribution<double> nd(0.0, 1.0);
  DenseMatrix a(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) a(i, j) = nd(gen);
  return a;
}

// Random quasi-definite matrix [[-A, B^T], [B, C]] with A, C positive definite.
DenseMatrix random_quasi_definite(std::mt19937_64& gen, Index n1, Index n2, double density) {
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::normal_distribution<double> nd(0.0, 1.0);
  DenseMatrix k = DenseMatrix::Zero(n1 + n2, n1 + n2);
  for (Index i = 0; i < n1; ++i) k(i, i) = -(1.0 + ud(gen));
  for (Index i = 0; i < n2; ++i) k(n1 + i, n1 + i) = 0.1 + ud(gen);
  for (Index i = 0; i < n2; ++i) {
    for (Index j = 0; j < n1; ++j) {
      if (ud(gen) < density) {
        const double v = nd(gen);
        k(n1 + i, j) = v;
        k(j, n1 + i) = v;
      }
    }
  }
  return k;
}

SparseSymmetric to_sparse(const DenseMatrix& a) {
  std::vector<Eigen::Triplet<double, int>> t;
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i <= j; ++i)
      if (a(i, j) != 0.0 || i == j) t.emplace_back(static_cast<int>(i), static_cast<int>(j), a(i, j));
  return SparseSymmetric::from_triplets(a.rows(), t);
}

}  // namespace

TEST_CASE("eigh_sym on identity and diagonal") {
  const auto e = eigh_sym(DenseMatrix::Identity(3, 3));
  CHECK(e.eigenvalues.isApprox(Vector::Ones(3)));

  DenseMatrix d = DenseMatrix::Zero(3, 3);
  d.diagonal() << 2.0, 5.0, -1.0;
  const auto ed = eigh_sym(d);
  CHECK(ed.eigenvalues[0] == doctest::Approx(5.0));
  CHECK(ed.eigenvalues[1] == doctest::Approx(2.0));
  CHECK(ed.eigenvalues[2] == doctest::Approx(-1.0));
  CHECK(std::abs(ed.eigenvectors(1, 0)) == doctest::Approx(1.0));
  CHECK(std::abs(ed.eigenvectors(0, 1)) == doctest::Approx(1.0));
  CHECK(std::abs(ed.eigenvectors(2, 2)) == doctest::Approx(1.0));
}

TEST_CASE("eigh_sym reconstruction, ordering and trace") {
  std::mt19937_64 gen(7);
  for (int rep = 0; rep < 20; ++rep) {
    const DenseMatrix b = random_matrix(gen, 8, 8);
    const DenseMatrix a = b + b.transpose();
    const auto e = eigh_sym(a);
    const DenseMatrix recon = e.eigenvectors * e.eigenvalues.asDiagonal() * e.eigenvectors.transpose();
    CHECK((recon - a).norm() / a.norm() <= 1e-10);
    for (Index i = 1; i < 8; ++i) CHECK(e.eigenvalues[i - 1] >= e.eigenvalues[i]);
    CHECK((e.eigenvectors.transpose() * e.eigenvectors - DenseMatrix::Identity(8, 8)).norm() <= 1e-10);
    CHECK(std::abs(e.eigenvalues.sum() - a.trace()) <= 1e-10 * (1.0 + a.cwiseAbs().sum()));
    CHECK((a * e.eigenvectors - e.eigenvectors * e.eigenvalues.asDiagonal()).norm() <= 1e-8 * a.norm());
  }
}

TEST_CASE("eigh_sym rejects bad input") {
  CHECK_THROWS_AS(eigh_sym(DenseMatrix::Zero(2, 3)), Error);
  DenseMatrix a = DenseMatrix::Identity(2, 2);
  a(0, 1) = std::numeric_limits<double>::quiet_NaN();
  a(1, 0) = a(0, 1);
  CHECK_THROWS_AS(eigh_sym(a), Error);
  DenseMatrix asym = DenseMatrix::Identity(2, 2);
  asym(0, 1) = 1.0;
  CHECK_THROWS_AS(eigh_sym(asym), Error);
}

TEST_CASE("truncated_svd full rank, rank one and Eckart-Young residual") {
  std::mt19937_64 gen(11);
  const DenseMatrix a = random_matrix(gen, 6, 4);
  const auto full = truncated_svd(a, 4);
  const DenseMatrix recon = full.left * full.singular_values.asDiagonal() * full.right.transpose();
  CHECK((recon - a).norm() <= 1e-9 * a.norm());
  CHECK((full.left.transpose() * full.left - DenseMatrix::Identity(4, 4)).norm() <= 1e-10);
  CHECK((full.right.transpose() * full.right - DenseMatrix::Identity(4, 4)).norm() <= 1e-10);

  // Rank-2 residual against the eigenvalues of A^T A.
  const auto r2 = truncated_svd(a, 2);
  const DenseMatrix resid = a - r2.left * r2.singular_values.asDiagonal() * r2.right.transpose();
  const auto ata = eigh_sym(a.transpose() * a);
  CHECK(resid.norm() == doctest::Approx(std::sqrt(ata.eigenvalues[2] + ata.eigenvalues[3])).epsilon(1e-8));
  // Spectral residual equals sigma_3.
  const auto rs = truncated_svd(resid, 1);
  CHECK(rs.singular_values[0] == doctest::Approx(std::sqrt(ata.eigenvalues[2])).epsilon(1e-8));
  for (Index i = 0; i < 4; ++i) {
    CHECK(full.singular_values[i] == doctest::Approx(std::sqrt(ata.eigenvalues[i])).epsilon(1e-8));
  }

  const Vector u = Vector::LinSpaced(5, 1.0, 5.0);
  const Vector v = Vector::LinSpaced(3, -1.0, 2.0);
  const auto r1 = truncated_svd(u * v.transpose(), 3);
  CHECK(r1.singular_values[0] == doctest::Approx(u.norm() * v.norm()));
  CHECK(std::abs(r1.singular_values[1]) <= 1e-10);
  CHECK(std::abs(r1.singular_values[2]) <= 1e-10);

  CHECK_THROWS_AS(truncated_svd(a, 0), Error);
  CHECK_THROWS_AS(truncated_svd(a, 5), Error);
}

TEST_CASE("sparse symmetric storage keeps the upper triangle") {
  std::vector<Eigen::Triplet<double, int>> t{{0, 0, 1.0}, {1, 0, 2.0}, {1, 1, 3.0}};
  const auto s = SparseSymmetric::from_triplets(2, t);
  DenseMatrix expect(2, 2);
  expect << 1.0, 2.0, 2.0, 3.0;
  CHECK(s.to_dense().isApprox(expect));
  CHECK(s.multiply(Vector::Ones(2)).isApprox(Vector(expect.rowwise().sum())));

  SparseSymmetric::Storage lower(2, 2);
  lower.insert(1, 0) = 1.0;
  CHECK_THROWS_AS(SparseSymmetric::from_upper(lower), Error);
}

TEST_CASE("ldl diagonal cases") {
  DenseMatrix d = DenseMatrix::Zero(2, 2);
  d.diagonal() << -2.0, 3.0;
  const auto f = ldl_factor(to_sparse(d));
  Vector diag = f.diagonal();
  std::vector<double> vals{diag[0], diag[1]};
  std::sort(vals.begin(), vals.end());
  CHECK(vals[0] == doctest::Approx(-2.0));
  CHECK(vals[1] == doctest::Approx(3.0));
  const Vector x = ldl_solve(f, Vector{{2.0, 6.0}});
  CHECK(x[0] == doctest::Approx(-1.0));
  CHECK(x[1] == doctest::Approx(2.0));

  const auto id = ldl_factor(to_sparse(DenseMatrix::Identity(4, 4)));
  const Vector r = Vector::LinSpaced(4, 1.0, 4.0);
  CHECK(ldl_solve(id, r).isApprox(r));
}

TEST_CASE("ldl reconstruction of a 2x2 quasi-definite matrix") {
  DenseMatrix a(2, 2);
  a << -2.0, 1.0, 1.0, 1.5;
  const auto f = ldl_factor(to_sparse(a));
  const DenseMatrix l = DenseMatrix(f.unit_lower());
  const Eigen::VectorXi perm = f.permutation();
  const DenseMatrix ldlt = l * f.diagonal().asDiagonal() * l.transpose();
  // P A P^T = L D L^T with P mapping original index i to perm[i].
  DenseMatrix pap(2, 2);
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 2; ++j) pap(perm[i], perm[j]) = a(i, j);
  CHECK((ldlt - pap).norm() <= 1e-12);
}

TEST_CASE("ldl solves random quasi-definite systems like a dense LU") {
  std::mt19937_64 gen(3);
  std::uniform_int_distribution<int> dim(2, 100);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int rep = 0; rep < 1000; ++rep) {
    const Index n1 = dim(gen);
    const Index n2 = dim(gen);
    const DenseMatrix k = random_quasi_definite(gen, n1, n2, 0.1);
    const auto f = ldl_factor(to_sparse(k));
    Vector rhs(n1 + n2);
    for (Index i = 0; i < rhs.size(); ++i) rhs[i] = nd(gen);
    const Vector x = ldl_solve(f, rhs);
    CHECK((k * x - rhs).lpNorm<Eigen::Infinity>() <= 1e-8 * (1.0 + rhs.lpNorm<Eigen::Infinity>()));
    if (rep < 20) {
      CHECK((x - oracle::dense_solve(k, rhs)).lpNorm<Eigen::Infinity>() <= 1e-8 * (1.0 + x.lpNorm<Eigen::Infinity>()));
    }
  }
}

TEST_CASE("ldl refactor reuses the symbolic analysis") {
  std::mt19937_64 gen(5);
  DenseMatrix k = random_quasi_definite(gen, 10, 6, 0.3);
  auto sparse = to_sparse(k);
  auto f = ldl_factor(sparse);
  const auto nnz = f.factor_nonzeros();
  for (Index i = 10; i < 16; ++i) k(i, i) *= 4.0;
  sparse = to_sparse(k);
  f.refactor(sparse);
  CHECK(f.factor_nonzeros() == nnz);
  const Vector rhs = Vector::Ones(16);
  CHECK((k * f.solve(rhs) - rhs).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("ldl errors") {
  const DenseMatrix z = DenseMatrix::Zero(2, 2);
  CHECK_THROWS_AS(ldl_factor(to_sparse(z)), Error);
  const auto f = ldl_factor(to_sparse(DenseMatrix::Identity(3, 3)));
  CHECK_THROWS_AS(ldl_solve(f, Vector::Ones(2)), Error);
}
