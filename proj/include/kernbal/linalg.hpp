#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cstddef>
#include <memory>
#include <vector>

namespace kernbal::linalg {

using DenseMatrix = Eigen::MatrixXd;  // column-major
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

struct SymmetricEigen {
  Vector eigenvalues;        // nonincreasing
  DenseMatrix eigenvectors;  // column j pairs with eigenvalues[j]
};

struct TruncatedSvd {
  Index rank = 0;
  DenseMatrix left;
  Vector singular_values;  // nonincreasing
  DenseMatrix right;
};

/// Symmetric eigendecomposition with eigenvalues sorted in nonincreasing
/// order. Throws on non-square, non-finite or visibly asymmetric input.
SymmetricEigen eigh_sym(const DenseMatrix& a);

/// Best rank-`rank` approximation U diag(s) V^T of `a`.
TruncatedSvd truncated_svd(const DenseMatrix& a, Index rank);

/// Upper triangle of a sparse symmetric matrix in compressed-column form.
class SparseSymmetric {
 public:
  using Storage = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

  SparseSymmetric() = default;

  /// Builds from (row, col, value) triplets. Entries below the diagonal are
  /// mirrored to the upper triangle; duplicates are summed.
  static SparseSymmetric from_triplets(Index dim,
                                       const std::vector<Eigen::Triplet<double, int>>& triplets);

  /// Takes an upper-triangular matrix as is. Throws if any entry lies below
  /// the diagonal.
  static SparseSymmetric from_upper(Storage upper);

  Index dim() const { return upper_.rows(); }
  const Storage& upper() const { return upper_; }
  Storage& mutable_upper() { return upper_; }

  /// Dense symmetric copy; for tests and small diagnostics only.
  DenseMatrix to_dense() const;

  Vector multiply(const Vector& x) const;

 private:
  Storage upper_;
};

/// P L D L^T P^T factorization of a quasi-definite matrix. The symbolic
/// analysis (ordering and elimination tree) is retained so that a matrix with
/// the same pattern can be refactored numerically.
class LdlFactor {
 public:
  LdlFactor() = default;
  LdlFactor(LdlFactor&&) noexcept = default;
  LdlFactor& operator=(LdlFactor&&) noexcept = default;

  /// Symbolic plus numeric factorization with an AMD ordering.
  static LdlFactor factor(const SparseSymmetric& kkt);

  /// Numeric refactorization for a matrix with the same sparsity pattern.
  void refactor(const SparseSymmetric& kkt);

  Vector solve(const Vector& rhs) const;

  Index dim() const { return dim_; }
  Vector diagonal() const;
  Eigen::SparseMatrix<double> unit_lower() const;
  Eigen::VectorXi permutation() const;
  Index factor_nonzeros() const;

 private:
  using Solver = Eigen::SimplicialLDLT<SparseSymmetric::Storage, Eigen::Upper,
                                       Eigen::AMDOrdering<int>>;
  void check_numeric() const;

  Index dim_ = 0;
  std::unique_ptr<Solver> solver_;
};

LdlFactor ldl_factor(const SparseSymmetric& kkt);
Vector ldl_solve(const LdlFactor& factor, const Vector& rhs);

bool all_finite(const DenseMatrix& a);

}  // namespace kernbal::linalg
