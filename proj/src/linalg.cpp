#include "kernbal/linalg.hpp"

#include "kernbal/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace kernbal::linalg {

bool all_finite(const DenseMatrix& a) { return a.allFinite(); }

SymmetricEigen eigh_sym(const DenseMatrix& a) {
  if (a.rows() != a.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "eigh_sym: matrix is " + std::to_string(a.rows()) + "x" +
                    std::to_string(a.cols()) + ", expected square");
  }
  if (!a.allFinite()) {
    throw Error(ErrorCode::kNonFinite, "eigh_sym: non-finite entries");
  }
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw Error(ErrorCode::kInvalidArgument, "eigh_sym: matrix is not symmetric");
  }

  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(a);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorCode::kInvalidArgument, "eigh_sym: eigensolver did not converge");
  }
  // Eigen returns ascending order.
  SymmetricEigen out;
  out.eigenvalues = es.eigenvalues().reverse();
  out.eigenvectors = es.eigenvectors().rowwise().reverse();
  return out;
}

TruncatedSvd truncated_svd(const DenseMatrix& a, Index rank) {
  const Index k = std::min(a.rows(), a.cols());
  if (rank < 1 || rank > k) {
    throw Error(ErrorCode::kInvalidArgument,
                "truncated_svd: rank " + std::to_string(rank) + " outside [1, " +
                    std::to_string(k) + "]");
  }
  if (!a.allFinite()) {
    throw Error(ErrorCode::kNonFinite, "truncated_svd: non-finite entries");
  }
  Eigen::BDCSVD<DenseMatrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  TruncatedSvd out;
  out.rank = rank;
  out.left = svd.matrixU().leftCols(rank);
  out.singular_values = svd.singularValues().head(rank);
  out.right = svd.matrixV().leftCols(rank);
  return out;
}

SparseSymmetric SparseSymmetric::from_triplets(
    Index dim, const std::vector<Eigen::Triplet<double, int>>& triplets) {
  std::vector<Eigen::Triplet<double, int>> upper;
  upper.reserve(triplets.size());
  for (const auto& t : triplets) {
    if (t.row() < 0 || t.col() < 0 || t.row() >= dim || t.col() >= dim) {
      throw Error(ErrorCode::kDimensionMismatch, "SparseSymmetric: triplet out of range");
    }
    if (t.row() <= t.col()) {
      upper.push_back(t);
    } else {
      upper.emplace_back(t.col(), t.row(), t.value());
    }
  }
  Storage m(static_cast<int>(dim), static_cast<int>(dim));
  m.setFromTriplets(upper.begin(), upper.end());
  m.makeCompressed();
  SparseSymmetric out;
  out.upper_ = std::move(m);
  return out;
}

SparseSymmetric SparseSymmetric::from_upper(Storage upper) {
  if (upper.rows() != upper.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "SparseSymmetric: matrix not square");
  }
  for (int j = 0; j < upper.outerSize(); ++j) {
    for (Storage::InnerIterator it(upper, j); it; ++it) {
      if (it.row() > it.col()) {
        throw Error(ErrorCode::kInvalidArgument,
                    "SparseSymmetric: entry below the diagonal; only the upper "
                    "triangle may be stored");
      }
    }
  }
  upper.makeCompressed();
  SparseSymmetric out;
  out.upper_ = std::move(upper);
  return out;
}

DenseMatrix SparseSymmetric::to_dense() const {
  DenseMatrix full = DenseMatrix(upper_);
  DenseMatrix strict = full.triangularView<Eigen::StrictlyUpper>();
  full += strict.transpose();
  return full;
}

Vector SparseSymmetric::multiply(const Vector& x) const {
  if (x.size() != dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "SparseSymmetric::multiply: size mismatch");
  }
  return upper_.selfadjointView<Eigen::Upper>() * x;
}

LdlFactor LdlFactor::factor(const SparseSymmetric& kkt) {
  LdlFactor f;
  f.dim_ = kkt.dim();
  f.solver_ = std::make_unique<Solver>();
  f.solver_->analyzePattern(kkt.upper());
  f.solver_->factorize(kkt.upper());
  f.check_numeric();
  return f;
}

void LdlFactor::refactor(const SparseSymmetric& kkt) {
  if (!solver_) {
    *this = factor(kkt);
    return;
  }
  if (kkt.dim() != dim_) {
    throw Error(ErrorCode::kDimensionMismatch, "LdlFactor::refactor: dimension changed");
  }
  solver_->factorize(kkt.upper());
  check_numeric();
}

void LdlFactor::check_numeric() const {
  if (solver_->info() != Eigen::Success) {
    throw Error(ErrorCode::kZeroPivot,
                "ldl_factor: zero pivot encountered; matrix is not quasi-definite");
  }
  const Vector d = solver_->vectorD();
  for (Index i = 0; i < d.size(); ++i) {
    if (d[i] == 0.0 || !std::isfinite(d[i])) {
      throw Error(ErrorCode::kZeroPivot,
                  "ldl_factor: zero pivot at position " + std::to_string(i));
    }
  }
}

Vector LdlFactor::solve(const Vector& rhs) const {
  if (!solver_) {
    throw Error(ErrorCode::kInvalidArgument, "ldl_solve: factor is empty");
  }
  if (rhs.size() != dim_) {
    throw Error(ErrorCode::kDimensionMismatch,
                "ldl_solve: rhs has length " + std::to_string(rhs.size()) +
                    ", factor dimension is " + std::to_string(dim_));
  }
  return solver_->solve(rhs);
}

Vector LdlFactor::diagonal() const { return solver_ ? Vector(solver_->vectorD()) : Vector(); }

Eigen::SparseMatrix<double> LdlFactor::unit_lower() const {
  if (!solver_) return {};
  Eigen::SparseMatrix<double> l = solver_->matrixL();
  return l;
}

Eigen::VectorXi LdlFactor::permutation() const {
  if (!solver_) return {};
  return solver_->permutationP().indices();
}

Index LdlFactor::factor_nonzeros() const {
  if (!solver_) return 0;
  Eigen::SparseMatrix<double> l = solver_->matrixL();
  return l.nonZeros();
}

LdlFactor ldl_factor(const SparseSymmetric& kkt) { return LdlFactor::factor(kkt); }

Vector ldl_solve(const LdlFactor& factor, const Vector& rhs) { return factor.solve(rhs); }

}  // namespace kernbal::linalg
