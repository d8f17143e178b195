#pragma once

#include "kernbal/linalg.hpp"

#include <span>
#include <string>
#include <vector>

namespace kernbal::kernel {

using linalg::DenseMatrix;
using linalg::Index;
using linalg::Vector;

// Gaussian kernel k(x, y) = exp(-||x - y||^2 / bandwidth).
struct KernelConfig {
  double bandwidth = 1.0;
  bool standardize = true;

  void validate() const;
};

/// n x d covariates. When standardized, the column means and standard
/// deviations of the source data are kept so callers can report in original
/// units. Constant columns standardize to zero and keep their index.
class CovariateMatrix {
 public:
  CovariateMatrix() = default;
  explicit CovariateMatrix(DenseMatrix values, std::vector<std::string> names = {});

  Index n() const { return values_.rows(); }
  Index d() const { return values_.cols(); }
  const DenseMatrix& values() const { return values_; }
  const std::vector<std::string>& names() const { return names_; }

  bool is_standardized() const { return standardized_; }
  const Vector& means() const { return means_; }
  const Vector& sds() const { return sds_; }

  /// Column-standardized copy (mean 0, sample sd 1).
  CovariateMatrix standardized() const;

  CovariateMatrix select_rows(std::span<const Index> rows) const;

 private:
  DenseMatrix values_;
  std::vector<std::string> names_;
  bool standardized_ = false;
  Vector means_;
  Vector sds_;
};

struct BandwidthChoice {
  double bandwidth = 1.0;
  bool degenerate = false;  // all-zero covariates; bandwidth floored at 1
};

inline constexpr double kDefaultRankTolerance = 1e-8;

/// Numerical column rank of the standardized covariates: the number of
/// singular values above rel_tol * sigma_1, floored at 1.
BandwidthChoice default_bandwidth(const CovariateMatrix& x,
                                  double rel_tol = kDefaultRankTolerance);

double gaussian(std::span<const double> a, std::span<const double> b, double bandwidth);

/// Full n x n Gram matrix. Only for small n.
DenseMatrix gram(const CovariateMatrix& x, const KernelConfig& cfg);

/// Columns `column_indices` of the Gram matrix, n x m, without forming the
/// full matrix.
DenseMatrix gram_cross(const CovariateMatrix& x, std::span<const Index> column_indices,
                       const KernelConfig& cfg);

/// Covariates as the kernel sees them: standardized when cfg asks for it.
CovariateMatrix prepare(const CovariateMatrix& x, const KernelConfig& cfg);

}  // namespace kernbal::kernel
