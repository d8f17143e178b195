#include "kernbal/kernel.hpp"

#include "kernbal/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace kernbal::kernel {

namespace {

// Points laid out contiguously (d x n) so distance loops stream memory.
DenseMatrix points_by_column(const CovariateMatrix& x) { return x.values().transpose(); }

double sq_dist(const double* a, const double* b, Index d) {
  double acc = 0.0;
  for (Index k = 0; k < d; ++k) {
    const double diff = a[k] - b[k];
    acc += diff * diff;
  }
  return acc;
}

}  // namespace

void KernelConfig::validate() const {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
    throw Error(ErrorCode::kInvalidArgument,
                "kernel bandwidth must be positive, got " + std::to_string(bandwidth));
  }
}

CovariateMatrix::CovariateMatrix(DenseMatrix values, std::vector<std::string> names)
    : values_(std::move(values)), names_(std::move(names)) {
  if (!values_.allFinite()) {
    throw Error(ErrorCode::kNonFinite, "covariates contain non-finite values");
  }
  if (names_.empty()) {
    for (Index j = 0; j < values_.cols(); ++j) names_.push_back("x" + std::to_string(j + 1));
  }
  if (static_cast<Index>(names_.size()) != values_.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "covariate names do not match column count");
  }
}

CovariateMatrix CovariateMatrix::standardized() const {
  if (standardized_) return *this;
  const Index n = values_.rows();
  CovariateMatrix out;
  out.names_ = names_;
  out.standardized_ = true;
  out.means_ = Vector::Zero(values_.cols());
  out.sds_ = Vector::Zero(values_.cols());
  out.values_ = DenseMatrix::Zero(n, values_.cols());
  for (Index j = 0; j < values_.cols(); ++j) {
    const auto col = values_.col(j);
    const double mean = col.mean();
    const double ss = (col.array() - mean).square().sum();
    const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    out.means_[j] = mean;
    out.sds_[j] = sd;
    const double scale = std::max(1.0, std::abs(mean));
    if (sd > 1e-12 * scale) {
      out.values_.col(j) = (col.array() - mean) / sd;
    }
  }
  return out;
}

CovariateMatrix CovariateMatrix::select_rows(std::span<const Index> rows) const {
  CovariateMatrix out = *this;
  out.values_.resize(static_cast<Index>(rows.size()), values_.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= values_.rows()) {
      throw Error(ErrorCode::kInvalidArgument, "select_rows: row index out of range");
    }
    out.values_.row(static_cast<Index>(i)) = values_.row(rows[i]);
  }
  return out;
}

BandwidthChoice default_bandwidth(const CovariateMatrix& x, double rel_tol) {
  if (x.n() < 1 || x.d() < 1) {
    throw Error(ErrorCode::kInvalidArgument, "default_bandwidth: empty covariate matrix");
  }
  const CovariateMatrix z = x.standardized();
  Eigen::BDCSVD<DenseMatrix> svd(z.values());
  const Vector& sv = svd.singularValues();
  BandwidthChoice out;
  if (sv.size() == 0 || sv[0] <= 0.0) {
    out.bandwidth = 1.0;
    out.degenerate = true;
    return out;
  }
  Index rank = 0;
  for (Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > rel_tol * sv[0]) ++rank;
  }
  out.bandwidth = static_cast<double>(std::max<Index>(rank, 1));
  return out;
}

double gaussian(std::span<const double> a, std::span<const double> b, double bandwidth) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "gaussian: points differ in dimension");
  }
  return std::exp(-sq_dist(a.data(), b.data(), static_cast<Index>(a.size())) / bandwidth);
}

CovariateMatrix prepare(const CovariateMatrix& x, const KernelConfig& cfg) {
  return cfg.standardize ? x.standardized() : x;
}

DenseMatrix gram(const CovariateMatrix& x, const KernelConfig& cfg) {
  cfg.validate();
  if (x.n() < 1) throw Error(ErrorCode::kInvalidArgument, "gram: no rows");
  const DenseMatrix pts = points_by_column(prepare(x, cfg));
  const Index n = pts.cols();
  const Index d = pts.rows();
  DenseMatrix k(n, n);
  for (Index j = 0; j < n; ++j) {
    k(j, j) = 1.0;
    for (Index i = j + 1; i < n; ++i) {
      const double v = std::exp(-sq_dist(pts.col(i).data(), pts.col(j).data(), d) / cfg.bandwidth);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

DenseMatrix gram_cross(const CovariateMatrix& x, std::span<const Index> column_indices,
                       const KernelConfig& cfg) {
  cfg.validate();
  const Index n = x.n();
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (Index j : column_indices) {
    if (j < 0 || j >= n) {
      throw Error(ErrorCode::kInvalidArgument,
                  "gram_cross: index " + std::to_string(j) + " outside [0, " +
                      std::to_string(n) + ")");
    }
    if (seen[static_cast<std::size_t>(j)]) {
      throw Error(ErrorCode::kInvalidArgument,
                  "gram_cross: duplicate index " + std::to_string(j));
    }
    seen[static_cast<std::size_t>(j)] = 1;
  }
  const DenseMatrix pts = points_by_column(prepare(x, cfg));
  const Index d = pts.rows();
  const Index m = static_cast<Index>(column_indices.size());
  DenseMatrix c(n, m);
  for (Index jj = 0; jj < m; ++jj) {
    const double* pj = pts.col(column_indices[static_cast<std::size_t>(jj)]).data();
    double* out = c.col(jj).data();
    for (Index i = 0; i < n; ++i) {
      out[i] = std::exp(-sq_dist(pts.col(i).data(), pj, d) / cfg.bandwidth);
    }
  }
  return c;
}

}  // namespace kernbal::kernel
