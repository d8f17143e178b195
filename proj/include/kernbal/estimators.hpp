#pragma once

#include "kernbal/balancing.hpp"

#include <string>
#include <vector>

namespace kernbal::estimators {

using linalg::DenseMatrix;
using linalg::Index;
using linalg::Vector;

enum class FeatureExpansion { kRaw, kQuadraticInteractions };

const char* to_string(FeatureExpansion e);

/// Expands raw covariates: raw columns, then squares of non-binary columns,
/// then all pairwise products in (j, k) order with j < k.
DenseMatrix expand_features(const DenseMatrix& x, FeatureExpansion expansion,
                            const std::vector<bool>& binary_columns);

std::vector<bool> detect_binary_columns(const DenseMatrix& x);

struct LogisticModel {
  FeatureExpansion expansion = FeatureExpansion::kQuadraticInteractions;
  std::vector<bool> binary_columns;  // of the raw covariates
  Vector feature_means;              // standardization of expanded features
  Vector feature_sds;
  Vector coefficients;  // intercept first, then standardized features
  bool converged = false;
  bool separation = false;
  Index iterations = 0;

  /// P(A = 1 | x) for each row of the raw covariate matrix.
  Vector predict(const DenseMatrix& x) const;
};

struct LogisticOptions {
  double ridge = 1e-8;
  double score_tol = 1e-8;
  Index max_iter = 50;
  double separation_threshold = 30.0;
};

/// Ridge-stabilized logistic regression of A on expanded covariates by IRLS.
LogisticModel fit_logistic(const balancing::Sample& sample, FeatureExpansion expansion,
                           const LogisticOptions& options = {});

struct HajekEstimate {
  double att = 0.0;
  double psi_hat = 0.0;
  Vector control_weights;  // normalized odds, sum to 1
};

inline constexpr double kPropensityClip = 1e-6;

/// Normalized inverse-odds weighting of the controls.
HajekEstimate hajek_att(const balancing::Sample& sample, const LogisticModel& model);

/// Same estimator from given propensity scores (length n).
HajekEstimate hajek_att(const balancing::Sample& sample, const Vector& propensity);

}  // namespace kernbal::estimators
