#pragma once

#include "kernbal/balancing.hpp"

#include <string>
#include <vector>

namespace kernbal::diagnostics {

using linalg::DenseMatrix;
using linalg::Index;
using linalg::Vector;

struct CovariateBalance {
  std::string covariate;
  double mean_treated = 0.0;
  double mean_control_unweighted = 0.0;
  double mean_control_weighted = 0.0;
  double tasmd_before = 0.0;
  double tasmd_after = 0.0;
  bool zero_sd = false;  // treated sd is zero; values are raw absolute gaps
};

struct BasisBalance {
  Index index = 0;  // column of the basis
  double imbalance = 0.0;
  double delta = 0.0;
};

struct BalanceReport {
  std::vector<CovariateBalance> covariates;
  std::vector<BasisBalance> basis;
  bool sd_undefined = false;  // fewer than two treated units

  double max_tasmd_after() const;
  std::string to_csv() const;
  std::string to_json() const;
};

/// Target absolute standardized mean differences of the raw covariates:
/// |weighted control mean - treated mean| / sd(treated), sd with n_t - 1.
BalanceReport tasmd_report(const balancing::Sample& sample, const Vector& w,
                           const std::vector<std::string>& covariate_names = {});

/// Appends |sum_i w_i D_c[i, b] - target_b| for every balance row of `problem`.
void add_basis_balance(BalanceReport& report, const balancing::AssembledProblem& problem,
                       const Vector& w);

/// max_b |sum_i w_i D_c[i, b] - target_b|.
double max_basis_imbalance(const qp::SbwProblem& problem, const Vector& w);

struct BiasBoundReport {
  double trace_error = 0.0;          // ||K - K_s||_*
  double nystrom_trace_error = 0.0;  // ||K - D D^T||_*
  double reg_spectral = 0.0;         // ||W^+ - W_l^{-1}||_2
  double reg_frobenius_sq = 0.0;     // ||W^+ - W_l^{-1}||_F^2
  double residual_imbalance = 0.0;   // max balance-row gap in the D basis
  double worst_case_bias = 0.0;      // sup over unit alpha of the kernel bias
};

inline constexpr Index kBiasBoundMaxN = 5000;

/// Bias-bound components from the exact eigendecomposition of K. `w` holds
/// one weight per control unit.
BiasBoundReport bias_bound_report(const balancing::Sample& sample,
                                  const nystrom::NystromBasis& basis, const Vector& w,
                                  const kernel::KernelConfig& cfg);

/// Length-n contrast: w on controls, -1/n_t on treated units.
Vector weight_contrast(const balancing::Sample& sample, const Vector& w);

/// ||U Lambda (U_c^T w - U_t^T 1 / n_t)||_2 from an eigendecomposition of K.
double worst_case_bias_eigen(const linalg::SymmetricEigen& eig,
                             const balancing::Sample& sample, const Vector& w);

/// Same supremum evaluated directly on rows of K: ||K e||_2.
double worst_case_bias_direct(const DenseMatrix& k, const balancing::Sample& sample,
                              const Vector& w);

}  // namespace kernbal::diagnostics
