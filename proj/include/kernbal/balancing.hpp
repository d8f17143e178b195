#pragma once

#include "kernbal/kernel.hpp"
#include "kernbal/nystrom.hpp"
#include "kernbal/qp_solver.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace kernbal::balancing {

using linalg::DenseMatrix;
using linalg::Index;
using linalg::Vector;

/// Observational sample: covariates, binary treatment and outcome.
class Sample {
 public:
  Sample() = default;
  Sample(kernel::CovariateMatrix x, std::vector<int> treatment, Vector outcome);

  const kernel::CovariateMatrix& x() const { return x_; }
  const std::vector<int>& a() const { return a_; }
  const Vector& y() const { return y_; }
  Index n() const { return x_.n(); }
  Index n_t() const { return static_cast<Index>(treated_.size()); }
  Index n_c() const { return static_cast<Index>(control_.size()); }

  /// Row indices of treated / control units in input order.
  const std::vector<Index>& treated_rows() const { return treated_; }
  const std::vector<Index>& control_rows() const { return control_; }

  double treated_outcome_mean() const;

 private:
  kernel::CovariateMatrix x_;
  std::vector<int> a_;
  Vector y_;
  std::vector<Index> treated_;
  std::vector<Index> control_;
};

// Bandwidth of 0 means "use the numerical rank of the standardized covariates".
struct KernelNystrom {
  nystrom::SketchConfig sketch;
  double bandwidth = 0.0;
  bool standardize = true;
};

struct KernelExact {
  Index rank = 100;
  double bandwidth = 0.0;
  bool standardize = true;
};

struct RawMoments {};

struct BasisSpec {
  std::variant<KernelNystrom, KernelExact, RawMoments> kind = KernelNystrom{};
  // One entry broadcasts to every basis column; otherwise one per column.
  std::vector<double> delta{0.0005};

  void validate() const;
};

const char* basis_name(const BasisSpec& spec);

/// SBW problem plus the bookkeeping needed to audit and report it.
struct AssembledProblem {
  qp::SbwProblem qp;
  std::optional<nystrom::NystromBasis> basis;  // absent for raw moments
  std::optional<kernel::KernelConfig> kernel;  // resolved kernel, if any
  bool bandwidth_degenerate = false;
  std::vector<Index> kept_columns;     // basis columns that entered Q
  std::vector<Index> dropped_columns;  // zero-spread columns
  std::vector<Index> control_rows;     // sample row of each weight
  double basis_seconds = 0.0;
};

kernel::KernelConfig resolve_kernel(const kernel::CovariateMatrix& x, double bandwidth,
                                    bool standardize, bool* degenerate = nullptr);

AssembledProblem build_problem(const Sample& sample, const BasisSpec& spec);

struct BalanceResult {
  qp::WeightSolution solution;
  AssembledProblem problem;
  double att = 0.0;
  double psi_hat = 0.0;
};

/// Builds the basis and problem, solves, and evaluates the ATT estimator when
/// the solver returns usable weights.
BalanceResult solve_weights(const Sample& sample, const BasisSpec& spec,
                            const qp::SolverSettings& settings);

struct AttEstimate {
  double att = 0.0;
  double psi_hat = 0.0;
};

/// psi_hat = sum_i w_i Y_i over controls; att = mean(Y | A = 1) - psi_hat.
AttEstimate att_estimate(const Sample& sample, const Vector& w);

}  // namespace kernbal::balancing
