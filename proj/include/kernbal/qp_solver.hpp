#pragma once

#include "kernbal/linalg.hpp"

#include <string>

namespace kernbal::qp {

using linalg::DenseMatrix;
using linalg::Index;
using linalg::Vector;

/// Stable-balancing-weights QP
///
///   minimize    w^T w + c * 1^T w
///   subject to  l(delta) <= Q w <= u(delta)
///
/// with Q = [1^T; I; D_c^T] stacked row-wise, so the constraint vector has
/// 1 + n_c + s entries: the sum-to-one row, the [0, 1] box on each weight, and
/// the balance rows D_c^T w in [target - delta, target + delta]. Because the
/// first row pins sum(w) = 1 the linear coefficient c only shifts the
/// objective; it defaults to -1/n_c.
struct SbwProblem {
  DenseMatrix d_c;  // n_c x s
  Vector target;    // length s, the treated-group column means
  Vector delta;     // length s, nonnegative
  double linear_coef = 0.0;

  static SbwProblem make(DenseMatrix d_c, Vector target, Vector delta);

  Index n_c() const { return d_c.rows(); }
  Index s() const { return d_c.cols(); }
  Index num_constraints() const { return 1 + n_c() + s(); }

  Vector lower() const;
  Vector upper() const;

  /// Q w without forming Q.
  Vector apply_q(const Vector& w) const;
  /// Q^T y without forming Q.
  Vector apply_qt(const Vector& y) const;
  /// Q as an explicit sparse matrix; used for tests and small diagnostics.
  Eigen::SparseMatrix<double> constraint_matrix() const;

  double objective(const Vector& w) const;

  void validate() const;
};

struct SolverSettings {
  double sigma = 1e-6;
  double alpha = 1.6;
  double rho_init = 0.1;
  double eps_abs = 1e-3;
  double eps_rel = 1e-3;
  double eps_prim_inf = 1e-4;
  Index max_iter = 20000;
  bool adaptive_rho = true;
  Index adaptive_rho_interval = 50;
  double adaptive_rho_tolerance = 5.0;  // refactor only if rho moves by this factor
  Index infeasibility_interval = 25;
  double equality_rho_scale = 1e3;  // rho multiplier on rows with l == u
  bool polish = false;
  bool warm_start = true;

  /// eps_abs = eps_rel = 1e-6 with polishing.
  static SolverSettings high_accuracy();

  void validate() const;
};

enum class SolveStatus { kSolved, kSolvedInaccurate, kPrimalInfeasible, kMaxIter };

const char* to_string(SolveStatus status);

struct WeightSolution {
  Vector w;  // length n_c
  Vector z;  // length 1 + n_c + s
  Vector y;  // duals, same length as z
  SolveStatus status = SolveStatus::kMaxIter;
  Index iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double objective = 0.0;
  double rho = 0.0;
  double solve_time = 0.0;   // seconds
  double factor_time = 0.0;  // seconds spent in numeric factorizations
  Index factorizations = 0;  // numeric factorizations during this solve
  bool polished = false;
  bool polish_failed = false;

  bool ok() const {
    return status == SolveStatus::kSolved || status == SolveStatus::kSolvedInaccurate;
  }
};

/// ADMM state for one problem: iterates, step sizes and the cached KKT
/// factorization. Single owner; solves of distinct problems need distinct
/// states.
class SolverState {
 public:
  const SbwProblem& problem() const { return problem_; }
  const Vector& w() const { return w_; }
  const Vector& z() const { return z_; }
  const Vector& y() const { return y_; }
  double rho() const { return rho_; }
  Index kkt_dim() const { return kkt_.dim(); }
  const linalg::SparseSymmetric& kkt() const { return kkt_; }
  const linalg::LdlFactor& factor() const { return factor_; }

  /// Numeric factorizations since setup, including the initial one.
  Index factorization_count() const { return factorizations_; }
  double setup_time() const { return setup_time_; }

  /// Resets iterates to w = 1/n_c, z = Q w, y = 0.
  void cold_start();

 private:
  friend SolverState setup(SbwProblem problem, const SolverSettings& settings);
  friend WeightSolution solve(SolverState& state, const SolverSettings& settings);
  friend void update_bounds(SolverState& state, const Vector& new_delta);

  void assemble_kkt(double sigma);
  void set_rho(double rho, double equality_scale);
  void refactor();

  SbwProblem problem_;
  Vector lower_;
  Vector upper_;
  Vector rho_vec_;
  double rho_ = 0.1;
  double equality_scale_ = 1e3;
  double sigma_ = 1e-6;
  linalg::SparseSymmetric kkt_;
  std::vector<Index> rho_diag_pos_;  // value offsets of the constraint diagonal in kkt_
  linalg::LdlFactor factor_;
  bool factor_stale_ = false;
  Index factorizations_ = 0;
  double setup_time_ = 0.0;
  double pending_factor_time_ = 0.0;
  Vector w_;
  Vector z_;
  Vector y_;
};

/// Assembles the quasi-definite KKT matrix
///   [ -(2 + sigma) I    -Q^T        ]
///   [ -Q                diag(1/rho) ]
/// factors it once, and cold-starts the iterates.
SolverState setup(SbwProblem problem, const SolverSettings& settings);

/// Runs relaxed ADMM from the current iterates until the residual test
/// passes, infeasibility is certified, or max_iter is reached.
WeightSolution solve(SolverState& state, const SolverSettings& settings);

/// Replaces delta (hence l and u) keeping the factorization and iterates.
void update_bounds(SolverState& state, const Vector& new_delta);

/// Active-set refinement of an ADMM solution. Returns the input with
/// polish_failed set if the reduced system is singular or the refined point
/// does not improve both residuals.
WeightSolution polish(const WeightSolution& solution, const SbwProblem& problem);

/// Infinity-norm primal and dual residuals of (w, z, y) for `problem`.
struct Residuals {
  double primal = 0.0;
  double dual = 0.0;
};
Residuals residuals(const SbwProblem& problem, const Vector& w, const Vector& z,
                    const Vector& y);

}  // namespace kernbal::qp
