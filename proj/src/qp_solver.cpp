#include "kernbal/qp_solver.hpp"

#include "kernbal/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

namespace kernbal::qp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace

// ---------------------------------------------------------------------------
// SbwProblem

SbwProblem SbwProblem::make(DenseMatrix d_c, Vector target, Vector delta) {
  SbwProblem p;
  p.d_c = std::move(d_c);
  p.target = std::move(target);
  p.delta = std::move(delta);
  p.linear_coef = p.n_c() > 0 ? -1.0 / static_cast<double>(p.n_c()) : 0.0;
  p.validate();
  return p;
}

void SbwProblem::validate() const {
  if (n_c() < 1) throw Error(ErrorCode::kInvalidArgument, "SBW problem has no control units");
  if (target.size() != s() || delta.size() != s()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "SBW problem: target and delta must have one entry per basis column (" +
                    std::to_string(s()) + ")");
  }
  for (Index b = 0; b < s(); ++b) {
    if (!(delta[b] >= 0.0)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "SBW problem: delta[" + std::to_string(b) + "] is negative");
    }
  }
  if (!d_c.allFinite() || !target.allFinite()) {
    throw Error(ErrorCode::kNonFinite, "SBW problem: non-finite basis values");
  }
}

Vector SbwProblem::lower() const {
  Vector l(num_constraints());
  l[0] = 1.0;
  l.segment(1, n_c()).setZero();
  l.tail(s()) = target - delta;
  return l;
}

Vector SbwProblem::upper() const {
  Vector u(num_constraints());
  u[0] = 1.0;
  u.segment(1, n_c()).setOnes();
  u.tail(s()) = target + delta;
  return u;
}

Vector SbwProblem::apply_q(const Vector& w) const {
  Vector out(num_constraints());
  out[0] = w.sum();
  out.segment(1, n_c()) = w;
  out.tail(s()).noalias() = d_c.transpose() * w;
  return out;
}

Vector SbwProblem::apply_qt(const Vector& y) const {
  Vector out = y.segment(1, n_c());
  out.array() += y[0];
  out.noalias() += d_c * y.tail(s());
  return out;
}

Eigen::SparseMatrix<double> SbwProblem::constraint_matrix() const {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(n_c() * (2 + s())));
  for (Index i = 0; i < n_c(); ++i) {
    t.emplace_back(0, i, 1.0);
    t.emplace_back(1 + i, i, 1.0);
    for (Index b = 0; b < s(); ++b) t.emplace_back(1 + n_c() + b, i, d_c(i, b));
  }
  Eigen::SparseMatrix<double> q(num_constraints(), n_c());
  q.setFromTriplets(t.begin(), t.end());
  return q;
}

double SbwProblem::objective(const Vector& w) const {
  return w.squaredNorm() + linear_coef * w.sum();
}

// ---------------------------------------------------------------------------
// Settings

SolverSettings SolverSettings::high_accuracy() {
  SolverSettings s;
  s.eps_abs = 1e-6;
  s.eps_rel = 1e-6;
  s.polish = true;
  return s;
}

void SolverSettings::validate() const {
  if (!(alpha > 0.0 && alpha < 2.0)) {
    throw Error(ErrorCode::kInvalidArgument, "relaxation alpha must lie in (0, 2)");
  }
  if (!(sigma > 0.0) || !(rho_init > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "sigma and rho must be positive");
  }
  if (!(eps_abs > 0.0) || !(eps_rel > 0.0) || !(eps_prim_inf > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "tolerances must be positive");
  }
  if (max_iter < 1) throw Error(ErrorCode::kInvalidArgument, "max_iter must be >= 1");
}

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::kSolved:
      return "solved";
    case SolveStatus::kSolvedInaccurate:
      return "solved_inaccurate";
    case SolveStatus::kPrimalInfeasible:
      return "primal_infeasible";
    case SolveStatus::kMaxIter:
      return "max_iter";
  }
  return "unknown";
}

Residuals residuals(const SbwProblem& problem, const Vector& w, const Vector& z,
                    const Vector& y) {
  Residuals r;
  r.primal = inf_norm(problem.apply_q(w) - z);
  Vector grad = 2.0 * w;
  grad.array() += problem.linear_coef;
  r.dual = inf_norm(grad + problem.apply_qt(y));
  return r;
}

// ---------------------------------------------------------------------------
// SolverState

void SolverState::cold_start() {
  const Index n_c = problem_.n_c();
  w_ = Vector::Constant(n_c, 1.0 / static_cast<double>(n_c));
  z_ = problem_.apply_q(w_);
  y_ = Vector::Zero(problem_.num_constraints());
}

void SolverState::set_rho(double rho, double equality_scale) {
  rho_ = rho;
  equality_scale_ = equality_scale;
  const Index m = problem_.num_constraints();
  rho_vec_.resize(m);
  for (Index r = 0; r < m; ++r) {
    rho_vec_[r] = lower_[r] == upper_[r] ? rho * equality_scale : rho;
  }
}

void SolverState::assemble_kkt(double sigma) {
  sigma_ = sigma;
  const Index n_c = problem_.n_c();
  const Index s = problem_.s();
  const Index m = problem_.num_constraints();
  const Index dim = n_c + m;

  using Storage = linalg::SparseSymmetric::Storage;
  Storage k(static_cast<int>(dim), static_cast<int>(dim));
  Eigen::VectorXi per_col(dim);
  per_col.head(n_c).setOnes();
  per_col[n_c] = static_cast<int>(n_c + 1);
  per_col.segment(n_c + 1, n_c).setConstant(2);
  per_col.tail(s).setConstant(static_cast<int>(n_c + 1));
  k.reserve(per_col);

  for (Index i = 0; i < n_c; ++i) k.insert(i, i) = -(2.0 + sigma);
  // Sum-to-one row.
  for (Index i = 0; i < n_c; ++i) k.insert(i, n_c) = -1.0;
  k.insert(n_c, n_c) = 1.0 / rho_vec_[0];
  // Box rows.
  for (Index i = 0; i < n_c; ++i) {
    const Index col = n_c + 1 + i;
    k.insert(i, col) = -1.0;
    k.insert(col, col) = 1.0 / rho_vec_[1 + i];
  }
  // Balance rows.
  for (Index b = 0; b < s; ++b) {
    const Index col = n_c + 1 + n_c + b;
    for (Index i = 0; i < n_c; ++i) k.insert(i, col) = -problem_.d_c(i, b);
    k.insert(col, col) = 1.0 / rho_vec_[1 + n_c + b];
  }
  k.makeCompressed();

  rho_diag_pos_.resize(static_cast<std::size_t>(m));
  for (Index r = 0; r < m; ++r) {
    // Upper-triangular columns end with their diagonal entry.
    rho_diag_pos_[static_cast<std::size_t>(r)] = k.outerIndexPtr()[n_c + r + 1] - 1;
  }
  kkt_ = linalg::SparseSymmetric::from_upper(std::move(k));
}

void SolverState::refactor() {
  const Index m = problem_.num_constraints();
  double* values = kkt_.mutable_upper().valuePtr();
  for (Index r = 0; r < m; ++r) {
    values[rho_diag_pos_[static_cast<std::size_t>(r)]] = 1.0 / rho_vec_[r];
  }
  const auto t0 = Clock::now();
  factor_.refactor(kkt_);
  pending_factor_time_ += seconds_since(t0);
  ++factorizations_;
  factor_stale_ = false;
}

SolverState setup(SbwProblem problem, const SolverSettings& settings) {
  const auto t0 = Clock::now();
  settings.validate();
  problem.validate();
  SolverState st;
  st.problem_ = std::move(problem);
  st.lower_ = st.problem_.lower();
  st.upper_ = st.problem_.upper();
  st.set_rho(settings.rho_init, settings.equality_rho_scale);
  st.assemble_kkt(settings.sigma);
  const auto tf = Clock::now();
  st.factor_ = linalg::ldl_factor(st.kkt_);
  st.pending_factor_time_ = seconds_since(tf);
  st.factorizations_ = 1;
  st.cold_start();
  st.setup_time_ = seconds_since(t0);
  return st;
}

void update_bounds(SolverState& state, const Vector& new_delta) {
  const Index s = state.problem_.s();
  if (new_delta.size() != s) {
    throw Error(ErrorCode::kDimensionMismatch,
                "update_bounds: delta has length " + std::to_string(new_delta.size()) +
                    ", expected " + std::to_string(s));
  }
  for (Index b = 0; b < s; ++b) {
    if (!(new_delta[b] >= 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "update_bounds: delta must be nonnegative");
    }
  }
  const Vector old_rho = state.rho_vec_;
  state.problem_.delta = new_delta;
  state.lower_ = state.problem_.lower();
  state.upper_ = state.problem_.upper();
  // A row switching between equality and inequality changes its step size,
  // which is the only way new bounds can touch the factorization.
  state.set_rho(state.rho_, state.equality_scale_);
  if (state.rho_vec_ != old_rho) state.factor_stale_ = true;
}

WeightSolution solve(SolverState& st, const SolverSettings& settings) {
  settings.validate();
  const auto t0 = Clock::now();
  const SbwProblem& p = st.problem_;
  const Index n_c = p.n_c();
  const Index m = p.num_constraints();
  const double q = p.linear_coef;
  const double alpha = settings.alpha;
  const double sigma = settings.sigma;

  if (sigma != st.sigma_) {
    st.assemble_kkt(sigma);
    st.factor_stale_ = true;
  }
  if (!settings.warm_start) st.cold_start();

  const Index factorizations_before = st.factorizations_;
  double factor_time = st.pending_factor_time_;
  st.pending_factor_time_ = 0.0;
  if (st.factor_stale_) {
    st.refactor();
    factor_time += st.pending_factor_time_;
    st.pending_factor_time_ = 0.0;
  }

  WeightSolution sol;
  Vector rhs(n_c + m);
  Vector z_tilde(m);
  Vector z_relaxed(m);
  Vector y_prev(m);

  auto finish = [&](SolveStatus status, Index iter, const Residuals& r) {
    sol.w = st.w_;
    sol.z = st.z_;
    sol.y = st.y_;
    sol.status = status;
    sol.iterations = iter;
    sol.primal_residual = r.primal;
    sol.dual_residual = r.dual;
    sol.objective = p.objective(st.w_);
    sol.rho = st.rho_;
  };

  auto tolerances = [&](const Vector& qw, const Vector& qty, double& eps_prim, double& eps_dual) {
    eps_prim = settings.eps_abs + settings.eps_rel * std::max(inf_norm(qw), inf_norm(st.z_));
    eps_dual = settings.eps_abs +
               settings.eps_rel * std::max({2.0 * inf_norm(st.w_), inf_norm(qty), std::abs(q)});
  };

  // The relative part of eps_prim can exceed eps_abs, so a solved status also
  // needs the simplex rows within eps_abs and the balance rows within
  // 10 eps_abs of their bounds.
  auto meets_invariants = [&](const Vector& qw) {
    for (Index r = 0; r < m; ++r) {
      const double viol = std::max({st.lower_[r] - qw[r], qw[r] - st.upper_[r], 0.0});
      const double limit = r <= n_c ? settings.eps_abs : 10.0 * settings.eps_abs;
      if (viol > limit) return false;
    }
    return true;
  };

  Residuals res;
  bool done = false;
  Index iter = 0;
  for (iter = 1; iter <= settings.max_iter; ++iter) {
    y_prev = st.y_;

    // Reduced KKT solve in the sign-flipped quasi-definite form.
    rhs.head(n_c) = -sigma * st.w_;
    rhs.head(n_c).array() += q;
    rhs.tail(m) = st.y_.cwiseQuotient(st.rho_vec_) - st.z_;
    const Vector sol_kkt = st.factor_.solve(rhs);
    const auto w_tilde = sol_kkt.head(n_c);
    const auto nu = sol_kkt.tail(m);

    z_tilde = st.z_ + (nu - st.y_).cwiseQuotient(st.rho_vec_);
    st.w_ = alpha * w_tilde + (1.0 - alpha) * st.w_;
    z_relaxed = alpha * z_tilde + (1.0 - alpha) * st.z_;
    st.z_ = (z_relaxed + st.y_.cwiseQuotient(st.rho_vec_)).cwiseMax(st.lower_).cwiseMin(st.upper_);
    st.y_ += st.rho_vec_.cwiseProduct(z_relaxed - st.z_);

    const Vector qw = p.apply_q(st.w_);
    const Vector qty = p.apply_qt(st.y_);
    Vector grad = 2.0 * st.w_;
    grad.array() += q;
    res.primal = inf_norm(qw - st.z_);
    res.dual = inf_norm(grad + qty);
    double eps_prim = 0.0;
    double eps_dual = 0.0;
    tolerances(qw, qty, eps_prim, eps_dual);

    if (res.primal <= eps_prim && res.dual <= eps_dual && meets_invariants(qw)) {
      finish(SolveStatus::kSolved, iter, res);
      done = true;
      break;
    }

    if (iter % settings.infeasibility_interval == 0) {
      Vector dy = st.y_ - y_prev;
      const double norm_dy = inf_norm(dy);
      if (norm_dy > 1e-12) {
        dy /= norm_dy;
        const double support = st.upper_.dot(dy.cwiseMax(0.0)) + st.lower_.dot(dy.cwiseMin(0.0));
        if (support < -settings.eps_prim_inf &&
            inf_norm(p.apply_qt(dy)) < settings.eps_prim_inf) {
          finish(SolveStatus::kPrimalInfeasible, iter, res);
          done = true;
          break;
        }
      }
    }

    if (settings.adaptive_rho && iter % settings.adaptive_rho_interval == 0) {
      const double prim_scale = std::max({inf_norm(qw), inf_norm(st.z_), 1e-30});
      const double dual_scale =
          std::max({2.0 * inf_norm(st.w_), inf_norm(qty), std::abs(q), 1e-30});
      const double ratio =
          std::sqrt((res.primal / prim_scale) / std::max(res.dual / dual_scale, 1e-30));
      const double new_rho = std::clamp(st.rho_ * ratio, 1e-6, 1e6);
      if (new_rho > st.rho_ * settings.adaptive_rho_tolerance ||
          new_rho < st.rho_ / settings.adaptive_rho_tolerance) {
        st.set_rho(new_rho, st.equality_scale_);
        st.refactor();
        factor_time += st.pending_factor_time_;
        st.pending_factor_time_ = 0.0;
      }
    }
  }

  if (!done) {
    iter = settings.max_iter;
    const Vector qw = p.apply_q(st.w_);
    const Vector qty = p.apply_qt(st.y_);
    double eps_prim = 0.0;
    double eps_dual = 0.0;
    tolerances(qw, qty, eps_prim, eps_dual);
    const bool close = res.primal <= 10.0 * eps_prim && res.dual <= 10.0 * eps_dual;
    finish(close ? SolveStatus::kSolvedInaccurate : SolveStatus::kMaxIter, iter, res);
  }

  sol.factorizations = st.factorizations_ - factorizations_before;
  sol.factor_time = factor_time;
  sol.solve_time = seconds_since(t0);

  if (settings.polish && sol.ok()) {
    const auto tp = Clock::now();
    sol = polish(sol, p);
    sol.solve_time += seconds_since(tp);
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Polishing

WeightSolution polish(const WeightSolution& solution, const SbwProblem& problem) {
  WeightSolution failed = solution;
  failed.polish_failed = true;
  if (!solution.ok()) return failed;

  const Index n_c = problem.n_c();
  const Index s = problem.s();
  const Vector lo = problem.lower();
  const Vector up = problem.upper();
  const Vector qw = problem.apply_q(solution.w);
  const double q = problem.linear_coef;

  auto near = [](double value, double bound) {
    return std::abs(value - bound) <= 1e-7 * (1.0 + std::abs(bound));
  };
  // -1 lower-active, +1 upper-active, 0 inactive. Dual signs catch rows that
  // ADMM left slightly off the bound; the distance test catches the rest.
  auto classify = [&](Index r) -> int {
    const double zr = solution.z[r];
    const double yr = solution.y[r];
    if (lo[r] == up[r]) return yr > 0.0 ? 1 : -1;
    const bool lower_active = zr - lo[r] < -yr || near(qw[r], lo[r]);
    const bool upper_active = up[r] - zr < yr || near(qw[r], up[r]);
    if (lower_active && upper_active) return yr > 0.0 ? 1 : -1;
    if (lower_active) return -1;
    if (upper_active) return 1;
    return 0;
  };

  std::vector<int> state(static_cast<std::size_t>(problem.num_constraints()), 0);
  for (Index r = 1; r < problem.num_constraints(); ++r) state[static_cast<std::size_t>(r)] = classify(r);

  Vector w = Vector::Zero(n_c);
  std::vector<Index> free_vars;
  for (Index i = 0; i < n_c; ++i) {
    const int st = state[static_cast<std::size_t>(1 + i)];
    if (st == 0) {
      free_vars.push_back(i);
    } else {
      w[i] = st < 0 ? lo[1 + i] : up[1 + i];
    }
  }
  std::vector<Index> active_bal;
  for (Index b = 0; b < s; ++b) {
    if (state[static_cast<std::size_t>(1 + n_c + b)] != 0) active_bal.push_back(b);
  }

  const Index nf = static_cast<Index>(free_vars.size());
  const Index k = 1 + static_cast<Index>(active_bal.size());
  if (nf == 0) return failed;

  // Reduced equality system M w_F = r with M = [1^T; D_c[F, A]^T].
  DenseMatrix mat(k, nf);
  Vector rvec(k);
  mat.row(0).setOnes();
  rvec[0] = 1.0 - w.sum();
  for (Index a = 0; a < k - 1; ++a) {
    const Index b = active_bal[static_cast<std::size_t>(a)];
    const Index row = 1 + n_c + b;
    const double bound = state[static_cast<std::size_t>(row)] < 0 ? lo[row] : up[row];
    double fixed = 0.0;
    for (Index i = 0; i < n_c; ++i) {
      if (state[static_cast<std::size_t>(1 + i)] != 0) fixed += problem.d_c(i, b) * w[i];
    }
    for (Index f = 0; f < nf; ++f) mat(1 + a, f) = problem.d_c(free_vars[static_cast<std::size_t>(f)], b);
    rvec[1 + a] = bound - fixed;
  }

  // Stationarity 2 w_F + q + M^T lambda = 0 with M w_F = r gives
  // (M M^T) lambda = -2 r - q M 1.
  const DenseMatrix gram = mat * mat.transpose();
  Eigen::ColPivHouseholderQR<DenseMatrix> qr(gram);
  qr.setThreshold(1e-12);
  if (qr.rank() < k) return failed;
  const Vector lambda = qr.solve(-2.0 * rvec - q * mat.rowwise().sum());
  if (!lambda.allFinite()) return failed;
  const Vector w_free = -0.5 * (Vector::Constant(nf, q) + mat.transpose() * lambda);
  for (Index f = 0; f < nf; ++f) w[free_vars[static_cast<std::size_t>(f)]] = w_free[f];

  Vector y = Vector::Zero(problem.num_constraints());
  y[0] = lambda[0];
  for (Index a = 0; a < k - 1; ++a) y[1 + n_c + active_bal[static_cast<std::size_t>(a)]] = lambda[1 + a];
  // Box multipliers of fixed weights absorb the remaining stationarity gap.
  const Vector qty_partial = problem.apply_qt(y);
  for (Index i = 0; i < n_c; ++i) {
    if (state[static_cast<std::size_t>(1 + i)] != 0) y[1 + i] = -(2.0 * w[i] + q + qty_partial[i]);
  }

  const double sign_tol = 1e-7;
  for (Index r = 1; r < problem.num_constraints(); ++r) {
    const int st = state[static_cast<std::size_t>(r)];
    if (lo[r] == up[r]) continue;
    if ((st < 0 && y[r] > sign_tol) || (st > 0 && y[r] < -sign_tol)) return failed;
  }

  const Vector z = problem.apply_q(w).cwiseMax(lo).cwiseMin(up);
  const Residuals r = residuals(problem, w, z, y);
  if (r.primal > std::max(solution.primal_residual, 1e-10) ||
      r.dual > std::max(solution.dual_residual, 1e-10)) {
    return failed;
  }

  WeightSolution out = solution;
  out.w = w;
  out.z = z;
  out.y = y;
  out.primal_residual = r.primal;
  out.dual_residual = r.dual;
  out.objective = problem.objective(w);
  out.polished = true;
  out.polish_failed = false;
  return out;
}

}  // namespace kernbal::qp
