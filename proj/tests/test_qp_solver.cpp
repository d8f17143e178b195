#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kernbal/error.hpp"
#include "kernbal/qp_solver.hpp"
#include "oracles.hpp"

#include <random>

using namespace kernbal;
using namespace kernbal::qp;

namespace {

SbwProblem two_group_problem(double delta) {
  DenseMatrix d(4, 1);
  d << 0.0, 0.0, 1.0, 1.0;
  return SbwProblem::make(d, Vector::Constant(1, 0.9), Vector::Constant(1, delta));
}

SbwProblem random_problem(std::mt19937_64& gen, int max_nc = 50, int max_s = 5) {
  auto r = oracle::random_feasible_sbw(gen, max_nc, max_s);
  return SbwProblem::make(r.d_c, r.target, r.delta);
}

// Stationarity, feasibility and complementary slackness of the SBW program.
void check_kkt(const SbwProblem& p, const WeightSolution& sol, double tol) {
  const Vector lo = p.lower();
  const Vector up = p.upper();
  const Vector qw = p.apply_q(sol.w);
  Vector grad = 2.0 * sol.w;
  grad.array() += p.linear_coef;
  CHECK((grad + p.apply_qt(sol.y)).lpNorm<Eigen::Infinity>() <= tol);
  for (Index r = 0; r < p.num_constraints(); ++r) {
    CHECK(qw[r] >= lo[r] - tol);
    CHECK(qw[r] <= up[r] + tol);
    // y > 0 only at the upper bound, y < 0 only at the lower bound.
    const double slack = sol.y[r] > 0.0 ? up[r] - qw[r] : qw[r] - lo[r];
    CHECK(std::abs(sol.y[r]) * std::abs(slack) <= tol);
  }
}

}  // namespace

TEST_CASE("problem layout and bounds") {
  const SbwProblem p = two_group_problem(0.05);
  CHECK(p.num_constraints() == 6);
  const Vector lo = p.lower();
  const Vector up = p.upper();
  CHECK(lo[0] == 1.0);
  CHECK(up[0] == 1.0);
  CHECK(lo.segment(1, 4).isZero());
  CHECK(up.segment(1, 4).isOnes());
  CHECK(lo[5] == doctest::Approx(0.85));
  CHECK(up[5] == doctest::Approx(0.95));
  CHECK(p.linear_coef == -0.25);
  const Vector w = Vector::LinSpaced(4, 0.1, 0.4);
  CHECK((p.apply_q(w) - Vector(p.constraint_matrix() * w)).norm() <= 1e-15);
  const Vector y = Vector::LinSpaced(6, -1.0, 1.5);
  CHECK((p.apply_qt(y) - Vector(p.constraint_matrix().transpose() * y)).norm() <= 1e-15);
}

TEST_CASE("setup rejects invalid problems") {
  DenseMatrix d(3, 2);
  d.setOnes();
  CHECK_THROWS_AS(SbwProblem::make(d, Vector::Zero(2), Vector{{0.1, -0.1}}), Error);
  CHECK_THROWS_AS(SbwProblem::make(DenseMatrix(0, 1), Vector::Zero(1), Vector::Ones(1)), Error);
  CHECK_THROWS_AS(SbwProblem::make(d, Vector::Zero(3), Vector::Ones(2)), Error);
  SolverSettings bad;
  bad.alpha = 2.0;
  CHECK_THROWS_AS(setup(two_group_problem(0.0), bad), Error);
}

TEST_CASE("smallest problem: two controls, no balance rows") {
  const SbwProblem p = SbwProblem::make(DenseMatrix(2, 0), Vector(0), Vector(0));
  const SolverSettings s = SolverSettings::high_accuracy();
  SolverState st = setup(p, s);
  CHECK(st.kkt_dim() == 5);
  const auto sol = solve(st, s);
  CHECK(sol.status == SolveStatus::kSolved);
  CHECK(sol.w[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(sol.w[1] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("KKT assembly matches a dense construction") {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> nd(0.0, 1.0);
  DenseMatrix d(3, 2);
  for (Index i = 0; i < 3; ++i)
    for (Index b = 0; b < 2; ++b) d(i, b) = nd(gen);
  const SbwProblem p = SbwProblem::make(d, Vector{{0.1, -0.2}}, Vector{{0.3, 0.0}});
  SolverSettings s;
  const SolverState st = setup(p, s);
  REQUIRE(st.kkt_dim() == 3 + 6);

  const DenseMatrix q = DenseMatrix(p.constraint_matrix());
  DenseMatrix k = DenseMatrix::Zero(9, 9);
  k.topLeftCorner(3, 3) = -(2.0 + s.sigma) * DenseMatrix::Identity(3, 3);
  k.topRightCorner(3, 6) = -q.transpose();
  k.bottomLeftCorner(6, 3) = -q;
  const Vector lo = p.lower();
  const Vector up = p.upper();
  for (Index r = 0; r < 6; ++r) {
    const double rho = lo[r] == up[r] ? s.rho_init * s.equality_rho_scale : s.rho_init;
    k(3 + r, 3 + r) = 1.0 / rho;
  }
  CHECK((st.kkt().to_dense() - k).cwiseAbs().maxCoeff() <= 1e-12);

  const Vector rhs = Vector::LinSpaced(9, -1.0, 1.0);
  CHECK((st.factor().solve(rhs) - oracle::dense_solve(k, rhs)).lpNorm<Eigen::Infinity>() <= 1e-8);
}

TEST_CASE("two-group problem with exact balance") {
  const SbwProblem p = two_group_problem(0.0);
  SolverSettings s;
  s.eps_abs = 1e-8;
  s.eps_rel = 1e-8;
  SolverState st = setup(p, s);
  const auto sol = solve(st, s);
  REQUIRE(sol.status == SolveStatus::kSolved);
  const Vector expect{{0.05, 0.05, 0.45, 0.45}};
  CHECK((sol.w - expect).lpNorm<Eigen::Infinity>() <= 1e-6);
  check_kkt(p, sol, 1e-6);

  // Brute-force grid oracle: within-group symmetry leaves one free mass.
  double best = std::numeric_limits<double>::infinity();
  double best_a = 0.0;
  for (int i = 0; i <= 100000; ++i) {
    const double a = 0.1 * i / 100000.0;  // w1 in [0, 0.1], w2 = 0.1 - a
    const double obj = a * a + (0.1 - a) * (0.1 - a) + 2.0 * 0.45 * 0.45;
    if (obj < best) {
      best = obj;
      best_a = a;
    }
  }
  CHECK(sol.w[0] == doctest::Approx(best_a).epsilon(1e-4));
}

TEST_CASE("low-accuracy solve polished to the analytic answer") {
  const SbwProblem p = two_group_problem(0.0);
  SolverSettings s;
  SolverState st = setup(p, s);
  const auto rough = solve(st, s);
  REQUIRE(rough.ok());
  const auto fine = polish(rough, p);
  CHECK(fine.polished);
  CHECK_FALSE(fine.polish_failed);
  const Vector expect{{0.05, 0.05, 0.45, 0.45}};
  CHECK((fine.w - expect).lpNorm<Eigen::Infinity>() <= 1e-10);

  const auto again = polish(fine, p);
  CHECK((again.w - fine.w).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("polish fails cleanly on a degenerate active set") {
  const SbwProblem p = two_group_problem(0.0);
  WeightSolution fake;
  fake.status = SolveStatus::kSolved;
  fake.w = Vector::Zero(4);
  fake.z = p.apply_q(fake.w);
  fake.y = Vector::Zero(6);
  fake.y.segment(1, 4).setConstant(-1.0);  // every weight pushed onto its lower bound
  fake.primal_residual = 1.0;
  fake.dual_residual = 1.0;
  const auto out = polish(fake, p);
  CHECK(out.polish_failed);
  CHECK_FALSE(out.polished);
  CHECK(out.w == fake.w);
}

TEST_CASE("empty constraint set is detected as infeasible") {
  const SbwProblem p = SbwProblem::make(DenseMatrix::Zero(5, 1), Vector::Ones(1), Vector::Constant(1, 0.1));
  SolverSettings s;
  SolverState st = setup(p, s);
  const auto sol = solve(st, s);
  CHECK(sol.status == SolveStatus::kPrimalInfeasible);
  CHECK_FALSE(sol.ok());
}

TEST_CASE("max_iter status and inaccurate solutions") {
  std::mt19937_64 gen(4);
  const SbwProblem p = random_problem(gen);
  SolverSettings s;
  s.max_iter = 1;
  s.eps_abs = 1e-12;
  s.eps_rel = 1e-12;
  SolverState st = setup(p, s);
  const auto sol = solve(st, s);
  CHECK(sol.status == SolveStatus::kMaxIter);
  CHECK(sol.iterations == 1);
}

TEST_CASE("update_bounds keeps the factorization and warm starts") {
  std::mt19937_64 gen(5);
  const SbwProblem p = random_problem(gen);
  SolverSettings s;
  s.adaptive_rho = false;
  SolverState st = setup(p, s);
  const auto first = solve(st, s);
  REQUIRE(first.ok());

  update_bounds(st, p.delta);
  const auto again = solve(st, s);
  CHECK(again.ok());
  CHECK(again.iterations <= 2);

  const Vector nudged = (p.delta.array() + 1e-4).matrix();
  update_bounds(st, nudged);
  const auto warm = solve(st, s);
  SbwProblem moved = p;
  moved.delta = nudged;
  SolverState fresh = setup(moved, s);
  const auto cold = solve(fresh, s);
  REQUIRE(warm.ok());
  REQUIRE(cold.ok());
  CHECK(warm.iterations < cold.iterations);
  CHECK(st.factorization_count() == 1);
  CHECK(warm.factorizations == 0);

  CHECK_THROWS_AS(update_bounds(st, Vector::Ones(p.s() + 1)), Error);
  CHECK_THROWS_AS(update_bounds(st, Vector::Constant(p.s(), -1.0)), Error);
}

TEST_CASE("linear term does not move the argmin") {
  std::mt19937_64 gen(6);
  for (int rep = 0; rep < 10; ++rep) {
    SbwProblem p = random_problem(gen);
    const auto s = SolverSettings::high_accuracy();
    SolverState a = setup(p, s);
    const auto with = solve(a, s);
    p.linear_coef = 0.0;
    SolverState b = setup(p, s);
    const auto without = solve(b, s);
    REQUIRE(with.ok());
    REQUIRE(without.ok());
    CHECK((with.w - without.w).lpNorm<Eigen::Infinity>() <= 1e-6);
  }
}

TEST_CASE("solved results satisfy the KKT conditions") {
  std::mt19937_64 gen(7);
  for (int rep = 0; rep < 30; ++rep) {
    const SbwProblem p = random_problem(gen);
    SolverSettings s;
    SolverState st = setup(p, s);
    const auto sol = solve(st, s);
    REQUIRE(sol.status == SolveStatus::kSolved);
    check_kkt(p, sol, 10.0 * s.eps_abs);
    CHECK(sol.w.minCoeff() >= -s.eps_abs);
    CHECK(std::abs(sol.w.sum() - 1.0) <= s.eps_abs);
  }
}

TEST_CASE("high-accuracy solutions match the dual oracle") {
  std::mt19937_64 gen(8);
  for (int rep = 0; rep < 25; ++rep) {
    auto inst = oracle::random_feasible_sbw(gen);
    const SbwProblem p = SbwProblem::make(inst.d_c, inst.target, inst.delta);
    const auto s = SolverSettings::high_accuracy();
    SolverState st = setup(p, s);
    const auto sol = solve(st, s);
    REQUIRE(sol.ok());
    const auto ref = oracle::sbw_dual_oracle(inst.d_c, inst.target, inst.delta);
    CHECK((sol.w - ref.w).lpNorm<Eigen::Infinity>() <= 1e-4);
    CHECK(std::abs(sol.objective - ref.objective) <= 1e-6);
  }
}

TEST_CASE("solves are deterministic") {
  std::mt19937_64 gen(9);
  const SbwProblem p = random_problem(gen);
  SolverSettings s;
  SolverState a = setup(p, s);
  SolverState b = setup(p, s);
  const auto x = solve(a, s);
  const auto y = solve(b, s);
  CHECK(x.iterations == y.iterations);
  CHECK(x.w == y.w);
  CHECK(x.y == y.y);
}
