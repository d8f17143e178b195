#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kernbal/error.hpp"
#include "kernbal/estimators.hpp"

#include <random>

using namespace kernbal;
using namespace kernbal::estimators;

namespace {

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

balancing::Sample make_sample(const DenseMatrix& x, const std::vector<int>& a, const Vector& y) {
  return balancing::Sample(kernel::CovariateMatrix(x), a, y);
}

}  // namespace

TEST_CASE("feature expansion layout") {
  DenseMatrix x(3, 3);
  x << 1.0, 2.0, 0.0,  //
      3.0, 4.0, 1.0,   //
      5.0, 6.0, 1.0;
  const auto binary = detect_binary_columns(x);
  CHECK(binary == std::vector<bool>{false, false, true});
  const DenseMatrix f = expand_features(x, FeatureExpansion::kQuadraticInteractions, binary);
  // 3 raw + 2 squares (binary square dropped) + 3 pairwise products.
  REQUIRE(f.cols() == 8);
  CHECK(f(1, 3) == 9.0);   // x1^2
  CHECK(f(1, 4) == 16.0);  // x2^2
  CHECK(f(1, 5) == 12.0);  // x1 x2
  CHECK(f(1, 6) == 3.0);   // x1 x3
  CHECK(f(1, 7) == 4.0);   // x2 x3
  CHECK(expand_features(x, FeatureExpansion::kRaw, binary).cols() == 3);
}

TEST_CASE("null model recovers the base rate") {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::bernoulli_distribution coin(0.3);
  const Index n = 4000;
  DenseMatrix x(n, 2);
  std::vector<int> a(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = nd(gen);
    x(i, 1) = nd(gen);
    a[static_cast<std::size_t>(i)] = coin(gen) ? 1 : 0;
  }
  const auto s = make_sample(x, a, Vector::Zero(n));
  const auto model = fit_logistic(s, FeatureExpansion::kRaw);
  CHECK(model.converged);
  const double rate = static_cast<double>(s.n_t()) / static_cast<double>(n);
  CHECK(model.predict(x).mean() == doctest::Approx(rate).epsilon(1e-6));
  // Slope standard errors are about 1 / sqrt(n p (1 - p)) on standardized features.
  const double se = 1.0 / std::sqrt(n * rate * (1.0 - rate));
  CHECK(std::abs(model.coefficients[1]) <= 3.0 * se);
  CHECK(std::abs(model.coefficients[2]) <= 3.0 * se);
}

TEST_CASE("known coefficients are recovered") {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  const Index n = 100000;
  DenseMatrix x(n, 1);
  std::vector<int> a(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = nd(gen);
    a[static_cast<std::size_t>(i)] = ud(gen) < sigmoid(2.0 * x(i, 0)) ? 1 : 0;
  }
  const auto s = make_sample(x, a, Vector::Zero(n));
  const auto model = fit_logistic(s, FeatureExpansion::kRaw);
  REQUIRE(model.converged);
  // Coefficients live on the standardized scale; map back to raw units.
  const double slope = model.coefficients[1] / model.feature_sds[0];
  const double intercept = model.coefficients[0] - slope * model.feature_means[0];
  CHECK(std::abs(intercept) <= 0.05);
  CHECK(std::abs(slope - 2.0) <= 0.05);
}

TEST_CASE("separation is flagged but the model is usable") {
  DenseMatrix x(20, 1);
  std::vector<int> a(20);
  for (int i = 0; i < 20; ++i) {
    x(i, 0) = i;
    a[static_cast<std::size_t>(i)] = i >= 10 ? 1 : 0;
  }
  const auto s = make_sample(x, a, Vector::Zero(20));
  const auto model = fit_logistic(s, FeatureExpansion::kRaw);
  CHECK(model.separation);
  CHECK_FALSE(model.converged);
  CHECK(model.coefficients.allFinite());
  const auto est = hajek_att(s, model);
  CHECK(std::isfinite(est.att));
}

TEST_CASE("hajek estimator basics") {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd(0.0, 1.0);
  const Index n = 50;
  DenseMatrix x(n, 1);
  std::vector<int> a(static_cast<std::size_t>(n));
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = nd(gen);
    a[static_cast<std::size_t>(i)] = i % 3 == 0 ? 1 : 0;
    y[i] = 2.0 + nd(gen);
  }
  const auto s = make_sample(x, a, y);
  double mean_c = 0.0;
  for (Index c : s.control_rows()) mean_c += y[c];
  mean_c /= static_cast<double>(s.n_c());

  const auto flat = hajek_att(s, Vector::Constant(n, 0.4));
  CHECK(flat.psi_hat == doctest::Approx(mean_c));
  CHECK(flat.att == doctest::Approx(s.treated_outcome_mean() - mean_c));

  Vector pi(n);
  for (Index i = 0; i < n; ++i) pi[i] = sigmoid(x(i, 0));
  pi[0] = 0.0;
  pi[1] = 1.0;  // clipped
  const auto est = hajek_att(s, pi);
  CHECK(est.control_weights.minCoeff() >= 0.0);
  CHECK(est.control_weights.sum() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::isfinite(est.att));

  // Scaling and shifting the outcome.
  const auto scaled = hajek_att(make_sample(x, a, 3.0 * y), pi);
  CHECK(scaled.psi_hat == doctest::Approx(3.0 * est.psi_hat));
  CHECK(scaled.att == doctest::Approx(3.0 * est.att));
  const auto shifted = hajek_att(make_sample(x, a, (y.array() + 5.0).matrix()), pi);
  CHECK(shifted.psi_hat == doctest::Approx(est.psi_hat + 5.0));
  CHECK(shifted.att == doctest::Approx(est.att));

  CHECK_THROWS_AS(hajek_att(s, Vector::Constant(n - 1, 0.5)), Error);
}

TEST_CASE("single control unit") {
  DenseMatrix x(3, 1);
  x << 0.0, 1.0, 2.0;
  const auto s = make_sample(x, {1, 0, 1}, Vector{{4.0, 7.0, 6.0}});
  const auto est = hajek_att(s, Vector{{0.5, 0.2, 0.9}});
  CHECK(est.psi_hat == 7.0);
  CHECK(est.att == doctest::Approx(5.0 - 7.0));
}
