#include "kernbal/estimators.hpp"

#include "kernbal/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace kernbal::estimators {

namespace {

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// log(1 + exp(t)) without overflow.
double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

DenseMatrix design(const LogisticModel& model, const DenseMatrix& x) {
  const DenseMatrix f = expand_features(x, model.expansion, model.binary_columns);
  DenseMatrix out(f.rows(), f.cols() + 1);
  out.col(0).setOnes();
  for (Index j = 0; j < f.cols(); ++j) {
    const double sd = model.feature_sds[j];
    if (sd > 0.0) {
      out.col(j + 1) = ((f.col(j).array() - model.feature_means[j]) / sd).matrix();
    } else {
      out.col(j + 1).setZero();
    }
  }
  return out;
}

double penalized_loglik(const DenseMatrix& f, const Vector& a, const Vector& beta, double ridge) {
  const Vector eta = f * beta;
  double ll = 0.0;
  for (Index i = 0; i < eta.size(); ++i) ll += a[i] * eta[i] - softplus(eta[i]);
  return ll - 0.5 * ridge * beta.squaredNorm();
}

}  // namespace

const char* to_string(FeatureExpansion e) {
  switch (e) {
    case FeatureExpansion::kRaw:
      return "raw";
    case FeatureExpansion::kQuadraticInteractions:
      return "raw_plus_quadratic_and_interactions";
  }
  return "unknown";
}

std::vector<bool> detect_binary_columns(const DenseMatrix& x) {
  std::vector<bool> out(static_cast<std::size_t>(x.cols()), true);
  for (Index j = 0; j < x.cols(); ++j) {
    for (Index i = 0; i < x.rows(); ++i) {
      const double v = x(i, j);
      if (v != 0.0 && v != 1.0) {
        out[static_cast<std::size_t>(j)] = false;
        break;
      }
    }
  }
  return out;
}

DenseMatrix expand_features(const DenseMatrix& x, FeatureExpansion expansion,
                            const std::vector<bool>& binary_columns) {
  const Index d = x.cols();
  if (expansion == FeatureExpansion::kRaw) return x;
  if (static_cast<Index>(binary_columns.size()) != d) {
    throw Error(ErrorCode::kDimensionMismatch, "expand_features: binary flags do not match columns");
  }
  Index squares = 0;
  for (bool b : binary_columns) squares += b ? 0 : 1;
  const Index total = d + squares + d * (d - 1) / 2;
  DenseMatrix out(x.rows(), total);
  out.leftCols(d) = x;
  Index c = d;
  for (Index j = 0; j < d; ++j) {
    if (!binary_columns[static_cast<std::size_t>(j)]) out.col(c++) = x.col(j).array().square();
  }
  for (Index j = 0; j < d; ++j) {
    for (Index k = j + 1; k < d; ++k) out.col(c++) = x.col(j).cwiseProduct(x.col(k));
  }
  return out;
}

Vector LogisticModel::predict(const DenseMatrix& x) const {
  const Vector eta = design(*this, x) * coefficients;
  return eta.unaryExpr([](double t) { return sigmoid(t); });
}

LogisticModel fit_logistic(const balancing::Sample& sample, FeatureExpansion expansion,
                           const LogisticOptions& options) {
  const DenseMatrix& x = sample.x().values();
  LogisticModel model;
  model.expansion = expansion;
  model.binary_columns = detect_binary_columns(x);

  const DenseMatrix raw_features = expand_features(x, expansion, model.binary_columns);
  const Index n = x.rows();
  const Index p = raw_features.cols() + 1;
  if (n < p + 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "fit_logistic: " + std::to_string(n) + " rows for " + std::to_string(p) +
                    " coefficients");
  }
  model.feature_means.resize(p - 1);
  model.feature_sds.resize(p - 1);
  for (Index j = 0; j < p - 1; ++j) {
    const auto col = raw_features.col(j);
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().sum() / static_cast<double>(n - 1));
    model.feature_means[j] = mean;
    model.feature_sds[j] = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? sd : 0.0;
  }
  const DenseMatrix f = design(model, x);

  Vector a(n);
  for (Index i = 0; i < n; ++i) a[i] = static_cast<double>(sample.a()[static_cast<std::size_t>(i)]);

  Vector beta = Vector::Zero(p);
  const double base = std::clamp(a.mean(), 1e-6, 1.0 - 1e-6);
  beta[0] = std::log(base / (1.0 - base));
  double ll = penalized_loglik(f, a, beta, options.ridge);

  for (Index it = 1; it <= options.max_iter; ++it) {
    model.iterations = it;
    const Vector eta = f * beta;
    Vector prob(n);
    Vector wts(n);
    for (Index i = 0; i < n; ++i) {
      prob[i] = sigmoid(eta[i]);
      wts[i] = std::max(prob[i] * (1.0 - prob[i]), 1e-12);
    }
    const Vector score = f.transpose() * (a - prob) - options.ridge * beta;
    if (score.cwiseAbs().maxCoeff() <= options.score_tol) {
      model.converged = true;
      break;
    }
    DenseMatrix hess = f.transpose() * wts.asDiagonal() * f;
    hess.diagonal().array() += options.ridge;
    const Vector step = hess.ldlt().solve(score);

    // Step halving keeps the penalized likelihood monotone. Near the optimum
    // the gain is below the rounding of ll, so ties within it are accepted.
    const double slack = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(ll));
    double t = 1.0;
    Vector candidate = beta + step;
    double cand_ll = penalized_loglik(f, a, candidate, options.ridge);
    while (cand_ll < ll - slack && t > 1e-10) {
      t *= 0.5;
      candidate = beta + t * step;
      cand_ll = penalized_loglik(f, a, candidate, options.ridge);
    }
    if (cand_ll < ll - slack) break;
    beta = candidate;
    ll = cand_ll;
  }
  model.coefficients = beta;
  if (beta.tail(p - 1).size() > 0 &&
      beta.tail(p - 1).cwiseAbs().maxCoeff() > options.separation_threshold) {
    model.separation = true;
    model.converged = false;
  }
  return model;
}

HajekEstimate hajek_att(const balancing::Sample& sample, const Vector& propensity) {
  if (propensity.size() != sample.n()) {
    throw Error(ErrorCode::kDimensionMismatch, "hajek_att: one propensity per row required");
  }
  HajekEstimate est;
  const auto& controls = sample.control_rows();
  est.control_weights.resize(static_cast<Index>(controls.size()));
  double total = 0.0;
  for (std::size_t i = 0; i < controls.size(); ++i) {
    const double pi = std::clamp(propensity[controls[i]], kPropensityClip, 1.0 - kPropensityClip);
    const double odds = pi / (1.0 - pi);
    est.control_weights[static_cast<Index>(i)] = odds;
    total += odds;
  }
  est.control_weights /= total;
  for (std::size_t i = 0; i < controls.size(); ++i) {
    est.psi_hat += est.control_weights[static_cast<Index>(i)] * sample.y()[controls[i]];
  }
  est.att = sample.treated_outcome_mean() - est.psi_hat;
  return est;
}

HajekEstimate hajek_att(const balancing::Sample& sample, const LogisticModel& model) {
  return hajek_att(sample, model.predict(sample.x().values()));
}

}  // namespace kernbal::estimators
