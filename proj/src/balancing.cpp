#include "kernbal/balancing.hpp"

#include "kernbal/error.hpp"

#include <chrono>
#include <cmath>
#include <string>

namespace kernbal::balancing {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

Sample::Sample(kernel::CovariateMatrix x, std::vector<int> treatment, Vector outcome)
    : x_(std::move(x)), a_(std::move(treatment)), y_(std::move(outcome)) {
  const Index n = x_.n();
  if (static_cast<Index>(a_.size()) != n || y_.size() != n) {
    throw Error(ErrorCode::kDimensionMismatch,
                "sample: covariates, treatment and outcome lengths differ");
  }
  if (!y_.allFinite()) throw Error(ErrorCode::kNonFinite, "sample: non-finite outcome");
  for (Index i = 0; i < n; ++i) {
    const int ai = a_[static_cast<std::size_t>(i)];
    if (ai == 1) {
      treated_.push_back(i);
    } else if (ai == 0) {
      control_.push_back(i);
    } else {
      throw Error(ErrorCode::kInvalidArgument,
                  "sample: treatment at row " + std::to_string(i) + " is not 0 or 1");
    }
  }
  if (treated_.empty() || control_.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "sample: need at least one treated and one control unit");
  }
}

double Sample::treated_outcome_mean() const {
  double acc = 0.0;
  for (Index i : treated_) acc += y_[i];
  return acc / static_cast<double>(treated_.size());
}

void BasisSpec::validate() const {
  if (delta.empty()) throw Error(ErrorCode::kInvalidArgument, "delta must not be empty");
  for (double d : delta) {
    if (!(d >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "delta must be nonnegative");
  }
}

const char* basis_name(const BasisSpec& spec) {
  return std::visit(Overloaded{[](const KernelNystrom&) { return "kernel_nystrom"; },
                               [](const KernelExact&) { return "kernel_exact"; },
                               [](const RawMoments&) { return "raw_moments"; }},
                    spec.kind);
}

kernel::KernelConfig resolve_kernel(const kernel::CovariateMatrix& x, double bandwidth,
                                    bool standardize, bool* degenerate) {
  kernel::KernelConfig cfg;
  cfg.standardize = standardize;
  if (bandwidth > 0.0) {
    cfg.bandwidth = bandwidth;
    if (degenerate) *degenerate = false;
  } else {
    const kernel::BandwidthChoice choice = kernel::default_bandwidth(x);
    cfg.bandwidth = choice.bandwidth;
    if (degenerate) *degenerate = choice.degenerate;
  }
  return cfg;
}

AssembledProblem build_problem(const Sample& sample, const BasisSpec& spec) {
  spec.validate();
  const auto t0 = std::chrono::steady_clock::now();
  AssembledProblem out;
  out.control_rows = sample.control_rows();

  DenseMatrix basis_values;  // n x (candidate columns)
  std::visit(Overloaded{
                 [&](const KernelNystrom& k) {
                   out.kernel = resolve_kernel(sample.x(), k.bandwidth, k.standardize,
                                               &out.bandwidth_degenerate);
                   out.basis = nystrom::build_basis(sample.x(), *out.kernel, k.sketch);
                   basis_values = out.basis->d_factor;
                 },
                 [&](const KernelExact& k) {
                   out.kernel = resolve_kernel(sample.x(), k.bandwidth, k.standardize,
                                               &out.bandwidth_degenerate);
                   out.basis = nystrom::exact_basis(sample.x(), *out.kernel, k.rank);
                   basis_values = out.basis->d_factor;
                 },
                 [&](const RawMoments&) { basis_values = sample.x().standardized().values(); },
             },
             spec.kind);
  out.basis_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const Index cols = basis_values.cols();
  if (spec.delta.size() != 1 && static_cast<Index>(spec.delta.size()) != cols) {
    throw Error(ErrorCode::kDimensionMismatch,
                "delta has " + std::to_string(spec.delta.size()) +
                    " entries; expected 1 or " + std::to_string(cols));
  }

  const double scale = std::max(1.0, basis_values.size() ? basis_values.cwiseAbs().maxCoeff() : 0.0);
  for (Index b = 0; b < cols; ++b) {
    const auto col = basis_values.col(b);
    if (col.maxCoeff() - col.minCoeff() <= 1e-12 * scale) {
      out.dropped_columns.push_back(b);
    } else {
      out.kept_columns.push_back(b);
    }
  }

  const Index s = static_cast<Index>(out.kept_columns.size());
  const Index n_c = sample.n_c();
  DenseMatrix d_c(n_c, s);
  Vector target = Vector::Zero(s);
  Vector delta(s);
  for (Index j = 0; j < s; ++j) {
    const Index b = out.kept_columns[static_cast<std::size_t>(j)];
    for (Index i = 0; i < n_c; ++i) d_c(i, j) = basis_values(sample.control_rows()[static_cast<std::size_t>(i)], b);
    for (Index t : sample.treated_rows()) target[j] += basis_values(t, b);
    target[j] /= static_cast<double>(sample.n_t());
    delta[j] = spec.delta.size() == 1 ? spec.delta[0] : spec.delta[static_cast<std::size_t>(b)];
  }
  out.qp = qp::SbwProblem::make(std::move(d_c), std::move(target), std::move(delta));
  return out;
}

BalanceResult solve_weights(const Sample& sample, const BasisSpec& spec,
                            const qp::SolverSettings& settings) {
  BalanceResult result;
  result.problem = build_problem(sample, spec);
  qp::SolverState state = qp::setup(result.problem.qp, settings);
  result.solution = qp::solve(state, settings);
  if (result.solution.ok()) {
    const AttEstimate est = att_estimate(sample, result.solution.w);
    result.att = est.att;
    result.psi_hat = est.psi_hat;
  }
  return result;
}

AttEstimate att_estimate(const Sample& sample, const Vector& w) {
  if (w.size() != sample.n_c()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "att_estimate: " + std::to_string(w.size()) + " weights for " +
                    std::to_string(sample.n_c()) + " controls");
  }
  if (std::abs(w.sum() - 1.0) > 1e-4) {
    throw Error(ErrorCode::kInvalidArgument,
                "att_estimate: weights sum to " + std::to_string(w.sum()) + ", not 1");
  }
  AttEstimate est;
  const auto& rows = sample.control_rows();
  for (std::size_t i = 0; i < rows.size(); ++i) est.psi_hat += w[static_cast<Index>(i)] * sample.y()[rows[i]];
  est.att = sample.treated_outcome_mean() - est.psi_hat;
  return est;
}

}  // namespace kernbal::balancing
