#include "kernbal/diagnostics.hpp"

#include "kernbal/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace kernbal::diagnostics {

double BalanceReport::max_tasmd_after() const {
  double m = 0.0;
  for (const auto& c : covariates) m = std::max(m, c.tasmd_after);
  return m;
}

std::string BalanceReport::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "covariate,mean_treated,mean_control_unweighted,mean_control_weighted,tasmd_before,"
        "tasmd_after\n";
  for (const auto& c : covariates) {
    os << c.covariate << ',' << c.mean_treated << ',' << c.mean_control_unweighted << ','
       << c.mean_control_weighted << ',' << c.tasmd_before << ',' << c.tasmd_after << '\n';
  }
  return os.str();
}

std::string BalanceReport::to_json() const {
  nlohmann::json j;
  j["covariates"] = nlohmann::json::array();
  for (const auto& c : covariates) {
    j["covariates"].push_back({{"covariate", c.covariate},
                               {"mean_treated", c.mean_treated},
                               {"mean_control_unweighted", c.mean_control_unweighted},
                               {"mean_control_weighted", c.mean_control_weighted},
                               {"tasmd_before", c.tasmd_before},
                               {"tasmd_after", c.tasmd_after},
                               {"zero_sd", c.zero_sd}});
  }
  j["basis"] = nlohmann::json::array();
  for (const auto& b : basis) {
    j["basis"].push_back({{"index", b.index}, {"imbalance", b.imbalance}, {"delta", b.delta}});
  }
  j["sd_undefined"] = sd_undefined;
  return j.dump(2);
}

BalanceReport tasmd_report(const balancing::Sample& sample, const Vector& w,
                           const std::vector<std::string>& covariate_names) {
  if (w.size() != sample.n_c()) {
    throw Error(ErrorCode::kDimensionMismatch, "tasmd_report: one weight per control required");
  }
  const DenseMatrix& x = sample.x().values();
  const auto& names = covariate_names.empty() ? sample.x().names() : covariate_names;
  if (static_cast<Index>(names.size()) != x.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "tasmd_report: names do not match covariates");
  }
  const auto& treated = sample.treated_rows();
  const auto& controls = sample.control_rows();
  const double n_t = static_cast<double>(treated.size());
  const double n_c = static_cast<double>(controls.size());

  BalanceReport report;
  report.sd_undefined = treated.size() < 2;
  for (Index j = 0; j < x.cols(); ++j) {
    CovariateBalance row;
    row.covariate = names[static_cast<std::size_t>(j)];
    for (Index t : treated) row.mean_treated += x(t, j);
    row.mean_treated /= n_t;
    for (std::size_t i = 0; i < controls.size(); ++i) {
      row.mean_control_unweighted += x(controls[i], j);
      row.mean_control_weighted += w[static_cast<Index>(i)] * x(controls[i], j);
    }
    row.mean_control_unweighted /= n_c;

    double sd = 0.0;
    if (!report.sd_undefined) {
      double ss = 0.0;
      for (Index t : treated) ss += (x(t, j) - row.mean_treated) * (x(t, j) - row.mean_treated);
      sd = std::sqrt(ss / (n_t - 1.0));
    }
    row.zero_sd = !(sd > 0.0);
    const double scale = row.zero_sd ? 1.0 : sd;
    row.tasmd_before = std::abs(row.mean_control_unweighted - row.mean_treated) / scale;
    row.tasmd_after = std::abs(row.mean_control_weighted - row.mean_treated) / scale;
    report.covariates.push_back(std::move(row));
  }
  return report;
}

void add_basis_balance(BalanceReport& report, const balancing::AssembledProblem& problem,
                       const Vector& w) {
  const Vector achieved = problem.qp.d_c.transpose() * w;
  for (Index b = 0; b < problem.qp.s(); ++b) {
    BasisBalance row;
    row.index = problem.kept_columns[static_cast<std::size_t>(b)];
    row.imbalance = std::abs(achieved[b] - problem.qp.target[b]);
    row.delta = problem.qp.delta[b];
    report.basis.push_back(row);
  }
}

double max_basis_imbalance(const qp::SbwProblem& problem, const Vector& w) {
  if (problem.s() == 0) return 0.0;
  return (problem.d_c.transpose() * w - problem.target).cwiseAbs().maxCoeff();
}

Vector weight_contrast(const balancing::Sample& sample, const Vector& w) {
  if (w.size() != sample.n_c()) {
    throw Error(ErrorCode::kDimensionMismatch, "weight_contrast: one weight per control required");
  }
  Vector e = Vector::Zero(sample.n());
  const auto& controls = sample.control_rows();
  for (std::size_t i = 0; i < controls.size(); ++i) e[controls[i]] = w[static_cast<Index>(i)];
  const double inv_nt = 1.0 / static_cast<double>(sample.n_t());
  for (Index t : sample.treated_rows()) e[t] = -inv_nt;
  return e;
}

double worst_case_bias_eigen(const linalg::SymmetricEigen& eig,
                             const balancing::Sample& sample, const Vector& w) {
  const DenseMatrix& u = eig.eigenvectors;
  const Index n = u.rows();
  Vector v = Vector::Zero(u.cols());
  const auto& controls = sample.control_rows();
  for (std::size_t i = 0; i < controls.size(); ++i) v += w[static_cast<Index>(i)] * u.row(controls[i]).transpose();
  Vector vt = Vector::Zero(u.cols());
  for (Index t : sample.treated_rows()) vt += u.row(t).transpose();
  v -= vt / static_cast<double>(sample.n_t());
  if (n != sample.n()) throw Error(ErrorCode::kDimensionMismatch, "eigenbasis size mismatch");
  const Vector scaled = eig.eigenvalues.cwiseProduct(v);
  return (u * scaled).norm();
}

double worst_case_bias_direct(const DenseMatrix& k, const balancing::Sample& sample,
                              const Vector& w) {
  return (k * weight_contrast(sample, w)).norm();
}

BiasBoundReport bias_bound_report(const balancing::Sample& sample,
                                  const nystrom::NystromBasis& basis, const Vector& w,
                                  const kernel::KernelConfig& cfg) {
  const Index n = sample.n();
  if (n > kBiasBoundMaxN) {
    throw Error(ErrorCode::kGuardExceeded,
                "bias_bound_report: n=" + std::to_string(n) + " exceeds the exact-kernel guard");
  }
  if (basis.n() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "bias_bound_report: basis rows differ from sample");
  }
  const DenseMatrix k = kernel::gram(sample.x(), cfg);
  const linalg::SymmetricEigen eig = linalg::eigh_sym(k);

  BiasBoundReport r;
  const Index s = basis.rank();
  for (Index i = s; i < n; ++i) r.trace_error += std::abs(eig.eigenvalues[i]);

  DenseMatrix diff = k;
  diff.noalias() -= basis.d_factor * basis.d_factor.transpose();
  diff = 0.5 * (diff + diff.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<DenseMatrix> de(diff, Eigen::EigenvaluesOnly);
  r.nystrom_trace_error = de.eigenvalues().cwiseAbs().sum();

  if (basis.kind == nystrom::BasisKind::kNystrom) {
    const auto reg = nystrom::regularization_error(basis.w_spectrum, basis.config.resolved_l());
    r.reg_spectral = reg.spectral;
    r.reg_frobenius_sq = reg.frobenius_sq;
  }

  if (s > 0) {
    Vector achieved = Vector::Zero(s);
    const auto& controls = sample.control_rows();
    for (std::size_t i = 0; i < controls.size(); ++i) achieved += w[static_cast<Index>(i)] * basis.d_factor.row(controls[i]).transpose();
    Vector target = Vector::Zero(s);
    for (Index t : sample.treated_rows()) target += basis.d_factor.row(t).transpose();
    target /= static_cast<double>(sample.n_t());
    r.residual_imbalance = (achieved - target).cwiseAbs().maxCoeff();
  }
  r.worst_case_bias = worst_case_bias_eigen(eig, sample, w);
  return r;
}

}  // namespace kernbal::diagnostics
