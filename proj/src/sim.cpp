#include "kernbal/sim.hpp"

#include "kernbal/error.hpp"
#include "kernbal/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <thread>

namespace kernbal::sim {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Stream ids for generate(); one independent sequence per variable.
enum Stream : std::uint64_t {
  kStreamGaussian = 1,  // three standard normals per row for (X1, X2, X3)
  kStreamUniform = 2,   // X4
  kStreamChiSq = 3,     // X5
  kStreamBernoulli = 4, // X6
  kStreamOutcome = 5,   // eta
  kStreamTreatment = 6, // epsilon
  kStreamSketch = 7,    // Nystrom column sampling
};

nlohmann::json config_json(const SimConfig& c) {
  nlohmann::json methods = nlohmann::json::array();
  for (Method m : c.methods) methods.push_back(to_string(m));
  return {{"n", c.n},
          {"overlap", to_string(c.overlap)},
          {"spec", to_string(c.spec)},
          {"reps", c.reps},
          {"seed", c.seed},
          {"methods", methods},
          {"delta", c.delta},
          {"m", c.m},
          {"l", c.l},
          {"s", c.s},
          {"exact_rank", c.exact_rank},
          {"eps_abs", c.solver.eps_abs},
          {"eps_rel", c.solver.eps_rel},
          {"max_iter", c.solver.max_iter},
          {"rho", c.solver.rho_init},
          {"sigma", c.solver.sigma},
          {"alpha", c.solver.alpha},
          {"adaptive_rho", c.solver.adaptive_rho},
          {"polish", c.solver.polish},
          {"glm_expansion", estimators::to_string(c.glm_expansion)},
          {"sketch_scheme", "uniform"}};
}

}  // namespace

std::uint64_t sketch_seed(const SimConfig& cfg, Index rep) {
  return CounterRng::stream(cfg.seed, static_cast<std::uint64_t>(rep), kStreamSketch).next_u64();
}

const char* to_string(Overlap o) { return o == Overlap::kWeak ? "weak" : "strong"; }
const char* to_string(CovariateSpec c) {
  return c == CovariateSpec::kCorrect ? "correct" : "transformed";
}
const char* to_string(Method m) {
  switch (m) {
    case Method::kBalancingNystrom:
      return "balancing_nystrom";
    case Method::kBalancingExact:
      return "balancing_exact";
    case Method::kHajekGlm:
      return "hajek_glm";
  }
  return "unknown";
}

Overlap parse_overlap(const std::string& s) {
  if (s == "weak") return Overlap::kWeak;
  if (s == "strong") return Overlap::kStrong;
  throw Error(ErrorCode::kParse, "unknown overlap '" + s + "' (weak|strong)");
}

CovariateSpec parse_spec(const std::string& s) {
  if (s == "correct") return CovariateSpec::kCorrect;
  if (s == "transformed") return CovariateSpec::kTransformed;
  throw Error(ErrorCode::kParse, "unknown covariate spec '" + s + "' (correct|transformed)");
}

Method parse_method(const std::string& s) {
  if (s == "balancing_nystrom") return Method::kBalancingNystrom;
  if (s == "balancing_exact") return Method::kBalancingExact;
  if (s == "hajek_glm") return Method::kHajekGlm;
  throw Error(ErrorCode::kParse,
              "unknown method '" + s + "' (balancing_nystrom|balancing_exact|hajek_glm)");
}

double noise_variance(Overlap o) { return o == Overlap::kWeak ? 30.0 : 100.0; }

void SimConfig::validate() const {
  if (n < 100) throw Error(ErrorCode::kInvalidArgument, "simulation needs n >= 100");
  if (reps < 1) throw Error(ErrorCode::kInvalidArgument, "simulation needs reps >= 1");
  if (!(delta >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "delta must be nonnegative");
  if (methods.empty()) throw Error(ErrorCode::kInvalidArgument, "no methods selected");
  if (threads < 1) throw Error(ErrorCode::kInvalidArgument, "threads must be >= 1");
}

balancing::Sample generate(const SimConfig& cfg, Index rep) {
  const Index n = cfg.n;
  const auto r = static_cast<std::uint64_t>(rep);
  CounterRng gauss = CounterRng::stream(cfg.seed, r, kStreamGaussian);
  CounterRng unif = CounterRng::stream(cfg.seed, r, kStreamUniform);
  CounterRng chisq = CounterRng::stream(cfg.seed, r, kStreamChiSq);
  CounterRng bern = CounterRng::stream(cfg.seed, r, kStreamBernoulli);
  CounterRng noise_y = CounterRng::stream(cfg.seed, r, kStreamOutcome);
  CounterRng noise_a = CounterRng::stream(cfg.seed, r, kStreamTreatment);

  Eigen::Matrix3d cov;
  cov << 2.0, 1.0, -1.0, 1.0, 1.0, -0.5, -1.0, -0.5, 1.0;
  const Eigen::Matrix3d chol = cov.llt().matrixL();
  const double sd_eps = std::sqrt(noise_variance(cfg.overlap));

  linalg::DenseMatrix raw(n, 6);
  std::vector<int> a(static_cast<std::size_t>(n));
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    const Eigen::Vector3d zvec(gauss.normal(), gauss.normal(), gauss.normal());
    const Eigen::Vector3d x123 = chol * zvec;
    const double x4 = unif.uniform(-3.0, 3.0);
    const double z5 = chisq.normal();
    const double x5 = z5 * z5;
    const double x6 = bern.bernoulli(0.5) ? 1.0 : 0.0;
    raw.row(i) << x123[0], x123[1], x123[2], x4, x5, x6;

    const double x1 = x123[0];
    const double x2 = x123[1];
    const double x3 = x123[2];
    const double index = x1 * x1 + 2.0 * x2 * x2 - 2.0 * x3 * x3 - std::pow(x4 + 1.0, 3) -
                         0.5 * std::log(x5 + 10.0) + x6 - 1.5;
    a[static_cast<std::size_t>(i)] = index + sd_eps * noise_a.normal() > 0.0 ? 1 : 0;
    const double lin = x1 + x2 + x5;
    y[i] = lin * lin + noise_y.normal();
  }

  if (cfg.spec == CovariateSpec::kCorrect) {
    return balancing::Sample(kernel::CovariateMatrix(std::move(raw), {"x1", "x2", "x3", "x4", "x5", "x6"}),
                             std::move(a), std::move(y));
  }
  linalg::DenseMatrix obs(n, 5);
  obs.col(0) = raw.col(0).cwiseProduct(raw.col(2));
  obs.col(1) = raw.col(1).array().square();
  obs.col(2) = raw.col(3);
  obs.col(3) = raw.col(4);
  obs.col(4) = raw.col(5);
  return balancing::Sample(kernel::CovariateMatrix(std::move(obs), {"x1x3", "x2sq", "x4", "x5", "x6"}),
                           std::move(a), std::move(y));
}

RepOutcome estimate(const SimConfig& cfg, Method method, const balancing::Sample& sample,
                    std::uint64_t basis_seed) {
  RepOutcome out;
  try {
    if (method == Method::kHajekGlm) {
      const auto t0 = Clock::now();
      const auto model = estimators::fit_logistic(sample, cfg.glm_expansion);
      const auto est = estimators::hajek_att(sample, model);
      out.time_solve = seconds_since(t0);
      out.att = est.att;
      out.status = model.converged ? "converged" : "not_converged";
      return out;
    }
    balancing::BasisSpec spec;
    if (method == Method::kBalancingNystrom) {
      balancing::KernelNystrom k;
      k.sketch.m = std::min(cfg.m, sample.n());
      k.sketch.l = std::min(cfg.l, k.sketch.m);
      k.sketch.s = std::min(cfg.s, k.sketch.l);
      k.sketch.seed = basis_seed;
      spec.kind = k;
    } else {
      balancing::KernelExact k;
      k.rank = std::min(cfg.exact_rank, sample.n());
      spec.kind = k;
    }
    spec.delta = {cfg.delta};
    const auto t0 = Clock::now();
    const auto problem = balancing::build_problem(sample, spec);
    out.time_basis = seconds_since(t0);
    const auto t1 = Clock::now();
    qp::SolverState state = qp::setup(problem.qp, cfg.solver);
    const qp::WeightSolution sol = qp::solve(state, cfg.solver);
    out.time_solve = seconds_since(t1);
    out.status = qp::to_string(sol.status);
    if (sol.status != qp::SolveStatus::kSolved) {
      out.failed = true;
      return out;
    }
    out.att = balancing::att_estimate(sample, sol.w).att;
  } catch (const Error& e) {
    out.failed = true;
    out.status = std::string("error: ") + e.what();
  }
  return out;
}

SimResult run_study(const SimConfig& cfg) {
  cfg.validate();
  SimResult result;
  result.config = cfg;
  const std::size_t n_methods = cfg.methods.size();
  std::vector<std::vector<RepOutcome>> outcomes(
      n_methods, std::vector<RepOutcome>(static_cast<std::size_t>(cfg.reps)));

  std::atomic<Index> next{0};
  auto worker = [&]() {
    for (Index rep = next++; rep < cfg.reps; rep = next++) {
      const balancing::Sample sample = generate(cfg, rep);
      const std::uint64_t seed = sketch_seed(cfg, rep);
      for (std::size_t k = 0; k < n_methods; ++k) {
        outcomes[k][static_cast<std::size_t>(rep)] = estimate(cfg, cfg.methods[k], sample, seed);
      }
    }
  };
  const Index threads = std::min(cfg.threads, cfg.reps);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (Index t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (std::size_t k = 0; k < n_methods; ++k) {
    MethodSummary s;
    s.method = cfg.methods[k];
    s.reps = std::move(outcomes[k]);
    double sq = 0.0;
    double sum = 0.0;
    Index ok = 0;
    for (const auto& r : s.reps) {
      s.mean_time_basis_s += r.time_basis;
      s.mean_time_solve_s += r.time_solve;
      if (r.failed) {
        ++s.failures;
        continue;
      }
      sq += r.att * r.att;
      sum += r.att;
      ++ok;
    }
    const double reps = static_cast<double>(s.reps.size());
    s.mean_time_basis_s /= reps;
    s.mean_time_solve_s /= reps;
    s.rmse = ok > 0 ? std::sqrt(sq / static_cast<double>(ok)) : std::nan("");
    s.mean_bias = ok > 0 ? sum / static_cast<double>(ok) : std::nan("");
    result.methods.push_back(std::move(s));
  }
  return result;
}

const MethodSummary& SimResult::summary(Method m) const {
  for (const auto& s : methods) {
    if (s.method == m) return s;
  }
  throw Error(ErrorCode::kInvalidArgument, std::string("method not in result: ") + to_string(m));
}

std::string SimResult::to_csv() const {
  std::ostringstream os;
  os << "# config: " << config_json(config).dump() << '\n';
  os << "method,n,overlap,spec,rmse,mean_time_basis_s,mean_time_solve_s,failures,mean_bias,reps\n";
  os << std::setprecision(17);
  for (const auto& s : methods) {
    os << to_string(s.method) << ',' << config.n << ',' << to_string(config.overlap) << ','
       << to_string(config.spec) << ',' << s.rmse << ',' << s.mean_time_basis_s << ','
       << s.mean_time_solve_s << ',' << s.failures << ',' << s.mean_bias << ','
       << s.reps.size() << '\n';
  }
  return os.str();
}

std::string SimResult::to_json() const {
  nlohmann::json j;
  j["config"] = config_json(config);
  j["methods"] = nlohmann::json::array();
  for (const auto& s : methods) {
    nlohmann::json atts = nlohmann::json::array();
    for (const auto& r : s.reps) atts.push_back(r.failed ? nlohmann::json(nullptr) : nlohmann::json(r.att));
    j["methods"].push_back({{"method", to_string(s.method)},
                            {"rmse", s.rmse},
                            {"mean_bias", s.mean_bias},
                            {"mean_time_basis_s", s.mean_time_basis_s},
                            {"mean_time_solve_s", s.mean_time_solve_s},
                            {"failures", s.failures},
                            {"att", atts}});
  }
  return j.dump(2);
}

std::vector<double> linear_grid(double lo, double hi, Index count) {
  if (count < 1) throw Error(ErrorCode::kInvalidArgument, "grid needs at least one value");
  if (!(lo <= hi)) throw Error(ErrorCode::kInvalidArgument, "grid bounds must satisfy lo <= hi");
  std::vector<double> g(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    g[static_cast<std::size_t>(i)] =
        count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  return g;
}

SweepResult delta_sweep(const balancing::Sample& sample, const balancing::BasisSpec& basis,
                        qp::SolverSettings settings, const std::vector<double>& grid,
                        SweepArms arms) {
  if (grid.empty()) throw Error(ErrorCode::kInvalidArgument, "delta grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "delta grid has a negative value");
    if (i > 0 && grid[i] < grid[i - 1]) throw Error(ErrorCode::kInvalidArgument, "delta grid is not sorted");
  }
  settings.adaptive_rho = false;

  SweepResult out;
  balancing::BasisSpec spec = basis;
  spec.delta = {grid.front()};
  const auto problem = balancing::build_problem(sample, spec);
  out.basis_seconds = problem.basis_seconds;
  const Index s = problem.qp.s();

  for (double d : grid) {
    SweepRow row;
    row.delta = d;
    out.rows.push_back(row);
  }

  // Warm arm: one setup, bounds updated in place.
  if (arms.warm) {
    settings.warm_start = true;
    const auto t0 = Clock::now();
    qp::SolverState state = qp::setup(problem.qp, settings);
    out.warm_total_seconds += seconds_since(t0);
    for (auto& row : out.rows) {
      const auto t1 = Clock::now();
      qp::update_bounds(state, Vector::Constant(s, row.delta));
      const qp::WeightSolution sol = qp::solve(state, settings);
      row.warm_seconds = seconds_since(t1);
      out.warm_total_seconds += row.warm_seconds;
      row.warm_iterations = sol.iterations;
      row.warm_status = qp::to_string(sol.status);
      if (sol.status != qp::SolveStatus::kSolved) {
        row.flagged = true;
        state.cold_start();
      }
    }
    out.warm_factorizations = state.factorization_count();
  }

  // Cold arm: fresh setup and factorization per delta.
  if (arms.cold) {
    settings.warm_start = false;
    for (auto& row : out.rows) {
      qp::SbwProblem p = problem.qp;
      p.delta = Vector::Constant(s, row.delta);
      const auto t0 = Clock::now();
      qp::SolverState state = qp::setup(std::move(p), settings);
      const qp::WeightSolution sol = qp::solve(state, settings);
      row.cold_seconds = seconds_since(t0);
      out.cold_total_seconds += row.cold_seconds;
      row.cold_iterations = sol.iterations;
      row.cold_status = qp::to_string(sol.status);
      if (sol.status != qp::SolveStatus::kSolved) row.flagged = true;
      out.cold_factorizations += state.factorization_count();
    }
  }
  return out;
}

SweepResult delta_sweep(const SimConfig& cfg, const std::vector<double>& grid, SweepArms arms) {
  const balancing::Sample sample = generate(cfg, 0);
  balancing::KernelNystrom k;
  k.sketch.m = std::min(cfg.m, sample.n());
  k.sketch.l = std::min(cfg.l, k.sketch.m);
  k.sketch.s = std::min(cfg.s, k.sketch.l);
  k.sketch.seed = sketch_seed(cfg, 0);
  balancing::BasisSpec spec;
  spec.kind = k;
  SweepResult out = delta_sweep(sample, spec, cfg.solver, grid, arms);
  out.config = cfg;
  return out;
}

std::string SweepResult::to_csv() const {
  std::ostringstream os;
  nlohmann::json cfg = config_json(config);
  cfg["warm_total_seconds"] = warm_total_seconds;
  cfg["cold_total_seconds"] = cold_total_seconds;
  cfg["warm_factorizations"] = warm_factorizations;
  cfg["cold_factorizations"] = cold_factorizations;
  os << "# config: " << cfg.dump() << '\n';
  os << "delta,warm_iterations,warm_seconds,warm_cumulative_s,warm_status,cold_iterations,"
        "cold_seconds,cold_cumulative_s,cold_status,speedup,flagged\n";
  os << std::setprecision(17);
  double warm_cum = warm_total_seconds;
  for (const auto& r : rows) warm_cum -= r.warm_seconds;  // the setup share
  double cold_cum = 0.0;
  for (const auto& r : rows) {
    warm_cum += r.warm_seconds;
    cold_cum += r.cold_seconds;
    os << r.delta << ',' << r.warm_iterations << ',' << r.warm_seconds << ',' << warm_cum << ','
       << r.warm_status << ',' << r.cold_iterations << ',' << r.cold_seconds << ',' << cold_cum
       << ',' << r.cold_status << ',' << (warm_cum > 0 ? cold_cum / warm_cum : 0.0) << ','
       << (r.flagged ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace kernbal::sim
