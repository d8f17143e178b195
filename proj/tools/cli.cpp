#include "cli.hpp"

#include "kernbal/balancing.hpp"
#include "kernbal/csv.hpp"
#include "kernbal/diagnostics.hpp"
#include "kernbal/error.hpp"
#include "kernbal/sim.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

namespace kernbal::cli {

namespace {

using nlohmann::json;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_delta(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(item, &pos);
      if (pos != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kParse, "cannot parse delta value '" + item + "'");
    }
  }
  if (out.empty()) throw Error(ErrorCode::kParse, "delta is empty");
  for (double d : out) {
    if (d < 0.0) throw Error(ErrorCode::kParse, "delta must be nonnegative");
  }
  return out;
}

long default_threads() {
  if (const char* env = std::getenv("KERNBAL_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return v;
  }
  return 1;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kParse, "cannot write '" + path + "'");
  f << text;
}

struct SolverFlags {
  double eps_abs = 1e-3;
  double eps_rel = 1e-3;
  long max_iter = 20000;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  bool high_accuracy = false;
  bool polish = false;
  bool fixed_rho = false;

  void add(CLI::App* app) {
    app->add_option("--eps-abs", eps_abs, "Absolute residual tolerance");
    app->add_option("--eps-rel", eps_rel, "Relative residual tolerance");
    app->add_option("--max-iter", max_iter, "ADMM iteration cap");
    app->add_option("--rho", rho, "Initial ADMM step size");
    app->add_option("--sigma", sigma, "Proximal regularization");
    app->add_option("--alpha", alpha, "Relaxation parameter in (0, 2)");
    app->add_flag("--high-accuracy", high_accuracy, "Tolerances 1e-6 with polishing");
    app->add_flag("--polish", polish, "Polish the ADMM solution");
    app->add_flag("--fixed-rho", fixed_rho, "Disable step-size adaptation");
  }

  qp::SolverSettings settings() const {
    qp::SolverSettings s = high_accuracy ? qp::SolverSettings::high_accuracy() : qp::SolverSettings{};
    if (!high_accuracy) {
      s.eps_abs = eps_abs;
      s.eps_rel = eps_rel;
    }
    s.max_iter = max_iter;
    s.rho_init = rho;
    s.sigma = sigma;
    s.alpha = alpha;
    s.polish = s.polish || polish;
    s.adaptive_rho = !fixed_rho;
    s.validate();
    return s;
  }
};

json solver_json(const qp::SolverSettings& s) {
  return {{"eps_abs", s.eps_abs}, {"eps_rel", s.eps_rel},       {"max_iter", s.max_iter},
          {"rho", s.rho_init},    {"sigma", s.sigma},           {"alpha", s.alpha},
          {"polish", s.polish},   {"adaptive_rho", s.adaptive_rho}};
}

// ---------------------------------------------------------------------------
// weights

struct WeightsArgs {
  std::string input;
  std::string treatment = "a";
  std::string outcome = "y";
  std::string covariates;
  std::string basis = "nystrom";
  long m = 300;
  long l = 0;
  long s = 100;
  long rank = 100;
  std::uint64_t seed = 1;
  double bandwidth = 0.0;
  bool no_standardize = false;
  std::string delta = "0.0005";
  std::string out_weights = "weights.csv";
  std::string out_report = "report.json";
  SolverFlags solver;
};

int cmd_weights(const WeightsArgs& args, std::ostream& out) {
  const csv::Table table = csv::read_file(args.input);
  csv::Roles roles;
  roles.treatment = args.treatment;
  roles.outcome = args.outcome;
  roles.covariates = split_list(args.covariates);
  const balancing::Sample sample = csv::to_sample(table, roles);
  const qp::SolverSettings settings = args.solver.settings();

  balancing::BasisSpec spec;
  spec.delta = parse_delta(args.delta);
  json basis_cfg;
  if (args.basis == "nystrom") {
    balancing::KernelNystrom k;
    k.sketch.m = std::min<linalg::Index>(args.m, sample.n());
    k.sketch.s = std::min<linalg::Index>(args.s, k.sketch.m);
    k.sketch.l = args.l > 0 ? std::clamp<linalg::Index>(args.l, k.sketch.s, k.sketch.m) : 0;
    k.sketch.l = k.sketch.resolved_l();
    k.sketch.seed = args.seed;
    k.bandwidth = args.bandwidth;
    k.standardize = !args.no_standardize;
    basis_cfg = {{"kind", "kernel_nystrom"}, {"m", k.sketch.m}, {"l", k.sketch.l},
                 {"s", k.sketch.s},          {"seed", args.seed}, {"sketch_scheme", "uniform"}};
    spec.kind = k;
  } else if (args.basis == "exact") {
    balancing::KernelExact k;
    k.rank = std::min<linalg::Index>(args.rank, sample.n());
    k.bandwidth = args.bandwidth;
    k.standardize = !args.no_standardize;
    basis_cfg = {{"kind", "kernel_exact"}, {"rank", k.rank}};
    spec.kind = k;
  } else if (args.basis == "raw") {
    basis_cfg = {{"kind", "raw_moments"}};
    spec.kind = balancing::RawMoments{};
  } else {
    throw Error(ErrorCode::kParse, "unknown basis '" + args.basis + "' (nystrom|exact|raw)");
  }

  const balancing::BalanceResult res = balancing::solve_weights(sample, spec, settings);
  const qp::WeightSolution& sol = res.solution;

  json report;
  json config = basis_cfg;
  config["delta"] = spec.delta;
  config["standardize"] = !args.no_standardize;
  if (res.problem.kernel) config["bandwidth"] = res.problem.kernel->bandwidth;
  config["bandwidth_degenerate"] = res.problem.bandwidth_degenerate;
  config["solver"] = solver_json(settings);
  config["input"] = args.input;
  config["treatment"] = args.treatment;
  config["outcome"] = args.outcome;
  config["covariates"] = sample.x().names();
  report["config"] = config;
  report["status"] = qp::to_string(sol.status);
  report["iterations"] = sol.iterations;
  report["primal_residual"] = sol.primal_residual;
  report["dual_residual"] = sol.dual_residual;
  report["objective"] = sol.objective;
  report["polished"] = sol.polished;
  report["timings"] = {{"basis_s", res.problem.basis_seconds},
                       {"factor_s", sol.factor_time},
                       {"solve_s", sol.solve_time}};
  report["n"] = sample.n();
  report["n_treated"] = sample.n_t();
  report["n_control"] = sample.n_c();
  report["dropped_basis_columns"] = res.problem.dropped_columns;

  if (sol.ok()) {
    report["att"] = res.att;
    report["psi_hat"] = res.psi_hat;
    diagnostics::BalanceReport bal = diagnostics::tasmd_report(sample, sol.w);
    diagnostics::add_basis_balance(bal, res.problem, sol.w);
    report["balance"] = json::parse(bal.to_json());

    std::ostringstream wcsv;
    wcsv << "# config: " << config.dump() << '\n';
    wcsv << "row_index,weight\n";
    for (linalg::Index i = 0; i < sol.w.size(); ++i) {
      wcsv << res.problem.control_rows[static_cast<std::size_t>(i)] << ','
           << csv::format_double(sol.w[i]) << '\n';
    }
    write_text(args.out_weights, wcsv.str());
  } else {
    report["att"] = nullptr;
    report["psi_hat"] = nullptr;
    if (sol.status == qp::SolveStatus::kPrimalInfeasible) {
      report["infeasibility"] = {
          {"message", "no weights on the simplex satisfy the balance tolerances"},
          {"max_basis_gap_at_last_iterate", diagnostics::max_basis_imbalance(res.problem.qp, sol.w)}};
    }
  }
  write_text(args.out_report, report.dump(2) + "\n");

  out << "status: " << qp::to_string(sol.status) << "\n";
  if (sol.ok()) out << "att: " << csv::format_double(res.att) << "\n";
  switch (sol.status) {
    case qp::SolveStatus::kPrimalInfeasible:
      return kExitInfeasible;
    case qp::SolveStatus::kMaxIter:
      return kExitMaxIter;
    default:
      return kExitOk;
  }
}

// ---------------------------------------------------------------------------
// simulate / sweep / generate

struct SimArgs {
  long n = 2000;
  long reps = 200;
  std::string overlap = "weak";
  std::string spec = "correct";
  std::string methods = "balancing_nystrom,hajek_glm";
  std::uint64_t seed = 20240101;
  double delta = 0.0005;
  long m = 300;
  long l = 200;
  long s = 100;
  long threads = default_threads();
  std::string out = "results.csv";
  std::string json_out;
  bool omit_timings = false;
  SolverFlags solver;

  sim::SimConfig config() const {
    sim::SimConfig c;
    c.n = n;
    c.reps = reps;
    c.overlap = sim::parse_overlap(overlap);
    c.spec = sim::parse_spec(spec);
    c.methods.clear();
    for (const auto& mname : split_list(methods)) c.methods.push_back(sim::parse_method(mname));
    c.seed = seed;
    c.delta = delta;
    c.m = m;
    c.l = l;
    c.s = s;
    c.exact_rank = s;
    c.threads = threads;
    c.solver = solver.settings();
    c.validate();
    return c;
  }
};

int cmd_simulate(const SimArgs& args, std::ostream& out) {
  const sim::SimConfig cfg = args.config();
  sim::SimResult res = sim::run_study(cfg);
  if (args.omit_timings) {
    for (auto& m : res.methods) {
      m.mean_time_basis_s = 0.0;
      m.mean_time_solve_s = 0.0;
    }
  }
  write_text(args.out, res.to_csv());
  if (!args.json_out.empty()) write_text(args.json_out, res.to_json() + "\n");
  for (const auto& m : res.methods) {
    out << sim::to_string(m.method) << ": rmse=" << m.rmse << " failures=" << m.failures << "\n";
  }
  return kExitOk;
}

struct SweepArgs {
  SimArgs sim;
  double delta_min = 0.001;
  double delta_max = 0.1;
  long count = 100;
  bool warm = false;
  bool cold = false;
};

int cmd_sweep(const SweepArgs& args, std::ostream& out) {
  if (args.delta_min > args.delta_max) {
    throw Error(ErrorCode::kParse, "--delta-min must not exceed --delta-max");
  }
  if (args.delta_min < 0.0) throw Error(ErrorCode::kParse, "--delta-min must be nonnegative");
  if (args.count < 1) throw Error(ErrorCode::kParse, "--count must be >= 1");
  sim::SimConfig cfg = args.sim.config();
  const auto grid = sim::linear_grid(args.delta_min, args.delta_max, args.count);
  sim::SweepArms arms;
  if (args.warm || args.cold) {
    arms.warm = args.warm;
    arms.cold = args.cold;
  }
  const sim::SweepResult res = sim::delta_sweep(cfg, grid, arms);
  write_text(args.sim.out, res.to_csv());
  out << "warm_total_s=" << res.warm_total_seconds << " cold_total_s=" << res.cold_total_seconds
      << " speedup=" << res.speedup() << " warm_factorizations=" << res.warm_factorizations
      << "\n";
  return kExitOk;
}

struct GenerateArgs {
  long n = 2000;
  long rep = 0;
  std::uint64_t seed = 20240101;
  std::string overlap = "weak";
  std::string spec = "correct";
  std::string out = "sample.csv";
};

int cmd_generate(const GenerateArgs& args, std::ostream& out) {
  sim::SimConfig cfg;
  cfg.n = args.n;
  cfg.seed = args.seed;
  cfg.overlap = sim::parse_overlap(args.overlap);
  cfg.spec = sim::parse_spec(args.spec);
  cfg.validate();
  const balancing::Sample sample = sim::generate(cfg, args.rep);
  std::ofstream f(args.out, std::ios::binary);
  if (!f) throw Error(ErrorCode::kParse, "cannot write '" + args.out + "'");
  csv::write_sample(f, sample);
  out << "wrote " << sample.n() << " rows (" << sample.n_t() << " treated) to " << args.out << "\n";
  return kExitOk;
}

void add_sim_options(CLI::App* app, SimArgs& a) {
  app->add_option("--n", a.n, "Sample size");
  app->add_option("--reps", a.reps, "Replications");
  app->add_option("--overlap", a.overlap, "weak|strong");
  app->add_option("--spec", a.spec, "correct|transformed");
  app->add_option("--methods", a.methods, "Comma list of balancing_nystrom,balancing_exact,hajek_glm");
  app->add_option("--seed", a.seed, "Master seed");
  app->add_option("--delta", a.delta, "Balance tolerance");
  app->add_option("--m", a.m, "Sketch size");
  app->add_option("--l", a.l, "Regularization rank");
  app->add_option("--s", a.s, "Target rank");
  app->add_option("--threads", a.threads, "Worker threads (default KERNBAL_THREADS or 1)");
  app->add_option("--out", a.out, "Output CSV");
  a.solver.add(app);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Kernel stable balancing weights for ATT estimation"};
  app.set_config("--config", "", "key=value configuration file; flags override it");
  app.require_subcommand(1);

  WeightsArgs wa;
  auto* weights = app.add_subcommand("weights", "Estimate balancing weights from a CSV");
  weights->add_option("--input", wa.input, "Input CSV")->required();
  weights->add_option("--treatment", wa.treatment, "Treatment column (0/1)");
  weights->add_option("--outcome", wa.outcome, "Outcome column");
  weights->add_option("--covariates", wa.covariates, "Comma list; default all other columns");
  weights->add_option("--basis", wa.basis, "nystrom|exact|raw");
  weights->add_option("--m", wa.m, "Sketch size");
  weights->add_option("--l", wa.l, "Regularization rank (default ceil((s+m)/2))");
  weights->add_option("--s", wa.s, "Target rank");
  weights->add_option("--rank", wa.rank, "Rank of the exact basis");
  weights->add_option("--seed", wa.seed, "Sketch seed");
  weights->add_option("--bandwidth", wa.bandwidth, "Kernel bandwidth (default: covariate rank)");
  weights->add_flag("--no-standardize", wa.no_standardize, "Use covariates unscaled");
  weights->add_option("--delta", wa.delta, "Tolerance, scalar or comma list per basis column");
  weights->add_option("--out-weights", wa.out_weights, "Weights CSV");
  weights->add_option("--out-report", wa.out_report, "Report JSON");
  wa.solver.add(weights);

  SimArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Run the simulation study");
  add_sim_options(simulate, sa);
  simulate->add_option("--json", sa.json_out, "Also write per-replication JSON");
  simulate->add_flag("--omit-timings", sa.omit_timings, "Write zero timings for byte-stable output");

  SweepArgs swa;
  swa.sim.n = 5000;
  swa.sim.out = "sweep.csv";
  swa.sim.methods = "balancing_nystrom";
  auto* sweep = app.add_subcommand("sweep", "Warm-started delta sweep against cold solves");
  add_sim_options(sweep, swa.sim);
  sweep->add_option("--delta-min", swa.delta_min, "Smallest delta");
  sweep->add_option("--delta-max", swa.delta_max, "Largest delta");
  sweep->add_option("--count", swa.count, "Number of delta values");
  sweep->add_flag("--warm", swa.warm, "Run the warm-started arm (default: both)");
  sweep->add_flag("--cold", swa.cold, "Run the cold-start arm (default: both)");

  GenerateArgs ga;
  auto* generate = app.add_subcommand("generate", "Write one simulated sample as CSV");
  generate->add_option("--n", ga.n, "Sample size");
  generate->add_option("--rep", ga.rep, "Replication index");
  generate->add_option("--seed", ga.seed, "Master seed");
  generate->add_option("--overlap", ga.overlap, "weak|strong");
  generate->add_option("--spec", ga.spec, "correct|transformed");
  generate->add_option("--out", ga.out, "Output CSV");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (weights->parsed()) return cmd_weights(wa, out);
    if (simulate->parsed()) return cmd_simulate(sa, out);
    if (sweep->parsed()) return cmd_sweep(swa, out);
    if (generate->parsed()) return cmd_generate(ga, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace kernbal::cli
