#pragma once

#include "kernbal/balancing.hpp"
#include "kernbal/estimators.hpp"
#include "kernbal/qp_solver.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace kernbal::sim {

using linalg::Index;
using linalg::Vector;

enum class Overlap { kWeak, kStrong };
enum class CovariateSpec { kCorrect, kTransformed };
enum class Method { kBalancingNystrom, kBalancingExact, kHajekGlm };

const char* to_string(Overlap o);
const char* to_string(CovariateSpec c);
const char* to_string(Method m);
Overlap parse_overlap(const std::string& s);
CovariateSpec parse_spec(const std::string& s);
Method parse_method(const std::string& s);

/// Variance of the treatment-assignment noise for each overlap regime.
double noise_variance(Overlap o);

struct SimConfig {
  Index n = 2000;
  Overlap overlap = Overlap::kWeak;
  CovariateSpec spec = CovariateSpec::kCorrect;
  Index reps = 200;
  std::uint64_t seed = 20240101;
  std::vector<Method> methods{Method::kBalancingNystrom, Method::kHajekGlm};
  double delta = 0.0005;
  Index m = 300;
  Index l = 200;
  Index s = 100;
  Index exact_rank = 100;
  qp::SolverSettings solver;
  estimators::FeatureExpansion glm_expansion =
      estimators::FeatureExpansion::kQuadraticInteractions;
  Index threads = 1;

  void validate() const;
};

/// One replication of the simulation design. Streams are keyed by
/// (seed, rep, variable) so every draw is reproducible in isolation.
balancing::Sample generate(const SimConfig& cfg, Index rep);

/// Seed of the Nystrom column sampling used for replication rep.
std::uint64_t sketch_seed(const SimConfig& cfg, Index rep);

struct RepOutcome {
  double att = 0.0;
  double time_basis = 0.0;
  double time_solve = 0.0;
  bool failed = false;
  std::string status;
};

struct MethodSummary {
  Method method = Method::kBalancingNystrom;
  double rmse = 0.0;
  double mean_bias = 0.0;
  double mean_time_basis_s = 0.0;
  double mean_time_solve_s = 0.0;
  Index failures = 0;
  std::vector<RepOutcome> reps;
};

struct SimResult {
  SimConfig config;
  std::vector<MethodSummary> methods;

  const MethodSummary& summary(Method m) const;
  std::string to_csv() const;
  std::string to_json() const;
};

/// Runs one method on one sample.
RepOutcome estimate(const SimConfig& cfg, Method method, const balancing::Sample& sample,
                    std::uint64_t basis_seed);

/// Replications in parallel over cfg.threads workers; results do not depend
/// on the thread count. The true ATT is zero by construction.
SimResult run_study(const SimConfig& cfg);

struct SweepRow {
  double delta = 0.0;
  Index warm_iterations = 0;
  double warm_seconds = 0.0;
  std::string warm_status;
  Index cold_iterations = 0;
  double cold_seconds = 0.0;
  std::string cold_status;
  bool flagged = false;  // not solved in at least one arm
};

struct SweepResult {
  SimConfig config;
  std::vector<SweepRow> rows;
  double warm_total_seconds = 0.0;  // includes the single setup
  double cold_total_seconds = 0.0;  // includes a setup per delta
  Index warm_factorizations = 0;
  Index cold_factorizations = 0;
  double basis_seconds = 0.0;

  double speedup() const { return warm_total_seconds > 0 ? cold_total_seconds / warm_total_seconds : 0.0; }
  std::string to_csv() const;
};

/// Solves one balancing problem over a delta grid twice: once reusing a
/// single factorization with warm starts, once from scratch per delta. Both
/// arms run with a fixed step size so the cached factorization stays valid.
/// The basis is built once and shared by both arms.
struct SweepArms {
  bool warm = true;
  bool cold = true;
};

SweepResult delta_sweep(const balancing::Sample& sample, const balancing::BasisSpec& basis,
                        qp::SolverSettings settings, const std::vector<double>& grid,
                        SweepArms arms = {});

/// Sweep on replication 0 of the simulation design described by cfg.
SweepResult delta_sweep(const SimConfig& cfg, const std::vector<double>& grid,
                        SweepArms arms = {});

/// `count` values equally spaced on [lo, hi].
std::vector<double> linear_grid(double lo, double hi, Index count);

}  // namespace kernbal::sim
