#include "kernbal/nystrom.hpp"

#include "kernbal/error.hpp"
#include "kernbal/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

namespace kernbal::nystrom {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

const char* to_string(SketchScheme scheme) {
  switch (scheme) {
    case SketchScheme::kUniform:
      return "uniform";
  }
  return "unknown";
}

Index SketchConfig::resolved_l() const { return l > 0 ? l : (s + m + 1) / 2; }

void SketchConfig::validate(Index n) const {
  const Index lr = resolved_l();
  if (s < 1 || s > lr || lr > m || m > n) {
    throw Error(ErrorCode::kInvalidArgument,
                "sketch sizes must satisfy 1 <= s <= l <= m <= n; got s=" + std::to_string(s) +
                    " l=" + std::to_string(lr) + " m=" + std::to_string(m) +
                    " n=" + std::to_string(n));
  }
}

std::vector<Index> sample_indices(Index n, Index m, std::uint64_t seed) {
  if (m < 1 || m > n) {
    throw Error(ErrorCode::kInvalidArgument, "sample_indices: need 1 <= m <= n, got m=" +
                                                 std::to_string(m) + " n=" + std::to_string(n));
  }
  // Partial Fisher-Yates over a lazily materialized identity permutation.
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  CounterRng rng = CounterRng::stream(seed, 0x5eed, 0);
  for (Index i = 0; i < m; ++i) {
    const auto j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  perm.resize(static_cast<std::size_t>(m));
  return perm;
}

NystromBasis build_basis(const kernel::CovariateMatrix& x, const kernel::KernelConfig& cfg,
                         const SketchConfig& sketch) {
  const auto t0 = std::chrono::steady_clock::now();
  const Index n = x.n();
  sketch.validate(n);
  const Index m = sketch.m;
  const Index l = sketch.resolved_l();
  const Index s = sketch.s;

  NystromBasis out;
  out.kind = BasisKind::kNystrom;
  out.config = sketch;
  out.config.l = l;
  out.sampled_indices = sample_indices(n, m, sketch.seed);

  const kernel::CovariateMatrix prepared = kernel::prepare(x, cfg);
  kernel::KernelConfig raw_cfg = cfg;
  raw_cfg.standardize = false;
  DenseMatrix c = kernel::gram_cross(prepared, out.sampled_indices, raw_cfg);

  DenseMatrix w(m, m);
  for (Index i = 0; i < m; ++i) w.row(i) = c.row(out.sampled_indices[static_cast<std::size_t>(i)]);
  w = 0.5 * (w + w.transpose()).eval();

  // W is PSD, so its eigendecomposition is its SVD.
  const linalg::SymmetricEigen we = linalg::eigh_sym(w);
  out.w_spectrum = we.eigenvalues.cwiseMax(0.0);
  const double sigma1 = out.w_spectrum[0];
  Index achievable = 0;
  for (Index i = 0; i < m; ++i) {
    if (out.w_spectrum[i] > kPinvTolerance * sigma1) ++achievable;
  }
  if (sigma1 <= 0.0 || achievable < l) {
    throw Error(ErrorCode::kRankDeficient,
                "build_basis: W has numerical rank " + std::to_string(achievable) +
                    " below l=" + std::to_string(l) + "; reduce l to at most " +
                    std::to_string(std::max<Index>(achievable, 1)));
  }

  // R = C U_{W,l} Lambda_{W,l}^{-1/2}
  DenseMatrix proj = we.eigenvectors.leftCols(l);
  for (Index j = 0; j < l; ++j) proj.col(j) /= std::sqrt(out.w_spectrum[j]);
  DenseMatrix r = c * proj;
  c.resize(0, 0);

  // Right singular vectors of R from the l x l Gram R^T R; D = R V_s.
  DenseMatrix rtr(l, l);
  rtr.setZero();
  rtr.selfadjointView<Eigen::Lower>().rankUpdate(r.transpose());
  rtr = rtr.selfadjointView<Eigen::Lower>();
  const linalg::SymmetricEigen re = linalg::eigh_sym(rtr);
  out.d_factor = r * re.eigenvectors.leftCols(s);
  out.build_seconds = seconds_since(t0);
  return out;
}

NystromBasis exact_basis(const kernel::CovariateMatrix& x, const kernel::KernelConfig& cfg,
                         Index rank) {
  const auto t0 = std::chrono::steady_clock::now();
  const Index n = x.n();
  if (n > kExactBasisMaxN) {
    throw Error(ErrorCode::kGuardExceeded,
                "exact_basis: n=" + std::to_string(n) + " exceeds the dense guard of " +
                    std::to_string(kExactBasisMaxN));
  }
  if (rank < 1 || rank > n) {
    throw Error(ErrorCode::kInvalidArgument, "exact_basis: rank outside [1, n]");
  }
  const DenseMatrix k = kernel::gram(x, cfg);
  const linalg::SymmetricEigen ke = linalg::eigh_sym(k);

  NystromBasis out;
  out.kind = BasisKind::kExact;
  out.config.m = n;
  out.config.l = n;
  out.config.s = rank;
  out.w_spectrum = ke.eigenvalues.cwiseMax(0.0);
  out.d_factor = ke.eigenvectors.leftCols(rank);
  for (Index j = 0; j < rank; ++j) out.d_factor.col(j) *= std::sqrt(out.w_spectrum[j]);
  out.build_seconds = seconds_since(t0);
  return out;
}

RegularizationError regularization_error(const Vector& w_spectrum, Index l) {
  RegularizationError out;
  if (w_spectrum.size() == 0) return out;
  const double cutoff = kPinvTolerance * w_spectrum[0];
  for (Index i = l; i < w_spectrum.size(); ++i) {
    const double sv = w_spectrum[i];
    if (sv > cutoff) {
      out.spectral = std::max(out.spectral, 1.0 / sv);
      out.frobenius_sq += 1.0 / (sv * sv);
    }
  }
  return out;
}

}  // namespace kernbal::nystrom
