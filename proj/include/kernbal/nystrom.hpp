#pragma once

#include "kernbal/kernel.hpp"
#include "kernbal/linalg.hpp"

#include <cstdint>
#include <vector>

namespace kernbal::nystrom {

using linalg::DenseMatrix;
using linalg::Index;
using linalg::Vector;

// Only uniform column sampling is implemented. The tag is carried in configs
// and serialized outputs so other schemes can be added without a format change.
enum class SketchScheme { kUniform };

const char* to_string(SketchScheme scheme);

struct SketchConfig {
  Index m = 300;  // sampled columns
  Index l = 0;    // regularization rank; 0 means ceil((s + m) / 2)
  Index s = 100;  // target rank
  std::uint64_t seed = 1;
  SketchScheme scheme = SketchScheme::kUniform;

  /// l after applying the default rule.
  Index resolved_l() const;
  /// Checks 1 <= s <= l <= m <= n.
  void validate(Index n) const;
};

enum class BasisKind { kNystrom, kExact };

struct NystromBasis {
  BasisKind kind = BasisKind::kNystrom;
  DenseMatrix d_factor;                // n x s
  std::vector<Index> sampled_indices;  // m distinct rows; empty for exact bases
  // Full spectrum of W (length m), nonincreasing. The first l entries are the
  // ones kept in the regularized inverse; the tail feeds the truncation
  // diagnostics. For exact bases this is the spectrum of K.
  Vector w_spectrum;
  SketchConfig config;  // l resolved
  double build_seconds = 0.0;

  Index n() const { return d_factor.rows(); }
  Index rank() const { return d_factor.cols(); }
};

/// m distinct indices from [0, n), uniform without replacement; a pure
/// function of (n, m, seed).
std::vector<Index> sample_indices(Index n, Index m, std::uint64_t seed);

/// Rank-restricted Nystrom factor D with D D^T approximating the kernel
/// matrix. Memory is O(n m); the n x n matrix is never formed.
NystromBasis build_basis(const kernel::CovariateMatrix& x, const kernel::KernelConfig& cfg,
                         const SketchConfig& sketch);

inline constexpr Index kExactBasisMaxN = 5000;

/// D = U_r Lambda_r^{1/2} from the exact eigendecomposition of K.
NystromBasis exact_basis(const kernel::CovariateMatrix& x, const kernel::KernelConfig& cfg,
                         Index rank);

// Relative cutoff below which singular values of W count as zero in W^+.
inline constexpr double kPinvTolerance = 1e-12;

struct RegularizationError {
  double spectral = 0.0;      // ||W^+ - W_l^{-1}||_2
  double frobenius_sq = 0.0;  // ||W^+ - W_l^{-1}||_F^2
};

/// Error from truncating W^+ to rank l, computed from the stored spectrum.
RegularizationError regularization_error(const Vector& w_spectrum, Index l);

}  // namespace kernbal::nystrom
