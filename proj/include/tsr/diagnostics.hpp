// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>

#include "tsr/collective.hpp"
#include "tsr/optimizers.hpp"

namespace tsr {

/// Per-step, per-layer measurements of the quantities in the stationarity
/// bound: tracking error E_t, subspace error Δ_t, projected variance σ̂²,
/// and refresh mismatch R_t.
struct DiagnosticsSample {
  Step step = 0;
  std::string layer;
  double tracking_error = 0.0;
  std::optional<double> subspace_error;  ///< absent when no true gradient is available
  double sigma2_hat = 0.0;
  double refresh_mismatch = 0.0;  ///< exactly 0 on non-refresh steps
  double loss = 0.0;
};

/// Δ = ‖UUᵀGVVᵀ − G‖²_F
double subspace_error(const DenseMatrix& true_grad, const ProjectionPair& pair);

/// ‖lifted − ∇f‖²_F, with lifted = U m Vᵀ (or the dense moment itself).
double tracking_error(const DenseMatrix& lifted_moment, const DenseMatrix& true_grad);

struct VarianceEstimate {
  /// Unbiased sample variance of the per-worker cores around their mean,
  /// summed over entries: Σ_i ‖C_i − C̄‖² / (N − 1).
  double per_worker = 0.0;
  /// per_worker / N: the variance of the averaged core C̄, which is what the
  /// synchronized update sees.
  double of_mean = 0.0;
  /// False when N = 1 (no estimate possible; both values are 0).
  bool defined = false;
};

/// Lifting through orthonormal bases preserves Frobenius norms, so the
/// variance is computed on the cores directly.
VarianceEstimate projected_variance(std::span<const DenseMatrix> cores);

/// R = ‖U_new m V_newᵀ − U_old m V_oldᵀ‖²_F
double refresh_mismatch(const ProjectionPair& fresh, const ProjectionPair& stale,
                        const DenseMatrix& m_prev);

/// step,layer,E_t,Delta_t,sigma2_hat,R_t,loss
void write_diagnostics_csv(std::ostream& os, std::span<const DiagnosticsSample> samples);

}  // namespace tsr
