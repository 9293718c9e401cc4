// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "tsr/collective.hpp"
#include "tsr/linalg.hpp"

namespace tsr {

struct AdamHyperparams {
  double eta = 1e-3;
  double lambda = 0.0;  ///< decoupled weight decay
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double scale = 1.0;  ///< multiplier on the lifted low-rank update

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

/// Orthonormal left/right bases of one matrix layer.
struct ProjectionPair {
  DenseMatrix U;  ///< m x r
  DenseMatrix V;  ///< n x r
  Step last_refresh_step = 0;

  Index rank() const { return U.cols(); }
  /// max(‖UᵀU − I‖_F, ‖VᵀV − I‖_F)
  double orthonormality_defect() const;
  bool is_orthonormal(double tol = 1e-8) const { return orthonormality_defect() < tol; }
};

/// Pair of leading identity columns, U = I_m[:, :r], V = I_n[:, :r].
ProjectionPair identity_pair(Index m, Index n, Index r);

struct DenseMoments {
  DenseMatrix m;
  DenseMatrix v;
  std::uint64_t t = 0;

  static DenseMoments zeros(Index rows, Index cols);
};

/// Adam moments in r x r core space. For the SGD variant only `m` is used.
struct CoreMoments {
  DenseMatrix m;
  DenseMatrix v;
  std::uint64_t t = 0;

  static CoreMoments zeros(Index r);
};

/// One AdamW step on the synchronized gradient g_bar:
///   m ← β₁m + (1−β₁)ḡ,  v ← β₂v + (1−β₂)ḡ∘ḡ,
///   W ← W − η(m̂ ⊘ (√v̂ + ε) + λW)
/// with bias-corrected m̂, v̂ at the incremented step count.
void dense_adamw_step(DenseMatrix& W, const DenseMatrix& g_bar, DenseMoments& state,
                      const AdamHyperparams& hp);

/// Momentum SGD without weight decay on a dense parameter: m ← βm + (1−β)ḡ,
/// W ← W − ηm. Used for the non-matrix parameters of the SGD variant.
void dense_sgd_step(DenseMatrix& W, const DenseMatrix& g_bar, DenseMatrix& momentum, double eta,
                    double beta);

/// UᵀGV
DenseMatrix tsr_project_core(const DenseMatrix& G, const ProjectionPair& pair);

/// U C Vᵀ
DenseMatrix reconstruct(const ProjectionPair& pair, const DenseMatrix& C);

/// Adam in core space on the synchronized core, lifted through the pair:
/// D = m̂ ⊘ (√v̂ + ε), ΔW = U D Vᵀ, W ← W − η(scale·ΔW + λW).
/// The step counter is never reset, including across refreshes.
void tsr_adam_step(DenseMatrix& W, const DenseMatrix& C_bar, CoreMoments& state,
                   const ProjectionPair& pair, const AdamHyperparams& hp);

/// Core-space momentum SGD without weight decay:
/// m ← βm + (1−β)C̄, W ← W − η U m Vᵀ.
void tsr_sgd_step(DenseMatrix& W, const DenseMatrix& C_bar, DenseMatrix& momentum,
                  const ProjectionPair& pair, double eta, double beta);

/// Re-expresses core moments in a new basis pair by projecting the lifted
/// first moment, m' = (U'ᵀU) m (VᵀV'). The second moment uses squared
/// transfer weights, v' = (U'ᵀU)∘² v (VᵀV')∘², which keeps it non-negative.
/// Only used when moment realignment on refresh is switched on.
void realign_core_moments(CoreMoments& state, const ProjectionPair& from, const ProjectionPair& to);

/// One-sided low-rank baseline for one layer: each worker forms UᵀG_i, the
/// r x n factors are all-reduced (OneSidedFactor), Adam runs on r x n moments,
/// and the lifted update U·D is applied with decoupled decay.
void one_sided_step(DenseMatrix& W, std::span<const DenseMatrix> G_locals, const DenseMatrix& U,
                    DenseMoments& state, const AdamHyperparams& hp, CommLedger& ledger, Step step,
                    const std::string& layer);

}  // namespace tsr
