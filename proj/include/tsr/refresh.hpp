// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>

#include "tsr/collective.hpp"
#include "tsr/optimizers.hpp"
#include "tsr/rng.hpp"

namespace tsr {

enum class RefreshMode {
  Randomized,  ///< shared-sketch randomized SVD; communicates Q̄ and B̄
  ExactSVD,    ///< all-reduce the dense gradient and take its truncated SVD
  Pinned,      ///< no refresh; bases stay at the leading identity columns
};

struct RefreshConfig {
  Index rank = 8;
  Index oversampling = 4;
  Index power_iters = 1;
  Index interval = 100;  ///< K: refresh when step mod K == 0
  RefreshMode mode = RefreshMode::Randomized;
  /// Re-orthonormalize the averaged range basis before forming U.
  bool reorthonormalize_qbar = true;

  Index sketch_width() const { return rank + oversampling; }

  /// Throws ConfigError unless the config is usable for an m x n layer.
  void validate(Index m, Index n) const;

  bool refreshes_at(Step step) const {
    return mode != RefreshMode::Pinned && step % static_cast<Step>(interval) == 0;
  }
};

/// Sketch-based refresh. Every worker sketches its local gradient against the
/// same Gaussian test matrix Ω (n x k, drawn once from `rng`), runs
/// `power_iters` rounds of alternating power iteration with orthonormalization
/// after every product, then the workers all-reduce B_i = Q_iᵀG_i (SketchB)
/// and Q_i (SketchQ). The new bases come from the small SVD B̄ = ŨΣṼᵀ:
/// U = Q̄ Ũ[:, :r], V = Ṽ[:, :r].
ProjectionPair randomized_refresh(std::span<const DenseMatrix> G_locals, const RefreshConfig& cfg,
                                  SeededRng& rng, Step step, const std::string& layer,
                                  CommLedger& ledger);

/// Baseline refresh: all-reduce the dense gradient (DenseGrad) and keep its
/// top-r singular vectors.
ProjectionPair exact_refresh(std::span<const DenseMatrix> G_locals, Index rank, Step step,
                             const std::string& layer, CommLedger& ledger);

/// Dispatches on cfg.mode. Pinned mode is not a refresh and is rejected.
ProjectionPair refresh(std::span<const DenseMatrix> G_locals, const RefreshConfig& cfg,
                       SeededRng& rng, Step step, const std::string& layer, CommLedger& ledger);

/// Spectral-norm distance ‖UUᵀ − WWᵀ‖₂ between the spans of two orthonormal
/// bases of equal width.
double subspace_distance(const DenseMatrix& U, const DenseMatrix& W);

}  // namespace tsr
