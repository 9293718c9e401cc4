// SPDX-License-Identifier: Apache-2.0
#include "tsr/refresh.hpp"

#include <algorithm>
#include <vector>

namespace tsr {

void RefreshConfig::validate(Index m, Index n) const {
  const Index limit = std::min(m, n);
  if (rank < 1 || rank > limit) {
    throw ConfigError("refresh rank " + std::to_string(rank) + " must lie in [1, " +
                      std::to_string(limit) + "]");
  }
  if (interval < 1) {
    throw ConfigError("refresh interval K must be >= 1");
  }
  if (oversampling < 0 || power_iters < 0) {
    throw ConfigError("oversampling and power iterations must be non-negative");
  }
  if (mode == RefreshMode::Randomized && sketch_width() > limit) {
    throw ConfigError("sketch width r+p = " + std::to_string(sketch_width()) +
                      " exceeds min(m, n) = " + std::to_string(limit));
  }
}

namespace {

void require_uniform_shapes(std::span<const DenseMatrix> G_locals, const char* op) {
  require(!G_locals.empty(), std::string(op) + ": no worker gradients");
  for (const auto& G : G_locals) {
    require(G.rows() == G_locals.front().rows() && G.cols() == G_locals.front().cols(),
            std::string(op) + ": worker gradients differ in shape");
  }
}

}  // namespace

ProjectionPair randomized_refresh(std::span<const DenseMatrix> G_locals, const RefreshConfig& cfg,
                                  SeededRng& rng, Step step, const std::string& layer,
                                  CommLedger& ledger) {
  require_uniform_shapes(G_locals, "randomized_refresh");
  const Index m = G_locals.front().rows();
  const Index n = G_locals.front().cols();
  cfg.validate(m, n);
  if (cfg.mode != RefreshMode::Randomized) {
    throw ConfigError("randomized_refresh called with a non-randomized config");
  }
  const Index k = cfg.sketch_width();
  const Index r = cfg.rank;

  const DenseMatrix omega = gaussian_matrix(rng, n, k);

  std::vector<DenseMatrix> Q(G_locals.size());
  std::vector<DenseMatrix> B(G_locals.size());
  for (std::size_t i = 0; i < G_locals.size(); ++i) {
    const DenseMatrix& G = G_locals[i];
    DenseMatrix q = orth_complete(matmul(G, omega), k);
    for (Index it = 0; it < cfg.power_iters; ++it) {
      const DenseMatrix q_row = orth_complete(matmul_tn(G, q), k);
      q = orth_complete(matmul(G, q_row), k);
    }
    B[i] = matmul_tn(q, G);
    Q[i] = std::move(q);
  }

  const DenseMatrix B_bar = all_reduce_mean(B, ledger, step, layer, CommObjectKind::SketchB);
  DenseMatrix Q_bar = all_reduce_mean(Q, ledger, step, layer, CommObjectKind::SketchQ);
  if (cfg.reorthonormalize_qbar) {
    Q_bar = orth_complete(Q_bar, k);
  }

  const auto small = svd_small(B_bar);
  ProjectionPair pair;
  pair.U = matmul(Q_bar, small.u.leftCols(r));
  pair.V = small.v.leftCols(r);
  pair.last_refresh_step = step;
  return pair;
}

ProjectionPair exact_refresh(std::span<const DenseMatrix> G_locals, Index rank, Step step,
                             const std::string& layer, CommLedger& ledger) {
  require_uniform_shapes(G_locals, "exact_refresh");
  const Index m = G_locals.front().rows();
  const Index n = G_locals.front().cols();
  if (rank < 1 || rank > std::min(m, n)) {
    throw ConfigError("exact_refresh: rank out of range");
  }
  const DenseMatrix G_bar = all_reduce_mean(G_locals, ledger, step, layer, CommObjectKind::DenseGrad);
  const auto full = svd(G_bar);
  ProjectionPair pair;
  pair.U = full.u.leftCols(rank);
  pair.V = full.v.leftCols(rank);
  pair.last_refresh_step = step;
  return pair;
}

ProjectionPair refresh(std::span<const DenseMatrix> G_locals, const RefreshConfig& cfg,
                       SeededRng& rng, Step step, const std::string& layer, CommLedger& ledger) {
  switch (cfg.mode) {
    case RefreshMode::Randomized:
      return randomized_refresh(G_locals, cfg, rng, step, layer, ledger);
    case RefreshMode::ExactSVD:
      return exact_refresh(G_locals, cfg.rank, step, layer, ledger);
    case RefreshMode::Pinned:
      break;
  }
  throw ConfigError("refresh: pinned bases are never refreshed");
}

double subspace_distance(const DenseMatrix& U, const DenseMatrix& W) {
  require(U.rows() == W.rows(), "subspace_distance: dimension mismatch");
  const DenseMatrix diff = matmul_nt(U, U) - matmul_nt(W, W);
  // Symmetric, so the spectral norm is the largest |eigenvalue|.
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(diff, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace tsr
