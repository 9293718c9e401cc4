// SPDX-License-Identifier: Apache-2.0
#include "tsr/optimizers.hpp"

#include <cmath>
#include <vector>

namespace tsr {

void AdamHyperparams::validate() const {
  if (!(eta > 0.0)) {
    throw ConfigError("learning rate must be positive");
  }
  if (!(epsilon > 0.0)) {
    throw ConfigError("epsilon must be positive");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("beta1 and beta2 must lie in [0, 1)");
  }
  if (!(lambda >= 0.0)) {
    throw ConfigError("weight decay must be non-negative");
  }
  if (!std::isfinite(scale)) {
    throw ConfigError("scale must be finite");
  }
}

double ProjectionPair::orthonormality_defect() const {
  return std::max(tsr::orthonormality_defect(U), tsr::orthonormality_defect(V));
}

ProjectionPair identity_pair(Index m, Index n, Index r) {
  require(r >= 1 && r <= std::min(m, n), "identity_pair: rank out of range");
  return ProjectionPair{identity_columns(m, r), identity_columns(n, r), 0};
}

DenseMoments DenseMoments::zeros(Index rows, Index cols) {
  return DenseMoments{DenseMatrix::Zero(rows, cols), DenseMatrix::Zero(rows, cols), 0};
}

CoreMoments CoreMoments::zeros(Index r) {
  return CoreMoments{DenseMatrix::Zero(r, r), DenseMatrix::Zero(r, r), 0};
}

namespace {

// Advances Adam moments by one step and returns m̂ ⊘ (√v̂ + ε).
DenseMatrix adam_direction(DenseMatrix& m, DenseMatrix& v, std::uint64_t& t, const DenseMatrix& g,
                           const AdamHyperparams& hp) {
  require(m.rows() == g.rows() && m.cols() == g.cols() && v.rows() == g.rows() &&
              v.cols() == g.cols(),
          "adam: moment shape does not match gradient");
  ++t;
  m = hp.beta1 * m + (1.0 - hp.beta1) * g;
  v = hp.beta2 * v + (1.0 - hp.beta2) * g.cwiseProduct(g);
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t));
  const auto m_hat = m.array() / bc1;
  const auto v_hat = v.array() / bc2;
  return (m_hat / (v_hat.sqrt() + hp.epsilon)).matrix();
}

void require_pair_fits(const DenseMatrix& W, const ProjectionPair& pair, const char* op) {
  require(pair.U.rows() == W.rows() && pair.V.rows() == W.cols() &&
              pair.U.cols() == pair.V.cols(),
          std::string(op) + ": projection pair does not fit a " + std::to_string(W.rows()) + "x" +
              std::to_string(W.cols()) + " parameter");
}

}  // namespace

void dense_adamw_step(DenseMatrix& W, const DenseMatrix& g_bar, DenseMoments& state,
                      const AdamHyperparams& hp) {
  require(W.rows() == g_bar.rows() && W.cols() == g_bar.cols(),
          "dense_adamw_step: gradient shape does not match W");
  const DenseMatrix direction = adam_direction(state.m, state.v, state.t, g_bar, hp);
  W -= hp.eta * (direction + hp.lambda * W);
}

void dense_sgd_step(DenseMatrix& W, const DenseMatrix& g_bar, DenseMatrix& momentum, double eta,
                    double beta) {
  require(W.rows() == g_bar.rows() && W.cols() == g_bar.cols() &&
              momentum.rows() == W.rows() && momentum.cols() == W.cols(),
          "dense_sgd_step: shape mismatch");
  momentum = beta * momentum + (1.0 - beta) * g_bar;
  W -= eta * momentum;
}

DenseMatrix tsr_project_core(const DenseMatrix& G, const ProjectionPair& pair) {
  require_pair_fits(G, pair, "tsr_project_core");
  return matmul(matmul_tn(pair.U, G), pair.V);
}

DenseMatrix reconstruct(const ProjectionPair& pair, const DenseMatrix& C) {
  require(C.rows() == pair.U.cols() && C.cols() == pair.V.cols(),
          "reconstruct: core shape does not match the pair's rank");
  return matmul_nt(matmul(pair.U, C), pair.V);
}

void tsr_adam_step(DenseMatrix& W, const DenseMatrix& C_bar, CoreMoments& state,
                   const ProjectionPair& pair, const AdamHyperparams& hp) {
  require_pair_fits(W, pair, "tsr_adam_step");
  const DenseMatrix direction = adam_direction(state.m, state.v, state.t, C_bar, hp);
  const DenseMatrix lifted = reconstruct(pair, direction);
  W -= hp.eta * (hp.scale * lifted + hp.lambda * W);
}

void tsr_sgd_step(DenseMatrix& W, const DenseMatrix& C_bar, DenseMatrix& momentum,
                  const ProjectionPair& pair, double eta, double beta) {
  require_pair_fits(W, pair, "tsr_sgd_step");
  require(momentum.rows() == C_bar.rows() && momentum.cols() == C_bar.cols(),
          "tsr_sgd_step: momentum shape does not match core");
  momentum = beta * momentum + (1.0 - beta) * C_bar;
  W -= eta * reconstruct(pair, momentum);
}

void realign_core_moments(CoreMoments& state, const ProjectionPair& from, const ProjectionPair& to) {
  const DenseMatrix left = matmul_tn(to.U, from.U);
  const DenseMatrix right = matmul_tn(from.V, to.V);
  state.m = left * state.m * right;
  const DenseMatrix left_sq = left.cwiseProduct(left);
  const DenseMatrix right_sq = right.cwiseProduct(right);
  state.v = left_sq * state.v * right_sq;
}

void one_sided_step(DenseMatrix& W, std::span<const DenseMatrix> G_locals, const DenseMatrix& U,
                    DenseMoments& state, const AdamHyperparams& hp, CommLedger& ledger, Step step,
                    const std::string& layer) {
  require(U.rows() == W.rows(), "one_sided_step: basis rows do not match W");
  std::vector<DenseMatrix> factors;
  factors.reserve(G_locals.size());
  for (const auto& G : G_locals) {
    require(G.rows() == W.rows() && G.cols() == W.cols(),
            "one_sided_step: gradient shape does not match W");
    factors.push_back(matmul_tn(U, G));
  }
  const DenseMatrix factor =
      all_reduce_mean(factors, ledger, step, layer, CommObjectKind::OneSidedFactor);
  const DenseMatrix direction = adam_direction(state.m, state.v, state.t, factor, hp);
  W -= hp.eta * (hp.scale * matmul(U, direction) + hp.lambda * W);
}

}  // namespace tsr
