// SPDX-License-Identifier: Apache-2.0
#include "tsr/selftest.hpp"

#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "tsr/byte_model.hpp"
#include "tsr/harness.hpp"

namespace tsr {

namespace {

RunConfig small_run(Method method) {
  RunConfig cfg;
  cfg.task.layers = {{"fc1", 12, 12, LayerKind::Linear, 0, 1}, {"fc2", 12, 10, LayerKind::Linear, 0, 1}};
  cfg.task.workers = 2;
  cfg.task.target_rank = 2;
  cfg.task.samples = 48;
  cfg.task.data_seed = 3;
  cfg.method = method;
  cfg.rank = 3;
  cfg.oversampling = 2;
  cfg.refresh_k = 5;
  cfg.total_steps = 20;
  cfg.hyperparams.eta = 1e-2;
  cfg.diagnostics = false;
  return cfg;
}

bool check_orth() {
  SeededRng rng(7);
  const DenseMatrix m = gaussian_matrix(rng, 9, 4);
  const DenseMatrix q = orth(m);
  return q.cols() == 4 && orthonormality_defect(q) < 1e-12 && (q * q.transpose() * m - m).norm() < 1e-10;
}

bool check_svd() {
  SeededRng rng(11);
  const DenseMatrix b = gaussian_matrix(rng, 3, 5);
  const auto s = svd_small(b);
  const DenseMatrix rebuilt = s.u * s.sigma.asDiagonal() * s.v.transpose();
  return (rebuilt - b).norm() <= 1e-9 * b.norm() && orthonormality_defect(s.u) < 1e-10 &&
         orthonormality_defect(s.v) < 1e-10;
}

bool check_core_linearity() {
  SeededRng rng(5);
  std::vector<DenseMatrix> grads;
  for (int i = 0; i < 4; ++i) {
    grads.push_back(gaussian_matrix(rng, 8, 6));
  }
  const ProjectionPair pair{orth(gaussian_matrix(rng, 8, 3)), orth(gaussian_matrix(rng, 6, 3)), 0};
  std::vector<DenseMatrix> cores;
  for (const auto& g : grads) {
    cores.push_back(tsr_project_core(g, pair));
  }
  CommLedger scratch;
  const DenseMatrix mean_core = all_reduce_mean(cores, scratch, 1, "x", CommObjectKind::Core);
  const DenseMatrix mean_grad = all_reduce_mean(grads, scratch, 1, "x", CommObjectKind::DenseGrad);
  return (mean_core - tsr_project_core(mean_grad, pair)).norm() < 1e-12;
}

bool check_identity_equivalence() {
  RunConfig dense = small_run(Method::DenseAdamW);
  dense.task.layers = {{"sq", 8, 8, LayerKind::Linear, 0, 1}};
  RunConfig two_sided = dense;
  two_sided.method = Method::TSRAdam;
  two_sided.rank = 8;
  two_sided.refresh_mode = RefreshMode::Pinned;
  const auto a = run_experiment(dense).final_params;
  const auto b = run_experiment(two_sided).final_params;
  return (a[0] - b[0]).cwiseAbs().maxCoeff() < 1e-8;
}

bool check_rank_recovery() {
  SeededRng rng(13);
  const DenseMatrix g = gaussian_matrix(rng, 20, 3) * gaussian_matrix(rng, 3, 15);
  RefreshConfig rc;
  rc.rank = 3;
  rc.oversampling = 2;
  rc.power_iters = 1;
  CommLedger ledger;
  SeededRng omega(1);
  const std::vector<DenseMatrix> locals{g};
  const auto pair = randomized_refresh(locals, rc, omega, 0, "g", ledger);
  const DenseMatrix approx = reconstruct(pair, tsr_project_core(g, pair));
  return (approx - g).norm() / g.norm() < 1e-9 && pair.is_orthonormal();
}

bool check_ledger_prediction() {
  for (const Method method : {Method::DenseAdamW, Method::OneSided, Method::TSRAdam}) {
    const RunConfig cfg = small_run(method);
    const auto result = run_experiment(cfg);
    if (cumulative_bytes(result.ledger, cfg.total_steps) != predict_cumulative_bytes(cfg)) {
      return false;
    }
  }
  return true;
}

}  // namespace

bool run_selftest(std::ostream& os) {
  const std::vector<std::pair<std::string, std::function<bool()>>> checks = {
      {"orth: orthonormal columns spanning the input", check_orth},
      {"svd_small: reconstruction and orthonormal factors", check_svd},
      {"core linearity under all-reduce", check_core_linearity},
      {"identity-basis TSR-Adam equals dense AdamW", check_identity_equivalence},
      {"randomized refresh recovers an exact rank-r gradient", check_rank_recovery},
      {"ledger totals equal the closed-form predictor", check_ledger_prediction},
  };
  bool all = true;
  for (const auto& [name, check] : checks) {
    bool ok = false;
    try {
      ok = check();
    } catch (const std::exception& e) {
      os << "[ERROR] " << name << ": " << e.what() << '\n';
    }
    os << (ok ? "[PASS] " : "[FAIL] ") << name << '\n';
    all = all && ok;
  }
  return all;
}

}  // namespace tsr
