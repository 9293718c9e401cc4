// SPDX-License-Identifier: Apache-2.0
#include "tsr/diagnostics.hpp"

#include <iomanip>
#include <ostream>

namespace tsr {

double subspace_error(const DenseMatrix& true_grad, const ProjectionPair& pair) {
  const DenseMatrix projected = reconstruct(pair, tsr_project_core(true_grad, pair));
  return (projected - true_grad).squaredNorm();
}

double tracking_error(const DenseMatrix& lifted_moment, const DenseMatrix& true_grad) {
  require(lifted_moment.rows() == true_grad.rows() && lifted_moment.cols() == true_grad.cols(),
          "tracking_error: shape mismatch");
  return (lifted_moment - true_grad).squaredNorm();
}

VarianceEstimate projected_variance(std::span<const DenseMatrix> cores) {
  require(!cores.empty(), "projected_variance: no cores");
  VarianceEstimate out;
  const auto n = static_cast<double>(cores.size());
  if (cores.size() < 2) {
    return out;
  }
  DenseMatrix mean = cores.front();
  for (std::size_t i = 1; i < cores.size(); ++i) {
    require(cores[i].rows() == mean.rows() && cores[i].cols() == mean.cols(),
            "projected_variance: core shapes differ");
    mean += cores[i];
  }
  mean /= n;
  double sum = 0.0;
  for (const auto& core : cores) {
    sum += (core - mean).squaredNorm();
  }
  out.per_worker = sum / (n - 1.0);
  out.of_mean = out.per_worker / n;
  out.defined = true;
  return out;
}

double refresh_mismatch(const ProjectionPair& fresh, const ProjectionPair& stale,
                        const DenseMatrix& m_prev) {
  require(fresh.rank() == stale.rank(), "refresh_mismatch: pairs differ in rank");
  return (reconstruct(fresh, m_prev) - reconstruct(stale, m_prev)).squaredNorm();
}

void write_diagnostics_csv(std::ostream& os, std::span<const DiagnosticsSample> samples) {
  os << "step,layer,E_t,Delta_t,sigma2_hat,R_t,loss\n";
  const auto flags = os.flags();
  const auto precision = os.precision();
  os << std::setprecision(17);
  for (const auto& s : samples) {
    os << s.step << ',' << s.layer << ',' << s.tracking_error << ',';
    if (s.subspace_error) {
      os << *s.subspace_error;
    }
    os << ',' << s.sigma2_hat << ',' << s.refresh_mismatch << ',' << s.loss << '\n';
  }
  os.flags(flags);
  os.precision(precision);
}

}  // namespace tsr
