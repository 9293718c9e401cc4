// SPDX-License-Identifier: Apache-2.0
#include "tsr/byte_model.hpp"

#include <numeric>

namespace tsr {

std::vector<std::uint64_t> predict_step_bytes(const RunConfig& cfg) {
  validate(cfg);
  std::vector<std::uint64_t> elements(static_cast<std::size_t>(cfg.total_steps) + 1, 0);

  for (const auto& layer : resolve_layers(cfg)) {
    const auto m = static_cast<std::uint64_t>(layer.rows);
    const auto n = static_cast<std::uint64_t>(layer.cols);
    const Treatment treatment = treatment_for(cfg.method, layer.kind);
    if (treatment == Treatment::Dense) {
      for (std::size_t t = 1; t < elements.size(); ++t) {
        elements[t] += m * n;
      }
      continue;
    }

    const RefreshConfig rc = refresh_config_for(cfg, layer);
    const auto r = static_cast<std::uint64_t>(rc.rank);
    const auto k = static_cast<std::uint64_t>(rc.sketch_width());
    const std::uint64_t per_step = treatment == Treatment::TwoSided ? r * r : r * n;
    std::uint64_t refresh_payload = 0;
    if (rc.mode == RefreshMode::Randomized) {
      refresh_payload = m * k + k * n;
    } else if (rc.mode == RefreshMode::ExactSVD) {
      refresh_payload = m * n;
    }
    const auto interval = static_cast<std::size_t>(rc.interval);

    elements[0] += refresh_payload;
    for (std::size_t t = 1; t < elements.size(); ++t) {
      elements[t] += per_step;
      if (t % interval == 0) {
        elements[t] += refresh_payload;
      }
    }
  }

  for (auto& e : elements) {
    e *= cfg.dtype_bytes;
  }
  return elements;
}

std::uint64_t predict_cumulative_bytes(const RunConfig& cfg) {
  const auto steps = predict_step_bytes(cfg);
  return std::accumulate(steps.begin(), steps.end(), std::uint64_t{0});
}

}  // namespace tsr
