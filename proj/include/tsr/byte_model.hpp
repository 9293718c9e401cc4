// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "tsr/harness.hpp"

namespace tsr {

/// Closed-form communicated bytes for each step 0..T of a run, computed from
/// layer shapes, ranks and refresh schedules alone (no numerics). Per matrix
/// layer and step t >= 1:
///   dense      m·n
///   two-sided  r²   (+ m·k + k·n randomized, or m·n exact, when t mod K = 0)
///   one-sided  r·n  (+ the same refresh payload)
/// plus the initializing refresh payload at t = 0, all times dtype_bytes.
std::vector<std::uint64_t> predict_step_bytes(const RunConfig& cfg);

std::uint64_t predict_cumulative_bytes(const RunConfig& cfg);

}  // namespace tsr
