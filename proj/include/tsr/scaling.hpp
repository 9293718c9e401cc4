// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tsr {

struct ScalingInputs {
  std::uint64_t m = 512;  ///< rows of W; also the embedding dimension
  std::uint64_t n = 512;
  std::uint64_t r = 64;
  std::uint64_t r_e = 64;  ///< embedding rank
  std::uint64_t vocab = 32000;
  std::uint64_t dtype_bytes = 2;
};

/// Synchronized object per step for one m x n matrix gradient.
struct CommRow {
  std::string method;
  std::string object;
  std::string size_formula;
  std::uint64_t elements = 0;
  std::uint64_t bytes = 0;
  std::string scaling;
};

/// Weight and optimizer-state parameter counts.
struct StateRow {
  std::string layer;  ///< "embedding" or "linear"
  std::string method;
  std::string weights_formula;
  std::uint64_t weights = 0;
  std::string state_formula;
  std::uint64_t optimizer_state = 0;
};

struct ScalingTable {
  ScalingInputs inputs;
  std::vector<CommRow> comm;    ///< AdamW, LoRA, One-sided, TSR
  std::vector<StateRow> state;  ///< embedding rows then linear rows
  /// dense / two-sided payload ratio mn / r² as a reduced fraction.
  std::uint64_t ratio_num = 0;
  std::uint64_t ratio_den = 1;
};

/// Throws ConfigError on zero dimensions or ranks larger than the matrix.
ScalingTable scaling_table(const ScalingInputs& in);

std::string format_scaling_table(const ScalingTable& table);

}  // namespace tsr
