// SPDX-License-Identifier: Apache-2.0
#include "tsr/scaling.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "tsr/errors.hpp"

namespace tsr {

ScalingTable scaling_table(const ScalingInputs& in) {
  if (in.m == 0 || in.n == 0 || in.r == 0 || in.r_e == 0 || in.vocab == 0 || in.dtype_bytes == 0) {
    throw ConfigError("scale-table: all dimensions must be positive");
  }
  if (in.r > std::min(in.m, in.n)) {
    throw ConfigError("scale-table: r exceeds min(m, n)");
  }
  if (in.r_e > std::min(in.vocab, in.m)) {
    throw ConfigError("scale-table: r_e exceeds min(vocab, m)");
  }
  const auto m = in.m;
  const auto n = in.n;
  const auto r = in.r;
  const auto re = in.r_e;
  const auto V = in.vocab;
  const auto b = in.dtype_bytes;

  ScalingTable t;
  t.inputs = in;
  t.comm = {
      {"AdamW", "G", "mn", m * n, m * n * b, "O(mn)"},
      {"LoRA", "G_A, G_B", "rm+rn", r * m + r * n, (r * m + r * n) * b, "O(r(m+n))"},
      {"One-sided", "C=U^T G", "rn", r * n, r * n * b, "O(rn)"},
      {"TSR", "C=U^T G V", "r^2", r * r, r * r * b, "O(r^2)"},
  };
  t.state = {
      {"embedding", "Adam", "V*m", V * m, "V*m+2V*m", V * m + 2 * V * m},
      {"embedding", "LoRA", "V*m", V * m, "V*m+2V*m", V * m + 2 * V * m},
      {"embedding", "One-sided", "V*m", V * m, "V*m+2V*m", V * m + 2 * V * m},
      {"embedding", "TSR", "V*m", V * m, "V*r_e+r_e*m+2r_e^2", V * re + re * m + 2 * re * re},
      {"linear", "Adam", "mn", m * n, "2mn", 2 * m * n},
      {"linear", "LoRA", "mn+rm+rn", m * n + r * m + r * n, "2mr+2nr", 2 * m * r + 2 * n * r},
      {"linear", "One-sided", "mn", m * n, "mr+2nr", m * r + 2 * n * r},
      {"linear", "TSR", "mn", m * n, "mr+nr+2r^2", m * r + n * r + 2 * r * r},
  };
  const auto g = std::gcd(m * n, r * r);
  t.ratio_num = m * n / g;
  t.ratio_den = r * r / g;
  return t;
}

std::string format_scaling_table(const ScalingTable& t) {
  std::ostringstream os;
  const auto& in = t.inputs;
  os << "# m=" << in.m << " n=" << in.n << " r=" << in.r << " r_e=" << in.r_e
     << " vocab=" << in.vocab << " dtype_bytes=" << in.dtype_bytes << "\n\n";

  os << "Communication objects (per matrix gradient, per step)\n";
  os << std::left << std::setw(11) << "method" << std::setw(12) << "object" << std::setw(8)
     << "size" << std::right << std::setw(16) << "elements" << std::setw(16) << "bytes"
     << "  " << "scaling\n";
  for (const auto& row : t.comm) {
    os << std::left << std::setw(11) << row.method << std::setw(12) << row.object << std::setw(8)
       << row.size_formula << std::right << std::setw(16) << row.elements << std::setw(16)
       << row.bytes << "  " << row.scaling << '\n';
  }
  os << "dense/TSR ratio mn/r^2 = " << t.ratio_num;
  if (t.ratio_den != 1) {
    os << '/' << t.ratio_den;
  }
  os << "\n\n";

  os << "Weights and optimizer state (parameters)\n";
  os << std::left << std::setw(11) << "layer" << std::setw(11) << "method" << std::setw(10)
     << "weights" << std::right << std::setw(16) << "count" << "  " << std::left << std::setw(20)
     << "state" << std::right << std::setw(16) << "count" << '\n';
  for (const auto& row : t.state) {
    os << std::left << std::setw(11) << row.layer << std::setw(11) << row.method << std::setw(10)
       << row.weights_formula << std::right << std::setw(16) << row.weights << "  " << std::left
       << std::setw(20) << row.state_formula << std::right << std::setw(16) << row.optimizer_state
       << '\n';
  }
  return os.str();
}

}  // namespace tsr
