// SPDX-License-Identifier: Apache-2.0
#include "tsr/rng.hpp"

#include <cmath>

namespace tsr {

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (const std::uint64_t part : parts) {
    h = mix_seed(h ^ mix_seed(part));
  }
  return h;
}

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

std::uint64_t SeededRng::next_u64() { return engine_(); }

double SeededRng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double SeededRng::normal() {
  ++position_;
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Marsaglia polar method: a point uniform in the unit disc yields two
  // independent normals without trigonometric calls.
  double u = 0.0;
  double v = 0.0;
  double s = 0.0;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * factor;
  has_spare_ = true;
  return u * factor;
}

DenseMatrix gaussian_matrix(SeededRng& rng, Index rows, Index cols) {
  require(rows >= 1 && cols >= 1, "gaussian_matrix: rows and cols must be positive");
  DenseMatrix out(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      out(i, j) = rng.normal();
    }
  }
  return out;
}

}  // namespace tsr
