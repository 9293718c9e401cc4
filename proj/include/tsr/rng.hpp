// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "tsr/linalg.hpp"

namespace tsr {

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t x);

/// Folds a list of identifiers (seed, layer, worker, step, tag...) into one
/// stream seed. Order matters.
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts);

/// Seeded Gaussian stream.
///
/// The 64-bit engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. Uniforms take the top 53 bits and normals come from the polar method,
/// so a seed yields the same samples with any standard library.
class SeededRng {
public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  /// Number of normal samples drawn so far.
  std::uint64_t position() const { return position_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double normal();

private:
  std::uint64_t seed_;
  std::uint64_t position_ = 0;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// rows x cols matrix of i.i.d. N(0,1) entries drawn in row-major order.
DenseMatrix gaussian_matrix(SeededRng& rng, Index rows, Index cols);

}  // namespace tsr
