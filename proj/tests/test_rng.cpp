// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "tsr/rng.hpp"

using namespace tsr;

TEST(Rng, SameSeedSameStream) {
  SeededRng a(42);
  SeededRng b(42);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.normal(), b.normal());
  }
  EXPECT_EQ(a.position(), 100u);
}

TEST(Rng, EngineIsStandardMt19937_64) {
  // The standard fixes the 10000th output of a default-seeded engine.
  SeededRng rng(std::mt19937_64::default_seed);
  std::uint64_t x = 0;
  for (int i = 0; i < 10000; ++i) x = rng.next_u64();
  EXPECT_EQ(x, 9981545732273789042ULL);
}

TEST(Rng, UniformInUnitInterval) {
  SeededRng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(Rng, NormalMoments) {
  SeededRng rng(7);
  const int n = 200000;
  double sum = 0.0;
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  // 5 standard errors.
  EXPECT_NEAR(sum / n, 0.0, 5.0 / std::sqrt(n));
  EXPECT_NEAR(sq / n, 1.0, 5.0 * std::sqrt(2.0 / n));
}

TEST(Rng, DeriveSeedIsOrderSensitive) {
  EXPECT_EQ(derive_seed({1, 2, 3}), derive_seed({1, 2, 3}));
  EXPECT_NE(derive_seed({1, 2, 3}), derive_seed({3, 2, 1}));
  EXPECT_NE(derive_seed({1, 2}), derive_seed({1, 2, 0}));
  EXPECT_NE(mix_seed(0), 0u);
}

TEST(Rng, GaussianMatrixIsRowMajorStream) {
  SeededRng a(3);
  SeededRng b(3);
  const DenseMatrix g = gaussian_matrix(a, 2, 3);
  for (Index i = 0; i < 2; ++i) {
    for (Index j = 0; j < 3; ++j) {
      EXPECT_EQ(g(i, j), b.normal());
    }
  }
  EXPECT_THROW(gaussian_matrix(a, 0, 3), ContractViolation);
}
