// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <Eigen/SVD>

#include "tsr/linalg.hpp"
#include "tsr/rng.hpp"

using namespace tsr;

namespace {

DenseMatrix random_matrix(std::uint64_t seed, Index rows, Index cols) {
  SeededRng rng(seed);
  return gaussian_matrix(rng, rows, cols);
}

// Classical Gram-Schmidt with re-orthogonalization, positive diag(R).
DenseMatrix gram_schmidt(const DenseMatrix& m) {
  DenseMatrix q(m.rows(), m.cols());
  for (Index j = 0; j < m.cols(); ++j) {
    DenseVector v = m.col(j);
    for (int pass = 0; pass < 2; ++pass) {
      for (Index i = 0; i < j; ++i) {
        v -= q.col(i).dot(v) * q.col(i);
      }
    }
    q.col(j) = v / v.norm();
  }
  return q;
}

}  // namespace

TEST(Products, ShapesAreChecked) {
  const DenseMatrix a = DenseMatrix::Ones(3, 4);
  const DenseMatrix b = DenseMatrix::Ones(3, 4);
  EXPECT_THROW(matmul(a, b), ContractViolation);
  EXPECT_THROW(matmul_nt(a, DenseMatrix::Ones(3, 5)), ContractViolation);
  EXPECT_THROW(hadamard(a, DenseMatrix::Ones(4, 3)), ContractViolation);
  EXPECT_EQ(matmul_tn(a, b).rows(), 4);
  EXPECT_EQ(matmul_nt(a, b).rows(), 3);
  EXPECT_DOUBLE_EQ(frob_norm(a), std::sqrt(12.0));
}

TEST(Products, MatchNaiveTripleLoop) {
  const DenseMatrix a = random_matrix(1, 5, 7);
  const DenseMatrix b = random_matrix(2, 7, 3);
  const DenseMatrix c = matmul(a, b);
  for (Index i = 0; i < 5; ++i) {
    for (Index j = 0; j < 3; ++j) {
      double s = 0.0;
      for (Index k = 0; k < 7; ++k) s += a(i, k) * b(k, j);
      EXPECT_NEAR(c(i, j), s, 1e-12);
    }
  }
  EXPECT_NEAR((scale_add(a, 2.0, a, -1.0) - a).norm(), 0.0, 0.0);
}

TEST(Orth, MatchesGramSchmidtOnFullRankInput) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const DenseMatrix m = random_matrix(seed, 12, 5);
    const DenseMatrix q = orth(m);
    ASSERT_EQ(q.cols(), 5);
    EXPECT_LT(orthonormality_defect(q), 1e-13);
    EXPECT_LT((q - gram_schmidt(m)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Orth, DropsDependentColumns) {
  const DenseMatrix base = random_matrix(3, 10, 2);
  DenseMatrix m(10, 4);
  m << base.col(0), base.col(1), base.col(0) + 2.0 * base.col(1), -base.col(1);
  const DenseMatrix q = orth(m);
  EXPECT_EQ(q.cols(), 2);
  EXPECT_LT((q * q.transpose() * m - m).norm(), 1e-10);
}

TEST(Orth, ZeroInputGivesIdentityColumns) {
  const DenseMatrix q = orth(DenseMatrix::Zero(6, 3));
  EXPECT_EQ(q, identity_columns(6, 3));
}

TEST(Orth, SingleColumnIsNormalized) {
  DenseMatrix m(3, 1);
  m << 3.0, 0.0, -4.0;
  const DenseMatrix q = orth(m);
  EXPECT_NEAR(q(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(q(2, 0), -0.8, 1e-15);
}

TEST(Orth, WideInputKeepsAtMostRowCount) {
  const DenseMatrix q = orth(random_matrix(4, 4, 9));
  EXPECT_EQ(q.cols(), 4);
  EXPECT_LT(orthonormality_defect(q), 1e-13);
}

TEST(Orth, FloatInstantiation) {
  const Matrix<float> m = random_matrix(5, 8, 3).cast<float>();
  const Matrix<float> q = orth(m);
  EXPECT_LT(orthonormality_defect(q), 1e-5f);
}

TEST(OrthComplete, PadsRankDeficientInputToTargetWidth) {
  const DenseMatrix v = random_matrix(6, 9, 1);
  DenseMatrix m(9, 4);
  m << v, 2.0 * v, -v, 0.5 * v;
  const DenseMatrix q = orth_complete(m, 4);
  EXPECT_EQ(q.cols(), 4);
  EXPECT_LT(orthonormality_defect(q), 1e-13);
  EXPECT_LT((q.col(0) - v / v.norm()).norm(), 1e-12);
}

TEST(Svd, SingularValuesMatchEigenJacobi) {
  for (const auto& shape : {std::pair<Index, Index>{8, 5}, {5, 8}, {6, 6}, {1, 4}}) {
    const DenseMatrix a = random_matrix(10 + static_cast<std::uint64_t>(shape.first), shape.first,
                                        shape.second);
    const auto s = svd(a);
    const Eigen::JacobiSVD<Eigen::MatrixXd> ref(a);
    ASSERT_EQ(s.sigma.size(), ref.singularValues().size());
    EXPECT_LT((s.sigma - ref.singularValues()).norm(), 1e-12 * ref.singularValues()(0));
    EXPECT_LT((s.u * s.sigma.asDiagonal() * s.v.transpose() - a).norm(), 1e-12 * a.norm());
    EXPECT_LT(orthonormality_defect(s.u), 1e-12);
    EXPECT_LT(orthonormality_defect(s.v), 1e-12);
  }
}

TEST(Svd, SignConventionLargestEntryNonNegative) {
  const auto s = svd(random_matrix(21, 7, 4));
  for (Index c = 0; c < s.u.cols(); ++c) {
    Index arg = 0;
    s.u.col(c).cwiseAbs().maxCoeff(&arg);
    EXPECT_GE(s.u(arg, c), 0.0);
  }
  // Flipping the input's sign flips only the right vectors.
  const auto t = svd(DenseMatrix(-random_matrix(21, 7, 4)));
  EXPECT_LT((s.u - t.u).norm(), 1e-12);
  EXPECT_LT((s.v + t.v).norm(), 1e-12);
}

TEST(Svd, RankDeficientCompletesNullDirections) {
  const DenseMatrix a = random_matrix(30, 7, 2) * random_matrix(31, 2, 5);
  const auto s = svd(a);
  EXPECT_EQ(s.sigma.size(), 5);
  EXPECT_LT(s.sigma(2), 1e-12 * s.sigma(0));
  EXPECT_LT(orthonormality_defect(s.u), 1e-12);
  EXPECT_LT(orthonormality_defect(s.v), 1e-12);
  EXPECT_LT((s.u * s.sigma.asDiagonal() * s.v.transpose() - a).norm(), 1e-12 * a.norm());
}

TEST(Svd, ZeroMatrix) {
  const auto s = svd(DenseMatrix::Zero(4, 3));
  EXPECT_EQ(s.sigma.size(), 3);
  EXPECT_EQ(s.sigma.norm(), 0.0);
  EXPECT_LT(orthonormality_defect(s.u), 1e-14);
}

TEST(Svd, SmallReducedMatrixAgreesWithEigenvaluesOfGram) {
  const DenseMatrix b = random_matrix(40, 6, 20);
  const auto s = svd_small(b);
  EXPECT_EQ(s.u.rows(), 6);
  EXPECT_EQ(s.v.rows(), 20);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(b * b.transpose());
  const Eigen::VectorXd ev = eig.eigenvalues().reverse().cwiseMax(0.0).cwiseSqrt();
  EXPECT_LT((s.sigma - ev).norm(), 1e-10);
}
