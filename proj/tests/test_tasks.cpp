// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <Eigen/SVD>

#include "tsr/tasks.hpp"

using namespace tsr;

namespace {

TaskSpec regression_spec(Index workers, double noise, Index samples = 40) {
  TaskSpec spec;
  spec.layers = {LayerSpec{"a", 6, 5}, LayerSpec{"b", 4, 7}};
  spec.workers = workers;
  spec.noise_std = noise;
  spec.target_rank = 2;
  spec.samples = samples;
  spec.data_seed = 17;
  spec.init_scale = 0.5;
  return spec;
}

DenseMatrix worker_mean(const GradientSource& src, const LayerTensors& params, std::size_t layer,
                        Step step) {
  DenseMatrix sum = src.local_gradient(params, layer, 0, step);
  for (Index w = 1; w < src.workers(); ++w) sum += src.local_gradient(params, layer, w, step);
  return sum / static_cast<double>(src.workers());
}

const RegressionBlock& regression(const GradientSource& src, std::size_t layer) {
  return std::get<RegressionBlock>(src.block(layer));
}

}  // namespace

TEST(Regression, GradientMatchesCentralDifferences) {
  const auto src = make_lowrank_regression(regression_spec(1, 0.0));
  const LayerTensors params = src.initial_parameters();
  const double h = 1e-5;
  for (std::size_t layer = 0; layer < 2; ++layer) {
    const DenseMatrix g = src.local_gradient(params, layer, 0, 0);
    DenseMatrix fd(g.rows(), g.cols());
    for (Index i = 0; i < g.rows(); ++i) {
      for (Index j = 0; j < g.cols(); ++j) {
        LayerTensors plus = params;
        LayerTensors minus = params;
        plus[layer](i, j) += h;
        minus[layer](i, j) -= h;
        fd(i, j) = (src.loss(plus, 0) - src.loss(minus, 0)) / (2.0 * h);
      }
    }
    EXPECT_LT((g - fd).norm() / g.norm(), 1e-6) << "layer " << layer;
    EXPECT_LT((g - (*src.true_gradient(params, 0))[layer]).norm(), 1e-12);
  }
}

TEST(Regression, ZeroGradientAtOptimum) {
  const auto src = make_lowrank_regression(regression_spec(3, 0.0));
  LayerTensors params = src.initial_parameters();
  for (std::size_t i = 0; i < 2; ++i) params[i] = regression(src, i).target(0);
  for (std::size_t i = 0; i < 2; ++i) {
    for (Index w = 0; w < 3; ++w) {
      EXPECT_LT(src.local_gradient(params, i, w, 5).norm(), 1e-13);
    }
  }
  EXPECT_LT(src.loss(params, 0), 1e-26);
}

TEST(Regression, WorkerMeanIsFullBatchGradient) {
  // 40 samples over 3 workers: partitions of 14, 13, 13.
  const auto src = make_lowrank_regression(regression_spec(3, 0.0));
  const LayerTensors params = src.initial_parameters();
  const auto full = *src.true_gradient(params, 0);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_LT((worker_mean(src, params, i, 0) - full[i]).norm(), 1e-12 * full[i].norm());
  }
}

TEST(Regression, NoiseMakesWorkersDifferAndIsReplayable) {
  const auto src = make_lowrank_regression(regression_spec(2, 0.3));
  const LayerTensors params = src.initial_parameters();
  const DenseMatrix g0 = src.local_gradient(params, 0, 0, 4);
  EXPECT_GT((g0 - src.local_gradient(params, 0, 1, 4)).norm(), 1e-6);
  EXPECT_GT((g0 - src.local_gradient(params, 0, 0, 5)).norm(), 1e-6);
  EXPECT_EQ(g0, src.local_gradient(params, 0, 0, 4));
  const auto again = make_lowrank_regression(regression_spec(2, 0.3));
  EXPECT_EQ(g0, again.local_gradient(again.initial_parameters(), 0, 0, 4));
}

TEST(Regression, MinibatchesCycleThroughThePartition) {
  TaskSpec spec = regression_spec(2, 0.0, 20);
  spec.minibatch = 5;
  const auto src = make_lowrank_regression(spec);
  const LayerTensors params = src.initial_parameters();
  // Each partition has 10 samples, so steps 0 and 1 together cover it once.
  DenseMatrix sum = DenseMatrix::Zero(6, 5);
  for (Step s = 0; s < 2; ++s) {
    sum += worker_mean(src, params, 0, s);
  }
  EXPECT_LT((sum / 2.0 - (*src.true_gradient(params, 0))[0]).norm(), 1e-12);
  EXPECT_EQ(src.local_gradient(params, 0, 1, 0), src.local_gradient(params, 0, 1, 2));
}

TEST(Regression, OrthonormalDesignGradientHasPlantedRank) {
  TaskSpec spec = regression_spec(2, 0.0, 16);
  spec.orthonormal_design = true;
  spec.init_scale = 0.0;
  const auto src = make_lowrank_regression(spec);
  EXPECT_TRUE(regression(src, 0).implicit_design());
  const LayerTensors params = src.initial_parameters();
  const DenseMatrix g = (*src.true_gradient(params, 0))[0];
  const Eigen::JacobiSVD<Eigen::MatrixXd> s(g);
  EXPECT_GT(s.singularValues()(1), 1e-3);
  EXPECT_LT(s.singularValues()(2), 1e-12 * s.singularValues()(0));
  EXPECT_LT((worker_mean(src, params, 0, 3) - g).norm(), 1e-13);
  EXPECT_DOUBLE_EQ(src.loss_terms(params, 0)[0], 0.5 * g.squaredNorm());
}

TEST(Regression, OrthonormalDesignNoiseVarianceMatchesPartitionLaw) {
  // Worker noise is (N/N_s)·σ·√|P_i|·Z, so its mean square per entry is
  // σ²·N²·|P_i|/N_s².
  TaskSpec spec = regression_spec(2, 0.5, 400);
  spec.layers = {LayerSpec{"a", 40, 50}};
  spec.orthonormal_design = true;
  spec.init_scale = 0.0;
  const auto src = make_lowrank_regression(spec);
  LayerTensors params{regression(src, 0).target(0)};
  const DenseMatrix g = src.local_gradient(params, 0, 1, 0);
  const double expected = 0.25 * 4.0 * 200.0 / (400.0 * 400.0);
  EXPECT_NEAR(g.squaredNorm() / 2000.0, expected, 0.1 * expected);
}

TEST(Regression, DriftRotatesBetweenTargets) {
  TaskSpec spec = regression_spec(1, 0.0);
  spec.drift = 0.01;
  const auto src = make_lowrank_regression(spec);
  const auto& block = regression(src, 0);
  const DenseMatrix a = block.target(0);
  const DenseMatrix quarter = block.target(157);
  EXPECT_GT((a - quarter).norm(), 0.5 * a.norm());
  const DenseMatrix b = (block.target(1) - std::cos(0.01) * a) / std::sin(0.01);
  EXPECT_LT((block.target(100) - (std::cos(1.0) * a + std::sin(1.0) * b)).norm(), 1e-9 * a.norm());
}

TEST(Regression, ValidationErrors) {
  TaskSpec spec = regression_spec(2, 0.0);
  spec.target_rank = 6;
  EXPECT_THROW(make_lowrank_regression(spec), ConfigError);
  spec = regression_spec(2, -1.0);
  EXPECT_THROW(make_lowrank_regression(spec), ConfigError);
  spec = regression_spec(2, 0.0, 10);
  spec.orthonormal_design = true;  // 5 samples per worker < 6 rows
  EXPECT_THROW(make_lowrank_regression(spec), ConfigError);
  spec = regression_spec(2, 0.0);
  spec.layers.push_back(spec.layers.front());
  EXPECT_THROW(make_lowrank_regression(spec), ConfigError);
  spec = regression_spec(0, 0.0);
  EXPECT_THROW(make_lowrank_regression(spec), ConfigError);
}

TEST(Zipf, HeadFrequency) {
  const ZipfSampler sampler(1000, 1.1);
  SeededRng rng(9);
  int zeros = 0;
  for (int i = 0; i < 10000; ++i) zeros += sampler.sample(rng) == 0 ? 1 : 0;
  const double expected = sampler.probability(0) * 10000.0;
  EXPECT_NEAR(zeros, expected, 0.2 * expected);
  double total = 0.0;
  for (Index v = 0; v < 1000; ++v) total += sampler.probability(v);
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_NEAR(sampler.probability(1) / sampler.probability(0), std::pow(2.0, -1.1), 1e-12);
}

TEST(Embedding, LookupGradientTouchesOnlySampledRows) {
  const DenseMatrix E = DenseMatrix::Ones(5, 3);
  const DenseMatrix target = DenseMatrix::Zero(5, 3);
  const std::vector<Index> tokens{1, 3, 1, 1};
  const DenseMatrix g = lookup_gradient(E, target, tokens);
  EXPECT_EQ(g.row(0).norm(), 0.0);
  EXPECT_EQ(g.row(2).norm(), 0.0);
  EXPECT_EQ(g.row(4).norm(), 0.0);
  EXPECT_DOUBLE_EQ(g(1, 0), 0.75);
  EXPECT_DOUBLE_EQ(g(3, 2), 0.25);
}

TEST(Embedding, TrueGradientMatchesLossAndSamplesAreUnbiased) {
  TaskSpec spec = regression_spec(2, 0.0);
  spec.layers.clear();
  spec.layers.push_back(LayerSpec{"fc", 4, 3});
  spec.target_rank = 2;
  const auto src = make_embedding_task(20, 3, 64, spec, 2, 1, 1.1);
  ASSERT_EQ(src.layers().size(), 2u);
  EXPECT_EQ(src.layers()[1].kind, LayerKind::Embedding);
  const LayerTensors params = src.initial_parameters();
  const DenseMatrix g = (*src.true_gradient(params, 0))[1];

  const double h = 1e-5;
  LayerTensors plus = params;
  LayerTensors minus = params;
  plus[1](0, 0) += h;
  minus[1](0, 0) -= h;
  EXPECT_NEAR((src.loss(plus, 0) - src.loss(minus, 0)) / (2 * h), g(0, 0), 1e-8);

  DenseMatrix mean = DenseMatrix::Zero(20, 3);
  const int steps = 4000;
  for (int s = 0; s < steps; ++s) mean += src.local_gradient(params, 1, s % 2, static_cast<Step>(s));
  mean /= steps;
  EXPECT_LT((mean - g).norm(), 0.05 * g.norm());
}
