// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tsr/collective.hpp"
#include "tsr/linalg.hpp"
#include "tsr/rng.hpp"

namespace tsr {

enum class LayerKind { Linear, Embedding, NonMatrix };

std::string_view to_string(LayerKind kind);

/// Shape and compression schedule of one parameter block. Embedding layers
/// carry their own (rank, interval) pair, separate from the linear layers.
struct LayerSpec {
  std::string name;
  Index rows = 1;
  Index cols = 1;
  LayerKind kind = LayerKind::Linear;
  Index rank = 0;
  Index refresh_interval = 1;

  bool is_matrix() const { return kind != LayerKind::NonMatrix; }
  bool operator==(const LayerSpec&) const = default;
};

struct TaskSpec {
  std::vector<LayerSpec> layers;
  Index workers = 1;
  double noise_std = 0.0;
  Index target_rank = 4;  ///< rank of the planted solution
  Index minibatch = 0;    ///< samples per worker per step; 0 = the worker's whole partition
  Index samples = 256;    ///< design rows per regression block
  std::uint64_t data_seed = 0;
  /// Angular speed (radians per step) at which the planted solution rotates
  /// between two independent rank-r* targets; 0 keeps it fixed.
  double drift = 0.0;
  /// Every worker's partition satisfies X_iᵀX_i = |P_i|·I (so XᵀX = N_s·I).
  /// The design is then implicit: gradients are formed in parameter space.
  bool orthonormal_design = false;
  double init_scale = 0.0;          ///< std of the Gaussian initial weights

  void validate() const;
};

/// One tensor per layer, aligned with the task's layer list.
using LayerTensors = std::vector<DenseMatrix>;

/// Zipf(s) sampler over {0, ..., vocab-1} with P(v) ∝ (v+1)^(-s).
class ZipfSampler {
public:
  ZipfSampler(Index vocab, double exponent);

  Index vocab() const { return static_cast<Index>(cdf_.size()); }
  double probability(Index token) const;
  Index sample(SeededRng& rng) const;

private:
  std::vector<double> cdf_;
};

/// Least-squares block f(W) = (1/2N_s)‖X(W − W*)‖²_F with a planted
/// rank-r* solution W* and a fixed design X. Samples are dealt round-robin to
/// workers.
///
/// With an orthonormal design X is never materialized. Worker i's exact
/// gradient is then (W − W*) − X_iᵀε_i/|P_i|, and since X_iᵀX_i = |P_i|·I the
/// noise term is drawn directly from its law N(0, σ²/|P_i|) entrywise.
class RegressionBlock {
public:
  RegressionBlock(const LayerSpec& layer, const TaskSpec& spec, std::size_t layer_index);

  DenseMatrix local_gradient(const DenseMatrix& W, Index worker, Step step) const;
  DenseMatrix true_gradient(const DenseMatrix& W, Step step) const;
  double loss(const DenseMatrix& W, Step step) const;
  DenseMatrix target(Step step) const;
  /// Empty for an implicit orthonormal design.
  const DenseMatrix& design() const { return design_; }
  bool implicit_design() const { return design_.size() == 0; }

private:
  bool wide_design() const;
  Index partition_size(Index worker) const;

  Index workers_;
  Index samples_;
  Index minibatch_;
  double noise_std_;
  double drift_;
  std::uint64_t noise_seed_;
  DenseMatrix design_;  // N_s x m
  DenseMatrix gram_;    // XᵀX / N_s
  DenseMatrix target_a_;
  DenseMatrix target_b_;
};

/// Embedding table E (vocab x dim) fit to a planted low-rank table E* under a
/// Zipf token distribution: f(E) = ½ Σ_v p_v ‖E_v − E*_v‖². A batch touches
/// only the rows of its sampled tokens, so gradients are row-sparse.
class EmbeddingBlock {
public:
  EmbeddingBlock(const LayerSpec& layer, const TaskSpec& spec, std::size_t layer_index,
                 Index tokens_per_batch, double zipf_exponent);

  DenseMatrix local_gradient(const DenseMatrix& E, Index worker, Step step) const;
  DenseMatrix true_gradient(const DenseMatrix& E, Step step) const;
  double loss(const DenseMatrix& E, Step step) const;
  DenseMatrix target(Step step) const;
  const ZipfSampler& sampler() const { return sampler_; }

private:
  Index tokens_per_batch_;
  double noise_std_;
  double drift_;
  std::uint64_t token_seed_;
  ZipfSampler sampler_;
  DenseMatrix target_a_;
  DenseMatrix target_b_;
};

/// Gradient of one lookup batch: row v accumulates (E_v − E*_v)/|tokens| for
/// every occurrence of v in `tokens`. Untouched rows stay exactly zero.
DenseMatrix lookup_gradient(const DenseMatrix& E, const DenseMatrix& target,
                            std::span<const Index> tokens);

/// Replayable source of per-worker stochastic gradients. Every method is a
/// pure function of (data seed, parameters, worker, step).
class GradientSource {
public:
  using Block = std::variant<RegressionBlock, EmbeddingBlock>;

  GradientSource(TaskSpec spec, std::vector<Block> blocks);

  const TaskSpec& spec() const { return spec_; }
  const std::vector<LayerSpec>& layers() const { return spec_.layers; }
  Index workers() const { return spec_.workers; }
  std::size_t layer_index(const std::string& name) const;
  const Block& block(std::size_t layer) const { return blocks_.at(layer); }

  LayerTensors initial_parameters() const;
  DenseMatrix local_gradient(const LayerTensors& params, std::size_t layer, Index worker,
                             Step step) const;
  /// Full-batch, noise-free gradient.
  std::optional<LayerTensors> true_gradient(const LayerTensors& params, Step step) const;
  std::vector<double> loss_terms(const LayerTensors& params, Step step) const;
  double loss(const LayerTensors& params, Step step) const;

private:
  void require_params(const LayerTensors& params) const;

  TaskSpec spec_;
  std::vector<Block> blocks_;
};

/// Regression blocks for every layer of the spec.
GradientSource make_lowrank_regression(const TaskSpec& spec);

/// The regression layers of `spec` plus one Zipf embedding block named
/// "embedding" (vocab x dim, kind Embedding) using `embedding_rank` /
/// `embedding_interval` as its compression schedule.
GradientSource make_embedding_task(Index vocab, Index dim, Index tokens_per_batch,
                                   const TaskSpec& spec, Index embedding_rank = 1,
                                   Index embedding_interval = 1, double zipf_exponent = 1.1);

/// All layer gradients of one worker at one step.
LayerTensors run_worker_step(const GradientSource& source, const LayerTensors& params,
                             Index worker, Step step);

}  // namespace tsr
