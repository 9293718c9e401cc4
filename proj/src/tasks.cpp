// SPDX-License-Identifier: Apache-2.0
#include "tsr/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace tsr {

namespace {

// Stream tags for derive_seed.
enum : std::uint64_t {
  kDesignTag = 1,
  kTargetATag = 2,
  kTargetBTag = 3,
  kNoiseTag = 4,
  kInitTag = 5,
  kTokenTag = 6,
};

DenseMatrix planted_lowrank(Index rows, Index cols, Index rank, std::uint64_t seed) {
  SeededRng rng(seed);
  const DenseMatrix left = gaussian_matrix(rng, rows, rank);
  const DenseMatrix right = gaussian_matrix(rng, cols, rank);
  return matmul_nt(left, right) / std::sqrt(static_cast<double>(rank));
}

DenseMatrix drifting_target(const DenseMatrix& a, const DenseMatrix& b, double drift, Step step) {
  if (drift == 0.0) {
    return a;
  }
  const double angle = drift * static_cast<double>(step);
  return std::cos(angle) * a + std::sin(angle) * b;
}

Index effective_rank(const LayerSpec& layer, const TaskSpec& spec) {
  return std::max<Index>(1, std::min({spec.target_rank, layer.rows, layer.cols}));
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Linear:
      return "linear";
    case LayerKind::Embedding:
      return "embedding";
    case LayerKind::NonMatrix:
      return "nonmatrix";
  }
  return "unknown";
}

void TaskSpec::validate() const {
  if (workers < 1) {
    throw ConfigError("workers must be >= 1");
  }
  if (layers.empty()) {
    throw ConfigError("task has no layers");
  }
  if (!(noise_std >= 0.0)) {
    throw ConfigError("noise_std must be non-negative");
  }
  if (target_rank < 1) {
    throw ConfigError("target_rank must be >= 1");
  }
  if (minibatch < 0) {
    throw ConfigError("minibatch must be >= 0");
  }
  if (samples < workers) {
    throw ConfigError("samples must be at least the number of workers");
  }
  if (orthonormal_design && minibatch != 0) {
    throw ConfigError("orthonormal design requires full-partition gradients (minibatch = 0)");
  }
  std::set<std::string> names;
  for (const auto& layer : layers) {
    if (layer.name.empty() || !names.insert(layer.name).second) {
      throw ConfigError("layer names must be non-empty and unique: '" + layer.name + "'");
    }
    if (layer.rows < 1 || layer.cols < 1) {
      throw ConfigError("layer " + layer.name + " has an empty shape");
    }
    if (layer.is_matrix() && target_rank > std::min(layer.rows, layer.cols)) {
      throw ConfigError("target_rank exceeds min(m, n) of layer " + layer.name);
    }
    if (orthonormal_design && samples / workers < layer.rows) {
      throw ConfigError("orthonormal design needs at least rows-many samples per worker for layer " +
                        layer.name);
    }
  }
}

// ---------------------------------------------------------------------------

ZipfSampler::ZipfSampler(Index vocab, double exponent) {
  require(vocab >= 1, "ZipfSampler: vocab must be positive");
  cdf_.resize(static_cast<std::size_t>(vocab));
  double total = 0.0;
  for (Index v = 0; v < vocab; ++v) {
    total += std::pow(static_cast<double>(v + 1), -exponent);
    cdf_[static_cast<std::size_t>(v)] = total;
  }
  for (double& c : cdf_) {
    c /= total;
  }
  cdf_.back() = 1.0;
}

double ZipfSampler::probability(Index token) const {
  require(token >= 0 && token < vocab(), "ZipfSampler: token out of range");
  const auto i = static_cast<std::size_t>(token);
  return i == 0 ? cdf_[0] : cdf_[i] - cdf_[i - 1];
}

Index ZipfSampler::sample(SeededRng& rng) const {
  const double u = rng.uniform();
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  return std::min<Index>(static_cast<Index>(it - cdf_.begin()), vocab() - 1);
}

// ---------------------------------------------------------------------------

RegressionBlock::RegressionBlock(const LayerSpec& layer, const TaskSpec& spec,
                                 std::size_t layer_index)
    : workers_(spec.workers),
      samples_(spec.samples),
      minibatch_(spec.minibatch),
      noise_std_(spec.noise_std),
      drift_(spec.drift),
      noise_seed_(derive_seed({spec.data_seed, layer_index, kNoiseTag})) {
  const Index m = layer.rows;
  const Index n = layer.cols;
  const Index rank = effective_rank(layer, spec);

  if (!spec.orthonormal_design) {
    SeededRng design_rng(derive_seed({spec.data_seed, layer_index, kDesignTag}));
    design_ = gaussian_matrix(design_rng, spec.samples, m);
    gram_ = matmul_tn(design_, design_) / static_cast<double>(spec.samples);
  }
  target_a_ = planted_lowrank(m, n, rank, derive_seed({spec.data_seed, layer_index, kTargetATag}));
  target_b_ = planted_lowrank(m, n, rank, derive_seed({spec.data_seed, layer_index, kTargetBTag}));
}

DenseMatrix RegressionBlock::target(Step step) const {
  return drifting_target(target_a_, target_b_, drift_, step);
}

Index RegressionBlock::partition_size(Index worker) const {
  return (samples_ - worker + workers_ - 1) / workers_;
}

DenseMatrix RegressionBlock::local_gradient(const DenseMatrix& W, Index worker, Step step) const {
  require(worker >= 0 && worker < workers_, "local_gradient: worker index out of range");
  require(W.rows() == target_a_.rows() && W.cols() == target_a_.cols(),
          "local_gradient: parameter shape mismatch");
  const Index partition = partition_size(worker);
  const DenseMatrix diff = W - target(step);

  if (implicit_design()) {
    // (N/N_s)(X_iᵀX_i D − X_iᵀε) with X_iᵀX_i = |P_i| I.
    const double norm = static_cast<double>(workers_) / static_cast<double>(samples_);
    DenseMatrix grad = (norm * static_cast<double>(partition)) * diff;
    if (noise_std_ > 0.0) {
      SeededRng noise(derive_seed({noise_seed_, static_cast<std::uint64_t>(worker), step}));
      const double scale = norm * noise_std_ * std::sqrt(static_cast<double>(partition));
      grad -= scale * gaussian_matrix(noise, grad.rows(), grad.cols());
    }
    return grad;
  }

  // Worker i owns samples i, i+N, i+2N, ...
  std::vector<Index> rows;
  double norm = 0.0;
  if (minibatch_ == 0) {
    rows.reserve(static_cast<std::size_t>(partition));
    for (Index s = worker; s < samples_; s += workers_) {
      rows.push_back(s);
    }
    // N/N_s rather than 1/|P_i|: the worker mean is then exactly the full-batch
    // gradient even when N does not divide N_s.
    norm = static_cast<double>(workers_) / static_cast<double>(samples_);
  } else {
    rows.reserve(static_cast<std::size_t>(minibatch_));
    const auto start = static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(minibatch_);
    for (Index j = 0; j < minibatch_; ++j) {
      const auto slot = static_cast<Index>((start + static_cast<std::uint64_t>(j)) %
                                           static_cast<std::uint64_t>(partition));
      rows.push_back(worker + slot * workers_);
    }
    norm = 1.0 / static_cast<double>(minibatch_);
  }

  const DenseMatrix batch = design_(rows, Eigen::all);
  DenseMatrix residual = matmul(batch, diff);
  if (noise_std_ > 0.0) {
    SeededRng noise(derive_seed({noise_seed_, static_cast<std::uint64_t>(worker), step}));
    residual -= noise_std_ * gaussian_matrix(noise, residual.rows(), residual.cols());
  }
  return norm * matmul_tn(batch, residual);
}

// With fewer samples than rows, going through X is cheaper than through XᵀX.
bool RegressionBlock::wide_design() const { return design_.rows() < design_.cols(); }

DenseMatrix RegressionBlock::true_gradient(const DenseMatrix& W, Step step) const {
  const DenseMatrix diff = W - target(step);
  if (implicit_design()) {
    return diff;
  }
  if (wide_design()) {
    return matmul_tn(design_, matmul(design_, diff)) / static_cast<double>(design_.rows());
  }
  return matmul(gram_, diff);
}

double RegressionBlock::loss(const DenseMatrix& W, Step step) const {
  const DenseMatrix diff = W - target(step);
  if (implicit_design()) {
    return 0.5 * diff.squaredNorm();
  }
  if (wide_design()) {
    return 0.5 * matmul(design_, diff).squaredNorm() / static_cast<double>(design_.rows());
  }
  return 0.5 * diff.cwiseProduct(gram_ * diff).sum();
}

// ---------------------------------------------------------------------------

DenseMatrix lookup_gradient(const DenseMatrix& E, const DenseMatrix& target,
                            std::span<const Index> tokens) {
  require(E.rows() == target.rows() && E.cols() == target.cols(),
          "lookup_gradient: table shape mismatch");
  DenseMatrix grad = DenseMatrix::Zero(E.rows(), E.cols());
  if (tokens.empty()) {
    return grad;
  }
  const double weight = 1.0 / static_cast<double>(tokens.size());
  for (const Index v : tokens) {
    require(v >= 0 && v < E.rows(), "lookup_gradient: token id out of range");
    grad.row(v) += weight * (E.row(v) - target.row(v));
  }
  return grad;
}

EmbeddingBlock::EmbeddingBlock(const LayerSpec& layer, const TaskSpec& spec,
                               std::size_t layer_index, Index tokens_per_batch,
                               double zipf_exponent)
    : tokens_per_batch_(tokens_per_batch),
      noise_std_(spec.noise_std),
      drift_(spec.drift),
      token_seed_(derive_seed({spec.data_seed, layer_index, kTokenTag})),
      sampler_(layer.rows, zipf_exponent) {
  require(tokens_per_batch >= 1, "EmbeddingBlock: tokens_per_batch must be positive");
  const Index rank = effective_rank(layer, spec);
  target_a_ = planted_lowrank(layer.rows, layer.cols, rank,
                              derive_seed({spec.data_seed, layer_index, kTargetATag}));
  target_b_ = planted_lowrank(layer.rows, layer.cols, rank,
                              derive_seed({spec.data_seed, layer_index, kTargetBTag}));
}

DenseMatrix EmbeddingBlock::target(Step step) const {
  return drifting_target(target_a_, target_b_, drift_, step);
}

DenseMatrix EmbeddingBlock::local_gradient(const DenseMatrix& E, Index worker, Step step) const {
  require(worker >= 0, "local_gradient: worker index out of range");
  SeededRng rng(derive_seed({token_seed_, static_cast<std::uint64_t>(worker), step}));
  std::vector<Index> tokens(static_cast<std::size_t>(tokens_per_batch_));
  for (auto& token : tokens) {
    token = sampler_.sample(rng);
  }
  DenseMatrix grad = lookup_gradient(E, target(step), tokens);
  if (noise_std_ > 0.0) {
    const double weight = noise_std_ / static_cast<double>(tokens.size());
    for (const Index v : tokens) {
      for (Index c = 0; c < grad.cols(); ++c) {
        grad(v, c) -= weight * rng.normal();
      }
    }
  }
  return grad;
}

DenseMatrix EmbeddingBlock::true_gradient(const DenseMatrix& E, Step step) const {
  DenseMatrix grad = E - target(step);
  for (Index v = 0; v < grad.rows(); ++v) {
    grad.row(v) *= sampler_.probability(v);
  }
  return grad;
}

double EmbeddingBlock::loss(const DenseMatrix& E, Step step) const {
  const DenseMatrix diff = E - target(step);
  double total = 0.0;
  for (Index v = 0; v < diff.rows(); ++v) {
    total += sampler_.probability(v) * diff.row(v).squaredNorm();
  }
  return 0.5 * total;
}

// ---------------------------------------------------------------------------

GradientSource::GradientSource(TaskSpec spec, std::vector<Block> blocks)
    : spec_(std::move(spec)), blocks_(std::move(blocks)) {
  require(blocks_.size() == spec_.layers.size(), "GradientSource: one block per layer required");
}

std::size_t GradientSource::layer_index(const std::string& name) const {
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    if (spec_.layers[i].name == name) {
      return i;
    }
  }
  throw ContractViolation("unknown layer '" + name + "'");
}

void GradientSource::require_params(const LayerTensors& params) const {
  require(params.size() == spec_.layers.size(), "parameter count does not match layer count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i].rows() == spec_.layers[i].rows && params[i].cols() == spec_.layers[i].cols,
            "parameter shape mismatch for layer " + spec_.layers[i].name);
  }
}

LayerTensors GradientSource::initial_parameters() const {
  LayerTensors params;
  params.reserve(spec_.layers.size());
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& layer = spec_.layers[i];
    if (spec_.init_scale > 0.0) {
      SeededRng rng(derive_seed({spec_.data_seed, i, kInitTag}));
      params.push_back(spec_.init_scale * gaussian_matrix(rng, layer.rows, layer.cols));
    } else {
      params.push_back(DenseMatrix::Zero(layer.rows, layer.cols));
    }
  }
  return params;
}

DenseMatrix GradientSource::local_gradient(const LayerTensors& params, std::size_t layer,
                                           Index worker, Step step) const {
  require(layer < blocks_.size(), "local_gradient: layer index out of range");
  require(worker >= 0 && worker < spec_.workers, "local_gradient: worker index out of range");
  return std::visit([&](const auto& b) { return b.local_gradient(params[layer], worker, step); },
                    blocks_[layer]);
}

std::optional<LayerTensors> GradientSource::true_gradient(const LayerTensors& params,
                                                          Step step) const {
  require_params(params);
  LayerTensors out;
  out.reserve(blocks_.size());
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    out.push_back(
        std::visit([&](const auto& b) { return b.true_gradient(params[i], step); }, blocks_[i]));
  }
  return out;
}

std::vector<double> GradientSource::loss_terms(const LayerTensors& params, Step step) const {
  require_params(params);
  std::vector<double> out;
  out.reserve(blocks_.size());
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    out.push_back(std::visit([&](const auto& b) { return b.loss(params[i], step); }, blocks_[i]));
  }
  return out;
}

double GradientSource::loss(const LayerTensors& params, Step step) const {
  double total = 0.0;
  for (const double term : loss_terms(params, step)) {
    total += term;
  }
  return total;
}

GradientSource make_lowrank_regression(const TaskSpec& spec) {
  spec.validate();
  std::vector<GradientSource::Block> blocks;
  blocks.reserve(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    blocks.emplace_back(std::in_place_type<RegressionBlock>, spec.layers[i], spec, i);
  }
  return GradientSource(spec, std::move(blocks));
}

GradientSource make_embedding_task(Index vocab, Index dim, Index tokens_per_batch,
                                   const TaskSpec& spec, Index embedding_rank,
                                   Index embedding_interval, double zipf_exponent) {
  TaskSpec full = spec;
  full.layers.push_back(
      LayerSpec{"embedding", vocab, dim, LayerKind::Embedding, embedding_rank, embedding_interval});
  full.validate();
  std::vector<GradientSource::Block> blocks;
  blocks.reserve(full.layers.size());
  for (std::size_t i = 0; i + 1 < full.layers.size(); ++i) {
    blocks.emplace_back(std::in_place_type<RegressionBlock>, full.layers[i], full, i);
  }
  blocks.emplace_back(std::in_place_type<EmbeddingBlock>, full.layers.back(), full,
                      full.layers.size() - 1, tokens_per_batch, zipf_exponent);
  return GradientSource(std::move(full), std::move(blocks));
}

LayerTensors run_worker_step(const GradientSource& source, const LayerTensors& params,
                             Index worker, Step step) {
  require(worker >= 0 && worker < source.workers(), "run_worker_step: worker index out of range");
  LayerTensors out;
  out.reserve(source.layers().size());
  for (std::size_t i = 0; i < source.layers().size(); ++i) {
    out.push_back(source.local_gradient(params, i, worker, step));
  }
  return out;
}

}  // namespace tsr
