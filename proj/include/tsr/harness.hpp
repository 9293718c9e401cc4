// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tsr/collective.hpp"
#include "tsr/diagnostics.hpp"
#include "tsr/optimizers.hpp"
#include "tsr/refresh.hpp"
#include "tsr/tasks.hpp"

namespace tsr {

enum class Method { DenseAdamW, OneSided, TSRAdam, TSRSGD };

std::string_view to_string(Method method);
std::optional<Method> parse_method(std::string_view text);

/// How a layer is synchronized and updated under a given method.
enum class Treatment { Dense, TwoSided, OneSided };

/// Non-matrix layers are always dense. The one-sided baseline keeps
/// embeddings dense; the two-sided methods compress every matrix layer.
Treatment treatment_for(Method method, LayerKind kind);

/// Step-size schedule shared by every method. Cosine decays η to 0 over the run:
/// η_t = η·½(1 + cos(π(t−1)/T)).
enum class LrSchedule { Constant, Cosine };

std::string_view to_string(LrSchedule schedule);

struct EmbeddingSpec {
  Index vocab = 0;  ///< 0 disables the embedding block
  Index dim = 0;
  Index tokens_per_batch = 64;
  double zipf_exponent = 1.1;

  bool enabled() const { return vocab > 0; }
  bool operator==(const EmbeddingSpec&) const = default;
};

struct RunConfig {
  TaskSpec task;
  EmbeddingSpec embedding;
  Method method = Method::TSRAdam;

  // Linear layers use (rank, refresh_k); the embedding uses (rank_emb, refresh_k_emb).
  Index rank = 8;
  Index rank_emb = 4;
  Index refresh_k = 100;
  Index refresh_k_emb = 100;
  Index oversampling = 4;
  Index power_iters = 1;
  RefreshMode refresh_mode = RefreshMode::Randomized;
  bool reorthonormalize_qbar = true;
  bool realign_moments = false;

  AdamHyperparams hyperparams;
  LrSchedule lr_schedule = LrSchedule::Constant;
  double sgd_beta = 0.9;

  Step total_steps = 100;
  std::uint64_t dtype_bytes = 2;
  std::uint64_t seed_omega = 0;
  Index threads = 1;  ///< worker-gradient pool size; never changes results
  bool diagnostics = true;
  std::string out_dir;  ///< empty: no files written
};

/// Throws ConfigError describing the first invalid field.
void validate(const RunConfig& cfg);

/// Step size used at step t >= 1.
double learning_rate_at(const RunConfig& cfg, Step t);

/// Task layers with rank and refresh interval filled in from the config.
std::vector<LayerSpec> resolve_layers(const RunConfig& cfg);

/// Refresh settings for one (resolved) layer.
RefreshConfig refresh_config_for(const RunConfig& cfg, const LayerSpec& layer);

GradientSource build_source(const RunConfig& cfg);

/// True when two configs describe the same workload (shapes, data and noise
/// settings); ranks and method settings may differ.
bool same_task(const RunConfig& a, const RunConfig& b);

struct StepSummary {
  Step step = 0;
  double loss = 0.0;
  std::uint64_t bytes_step = 0;
  std::uint64_t cumulative_bytes = 0;
};

struct RunResult {
  std::vector<StepSummary> summary;  ///< steps 0..T; row 0 is the initial state
  CommLedger ledger;
  std::vector<DiagnosticsSample> diagnostics;
  LayerTensors final_params;
  std::vector<std::uint64_t> refresh_counts;  ///< per layer, including the initializing refresh
};

/// Called with the parameters after step t (t = 0 for the initial state).
using StepObserver = std::function<void(Step, const LayerTensors&)>;

/// Runs T synchronized steps of the configured method. Per step: worker
/// gradients, refresh when t mod K == 0, projection + all-reduce, optimizer
/// step, ledger and diagnostics sampling. An initializing refresh runs before
/// step 1 and is charged to step 0. Writes summary.csv, ledger.csv,
/// ledger_steps.csv and diagnostics.csv when cfg.out_dir is set.
///
/// Throws ConfigError before step 0 on invalid config and NumericalError if
/// the loss becomes non-finite.
RunResult run_experiment(const RunConfig& cfg, const StepObserver& observer = {});

/// step,loss,bytes_step,cumulative_bytes
void write_summary_csv(std::ostream& os, std::span<const StepSummary> summary);

struct ComparedRun {
  std::string label;
  RunConfig config;
  RunResult result;
};

/// Runs every config (which must share task and T) and returns them with
/// unique labels derived from the method names.
std::vector<ComparedRun> compare_runs(std::span<const RunConfig> cfgs);

/// step,<label>_loss,<label>_cumulative_bytes,...
void write_comparison_csv(std::ostream& os, std::span<const ComparedRun> runs);
/// label,method,final_loss,bytes_per_step,peak_bytes,cumulative_bytes
void write_pareto_csv(std::ostream& os, std::span<const ComparedRun> runs);

}  // namespace tsr
