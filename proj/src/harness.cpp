// SPDX-License-Identifier: Apache-2.0
#include "tsr/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <ostream>
#include <thread>

namespace tsr {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::DenseAdamW:
      return "dense_adamw";
    case Method::OneSided:
      return "one_sided";
    case Method::TSRAdam:
      return "tsr_adam";
    case Method::TSRSGD:
      return "tsr_sgd";
  }
  return "unknown";
}

std::optional<Method> parse_method(std::string_view text) {
  for (const Method m : {Method::DenseAdamW, Method::OneSided, Method::TSRAdam, Method::TSRSGD}) {
    if (text == to_string(m)) {
      return m;
    }
  }
  return std::nullopt;
}

Treatment treatment_for(Method method, LayerKind kind) {
  if (kind == LayerKind::NonMatrix || method == Method::DenseAdamW) {
    return Treatment::Dense;
  }
  if (method == Method::OneSided) {
    return kind == LayerKind::Embedding ? Treatment::Dense : Treatment::OneSided;
  }
  return Treatment::TwoSided;
}

std::string_view to_string(LrSchedule schedule) {
  return schedule == LrSchedule::Cosine ? "cosine" : "constant";
}

double learning_rate_at(const RunConfig& cfg, Step t) {
  const double eta = cfg.hyperparams.eta;
  if (cfg.lr_schedule == LrSchedule::Constant) {
    return eta;
  }
  const double progress = static_cast<double>(t - 1) / static_cast<double>(cfg.total_steps);
  return eta * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

std::vector<LayerSpec> resolve_layers(const RunConfig& cfg) {
  std::vector<LayerSpec> layers = cfg.task.layers;
  if (cfg.embedding.enabled()) {
    layers.push_back(LayerSpec{"embedding", cfg.embedding.vocab, cfg.embedding.dim,
                               LayerKind::Embedding, 0, 1});
  }
  for (auto& layer : layers) {
    switch (layer.kind) {
      case LayerKind::Linear:
        layer.rank = cfg.rank;
        layer.refresh_interval = cfg.refresh_k;
        break;
      case LayerKind::Embedding:
        layer.rank = cfg.rank_emb;
        layer.refresh_interval = cfg.refresh_k_emb;
        break;
      case LayerKind::NonMatrix:
        layer.rank = 0;
        layer.refresh_interval = 1;
        break;
    }
  }
  return layers;
}

RefreshConfig refresh_config_for(const RunConfig& cfg, const LayerSpec& layer) {
  RefreshConfig rc;
  rc.rank = layer.rank;
  rc.oversampling = cfg.oversampling;
  rc.power_iters = cfg.power_iters;
  rc.interval = layer.refresh_interval;
  rc.mode = cfg.refresh_mode;
  rc.reorthonormalize_qbar = cfg.reorthonormalize_qbar;
  return rc;
}

void validate(const RunConfig& cfg) {
  if (cfg.total_steps < 1) {
    throw ConfigError("steps must be >= 1");
  }
  if (cfg.dtype_bytes < 1) {
    throw ConfigError("dtype_bytes must be >= 1");
  }
  if (cfg.threads < 1) {
    throw ConfigError("threads must be >= 1");
  }
  if (!(cfg.sgd_beta >= 0.0 && cfg.sgd_beta < 1.0)) {
    throw ConfigError("sgd_beta must lie in [0, 1)");
  }
  if (cfg.embedding.enabled() && (cfg.embedding.dim < 1 || cfg.embedding.tokens_per_batch < 1)) {
    throw ConfigError("embedding needs dim >= 1 and tokens_per_batch >= 1");
  }
  cfg.hyperparams.validate();
  TaskSpec full = cfg.task;
  full.layers = resolve_layers(cfg);
  full.validate();
  for (const auto& layer : full.layers) {
    if (treatment_for(cfg.method, layer.kind) == Treatment::Dense) {
      continue;
    }
    try {
      refresh_config_for(cfg, layer).validate(layer.rows, layer.cols);
    } catch (const ConfigError& e) {
      throw ConfigError("layer " + layer.name + ": " + e.what());
    }
  }
}

GradientSource build_source(const RunConfig& cfg) {
  const auto layers = resolve_layers(cfg);
  TaskSpec spec = cfg.task;
  if (!cfg.embedding.enabled()) {
    spec.layers = layers;
    return make_lowrank_regression(spec);
  }
  spec.layers.assign(layers.begin(), layers.end() - 1);
  const auto& emb = layers.back();
  return make_embedding_task(cfg.embedding.vocab, cfg.embedding.dim, cfg.embedding.tokens_per_batch,
                             spec, emb.rank, emb.refresh_interval, cfg.embedding.zipf_exponent);
}

bool same_task(const RunConfig& a, const RunConfig& b) {
  const auto shapes_match = [](const std::vector<LayerSpec>& x, const std::vector<LayerSpec>& y) {
    return std::equal(x.begin(), x.end(), y.begin(), y.end(),
                      [](const LayerSpec& p, const LayerSpec& q) {
                        return p.name == q.name && p.rows == q.rows && p.cols == q.cols &&
                               p.kind == q.kind;
                      });
  };
  const TaskSpec& s = a.task;
  const TaskSpec& t = b.task;
  return shapes_match(s.layers, t.layers) && s.workers == t.workers &&
         s.noise_std == t.noise_std && s.target_rank == t.target_rank &&
         s.minibatch == t.minibatch && s.samples == t.samples && s.data_seed == t.data_seed &&
         s.drift == t.drift && s.orthonormal_design == t.orthonormal_design &&
         s.init_scale == t.init_scale && a.embedding == b.embedding;
}

// ---------------------------------------------------------------------------

namespace {

// Splits [0, count) into contiguous chunks over at most `threads` threads.
// Each index writes only its own output slot, so results do not depend on
// the thread count.
template <typename Fn>
void parallel_for(Index count, Index threads, Fn&& fn) {
  const Index pool = std::min(threads, count);
  if (pool <= 1) {
    for (Index i = 0; i < count; ++i) {
      fn(i);
    }
    return;
  }
  std::vector<std::jthread> workers;
  workers.reserve(static_cast<std::size_t>(pool));
  const Index chunk = (count + pool - 1) / pool;
  for (Index w = 0; w < pool; ++w) {
    const Index begin = w * chunk;
    const Index end = std::min(count, begin + chunk);
    workers.emplace_back([&fn, begin, end] {
      for (Index i = begin; i < end; ++i) {
        fn(i);
      }
    });
  }
}

struct LayerState {
  LayerSpec spec;
  Treatment treatment = Treatment::Dense;
  RefreshConfig refresh;
  CommObjectKind dense_kind = CommObjectKind::DenseGrad;
  DenseMoments dense;       // Dense and OneSided treatments
  CoreMoments core;         // TwoSided
  DenseMatrix momentum;     // SGD variants
  ProjectionPair pair;      // TwoSided (U, V) or OneSided (U only)
};

// grads[worker][layer]
using WorkerGradients = std::vector<LayerTensors>;

WorkerGradients gather_gradients(const GradientSource& source, const LayerTensors& params,
                                 Step step, Index threads) {
  WorkerGradients grads(static_cast<std::size_t>(source.workers()));
  parallel_for(source.workers(), threads, [&](Index i) {
    grads[static_cast<std::size_t>(i)] = run_worker_step(source, params, i, step);
  });
  return grads;
}

std::vector<DenseMatrix> layer_slice(const WorkerGradients& grads, std::size_t layer) {
  std::vector<DenseMatrix> out;
  out.reserve(grads.size());
  for (const auto& worker : grads) {
    out.push_back(worker[layer]);
  }
  return out;
}

ProjectionPair fresh_pair(const RunConfig& cfg, const LayerState& st, std::size_t layer_index,
                          std::span<const DenseMatrix> locals, Step step, CommLedger& ledger) {
  SeededRng rng(derive_seed({cfg.seed_omega, layer_index, step}));
  return refresh(locals, st.refresh, rng, step, st.spec.name, ledger);
}

void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream os(path);
  if (!os) {
    throw ConfigError("cannot write " + path.string());
  }
  body(os);
}

}  // namespace

void write_summary_csv(std::ostream& os, std::span<const StepSummary> summary) {
  const auto flags = os.flags();
  const auto precision = os.precision();
  os << std::setprecision(17);
  os << "step,loss,bytes_step,cumulative_bytes\n";
  for (const auto& row : summary) {
    os << row.step << ',' << row.loss << ',' << row.bytes_step << ',' << row.cumulative_bytes
       << '\n';
  }
  os.flags(flags);
  os.precision(precision);
}

RunResult run_experiment(const RunConfig& cfg, const StepObserver& observer) {
  validate(cfg);
  const GradientSource source = build_source(cfg);
  const auto& layers = source.layers();
  const bool sgd = cfg.method == Method::TSRSGD;

  RunResult result{{}, CommLedger(cfg.dtype_bytes), {}, source.initial_parameters(),
                   std::vector<std::uint64_t>(layers.size(), 0)};
  LayerTensors& params = result.final_params;
  CommLedger& ledger = result.ledger;

  std::vector<LayerState> states(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    LayerState& st = states[l];
    st.spec = layers[l];
    st.treatment = treatment_for(cfg.method, st.spec.kind);
    st.dense_kind = st.spec.kind == LayerKind::NonMatrix ? CommObjectKind::NonMatrixDense
                                                         : CommObjectKind::DenseGrad;
    const Index m = st.spec.rows;
    const Index n = st.spec.cols;
    switch (st.treatment) {
      case Treatment::Dense:
        st.dense = DenseMoments::zeros(m, n);
        st.momentum = DenseMatrix::Zero(m, n);
        break;
      case Treatment::TwoSided:
        st.refresh = refresh_config_for(cfg, st.spec);
        st.core = CoreMoments::zeros(st.refresh.rank);
        st.momentum = DenseMatrix::Zero(st.refresh.rank, st.refresh.rank);
        break;
      case Treatment::OneSided:
        st.refresh = refresh_config_for(cfg, st.spec);
        st.dense = DenseMoments::zeros(st.refresh.rank, n);
        break;
    }
  }

  // Initializing refresh, charged to step 0.
  const bool any_refresh = std::any_of(states.begin(), states.end(), [](const LayerState& st) {
    return st.treatment != Treatment::Dense && st.refresh.mode != RefreshMode::Pinned;
  });
  WorkerGradients grads;
  if (any_refresh) {
    grads = gather_gradients(source, params, 0, cfg.threads);
  }
  for (std::size_t l = 0; l < states.size(); ++l) {
    LayerState& st = states[l];
    if (st.treatment == Treatment::Dense) {
      continue;
    }
    if (st.refresh.mode == RefreshMode::Pinned) {
      st.pair = identity_pair(st.spec.rows, st.spec.cols, st.refresh.rank);
    } else {
      st.pair = fresh_pair(cfg, st, l, layer_slice(grads, l), 0, ledger);
      ++result.refresh_counts[l];
    }
  }

  std::uint64_t cumulative = 0;
  std::size_t ledger_cursor = 0;
  const auto bytes_since_cursor = [&] {
    std::uint64_t bytes = 0;
    const auto records = ledger.records();
    for (; ledger_cursor < records.size(); ++ledger_cursor) {
      bytes += records[ledger_cursor].bytes;
    }
    return bytes;
  };
  const auto record_summary = [&](Step step, double loss) {
    const std::uint64_t bytes = bytes_since_cursor();
    cumulative += bytes;
    result.summary.push_back(StepSummary{step, loss, bytes, cumulative});
  };

  record_summary(0, source.loss(params, 0));
  if (observer) {
    observer(0, params);
  }

  for (Step t = 1; t <= cfg.total_steps; ++t) {
    AdamHyperparams hp = cfg.hyperparams;
    hp.eta = learning_rate_at(cfg, t);
    const double eta = hp.eta;
    grads = gather_gradients(source, params, t, cfg.threads);
    std::optional<LayerTensors> truth;
    if (cfg.diagnostics) {
      truth = source.true_gradient(params, t);
    }

    std::vector<DiagnosticsSample> step_diag;
    for (std::size_t l = 0; l < states.size(); ++l) {
      LayerState& st = states[l];
      DenseMatrix& W = params[l];
      const std::vector<DenseMatrix> locals = layer_slice(grads, l);
      DiagnosticsSample diag;
      diag.step = t;
      diag.layer = st.spec.name;

      switch (st.treatment) {
        case Treatment::Dense: {
          const DenseMatrix g_bar = all_reduce_mean(locals, ledger, t, st.spec.name, st.dense_kind);
          if (sgd) {
            dense_sgd_step(W, g_bar, st.momentum, eta, cfg.sgd_beta);
          } else {
            dense_adamw_step(W, g_bar, st.dense, hp);
          }
          if (cfg.diagnostics) {
            diag.sigma2_hat = projected_variance(locals).of_mean;
            if (truth) {
              diag.subspace_error = 0.0;
              diag.tracking_error =
                  tracking_error(sgd ? st.momentum : st.dense.m, (*truth)[l]);
            }
          }
          break;
        }

        case Treatment::TwoSided: {
          if (st.refresh.refreshes_at(t)) {
            const ProjectionPair stale = st.pair;
            st.pair = fresh_pair(cfg, st, l, locals, t, ledger);
            ++result.refresh_counts[l];
            if (cfg.diagnostics) {
              diag.refresh_mismatch =
                  refresh_mismatch(st.pair, stale, sgd ? st.momentum : st.core.m);
            }
            if (cfg.realign_moments) {
              if (sgd) {
                CoreMoments carrier{st.momentum, DenseMatrix::Zero(st.momentum.rows(),
                                                                   st.momentum.cols()),
                                    0};
                realign_core_moments(carrier, stale, st.pair);
                st.momentum = carrier.m;
              } else {
                realign_core_moments(st.core, stale, st.pair);
              }
            }
          }
          std::vector<DenseMatrix> cores;
          cores.reserve(locals.size());
          for (const auto& G : locals) {
            cores.push_back(tsr_project_core(G, st.pair));
          }
          const DenseMatrix C_bar = all_reduce_mean(cores, ledger, t, st.spec.name,
                                                    CommObjectKind::Core);
          if (sgd) {
            tsr_sgd_step(W, C_bar, st.momentum, st.pair, eta, cfg.sgd_beta);
          } else {
            tsr_adam_step(W, C_bar, st.core, st.pair, hp);
          }
          if (cfg.diagnostics) {
            diag.sigma2_hat = projected_variance(cores).of_mean;
            if (truth) {
              diag.subspace_error = subspace_error((*truth)[l], st.pair);
              diag.tracking_error = tracking_error(
                  reconstruct(st.pair, sgd ? st.momentum : st.core.m), (*truth)[l]);
            }
          }
          break;
        }

        case Treatment::OneSided: {
          if (st.refresh.refreshes_at(t)) {
            const DenseMatrix stale = st.pair.U;
            st.pair = fresh_pair(cfg, st, l, locals, t, ledger);
            ++result.refresh_counts[l];
            if (cfg.diagnostics) {
              diag.refresh_mismatch = (matmul(st.pair.U, st.dense.m) - matmul(stale, st.dense.m))
                                          .squaredNorm();
            }
          }
          one_sided_step(W, locals, st.pair.U, st.dense, hp, ledger, t,
                         st.spec.name);
          if (cfg.diagnostics) {
            std::vector<DenseMatrix> factors;
            factors.reserve(locals.size());
            for (const auto& G : locals) {
              factors.push_back(matmul_tn(st.pair.U, G));
            }
            diag.sigma2_hat = projected_variance(factors).of_mean;
            if (truth) {
              const DenseMatrix& g = (*truth)[l];
              diag.subspace_error = (matmul(st.pair.U, matmul_tn(st.pair.U, g)) - g).squaredNorm();
              diag.tracking_error = tracking_error(matmul(st.pair.U, st.dense.m), g);
            }
          }
          break;
        }
      }
      if (cfg.diagnostics) {
        step_diag.push_back(std::move(diag));
      }
    }

    const std::vector<double> terms = source.loss_terms(params, t);
    double loss = 0.0;
    for (const double term : terms) {
      loss += term;
    }
    if (!std::isfinite(loss)) {
      throw NumericalError("non-finite loss at step " + std::to_string(t));
    }
    for (std::size_t l = 0; l < step_diag.size(); ++l) {
      step_diag[l].loss = terms[l];
      result.diagnostics.push_back(std::move(step_diag[l]));
    }
    record_summary(t, loss);
    if (observer) {
      observer(t, params);
    }
  }

  if (!cfg.out_dir.empty()) {
    const std::filesystem::path dir(cfg.out_dir);
    std::filesystem::create_directories(dir);
    write_file(dir / "summary.csv", [&](std::ostream& os) { write_summary_csv(os, result.summary); });
    write_file(dir / "ledger.csv", [&](std::ostream& os) { write_ledger_csv(os, ledger); });
    write_file(dir / "ledger_steps.csv",
               [&](std::ostream& os) { write_step_bytes_csv(os, ledger); });
    write_file(dir / "diagnostics.csv",
               [&](std::ostream& os) { write_diagnostics_csv(os, result.diagnostics); });
  }
  return result;
}

// ---------------------------------------------------------------------------

std::vector<ComparedRun> compare_runs(std::span<const RunConfig> cfgs) {
  require(!cfgs.empty(), "compare_runs: no configs");
  for (const auto& cfg : cfgs) {
    if (!same_task(cfgs.front(), cfg) || cfg.total_steps != cfgs.front().total_steps) {
      throw ConfigError("compare_runs: configs must share the task and step count");
    }
  }
  std::vector<ComparedRun> runs;
  std::map<std::string, int> seen;
  for (const auto& cfg : cfgs) {
    std::string label(to_string(cfg.method));
    if (const int n = seen[label]++; n > 0) {
      label += "_" + std::to_string(n + 1);
    }
    RunConfig local = cfg;
    local.out_dir.clear();
    runs.push_back(ComparedRun{label, cfg, run_experiment(local)});
  }
  return runs;
}

void write_comparison_csv(std::ostream& os, std::span<const ComparedRun> runs) {
  const auto flags = os.flags();
  const auto precision = os.precision();
  os << std::setprecision(17) << "step";
  for (const auto& run : runs) {
    os << ',' << run.label << "_loss," << run.label << "_cumulative_bytes";
  }
  os << '\n';
  const std::size_t rows = runs.empty() ? 0 : runs.front().result.summary.size();
  for (std::size_t i = 0; i < rows; ++i) {
    os << runs.front().result.summary[i].step;
    for (const auto& run : runs) {
      const auto& row = run.result.summary[i];
      os << ',' << row.loss << ',' << row.cumulative_bytes;
    }
    os << '\n';
  }
  os.flags(flags);
  os.precision(precision);
}

void write_pareto_csv(std::ostream& os, std::span<const ComparedRun> runs) {
  const auto flags = os.flags();
  const auto precision = os.precision();
  os << std::setprecision(17) << "label,method,final_loss,bytes_per_step,peak_bytes,cumulative_bytes\n";
  for (const auto& run : runs) {
    const auto& ledger = run.result.ledger;
    const Step total = run.config.total_steps;
    os << run.label << ',' << to_string(run.config.method) << ','
       << run.result.summary.back().loss << ',' << average_bytes_per_step(ledger, total) << ','
       << peak_bytes(ledger) << ',' << cumulative_bytes(ledger, total) << '\n';
  }
  os.flags(flags);
  os.precision(precision);
}

}  // namespace tsr
