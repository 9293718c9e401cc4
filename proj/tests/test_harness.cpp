// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tsr/byte_model.hpp"
#include "tsr/harness.hpp"

using namespace tsr;

namespace {

RunConfig small_config(Method method) {
  RunConfig cfg;
  cfg.method = method;
  cfg.task.layers = {LayerSpec{"fc1", 12, 10}, LayerSpec{"fc2", 10, 8}};
  cfg.task.workers = 2;
  cfg.task.samples = 64;
  cfg.task.target_rank = 2;
  cfg.task.data_seed = 5;
  cfg.rank = 3;
  cfg.refresh_k = 10;
  cfg.oversampling = 2;
  cfg.hyperparams.eta = 0.05;
  cfg.total_steps = 60;
  cfg.seed_omega = 11;
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string summary_text(const RunResult& r) {
  std::ostringstream os;
  write_summary_csv(os, r.summary);
  return os.str();
}

}  // namespace

TEST(Harness, DenseAdamConvergesOnNoiseFreeRegression) {
  RunConfig cfg = small_config(Method::DenseAdamW);
  cfg.task.workers = 1;
  cfg.total_steps = 500;
  cfg.diagnostics = false;
  const auto result = run_experiment(cfg);
  ASSERT_EQ(result.summary.size(), 501u);
  EXPECT_LT(result.summary.back().loss, 1e-3 * result.summary.front().loss);
}

TEST(Harness, PinnedFullRankTsrMatchesDense) {
  RunConfig dense = small_config(Method::DenseAdamW);
  dense.task.layers = {LayerSpec{"sq", 8, 8}};
  dense.task.init_scale = 0.3;
  dense.total_steps = 50;
  RunConfig tsr = dense;
  tsr.method = Method::TSRAdam;
  tsr.rank = 8;
  tsr.refresh_mode = RefreshMode::Pinned;
  const auto a = run_experiment(dense);
  const auto b = run_experiment(tsr);
  for (std::size_t t = 0; t < a.summary.size(); ++t) {
    EXPECT_NEAR(a.summary[t].loss, b.summary[t].loss, 1e-8 * (1.0 + a.summary[t].loss));
  }
  EXPECT_LT((a.final_params[0] - b.final_params[0]).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Harness, TwoLayerByteExample) {
  RunConfig cfg = small_config(Method::TSRAdam);
  cfg.task.layers = {LayerSpec{"fc1", 64, 64}, LayerSpec{"fc2", 64, 64}};
  cfg.task.workers = 1;
  cfg.task.samples = 128;
  cfg.rank = 8;
  cfg.refresh_k = 10;
  cfg.oversampling = 4;
  cfg.total_steps = 100;
  cfg.dtype_bytes = 2;
  cfg.diagnostics = false;
  const auto result = run_experiment(cfg);
  const std::uint64_t p = 4;
  const std::uint64_t expected =
      90 * (2 * 8 * 8 * 2) + 10 * (2 * (8 * 8 * 2 + 2 * 64 * (8 + p) * 2));
  EXPECT_EQ(cumulative_bytes(result.ledger, 100) - bytes_per_step(result.ledger, 0), expected);
  EXPECT_EQ(result.summary.back().cumulative_bytes, predict_cumulative_bytes(cfg));
  // ⌊T/K⌋ refreshes plus the initializing one.
  EXPECT_EQ(result.refresh_counts, (std::vector<std::uint64_t>{11, 11}));
}

TEST(Harness, OneSidedToTwoSidedByteRatioIsNOverR) {
  RunConfig two = small_config(Method::TSRAdam);
  two.diagnostics = false;
  two.task.layers = {LayerSpec{"fc", 16, 12}};
  two.rank = 3;
  RunConfig one = two;
  one.method = Method::OneSided;
  const auto a = run_experiment(two);
  const auto b = run_experiment(one);
  for (const Step t : {Step{1}, Step{7}, Step{59}}) {
    EXPECT_EQ(bytes_per_step(b.ledger, t), 4 * bytes_per_step(a.ledger, t));  // n / r = 12 / 3
  }
}

TEST(Harness, LedgerMatchesPredictorAcrossMethodsAndModes) {
  for (const Method m : {Method::DenseAdamW, Method::OneSided, Method::TSRAdam, Method::TSRSGD}) {
    for (const RefreshMode mode : {RefreshMode::Randomized, RefreshMode::ExactSVD}) {
      RunConfig cfg = small_config(m);
      cfg.refresh_mode = mode;
      cfg.diagnostics = false;
      cfg.dtype_bytes = 4;
      const auto result = run_experiment(cfg);
      const auto predicted = predict_step_bytes(cfg);
      ASSERT_EQ(predicted.size(), result.summary.size());
      for (std::size_t t = 0; t < predicted.size(); ++t) {
        ASSERT_EQ(result.summary[t].bytes_step, predicted[t]) << to_string(m) << " step " << t;
      }
    }
  }
}

TEST(Harness, RefreshMismatchIsZeroOffRefreshSteps) {
  const auto result = run_experiment(small_config(Method::TSRAdam));
  bool saw_nonzero = false;
  for (const auto& s : result.diagnostics) {
    if (s.step % 10 != 0) {
      EXPECT_EQ(s.refresh_mismatch, 0.0) << "step " << s.step;
    } else if (s.refresh_mismatch > 0.0) {
      saw_nonzero = true;
    }
    ASSERT_TRUE(s.subspace_error.has_value());
  }
  EXPECT_TRUE(saw_nonzero);
}

TEST(Harness, DiagnosticsDoNotPerturbTheRun) {
  RunConfig on = small_config(Method::TSRAdam);
  on.task.noise_std = 0.2;
  RunConfig off = on;
  off.diagnostics = false;
  const auto a = run_experiment(on);
  const auto b = run_experiment(off);
  EXPECT_EQ(summary_text(a), summary_text(b));
  EXPECT_EQ(a.final_params, b.final_params);
  EXPECT_TRUE(b.diagnostics.empty());
}

TEST(Harness, FilesAreIdenticalAcrossThreadCounts) {
  const auto root = std::filesystem::temp_directory_path() / "tsr_harness_threads";
  std::filesystem::remove_all(root);
  std::vector<std::string> contents;
  for (const Index threads : {1, 3}) {
    RunConfig cfg = small_config(Method::TSRAdam);
    cfg.task.workers = 4;
    cfg.task.noise_std = 0.1;
    cfg.threads = threads;
    cfg.out_dir = (root / std::to_string(threads)).string();
    run_experiment(cfg);
    std::string all;
    for (const char* f : {"summary.csv", "ledger.csv", "ledger_steps.csv", "diagnostics.csv"}) {
      const auto text = slurp(std::filesystem::path(cfg.out_dir) / f);
      ASSERT_FALSE(text.empty()) << f;
      all += text;
    }
    contents.push_back(all);
  }
  EXPECT_EQ(contents[0], contents[1]);
  std::filesystem::remove_all(root);
}

TEST(Harness, CsvHeaders) {
  const auto root = std::filesystem::temp_directory_path() / "tsr_harness_headers";
  std::filesystem::remove_all(root);
  RunConfig cfg = small_config(Method::TSRAdam);
  cfg.total_steps = 3;
  cfg.out_dir = root.string();
  run_experiment(cfg);
  auto first_line = [&](const char* f) {
    std::ifstream in(root / f);
    std::string line;
    std::getline(in, line);
    return line;
  };
  EXPECT_EQ(first_line("summary.csv"), "step,loss,bytes_step,cumulative_bytes");
  EXPECT_EQ(first_line("ledger.csv"), "step,layer,kind,elements,bytes");
  EXPECT_EQ(first_line("ledger_steps.csv"), "step,bytes_step,cumulative_bytes");
  EXPECT_EQ(first_line("diagnostics.csv"), "step,layer,E_t,Delta_t,sigma2_hat,R_t,loss");
  std::filesystem::remove_all(root);
}

TEST(Harness, ConfigErrorsBeforeAnyWork) {
  RunConfig cfg = small_config(Method::TSRAdam);
  cfg.rank = 11;  // > min(10, 8) of fc2
  EXPECT_THROW(run_experiment(cfg), ConfigError);
  cfg = small_config(Method::TSRAdam);
  cfg.total_steps = 0;
  EXPECT_THROW(run_experiment(cfg), ConfigError);
  cfg = small_config(Method::TSRAdam);
  cfg.dtype_bytes = 0;
  EXPECT_THROW(run_experiment(cfg), ConfigError);
}

TEST(Harness, DivergenceRaisesNumericalError) {
  RunConfig cfg = small_config(Method::TSRSGD);
  cfg.sgd_beta = 0.0;
  cfg.hyperparams.eta = 1e150;
  cfg.total_steps = 50;
  EXPECT_THROW(run_experiment(cfg), NumericalError);
}

TEST(Harness, CosineScheduleEndpoints) {
  RunConfig cfg = small_config(Method::DenseAdamW);
  cfg.total_steps = 100;
  EXPECT_EQ(learning_rate_at(cfg, 1), cfg.hyperparams.eta);
  EXPECT_EQ(learning_rate_at(cfg, 100), cfg.hyperparams.eta);
  cfg.lr_schedule = LrSchedule::Cosine;
  EXPECT_DOUBLE_EQ(learning_rate_at(cfg, 1), cfg.hyperparams.eta);
  EXPECT_NEAR(learning_rate_at(cfg, 51), 0.5 * cfg.hyperparams.eta, 1e-15);
  EXPECT_GT(learning_rate_at(cfg, 100), 0.0);
}

TEST(Compare, TsrCheaperEveryStepAndSmoothedLossesDecrease) {
  std::vector<RunConfig> cfgs;
  for (const Method m : {Method::DenseAdamW, Method::OneSided, Method::TSRAdam}) {
    RunConfig cfg = small_config(m);
    cfg.task.layers = {LayerSpec{"fc1", 32, 32}, LayerSpec{"fc2", 32, 24}};
    cfg.task.samples = 128;
    cfg.rank = 4;
    cfg.hyperparams.eta = 0.02;
    cfg.total_steps = 200;
    cfg.diagnostics = false;
    cfgs.push_back(cfg);
  }
  const auto runs = compare_runs(cfgs);
  ASSERT_EQ(runs.size(), 3u);
  const auto& dense = runs[0].result.summary;
  const auto& tsr = runs[2].result.summary;
  // Step 0 carries only the initializing refresh, which dense training skips.
  for (std::size_t t = 1; t < dense.size(); ++t) {
    EXPECT_LT(tsr[t].cumulative_bytes, dense[t].cumulative_bytes);
  }
  for (const auto& run : runs) {
    const auto& s = run.result.summary;
    double previous = std::numeric_limits<double>::infinity();
    for (std::size_t end = 20; end <= s.size(); ++end) {
      double avg = 0.0;
      for (std::size_t t = end - 20; t < end; ++t) avg += s[t].loss;
      avg /= 20.0;
      EXPECT_LE(avg, previous) << run.label << " window ending " << end;
      previous = avg;
    }
  }
  std::ostringstream csv;
  write_comparison_csv(csv, runs);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')),
            "step,dense_adamw_loss,dense_adamw_cumulative_bytes,one_sided_loss,"
            "one_sided_cumulative_bytes,tsr_adam_loss,tsr_adam_cumulative_bytes");
}

TEST(Compare, RejectsMismatchedTasks) {
  std::vector<RunConfig> cfgs{small_config(Method::DenseAdamW), small_config(Method::TSRAdam)};
  cfgs[1].task.data_seed = 99;
  EXPECT_THROW(compare_runs(cfgs), ConfigError);
}
