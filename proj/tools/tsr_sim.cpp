// SPDX-License-Identifier: Apache-2.0
// tsr-sim: command-line front end for the low-rank communication simulator.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tsr/config.hpp"
#include "tsr/errors.hpp"
#include "tsr/harness.hpp"
#include "tsr/scaling.hpp"
#include "tsr/selftest.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;

struct RunOverrides {
  std::string config_path;
  std::optional<std::string> method;
  std::optional<std::size_t> rank;
  std::optional<std::size_t> rank_emb;
  std::optional<std::size_t> refresh_k;
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> steps;
  std::optional<std::uint64_t> dtype_bytes;
  std::optional<std::size_t> threads;
  std::optional<std::string> out;
  std::vector<std::string> settings;
};

void add_run_options(CLI::App* cmd, RunOverrides& o) {
  cmd->add_option("--config", o.config_path, "key = value config file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--rank", o.rank, "rank for linear layers");
  cmd->add_option("--rank-emb", o.rank_emb, "rank for the embedding layer");
  cmd->add_option("--refresh-k", o.refresh_k, "refresh interval K for linear layers");
  cmd->add_option("--workers", o.workers, "number of simulated workers N");
  cmd->add_option("--steps", o.steps, "total steps T");
  cmd->add_option("--dtype-bytes", o.dtype_bytes, "bytes per communicated element")->check(CLI::IsMember({2, 4}));
  cmd->add_option("--threads", o.threads, "worker-gradient thread pool size");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--set", o.settings, "extra key=value overrides")->take_all();
}

tsr::RunConfig resolve(const RunOverrides& o) {
  tsr::RunConfig cfg = tsr::load_config_file(o.config_path);
  if (o.method) tsr::apply_setting(cfg, "method", *o.method);
  if (o.rank) cfg.rank = *o.rank;
  if (o.rank_emb) cfg.rank_emb = *o.rank_emb;
  if (o.refresh_k) cfg.refresh_k = *o.refresh_k;
  if (o.workers) cfg.task.workers = *o.workers;
  if (o.steps) cfg.total_steps = *o.steps;
  if (o.dtype_bytes) cfg.dtype_bytes = *o.dtype_bytes;
  if (o.threads) cfg.threads = *o.threads;
  if (o.out) cfg.out_dir = *o.out;
  for (const auto& kv : o.settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw tsr::ConfigError("--set expects key=value, got '" + kv + "'");
    }
    tsr::apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) {
    throw tsr::ConfigError("cannot write " + path.string());
  }
  return os;
}

int cmd_run(const RunOverrides& o) {
  const tsr::RunConfig cfg = resolve(o);
  const auto result = tsr::run_experiment(cfg);
  const auto& last = result.summary.back();
  std::cout << "method=" << tsr::to_string(cfg.method) << " steps=" << last.step
            << " final_loss=" << last.loss << " cumulative_bytes=" << last.cumulative_bytes
            << " peak_bytes=" << tsr::peak_bytes(result.ledger) << '\n';
  if (!cfg.out_dir.empty()) {
    std::cout << "wrote " << cfg.out_dir << "/{summary,ledger,ledger_steps,diagnostics}.csv\n";
  }
  return kExitOk;
}

int cmd_compare(const RunOverrides& o, const std::string& methods) {
  const tsr::RunConfig base = resolve(o);
  std::vector<tsr::RunConfig> cfgs;
  for (const auto& name : split_list(methods)) {
    tsr::RunConfig cfg = base;
    tsr::apply_setting(cfg, "method", name);
    cfg.out_dir.clear();
    cfgs.push_back(std::move(cfg));
  }
  if (cfgs.empty()) {
    throw tsr::ConfigError("--methods is empty");
  }
  const auto runs = tsr::compare_runs(cfgs);
  for (const auto& run : runs) {
    const auto& last = run.result.summary.back();
    std::cout << run.label << ": final_loss=" << last.loss
              << " cumulative_bytes=" << last.cumulative_bytes << '\n';
  }
  if (!base.out_dir.empty()) {
    std::filesystem::create_directories(base.out_dir);
    auto cmp = open_output(std::filesystem::path(base.out_dir) / "compare.csv");
    tsr::write_comparison_csv(cmp, runs);
    auto pareto = open_output(std::filesystem::path(base.out_dir) / "pareto.csv");
    tsr::write_pareto_csv(pareto, runs);
    std::cout << "wrote " << base.out_dir << "/{compare,pareto}.csv\n";
  }
  return kExitOk;
}

int cmd_scale_table(const tsr::ScalingInputs& in, const std::string& out_dir) {
  const std::string text = tsr::format_scaling_table(tsr::scaling_table(in));
  std::cout << text;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    auto os = open_output(std::filesystem::path(out_dir) / "scale_table.txt");
    os << text;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-sided low-rank gradient communication simulator"};
  app.require_subcommand(1);

  RunOverrides run_opts;
  auto* run = app.add_subcommand("run", "run one experiment");
  add_run_options(run, run_opts);
  run->add_option("--method", run_opts.method, "dense_adamw | one_sided | tsr_adam | tsr_sgd");

  RunOverrides cmp_opts;
  std::string methods = "dense_adamw,one_sided,tsr_adam";
  auto* compare = app.add_subcommand("compare", "run several methods on one task");
  add_run_options(compare, cmp_opts);
  compare->add_option("--methods", methods, "comma-separated method list");

  tsr::ScalingInputs scale;
  std::string scale_out;
  auto* table = app.add_subcommand("scale-table", "print communication and state scaling rows");
  table->add_option("--m", scale.m);
  table->add_option("--n", scale.n);
  table->add_option("--r", scale.r);
  table->add_option("--r-e", scale.r_e);
  table->add_option("--vocab", scale.vocab);
  table->add_option("--dtype-bytes", scale.dtype_bytes);
  table->add_option("--out", scale_out, "directory for scale_table.txt");

  auto* selftest = app.add_subcommand("selftest", "run the built-in invariant checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_opts);
    if (*compare) return cmd_compare(cmp_opts, methods);
    if (*table) return cmd_scale_table(scale, scale_out);
    if (*selftest) return tsr::run_selftest(std::cout) ? kExitOk : kExitNumerical;
  } catch (const tsr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const tsr::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}
