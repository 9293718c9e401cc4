// SPDX-License-Identifier: Apache-2.0
#include "tsr/config.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace tsr {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("invalid value for " + std::string(key) + ": '" + std::string(value) + "'");
  }
  return out;
}

Index parse_count(std::string_view key, std::string_view value) {
  const auto v = parse_number<long long>(key, value);
  if (v < 0) {
    throw ConfigError(std::string(key) + " must be non-negative");
  }
  return static_cast<Index>(v);
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") {
    return true;
  }
  if (value == "false" || value == "0" || value == "no" || value == "off") {
    return false;
  }
  throw ConfigError("invalid boolean for " + std::string(key) + ": '" + std::string(value) + "'");
}

RefreshMode parse_refresh_mode(std::string_view value) {
  if (value == "randomized") {
    return RefreshMode::Randomized;
  }
  if (value == "exact") {
    return RefreshMode::ExactSVD;
  }
  if (value == "pinned") {
    return RefreshMode::Pinned;
  }
  throw ConfigError("refresh_mode must be randomized, exact or pinned");
}

LayerKind parse_kind(std::string_view value) {
  if (value == "linear") {
    return LayerKind::Linear;
  }
  if (value == "embedding") {
    return LayerKind::Embedding;
  }
  if (value == "nonmatrix") {
    return LayerKind::NonMatrix;
  }
  throw ConfigError("unknown layer kind '" + std::string(value) + "'");
}

}  // namespace

std::string_view to_string(RefreshMode mode) {
  switch (mode) {
    case RefreshMode::Randomized:
      return "randomized";
    case RefreshMode::ExactSVD:
      return "exact";
    case RefreshMode::Pinned:
      return "pinned";
  }
  return "unknown";
}

std::vector<LayerSpec> parse_layers(std::string_view text) {
  std::vector<LayerSpec> layers;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const std::string_view item = trim(text.substr(0, comma));
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    if (item.empty()) {
      continue;
    }
    const auto c1 = item.find(':');
    const auto c2 = item.find(':', c1 == std::string_view::npos ? c1 : c1 + 1);
    if (c1 == std::string_view::npos || c2 == std::string_view::npos) {
      throw ConfigError("layer must look like name:kind:MxN, got '" + std::string(item) + "'");
    }
    const std::string_view shape = item.substr(c2 + 1);
    const auto x = shape.find('x');
    if (x == std::string_view::npos) {
      throw ConfigError("layer shape must be MxN, got '" + std::string(shape) + "'");
    }
    LayerSpec layer;
    layer.name = std::string(item.substr(0, c1));
    layer.kind = parse_kind(item.substr(c1 + 1, c2 - c1 - 1));
    layer.rows = parse_count("layers", shape.substr(0, x));
    layer.cols = parse_count("layers", shape.substr(x + 1));
    layers.push_back(std::move(layer));
  }
  return layers;
}

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  TaskSpec& task = cfg.task;
  AdamHyperparams& hp = cfg.hyperparams;

  if (key == "method") {
    const auto method = parse_method(value);
    if (!method) {
      throw ConfigError("unknown method '" + std::string(value) + "'");
    }
    cfg.method = *method;
  } else if (key == "layers") {
    task.layers = parse_layers(value);
  } else if (key == "workers") {
    task.workers = parse_count(key, value);
  } else if (key == "noise_std") {
    task.noise_std = parse_number<double>(key, value);
  } else if (key == "target_rank") {
    task.target_rank = parse_count(key, value);
  } else if (key == "minibatch") {
    task.minibatch = parse_count(key, value);
  } else if (key == "samples") {
    task.samples = parse_count(key, value);
  } else if (key == "drift") {
    task.drift = parse_number<double>(key, value);
  } else if (key == "orthonormal_design") {
    task.orthonormal_design = parse_bool(key, value);
  } else if (key == "init_scale") {
    task.init_scale = parse_number<double>(key, value);
  } else if (key == "seed_data") {
    task.data_seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "seed_omega") {
    cfg.seed_omega = parse_number<std::uint64_t>(key, value);
  } else if (key == "embedding_vocab") {
    cfg.embedding.vocab = parse_count(key, value);
  } else if (key == "embedding_dim") {
    cfg.embedding.dim = parse_count(key, value);
  } else if (key == "tokens_per_batch") {
    cfg.embedding.tokens_per_batch = parse_count(key, value);
  } else if (key == "zipf_exponent") {
    cfg.embedding.zipf_exponent = parse_number<double>(key, value);
  } else if (key == "rank") {
    cfg.rank = parse_count(key, value);
  } else if (key == "rank_emb") {
    cfg.rank_emb = parse_count(key, value);
  } else if (key == "refresh_k") {
    cfg.refresh_k = parse_count(key, value);
  } else if (key == "refresh_k_emb") {
    cfg.refresh_k_emb = parse_count(key, value);
  } else if (key == "oversampling") {
    cfg.oversampling = parse_count(key, value);
  } else if (key == "power_iters") {
    cfg.power_iters = parse_count(key, value);
  } else if (key == "refresh_mode") {
    cfg.refresh_mode = parse_refresh_mode(value);
  } else if (key == "reorthonormalize_qbar") {
    cfg.reorthonormalize_qbar = parse_bool(key, value);
  } else if (key == "realign_moments") {
    cfg.realign_moments = parse_bool(key, value);
  } else if (key == "lr") {
    hp.eta = parse_number<double>(key, value);
  } else if (key == "weight_decay") {
    hp.lambda = parse_number<double>(key, value);
  } else if (key == "beta1") {
    hp.beta1 = parse_number<double>(key, value);
  } else if (key == "beta2") {
    hp.beta2 = parse_number<double>(key, value);
  } else if (key == "epsilon") {
    hp.epsilon = parse_number<double>(key, value);
  } else if (key == "scale") {
    hp.scale = parse_number<double>(key, value);
  } else if (key == "lr_schedule") {
    if (value == "constant") {
      cfg.lr_schedule = LrSchedule::Constant;
    } else if (value == "cosine") {
      cfg.lr_schedule = LrSchedule::Cosine;
    } else {
      throw ConfigError("lr_schedule must be constant or cosine");
    }
  } else if (key == "sgd_beta") {
    cfg.sgd_beta = parse_number<double>(key, value);
  } else if (key == "steps") {
    cfg.total_steps = parse_number<std::uint64_t>(key, value);
  } else if (key == "dtype_bytes") {
    cfg.dtype_bytes = parse_number<std::uint64_t>(key, value);
  } else if (key == "threads") {
    cfg.threads = parse_count(key, value);
  } else if (key == "diagnostics") {
    cfg.diagnostics = parse_bool(key, value);
  } else if (key == "out") {
    cfg.out_dir = std::string(value);
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

RunConfig parse_config(std::string_view text, RunConfig base) {
  int line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    const std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.empty() || line.front() == '#') {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    apply_setting(base, line.substr(0, eq), line.substr(eq + 1));
  }
  return base;
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot read config file " + path);
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), std::move(base));
}

std::string to_config_text(const RunConfig& cfg) {
  std::ostringstream os;
  os << std::setprecision(17) << std::boolalpha;
  const auto& task = cfg.task;
  const auto& hp = cfg.hyperparams;
  os << "method = " << to_string(cfg.method) << '\n';
  os << "layers = ";
  for (std::size_t i = 0; i < task.layers.size(); ++i) {
    const auto& l = task.layers[i];
    os << (i ? "," : "") << l.name << ':' << to_string(l.kind) << ':' << l.rows << 'x' << l.cols;
  }
  os << '\n';
  os << "workers = " << task.workers << '\n'
     << "noise_std = " << task.noise_std << '\n'
     << "target_rank = " << task.target_rank << '\n'
     << "minibatch = " << task.minibatch << '\n'
     << "samples = " << task.samples << '\n'
     << "drift = " << task.drift << '\n'
     << "orthonormal_design = " << task.orthonormal_design << '\n'
     << "init_scale = " << task.init_scale << '\n'
     << "seed_data = " << task.data_seed << '\n'
     << "seed_omega = " << cfg.seed_omega << '\n'
     << "embedding_vocab = " << cfg.embedding.vocab << '\n'
     << "embedding_dim = " << cfg.embedding.dim << '\n'
     << "tokens_per_batch = " << cfg.embedding.tokens_per_batch << '\n'
     << "zipf_exponent = " << cfg.embedding.zipf_exponent << '\n'
     << "rank = " << cfg.rank << '\n'
     << "rank_emb = " << cfg.rank_emb << '\n'
     << "refresh_k = " << cfg.refresh_k << '\n'
     << "refresh_k_emb = " << cfg.refresh_k_emb << '\n'
     << "oversampling = " << cfg.oversampling << '\n'
     << "power_iters = " << cfg.power_iters << '\n'
     << "refresh_mode = " << to_string(cfg.refresh_mode) << '\n'
     << "reorthonormalize_qbar = " << cfg.reorthonormalize_qbar << '\n'
     << "realign_moments = " << cfg.realign_moments << '\n'
     << "lr = " << hp.eta << '\n'
     << "lr_schedule = " << to_string(cfg.lr_schedule) << '\n'
     << "weight_decay = " << hp.lambda << '\n'
     << "beta1 = " << hp.beta1 << '\n'
     << "beta2 = " << hp.beta2 << '\n'
     << "epsilon = " << hp.epsilon << '\n'
     << "scale = " << hp.scale << '\n'
     << "sgd_beta = " << cfg.sgd_beta << '\n'
     << "steps = " << cfg.total_steps << '\n'
     << "dtype_bytes = " << cfg.dtype_bytes << '\n'
     << "threads = " << cfg.threads << '\n'
     << "diagnostics = " << cfg.diagnostics << '\n';
  if (!cfg.out_dir.empty()) {
    os << "out = " << cfg.out_dir << '\n';
  }
  return os.str();
}

}  // namespace tsr
