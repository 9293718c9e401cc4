// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "tsr/harness.hpp"

namespace tsr {

// Flat `key = value` config files. Blank lines and lines starting with '#'
// are ignored. Keys mirror RunConfig fields:
//
//   method            dense_adamw | one_sided | tsr_adam | tsr_sgd
//   layers            name:kind:MxN,...   (kind: linear | embedding | nonmatrix)
//   workers, noise_std, target_rank, minibatch, samples, drift,
//   orthonormal_design, init_scale, seed_data, seed_omega
//   embedding_vocab, embedding_dim, tokens_per_batch, zipf_exponent
//   rank, rank_emb, refresh_k, refresh_k_emb, oversampling, power_iters,
//   refresh_mode (randomized | exact | pinned), reorthonormalize_qbar,
//   realign_moments
//   lr, lr_schedule (constant | cosine), weight_decay, beta1, beta2, epsilon, scale, sgd_beta
//   steps, dtype_bytes, threads, diagnostics, out

/// Sets one key. Throws ConfigError for unknown keys or malformed values.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);

/// Applies every setting in `text` on top of `base`.
RunConfig parse_config(std::string_view text, RunConfig base = {});

RunConfig load_config_file(const std::string& path, RunConfig base = {});

/// "name:kind:MxN,..." → layer list (rank/interval left for resolve_layers).
std::vector<LayerSpec> parse_layers(std::string_view text);

/// Round-trippable text form of a config.
std::string to_config_text(const RunConfig& cfg);

std::string_view to_string(RefreshMode mode);

}  // namespace tsr
