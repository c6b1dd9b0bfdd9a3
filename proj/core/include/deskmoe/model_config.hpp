// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace deskmoe {

/// Architectural hyperparameters of the sparse MoE transformer.
struct ModelConfig {
  std::size_t num_layers = 24;
  std::size_t hidden_size = 2880;
  std::size_t moe_intermediate = 1080;
  std::size_t num_attention_heads = 32;
  std::size_t num_kv_heads = 4;
  std::size_t num_experts = 64;
  std::size_t experts_per_token = 8;
  std::size_t vocab_size = 131084;
  std::size_t context_length = 32768;
  double rope_base = 10000.0;
  /// YaRN scale factor s; 1 disables the extension.
  double yarn_factor = 1.0;
  /// Context the rotary table was trained on; the YaRN ramp is computed
  /// against it. 0 means "same as context_length".
  std::size_t rope_original_context = 0;
  double norm_eps = 1e-6;
  bool tie_embeddings = false;

  std::size_t head_dim() const { return hidden_size / num_attention_heads; }
  std::size_t group_size() const { return num_attention_heads / num_kv_heads; }
  std::size_t original_context() const { return rope_original_context == 0 ? context_length : rope_original_context; }

  /// Throws ConfigError on the first violated invariant.
  void validate() const;

  /// Stable 16-hex-digit hash of the canonical JSON form.
  std::string fingerprint() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Full-size configuration (24 layers, H=2880, m=1080, 64 experts, top-8).
ModelConfig reference_config();
/// Desk-scale configuration used by the smoke tests (2 layers, H=64, 8 experts, top-2, V=256).
ModelConfig desk_config();
/// desk_config with a vocabulary that holds the byte tokenizer and its control tokens (V=268).
ModelConfig chat_config();
/// Looks up "reference", "desk" or "chat"; throws ConfigError otherwise.
ModelConfig preset_config(const std::string& name);

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Canonical parameter name -> shape list, in a fixed order.
using ParameterShape = std::pair<std::string, std::vector<std::size_t>>;
std::vector<ParameterShape> parameter_shapes(const ModelConfig& config);

struct ParamCounts {
  std::uint64_t total = 0;
  std::uint64_t active_per_token = 0;
  std::uint64_t per_expert = 0;
  std::uint64_t embedding = 0;
  std::uint64_t attention = 0;
  std::uint64_t router = 0;
  std::uint64_t experts = 0;
  std::uint64_t norms = 0;

  double active_fraction() const { return total == 0 ? 0.0 : static_cast<double>(active_per_token) / total; }
};

/// Counts parameters from the canonical shapes without allocating tensors.
ParamCounts count_params(const ModelConfig& config);

namespace param_names {
inline constexpr const char* kEmbedding = "embed_tokens";
inline constexpr const char* kFinalNorm = "final_norm";
inline constexpr const char* kLmHead = "lm_head";
std::string layer(std::size_t l, const char* leaf);
std::string expert(std::size_t l, std::size_t e, const char* leaf);
}  // namespace param_names

}  // namespace deskmoe
