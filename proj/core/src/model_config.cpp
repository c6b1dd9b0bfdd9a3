// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include "deskmoe/model_config.hpp"

#include <cstdio>

#include <nlohmann/json.hpp>

#include "deskmoe/errors.hpp"

namespace deskmoe {

namespace {

std::uint64_t numel(const std::vector<std::size_t>& shape) {
  std::uint64_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (num_layers == 0) fail("num_layers must be positive");
  if (hidden_size == 0 || moe_intermediate == 0) fail("hidden_size and moe_intermediate must be positive");
  if (num_attention_heads == 0 || num_kv_heads == 0) fail("head counts must be positive");
  if (hidden_size % num_attention_heads != 0) fail("hidden_size must be divisible by num_attention_heads");
  if (num_attention_heads % num_kv_heads != 0) fail("num_attention_heads must be divisible by num_kv_heads");
  if (head_dim() % 2 != 0) fail("head_dim must be even for rotary pairing");
  if (num_experts == 0) fail("num_experts must be positive");
  if (experts_per_token == 0 || experts_per_token > num_experts) fail("experts_per_token must lie in [1, num_experts]");
  if (vocab_size == 0) fail("vocab_size must be positive");
  if (context_length == 0) fail("context_length must be positive");
  if (!(rope_base > 1.0)) fail("rope_base must exceed 1");
  if (!(yarn_factor >= 1.0)) fail("yarn_factor must be >= 1");
  if (!(norm_eps > 0.0)) fail("norm_eps must be positive");
}

std::string ModelConfig::fingerprint() const {
  nlohmann::json j = *this;
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

ModelConfig reference_config() { return ModelConfig{}; }

ModelConfig desk_config() {
  ModelConfig c;
  c.num_layers = 2;
  c.hidden_size = 64;
  c.moe_intermediate = 64;
  c.num_attention_heads = 4;
  c.num_kv_heads = 2;
  c.num_experts = 8;
  c.experts_per_token = 2;
  c.vocab_size = 256;
  c.context_length = 256;
  return c;
}

ModelConfig chat_config() {
  ModelConfig c = desk_config();
  c.vocab_size = 268;
  return c;
}

ModelConfig preset_config(const std::string& name) {
  if (name == "reference") return reference_config();
  if (name == "desk") return desk_config();
  if (name == "chat") return chat_config();
  throw ConfigError("unknown config preset '" + name + "'");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"num_layers", c.num_layers},
                     {"hidden_size", c.hidden_size},
                     {"moe_intermediate", c.moe_intermediate},
                     {"num_attention_heads", c.num_attention_heads},
                     {"num_kv_heads", c.num_kv_heads},
                     {"num_experts", c.num_experts},
                     {"experts_per_token", c.experts_per_token},
                     {"vocab_size", c.vocab_size},
                     {"context_length", c.context_length},
                     {"rope_base", c.rope_base},
                     {"yarn_factor", c.yarn_factor},
                     {"rope_original_context", c.rope_original_context},
                     {"norm_eps", c.norm_eps},
                     {"tie_embeddings", c.tie_embeddings}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.num_layers = j.value("num_layers", d.num_layers);
  c.hidden_size = j.value("hidden_size", d.hidden_size);
  c.moe_intermediate = j.value("moe_intermediate", d.moe_intermediate);
  c.num_attention_heads = j.value("num_attention_heads", d.num_attention_heads);
  c.num_kv_heads = j.value("num_kv_heads", d.num_kv_heads);
  c.num_experts = j.value("num_experts", d.num_experts);
  c.experts_per_token = j.value("experts_per_token", d.experts_per_token);
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.context_length = j.value("context_length", d.context_length);
  c.rope_base = j.value("rope_base", d.rope_base);
  c.yarn_factor = j.value("yarn_factor", d.yarn_factor);
  c.rope_original_context = j.value("rope_original_context", d.rope_original_context);
  c.norm_eps = j.value("norm_eps", d.norm_eps);
  c.tie_embeddings = j.value("tie_embeddings", d.tie_embeddings);
}

namespace param_names {

std::string layer(std::size_t l, const char* leaf) { return "layers." + std::to_string(l) + "." + leaf; }

std::string expert(std::size_t l, std::size_t e, const char* leaf) {
  return "layers." + std::to_string(l) + ".moe.experts." + std::to_string(e) + "." + leaf;
}

}  // namespace param_names

std::vector<ParameterShape> parameter_shapes(const ModelConfig& config) {
  config.validate();
  const std::size_t h = config.hidden_size;
  const std::size_t q_width = config.num_attention_heads * config.head_dim();
  const std::size_t kv_width = config.num_kv_heads * config.head_dim();

  std::vector<ParameterShape> shapes;
  shapes.emplace_back(param_names::kEmbedding, std::vector<std::size_t>{config.vocab_size, h});
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    shapes.emplace_back(param_names::layer(l, "attn_norm"), std::vector<std::size_t>{h});
    shapes.emplace_back(param_names::layer(l, "attn.q_proj"), std::vector<std::size_t>{h, q_width});
    shapes.emplace_back(param_names::layer(l, "attn.k_proj"), std::vector<std::size_t>{h, kv_width});
    shapes.emplace_back(param_names::layer(l, "attn.v_proj"), std::vector<std::size_t>{h, kv_width});
    shapes.emplace_back(param_names::layer(l, "attn.o_proj"), std::vector<std::size_t>{q_width, h});
    shapes.emplace_back(param_names::layer(l, "mlp_norm"), std::vector<std::size_t>{h});
    shapes.emplace_back(param_names::layer(l, "moe.router"), std::vector<std::size_t>{h, config.num_experts});
    for (std::size_t e = 0; e < config.num_experts; ++e) {
      shapes.emplace_back(param_names::expert(l, e, "gate_proj"), std::vector<std::size_t>{h, config.moe_intermediate});
      shapes.emplace_back(param_names::expert(l, e, "up_proj"), std::vector<std::size_t>{h, config.moe_intermediate});
      shapes.emplace_back(param_names::expert(l, e, "down_proj"), std::vector<std::size_t>{config.moe_intermediate, h});
    }
  }
  shapes.emplace_back(param_names::kFinalNorm, std::vector<std::size_t>{h});
  if (!config.tie_embeddings) {
    shapes.emplace_back(param_names::kLmHead, std::vector<std::size_t>{h, config.vocab_size});
  }
  return shapes;
}

ParamCounts count_params(const ModelConfig& config) {
  ParamCounts counts;
  counts.per_expert = 3ULL * config.hidden_size * config.moe_intermediate;
  for (const auto& [name, shape] : parameter_shapes(config)) {
    const std::uint64_t n = numel(shape);
    counts.total += n;
    if (name == param_names::kEmbedding || name == param_names::kLmHead) {
      counts.embedding += n;
    } else if (name.find(".attn.") != std::string::npos) {
      counts.attention += n;
    } else if (name.find(".moe.router") != std::string::npos) {
      counts.router += n;
    } else if (name.find(".moe.experts.") != std::string::npos) {
      counts.experts += n;
    } else {
      counts.norms += n;
    }
  }
  const std::uint64_t inactive =
      static_cast<std::uint64_t>(config.num_layers) * (config.num_experts - config.experts_per_token) * counts.per_expert;
  counts.active_per_token = counts.total - inactive;
  return counts;
}

}  // namespace deskmoe
