// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "deskmoe/model_config.hpp"
#include "deskmoe/tensor.hpp"
#include "deskmoe/tensor_file.hpp"

DESKMOE_NUMERIC_BEGIN

/// One checkpoint: every canonical tensor the config implies, plus the
/// config it was built for.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(ModelConfig config, std::map<std::string, Tensor> tensors);

  const ModelConfig& config() const { return config_; }
  const std::string& fingerprint() const { return fingerprint_; }

  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

  const std::map<std::string, Tensor>& tensors() const { return tensors_; }
  std::map<std::string, Tensor>& tensors() { return tensors_; }
  std::size_t num_parameters() const;

  /// Name of the lm head weight (the embedding when tied).
  const Tensor& lm_head() const;

  TensorFile to_file(nlohmann::json extra_metadata = nlohmann::json::object()) const;
  static ParameterStore from_file(const TensorFile& file);

  void save(const std::filesystem::path& path, nlohmann::json extra_metadata = nlohmann::json::object()) const;
  static ParameterStore load(const std::filesystem::path& path);

 private:
  void check_against_config() const;

  ModelConfig config_;
  std::string fingerprint_;
  std::map<std::string, Tensor> tensors_;
};

/// Deterministic initialisation: truncated normal (std 0.02, cut at 2 std)
/// for every matrix, ones for every norm gain.
ParameterStore build_model(const ModelConfig& config, std::uint64_t seed);

DESKMOE_NUMERIC_END
