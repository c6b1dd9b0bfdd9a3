// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include "deskmoe/parameter_store.hpp"

#include <random>

#include "deskmoe/errors.hpp"

DESKMOE_NUMERIC_BEGIN

namespace {

constexpr double kInitStd = 0.02;

bool is_norm(const std::string& name) {
  return name == param_names::kFinalNorm || name.ends_with("attn_norm") || name.ends_with("mlp_norm");
}

}  // namespace

ParameterStore::ParameterStore(ModelConfig config, std::map<std::string, Tensor> tensors)
    : config_(std::move(config)), fingerprint_(config_.fingerprint()), tensors_(std::move(tensors)) {
  check_against_config();
}

void ParameterStore::check_against_config() const {
  const auto shapes = parameter_shapes(config_);
  if (shapes.size() != tensors_.size()) {
    throw ConfigError("parameter store holds " + std::to_string(tensors_.size()) + " tensors, config implies " +
                      std::to_string(shapes.size()));
  }
  for (const auto& [name, shape] : shapes) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ConfigError("parameter store is missing '" + name + "'");
    if (it->second.shape() != Shape(shape.begin(), shape.end())) {
      throw DimensionError("parameter '" + name + "' has shape " + shape_to_string(it->second.shape()) +
                           ", config implies " + shape_to_string(Shape(shape.begin(), shape.end())));
    }
  }
}

const Tensor& ParameterStore::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw InputError("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParameterStore::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw InputError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterStore::num_parameters() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.numel();
  return n;
}

const Tensor& ParameterStore::lm_head() const {
  return config_.tie_embeddings ? at(param_names::kEmbedding) : at(param_names::kLmHead);
}

TensorFile ParameterStore::to_file(nlohmann::json extra_metadata) const {
  TensorFile file;
  file.metadata = std::move(extra_metadata);
  file.metadata["config"] = config_;
  file.metadata["fingerprint"] = fingerprint_;
  for (const auto& [name, t] : tensors_) {
    std::vector<float> values(t.data().begin(), t.data().end());
    file.tensors.emplace(name, StoredTensor::from_f32(t.shape(), std::move(values)));
  }
  return file;
}

ParameterStore ParameterStore::from_file(const TensorFile& file) {
  if (!file.metadata.contains("config")) throw IoError("checkpoint has no embedded model config");
  ModelConfig config = file.metadata.at("config").get<ModelConfig>();
  config.validate();
  if (file.metadata.contains("fingerprint") && file.metadata["fingerprint"].get<std::string>() != config.fingerprint()) {
    throw IoError("checkpoint fingerprint does not match its embedded config");
  }
  std::map<std::string, Tensor> tensors;
  for (const auto& [name, stored] : file.tensors) {
    if (stored.dtype != DType::kF32) throw IoError("checkpoint tensor '" + name + "' is not F32");
    std::vector<Real> values(stored.f32.begin(), stored.f32.end());
    tensors.emplace(name, Tensor(Shape(stored.shape.begin(), stored.shape.end()), std::move(values)));
  }
  return ParameterStore(std::move(config), std::move(tensors));
}

void ParameterStore::save(const std::filesystem::path& path, nlohmann::json extra_metadata) const {
  write_tensor_file(path, to_file(std::move(extra_metadata)));
}

ParameterStore ParameterStore::load(const std::filesystem::path& path) { return from_file(read_tensor_file(path)); }

ParameterStore build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto truncated = [&] {
    for (;;) {
      const double z = normal(rng);
      if (z >= -2.0 && z <= 2.0) return z * kInitStd;
    }
  };

  std::map<std::string, Tensor> tensors;
  for (const auto& [name, shape] : parameter_shapes(config)) {
    Tensor t(Shape(shape.begin(), shape.end()));
    if (is_norm(name)) {
      t.fill(Real{1});
    } else {
      for (Real& v : t.data()) v = static_cast<Real>(truncated());
    }
    tensors.emplace(name, std::move(t));
  }
  return ParameterStore(config, std::move(tensors));
}

DESKMOE_NUMERIC_END
