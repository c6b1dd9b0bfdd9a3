// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deskmoe/autograd.hpp"
#include "deskmoe/objectives.hpp"
#include "deskmoe/packing.hpp"
#include "deskmoe/parameter_store.hpp"
#include "deskmoe/schedule.hpp"

DESKMOE_NUMERIC_BEGIN

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  /// Decoupled decay, applied to matrices only.
  double weight_decay = 0.1;
  /// Global gradient-norm clip; 0 disables clipping.
  double clip_norm = 1.0;
};

struct UpdateStats {
  double grad_norm = 0.0;
  bool clipped = false;
};

/// Global L2 norm over every gradient.
double global_norm(const GradientMap& grads);

class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  const AdamWConfig& config() const { return config_; }
  std::size_t steps() const { return t_; }

  /// One update of every parameter that has a gradient.
  UpdateStats step(ParameterStore& store, const GradientMap& grads, double lr);

 private:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  AdamWConfig config_;
  std::size_t t_ = 0;
  std::map<std::string, Moments> moments_;
};

/// p -= lr * g for every parameter with a gradient.
void sgd_step(ParameterStore& store, const GradientMap& grads, double lr);

struct AccumulatedLoss {
  GradientMap grads;
  double loss = 0.0;
  double cross_entropy = 0.0;
  double aux_loss = 0.0;
  std::size_t tokens = 0;
};

/// Splits `batch` into `grad_accum` micro-batches, runs forward and backward
/// on each and sums the gradients weighted by each micro-batch's share of
/// target weight. Throws NumericError when the loss is not finite.
AccumulatedLoss accumulate_gradients(const ParameterStore& store, std::span<const PackedSequence> batch,
                                     std::size_t grad_accum, Real aux_coefficient);

struct StepMetrics {
  std::size_t step = 0;
  double loss = 0.0;
  double cross_entropy = 0.0;
  double aux_loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
  std::uint64_t tokens_seen = 0;
};

void to_json(nlohmann::json& j, const StepMetrics& m);

struct TrainOptions {
  StageSpec stage;
  AdamWConfig optimizer;
  std::uint64_t seed = 0;
  /// Checkpoints go to `checkpoint_dir/step-XXXXXX.bin` every `checkpoint_interval` steps.
  std::optional<std::filesystem::path> checkpoint_dir;
  std::size_t checkpoint_interval = 100;
  /// Appended one JSON object per step.
  std::optional<std::filesystem::path> metrics_path;
};

/// Owns the optimizer state of one run over a fixed set of packed rows.
class Trainer {
 public:
  Trainer(ParameterStore& store, TrainOptions options);

  std::size_t step() const { return step_; }
  std::uint64_t tokens_seen() const { return tokens_seen_; }
  const std::vector<std::filesystem::path>& checkpoints() const { return checkpoints_; }

  /// One optimizer update on `batch`, using the stage's learning rate,
  /// accumulation and aux coefficient at the current step.
  StepMetrics train_step(std::span<const PackedSequence> batch);

  /// Runs `steps` updates, drawing global batches from `data` in a
  /// seed-determined order that reshuffles each epoch.
  std::vector<StepMetrics> run(std::span<const PackedSequence> data, std::size_t steps);

 private:
  void write_diagnostic(const std::string& message, const GradientMap* grads) const;

  ParameterStore* store_;
  TrainOptions options_;
  AdamW optimizer_;
  std::size_t step_ = 0;
  std::uint64_t tokens_seen_ = 0;
  std::vector<std::filesystem::path> checkpoints_;
};

DESKMOE_NUMERIC_END
