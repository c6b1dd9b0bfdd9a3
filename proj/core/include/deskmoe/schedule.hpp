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

enum class LrKind {
  /// Linear start -> peak over warmup_steps, then linear peak -> end.
  kWarmupDecay,
  /// start everywhere.
  kConstant,
  /// Linear start -> end over total_steps.
  kLinearDecay,
  /// Cosine start -> end over total_steps.
  kCosine,
};

struct LrSchedule {
  LrKind kind = LrKind::kConstant;
  double start = 1e-4;
  double peak = 1e-4;
  double end = 1e-4;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 1;
};

/// Piecewise-constant integer schedule: (first step, value) pairs starting at step 0.
struct StepSchedule {
  std::vector<std::pair<std::size_t, std::size_t>> points{{0, 1}};

  std::size_t at(std::size_t step) const;
};

struct StageSpec {
  std::string name;
  LrSchedule lr;
  StepSchedule global_batch;
  StepSchedule grad_accum;
  double aux_coefficient = 1e-2;
  std::size_t sequence_length = 4096;
  std::uint64_t token_budget = 0;

  /// Throws ConfigError when a learning rate is not positive or breakpoints
  /// are not strictly increasing from step 0.
  void validate() const;
  std::size_t total_steps() const { return lr.total_steps; }
};

/// Learning rate at `step`; steps past the end clamp to the final value.
double lr_at(const LrSchedule& lr, std::size_t step);
inline double lr_at(const StageSpec& spec, std::size_t step) { return lr_at(spec.lr, step); }

namespace stages {
/// Warmup 1.89e-7 -> 1.2e-4 over 19,076 steps, linear decay to 1e-4 at 75,776.
StageSpec pretrain_stage1();
/// Constant 1e-4 for 182,212 steps.
StageSpec pretrain_stage2();
/// Linear 1e-4 -> 4.52e-10 over 63,578 steps.
StageSpec pretrain_stage3();
/// Cosine 2e-5 -> 2e-6.
StageSpec sft(std::size_t total_steps);
/// Cosine 5e-6 -> 1% of the initial rate.
StageSpec preference(std::size_t total_steps);
/// Small constant-rate stage for desk-scale runs.
StageSpec desk(std::size_t total_steps, double lr = 3e-3, double aux_coefficient = 1e-2);

StageSpec by_name(const std::string& name, std::size_t total_steps = 1000);
}  // namespace stages

std::string lr_kind_name(LrKind k);
LrKind parse_lr_kind(const std::string& s);

void to_json(nlohmann::json& j, const StageSpec& s);
void from_json(const nlohmann::json& j, StageSpec& s);

}  // namespace deskmoe
