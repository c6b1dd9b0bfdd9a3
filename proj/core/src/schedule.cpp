// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include "deskmoe/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "deskmoe/errors.hpp"

namespace deskmoe {

namespace {

// Exact at both ends: alpha 0 gives a, alpha 1 gives b.
double lerp(double a, double b, double alpha) { return a * (1.0 - alpha) + b * alpha; }

double fraction(std::size_t step, std::size_t begin, std::size_t end) {
  if (end <= begin) return 1.0;
  return std::clamp(static_cast<double>(step - std::min(step, begin)) / static_cast<double>(end - begin), 0.0, 1.0);
}

void validate_points(const StepSchedule& s, const char* what) {
  if (s.points.empty() || s.points.front().first != 0) {
    throw ConfigError(std::string(what) + " schedule must start at step 0");
  }
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    if (s.points[i].second == 0) throw ConfigError(std::string(what) + " values must be positive");
    if (i > 0 && s.points[i].first <= s.points[i - 1].first) {
      throw ConfigError(std::string(what) + " breakpoints must be strictly increasing");
    }
  }
}

nlohmann::json points_json(const StepSchedule& s) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [step, value] : s.points) arr.push_back({{"step", step}, {"value", value}});
  return arr;
}

StepSchedule points_from_json(const nlohmann::json& j) {
  StepSchedule s;
  s.points.clear();
  if (j.is_number_unsigned() || j.is_number_integer()) {
    s.points.emplace_back(0, j.get<std::size_t>());
    return s;
  }
  for (const auto& p : j) s.points.emplace_back(p.at("step").get<std::size_t>(), p.at("value").get<std::size_t>());
  return s;
}

}  // namespace

std::size_t StepSchedule::at(std::size_t step) const {
  std::size_t value = points.empty() ? 1 : points.front().second;
  for (const auto& [first, v] : points) {
    if (first > step) break;
    value = v;
  }
  return value;
}

void StageSpec::validate() const {
  for (double v : {lr.start, lr.peak, lr.end}) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("stage '" + name + "': learning rates must be positive");
  }
  if (lr.total_steps == 0) throw ConfigError("stage '" + name + "': total_steps must be positive");
  if (lr.kind == LrKind::kWarmupDecay && lr.warmup_steps > lr.total_steps) {
    throw ConfigError("stage '" + name + "': warmup longer than the stage");
  }
  validate_points(global_batch, "global batch");
  validate_points(grad_accum, "gradient accumulation");
  if (!(aux_coefficient >= 0.0)) throw ConfigError("stage '" + name + "': aux coefficient must be >= 0");
  if (sequence_length == 0) throw ConfigError("stage '" + name + "': sequence length must be positive");
}

double lr_at(const LrSchedule& lr, std::size_t step) {
  switch (lr.kind) {
    case LrKind::kConstant:
      return lr.start;
    case LrKind::kLinearDecay:
      return lerp(lr.start, lr.end, fraction(step, 0, lr.total_steps));
    case LrKind::kCosine: {
      const double a = fraction(step, 0, lr.total_steps);
      if (a >= 1.0) return lr.end;
      return lr.end + 0.5 * (lr.start - lr.end) * (1.0 + std::cos(std::numbers::pi * a));
    }
    case LrKind::kWarmupDecay:
      if (step < lr.warmup_steps) return lerp(lr.start, lr.peak, fraction(step, 0, lr.warmup_steps));
      return lerp(lr.peak, lr.end, fraction(step, lr.warmup_steps, lr.total_steps));
  }
  return lr.start;
}

namespace stages {

StageSpec pretrain_stage1() {
  StageSpec s;
  s.name = "pretrain-stage1";
  s.lr = {LrKind::kWarmupDecay, 1.89e-7, 1.2e-4, 1e-4, 19076, 75776};
  s.global_batch.points = {{0, 1024}, {19076, 2048}};
  s.grad_accum.points = {{0, 8}, {19076, 16}};
  s.aux_coefficient = 1e-2;
  s.sequence_length = 4096;
  s.token_budget = 600'000'000'000ULL;
  return s;
}

StageSpec pretrain_stage2() {
  StageSpec s;
  s.name = "pretrain-stage2";
  s.lr = {LrKind::kConstant, 1e-4, 1e-4, 1e-4, 0, 182212};
  s.global_batch.points = {{0, 2048}};
  s.grad_accum.points = {{0, 8}};
  s.aux_coefficient = 5e-3;
  s.sequence_length = 4096;
  s.token_budget = 1'500'000'000'000ULL;
  return s;
}

StageSpec pretrain_stage3() {
  StageSpec s;
  s.name = "pretrain-stage3";
  s.lr = {LrKind::kLinearDecay, 1e-4, 1e-4, 4.52e-10, 0, 63578};
  s.global_batch.points = {{0, 2048}};
  s.grad_accum.points = {{0, 8}};
  s.aux_coefficient = 1e-3;
  s.sequence_length = 4096;
  s.token_budget = 400'000'000'000ULL;
  return s;
}

StageSpec sft(std::size_t total_steps) {
  StageSpec s;
  s.name = "sft";
  s.lr = {LrKind::kCosine, 2e-5, 2e-5, 2e-6, 0, total_steps};
  s.global_batch.points = {{0, 16}};
  s.grad_accum.points = {{0, 1}};
  s.aux_coefficient = 1e-3;
  s.sequence_length = 32768;
  return s;
}

StageSpec preference(std::size_t total_steps) {
  StageSpec s;
  s.name = "preference";
  s.lr = {LrKind::kCosine, 5e-6, 5e-6, 5e-8, 0, total_steps};
  s.global_batch.points = {{0, 128}};
  s.grad_accum.points = {{0, 1}};
  s.aux_coefficient = 1e-3;
  s.sequence_length = 32768;
  return s;
}

StageSpec desk(std::size_t total_steps, double lr, double aux_coefficient) {
  StageSpec s;
  s.name = "desk";
  s.lr = {LrKind::kConstant, lr, lr, lr, 0, total_steps};
  s.global_batch.points = {{0, 8}};
  s.grad_accum.points = {{0, 1}};
  s.aux_coefficient = aux_coefficient;
  s.sequence_length = 64;
  return s;
}

StageSpec by_name(const std::string& name, std::size_t total_steps) {
  if (name == "pretrain-stage1" || name == "stage1") return pretrain_stage1();
  if (name == "pretrain-stage2" || name == "stage2") return pretrain_stage2();
  if (name == "pretrain-stage3" || name == "stage3") return pretrain_stage3();
  if (name == "sft") return sft(total_steps);
  if (name == "preference") return preference(total_steps);
  if (name == "desk") return desk(total_steps);
  throw ConfigError("unknown stage preset '" + name + "'");
}

}  // namespace stages

std::string lr_kind_name(LrKind k) {
  switch (k) {
    case LrKind::kWarmupDecay:
      return "warmup-decay";
    case LrKind::kConstant:
      return "constant";
    case LrKind::kLinearDecay:
      return "linear-decay";
    case LrKind::kCosine:
      return "cosine";
  }
  return "constant";
}

LrKind parse_lr_kind(const std::string& s) {
  if (s == "warmup-decay") return LrKind::kWarmupDecay;
  if (s == "constant") return LrKind::kConstant;
  if (s == "linear-decay") return LrKind::kLinearDecay;
  if (s == "cosine") return LrKind::kCosine;
  throw ConfigError("unknown learning-rate schedule '" + s + "'");
}

void to_json(nlohmann::json& j, const StageSpec& s) {
  j = {
      {"name", s.name},
      {"lr",
       {{"kind", lr_kind_name(s.lr.kind)},
        {"start", s.lr.start},
        {"peak", s.lr.peak},
        {"end", s.lr.end},
        {"warmup_steps", s.lr.warmup_steps},
        {"total_steps", s.lr.total_steps}}},
      {"global_batch", points_json(s.global_batch)},
      {"grad_accum", points_json(s.grad_accum)},
      {"aux_coefficient", s.aux_coefficient},
      {"sequence_length", s.sequence_length},
      {"token_budget", s.token_budget},
  };
}

void from_json(const nlohmann::json& j, StageSpec& s) {
  s = StageSpec{};
  s.name = j.value("name", std::string("stage"));
  const nlohmann::json& lr = j.at("lr");
  s.lr.kind = parse_lr_kind(lr.at("kind").get<std::string>());
  s.lr.start = lr.at("start").get<double>();
  s.lr.peak = lr.value("peak", s.lr.start);
  s.lr.end = lr.value("end", s.lr.start);
  s.lr.warmup_steps = lr.value("warmup_steps", std::size_t{0});
  s.lr.total_steps = lr.at("total_steps").get<std::size_t>();
  if (j.contains("global_batch")) s.global_batch = points_from_json(j["global_batch"]);
  if (j.contains("grad_accum")) s.grad_accum = points_from_json(j["grad_accum"]);
  s.aux_coefficient = j.value("aux_coefficient", s.aux_coefficient);
  s.sequence_length = j.value("sequence_length", s.sequence_length);
  s.token_budget = j.value("token_budget", s.token_budget);
  s.validate();
}

}  // namespace deskmoe
