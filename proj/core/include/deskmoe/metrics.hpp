// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace deskmoe {

struct ModelMetadata {
  std::optional<double> training_tokens;
  std::optional<double> active_params;
};

/// Models x benchmarks score matrix. Missing entries are nullopt.
class ScoreTable {
 public:
  ScoreTable() = default;
  ScoreTable(std::vector<std::string> models, std::vector<std::string> benchmarks);

  const std::vector<std::string>& models() const { return models_; }
  const std::vector<std::string>& benchmarks() const { return benchmarks_; }
  std::size_t num_models() const { return models_.size(); }
  std::size_t num_benchmarks() const { return benchmarks_.size(); }

  std::optional<double> at(std::size_t m, std::size_t b) const { return scores_[m * benchmarks_.size() + b]; }
  /// Throws InputError when the score is outside [0, 100] or not finite.
  void set(std::size_t m, std::size_t b, std::optional<double> score);
  std::span<const std::optional<double>> row(std::size_t m) const;

  std::size_t model_index(std::string_view name) const;
  std::size_t benchmark_index(std::string_view name) const;

  ModelMetadata& metadata(std::size_t m) { return metadata_[m]; }
  const ModelMetadata& metadata(std::size_t m) const { return metadata_[m]; }

  /// Header "model,<bench>,..."; one row per model; "--" or an empty cell marks a missing score.
  static ScoreTable parse_csv(std::string_view csv);
  /// {"models": {name: {"training_tokens": x, "active_params": y}}}. Unknown models are ignored.
  void apply_metadata(const nlohmann::json& sidecar);
  static ScoreTable load(const std::filesystem::path& csv, const std::filesystem::path* sidecar = nullptr);
  std::string to_csv(int precision = 2) const;

 private:
  std::vector<std::string> models_;
  std::vector<std::string> benchmarks_;
  std::vector<std::optional<double>> scores_;
  std::vector<ModelMetadata> metadata_;
};

/// Score / column max * 100. Missing entries stay missing; an all-missing
/// or all-zero column throws InputError.
ScoreTable normalize(const ScoreTable& table);

/// Mean over present entries; throws InputError when none are present.
double mean_kpi(std::span<const std::optional<double>> row);

/// MeanKPI per trillion training tokens.
double training_efficiency(double mean_kpi, double training_tokens);
/// MeanKPI per billion active parameters.
double inference_efficiency(double mean_kpi, double active_params);

struct EfficiencyRow {
  std::string model;
  double mean_kpi = 0.0;
  std::size_t benchmarks_used = 0;
  std::optional<double> training_tokens;
  std::optional<double> active_params;
  std::optional<double> training_efficiency;
  std::optional<double> inference_efficiency;
  std::optional<double> training_efficiency_raw;
  std::optional<double> inference_efficiency_raw;
};

/// Normalizes `table` and computes per-model efficiency. Models without
/// metadata get mean KPI only.
std::vector<EfficiencyRow> efficiency_report(const ScoreTable& table);
/// Quadrant plot data: x is training efficiency, y is inference efficiency.
std::string efficiency_plot_csv(std::span<const EfficiencyRow> rows);

struct ComputePhase {
  std::string name;
  double gpu_hours = 0.0;
  double utilization = 1.0;
  double peak_tflops = 312.0;

  void validate() const;
  double flops() const;
};

inline constexpr double kGpaiThresholdFlops = 1e25;

struct FlopsAccount {
  std::vector<std::pair<std::string, double>> phases;
  double total = 0.0;
  bool gpai_systemic_risk = false;
};

FlopsAccount flops_account(std::span<const ComputePhase> phases);
/// {"phases": [{"name", "gpu_hours", "utilization", "peak_tflops"?}]} or a bare array.
std::vector<ComputePhase> phases_from_json(const nlohmann::json& j);

struct ModeEntry {
  std::string benchmark;
  double full_score = 0.0;
  double turbo_score = 0.0;
  double full_tokens = 0.0;
  double turbo_tokens = 0.0;
};

struct ModeStats {
  std::vector<ModeEntry> entries;
  void validate() const;
  /// Columns benchmark,full_score,turbo_score,full_tokens,turbo_tokens.
  static ModeStats parse_csv(std::string_view csv);
};

struct Tradeoff {
  std::string benchmark;
  double perf_drop_points = 0.0;
  double token_drop_percent = 0.0;
};

std::vector<Tradeoff> reasoning_tradeoff(const ModeStats& stats);

void to_json(nlohmann::json& j, const EfficiencyRow& r);
void to_json(nlohmann::json& j, const FlopsAccount& a);
void to_json(nlohmann::json& j, const Tradeoff& t);

/// Splits one CSV line on commas and trims surrounding blanks; quoted fields
/// may contain commas.
std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace deskmoe
