// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "deskmoe/model_config.hpp"

namespace deskmoe::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

/// Flags every subcommand accepts.
struct CommonFlags {
  std::uint64_t seed = 0;
  bool deterministic = false;

  nlohmann::json stamp() const { return {{"seed", seed}, {"deterministic", deterministic}}; }
};

using Action = std::function<int()>;

/// Registers --seed and --deterministic on `sub`.
void add_common(CLI::App* sub, CommonFlags& flags);

/// Writes `text` to `path`, or to stdout when `path` is empty.
void emit(const std::optional<std::filesystem::path>& path, const std::string& text);
void emit_json(const std::optional<std::filesystem::path>& path, const nlohmann::json& j);

std::string read_text(const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

/// A bare model config or a run config holding one under "model".
ModelConfig load_model_config(const std::filesystem::path& path);

// Each registers one subcommand; the callback stores the work in `action`.
void add_init_config(CLI::App& app, CommonFlags& flags, Action& action);
void add_pack(CLI::App& app, CommonFlags& flags, Action& action);
void add_filter_corpus(CLI::App& app, CommonFlags& flags, Action& action);
void add_train(CLI::App& app, CommonFlags& flags, Action& action);
void add_generate(CLI::App& app, CommonFlags& flags, Action& action);
void add_merge_soup(CLI::App& app, CommonFlags& flags, Action& action);
void add_render_template(CLI::App& app, CommonFlags& flags, Action& action);
void add_eval_metrics(CLI::App& app, CommonFlags& flags, Action& action);
void add_flops_report(CLI::App& app, CommonFlags& flags, Action& action);
void add_perplexity(CLI::App& app, CommonFlags& flags, Action& action);

}  // namespace deskmoe::cli
