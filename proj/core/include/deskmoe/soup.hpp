// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "deskmoe/parameter_store.hpp"

DESKMOE_NUMERIC_BEGIN

enum class SoupScheme { kUniformLow, kUniformHigh, kIncreasing, kDecreasing };

std::string scheme_name(SoupScheme s);
SoupScheme parse_scheme(const std::string& s);
/// 0.7 for uniform-low, 0.3 for every other scheme.
double default_anchor_weight(SoupScheme s);

/// Weights for an optional anchor followed by `members` checkpoints. With
/// anchor weight a > 0 the anchor comes first and the members share 1 - a;
/// a == 0 means no anchor. Uniform schemes split equally; increasing gives
/// member i (1-based) a share proportional to i, decreasing the reverse.
/// Throws ConfigError when a is outside [0, 1) or members is 0.
std::vector<double> make_weights(SoupScheme scheme, std::size_t members, double anchor_weight);

struct SoupRecipe {
  std::optional<std::filesystem::path> anchor;
  std::vector<std::filesystem::path> members;
  SoupScheme scheme = SoupScheme::kUniformLow;
  std::optional<double> anchor_weight;

  /// Between 1 and 6 members; an anchor needs a weight in (0, 1).
  void validate() const;
  double effective_anchor_weight() const;
  std::vector<double> weights() const;
  /// Anchor first when present, then members in order.
  std::vector<std::filesystem::path> checkpoints() const;
};

/// {"anchor"?: path, "members": [paths], "scheme": name, "anchor_weight"?: a}.
/// Relative paths resolve against `base_dir`.
SoupRecipe recipe_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

/// Elementwise convex combination, accumulated in double. Throws
/// IncompatibleError naming the first tensor that differs in name or shape,
/// and ConfigError unless the weights are nonnegative and sum to 1 within 1e-6.
ParameterStore soup(std::span<const ParameterStore> checkpoints, std::span<const double> weights);

DESKMOE_NUMERIC_END
