// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include "deskmoe/soup.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "deskmoe/errors.hpp"

DESKMOE_NUMERIC_BEGIN

namespace {

constexpr std::size_t kMaxMembers = 6;

void check_compatible(const ParameterStore& a, const ParameterStore& b, std::size_t index) {
  const auto& ta = a.tensors();
  const auto& tb = b.tensors();
  for (const auto& [name, t] : ta) {
    auto it = tb.find(name);
    if (it == tb.end()) {
      throw IncompatibleError("checkpoint " + std::to_string(index) + " has no tensor '" + name + "'");
    }
    if (it->second.shape() != t.shape()) {
      throw IncompatibleError("tensor '" + name + "' has shape " + shape_to_string(it->second.shape()) +
                              " in checkpoint " + std::to_string(index) + " but " + shape_to_string(t.shape()) +
                              " in checkpoint 0");
    }
  }
  for (const auto& [name, t] : tb) {
    if (!ta.count(name)) throw IncompatibleError("checkpoint 0 has no tensor '" + name + "'");
  }
  if (a.fingerprint() != b.fingerprint()) {
    throw IncompatibleError("checkpoint " + std::to_string(index) + " was built for a different config (" +
                            b.fingerprint() + " vs " + a.fingerprint() + ")");
  }
}

}  // namespace

std::string scheme_name(SoupScheme s) {
  switch (s) {
    case SoupScheme::kUniformLow:
      return "uniform-low";
    case SoupScheme::kUniformHigh:
      return "uniform-high";
    case SoupScheme::kIncreasing:
      return "increasing";
    case SoupScheme::kDecreasing:
      return "decreasing";
  }
  return "uniform-low";
}

SoupScheme parse_scheme(const std::string& s) {
  if (s == "uniform-low") return SoupScheme::kUniformLow;
  if (s == "uniform-high") return SoupScheme::kUniformHigh;
  if (s == "increasing") return SoupScheme::kIncreasing;
  if (s == "decreasing") return SoupScheme::kDecreasing;
  throw ConfigError("unknown soup scheme '" + s + "'");
}

double default_anchor_weight(SoupScheme s) { return s == SoupScheme::kUniformLow ? 0.7 : 0.3; }

std::vector<double> make_weights(SoupScheme scheme, std::size_t members, double a) {
  if (members == 0) throw ConfigError("soup needs at least one member");
  if (!(a >= 0.0 && a < 1.0)) throw ConfigError("anchor weight must be in [0, 1)");
  std::vector<double> w;
  if (a > 0.0) w.push_back(a);
  const double n = static_cast<double>(members);
  const double ramp_total = n * (n + 1.0) / 2.0;
  for (std::size_t i = 0; i < members; ++i) {
    double share = 1.0 / n;
    if (scheme == SoupScheme::kIncreasing) share = static_cast<double>(i + 1) / ramp_total;
    if (scheme == SoupScheme::kDecreasing) share = static_cast<double>(members - i) / ramp_total;
    w.push_back((1.0 - a) * share);
  }
  return w;
}

void SoupRecipe::validate() const {
  if (members.empty() || members.size() > kMaxMembers) {
    throw ConfigError("soup recipe needs 1 to " + std::to_string(kMaxMembers) + " members, got " +
                      std::to_string(members.size()));
  }
  if (anchor) {
    const double a = effective_anchor_weight();
    if (!(a > 0.0 && a < 1.0)) throw ConfigError("anchor weight must be in (0, 1)");
  } else if (anchor_weight && *anchor_weight != 0.0) {
    throw ConfigError("anchor weight given without an anchor checkpoint");
  }
}

double SoupRecipe::effective_anchor_weight() const {
  if (!anchor) return 0.0;
  return anchor_weight.value_or(default_anchor_weight(scheme));
}

std::vector<double> SoupRecipe::weights() const {
  validate();
  return make_weights(scheme, members.size(), effective_anchor_weight());
}

std::vector<std::filesystem::path> SoupRecipe::checkpoints() const {
  std::vector<std::filesystem::path> out;
  if (anchor) out.push_back(*anchor);
  out.insert(out.end(), members.begin(), members.end());
  return out;
}

SoupRecipe recipe_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  SoupRecipe r;
  try {
    if (j.contains("anchor") && !j["anchor"].is_null()) r.anchor = resolve(j["anchor"].get<std::string>());
    for (const auto& m : j.at("members")) r.members.push_back(resolve(m.get<std::string>()));
    r.scheme = parse_scheme(j.value("scheme", std::string("uniform-low")));
    if (j.contains("anchor_weight")) r.anchor_weight = j["anchor_weight"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("soup recipe: ") + e.what());
  }
  r.validate();
  return r;
}

ParameterStore soup(std::span<const ParameterStore> checkpoints, std::span<const double> weights) {
  if (checkpoints.empty()) throw ConfigError("soup needs at least one checkpoint");
  if (weights.size() != checkpoints.size()) {
    throw ConfigError("soup: " + std::to_string(weights.size()) + " weights for " + std::to_string(checkpoints.size()) +
                      " checkpoints");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("soup weights must be nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-6) throw ConfigError("soup weights sum to " + std::to_string(total) + ", not 1");
  for (std::size_t i = 1; i < checkpoints.size(); ++i) check_compatible(checkpoints[0], checkpoints[i], i);

  std::map<std::string, Tensor> merged;
  std::vector<double> acc;
  for (const auto& [name, first] : checkpoints[0].tensors()) {
    acc.assign(first.numel(), 0.0);
    for (std::size_t c = 0; c < checkpoints.size(); ++c) {
      if (weights[c] == 0.0) continue;
      auto src = checkpoints[c].at(name).data();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += weights[c] * static_cast<double>(src[i]);
    }
    Tensor out(first.shape());
    auto dst = out.data();
    for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<Real>(acc[i]);
    merged.emplace(name, std::move(out));
  }
  return ParameterStore(checkpoints[0].config(), std::move(merged));
}

DESKMOE_NUMERIC_END
