// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <iostream>
#include <sstream>

#include "cli.hpp"
#include "deskmoe/errors.hpp"

namespace deskmoe::cli {

void add_common(CLI::App* sub, CommonFlags& flags) {
  sub->add_option("--seed", flags.seed, "Seed for every random choice")->capture_default_str();
  sub->add_flag("--deterministic", flags.deterministic, "Single-threaded, bitwise-reproducible execution");
}

void emit(const std::optional<std::filesystem::path>& path, const std::string& text) {
  if (!path) {
    std::cout << text;
    std::cout.flush();
    return;
  }
  if (path->has_parent_path()) std::filesystem::create_directories(path->parent_path());
  std::ofstream out(*path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path->string());
  out << text;
  if (!out) throw IoError("write failed for " + path->string());
}

void emit_json(const std::optional<std::filesystem::path>& path, const nlohmann::json& j) {
  emit(path, j.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) + "\n");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

ModelConfig load_model_config(const std::filesystem::path& path) {
  const nlohmann::json j = read_json(path);
  ModelConfig c = (j.contains("model") ? j.at("model") : j).get<ModelConfig>();
  c.validate();
  return c;
}

}  // namespace deskmoe::cli
