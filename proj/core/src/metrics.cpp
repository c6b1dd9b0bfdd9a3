// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include "deskmoe/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "deskmoe/errors.hpp"

namespace deskmoe {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_number(std::string_view cell, const std::string& where) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw InputError(where + ": '" + std::string(cell) + "' is not a number");
  }
  return v;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    if (!trim(line).empty()) out.push_back(line);
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
  return out;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + " must be positive");
}

}  // namespace

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  out.emplace_back(trim(cell));
  return out;
}

ScoreTable::ScoreTable(std::vector<std::string> models, std::vector<std::string> benchmarks)
    : models_(std::move(models)),
      benchmarks_(std::move(benchmarks)),
      scores_(models_.size() * benchmarks_.size()),
      metadata_(models_.size()) {}

void ScoreTable::set(std::size_t m, std::size_t b, std::optional<double> score) {
  if (m >= models_.size() || b >= benchmarks_.size()) throw DimensionError("score index out of range");
  if (score && (!std::isfinite(*score) || *score < 0.0 || *score > 100.0)) {
    throw InputError("score " + std::to_string(*score) + " for " + models_[m] + "/" + benchmarks_[b] +
                     " is outside [0, 100]");
  }
  scores_[m * benchmarks_.size() + b] = score;
}

std::span<const std::optional<double>> ScoreTable::row(std::size_t m) const {
  return std::span<const std::optional<double>>(scores_).subspan(m * benchmarks_.size(), benchmarks_.size());
}

std::size_t ScoreTable::model_index(std::string_view name) const {
  const auto it = std::find(models_.begin(), models_.end(), name);
  if (it == models_.end()) throw InputError("unknown model '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - models_.begin());
}

std::size_t ScoreTable::benchmark_index(std::string_view name) const {
  const auto it = std::find(benchmarks_.begin(), benchmarks_.end(), name);
  if (it == benchmarks_.end()) throw InputError("unknown benchmark '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - benchmarks_.begin());
}

ScoreTable ScoreTable::parse_csv(std::string_view csv) {
  const auto lines = lines_of(csv);
  if (lines.empty()) throw InputError("score table is empty");
  std::vector<std::string> header = split_csv_line(lines[0]);
  if (header.size() < 2) throw InputError("score table needs at least one benchmark column");
  std::vector<std::string> benchmarks(header.begin() + 1, header.end());

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> models;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto cells = split_csv_line(lines[i]);
    if (cells.size() != header.size()) {
      throw InputError("score table line " + std::to_string(i + 1) + ": expected " + std::to_string(header.size()) +
                       " cells, found " + std::to_string(cells.size()));
    }
    models.push_back(cells[0]);
    rows.push_back(std::move(cells));
  }

  ScoreTable t(std::move(models), std::move(benchmarks));
  for (std::size_t m = 0; m < rows.size(); ++m) {
    for (std::size_t b = 0; b < t.num_benchmarks(); ++b) {
      const std::string& cell = rows[m][b + 1];
      if (cell.empty() || cell == "--" || cell == "-") continue;
      t.set(m, b, parse_number(cell, "score table line " + std::to_string(m + 2)));
    }
  }
  return t;
}

void ScoreTable::apply_metadata(const nlohmann::json& sidecar) {
  const nlohmann::json& models = sidecar.contains("models") ? sidecar.at("models") : sidecar;
  for (std::size_t m = 0; m < models_.size(); ++m) {
    if (!models.contains(models_[m])) continue;
    const nlohmann::json& meta = models.at(models_[m]);
    if (meta.contains("training_tokens")) metadata_[m].training_tokens = meta["training_tokens"].get<double>();
    if (meta.contains("active_params")) metadata_[m].active_params = meta["active_params"].get<double>();
  }
}

ScoreTable ScoreTable::load(const std::filesystem::path& csv, const std::filesystem::path* sidecar) {
  ScoreTable t = parse_csv(read_file(csv));
  if (sidecar) {
    try {
      t.apply_metadata(nlohmann::json::parse(read_file(*sidecar)));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(sidecar->string() + ": " + e.what());
    }
  }
  return t;
}

std::string ScoreTable::to_csv(int precision) const {
  std::ostringstream out;
  out << "model";
  for (const auto& b : benchmarks_) out << ',' << b;
  out << '\n' << std::fixed << std::setprecision(precision);
  for (std::size_t m = 0; m < models_.size(); ++m) {
    out << models_[m];
    for (std::size_t b = 0; b < benchmarks_.size(); ++b) {
      out << ',';
      if (auto v = at(m, b)) {
        out << *v;
      } else {
        out << "--";
      }
    }
    out << '\n';
  }
  return out.str();
}

ScoreTable normalize(const ScoreTable& table) {
  ScoreTable out(table.models(), table.benchmarks());
  for (std::size_t m = 0; m < table.num_models(); ++m) out.metadata(m) = table.metadata(m);
  for (std::size_t b = 0; b < table.num_benchmarks(); ++b) {
    std::optional<double> best;
    for (std::size_t m = 0; m < table.num_models(); ++m) {
      if (auto v = table.at(m, b); v && (!best || *v > *best)) best = v;
    }
    if (!best) throw InputError("benchmark '" + table.benchmarks()[b] + "' has no valid scores");
    if (*best <= 0.0) throw InputError("benchmark '" + table.benchmarks()[b] + "' has no positive score");
    for (std::size_t m = 0; m < table.num_models(); ++m) {
      if (auto v = table.at(m, b)) out.set(m, b, *v == *best ? 100.0 : *v / *best * 100.0);
    }
  }
  return out;
}

double mean_kpi(std::span<const std::optional<double>> row) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : row) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) throw InputError("mean KPI needs at least one valid entry");
  return sum / static_cast<double>(n);
}

double training_efficiency(double mean_kpi, double training_tokens) {
  positive(training_tokens, "training tokens");
  return mean_kpi / (training_tokens / 1e12);
}

double inference_efficiency(double mean_kpi, double active_params) {
  positive(active_params, "active parameters");
  return mean_kpi / (active_params / 1e9);
}

std::vector<EfficiencyRow> efficiency_report(const ScoreTable& table) {
  const ScoreTable norm = normalize(table);
  std::vector<EfficiencyRow> out;
  for (std::size_t m = 0; m < norm.num_models(); ++m) {
    EfficiencyRow r;
    r.model = norm.models()[m];
    const auto row = norm.row(m);
    r.benchmarks_used = static_cast<std::size_t>(std::count_if(row.begin(), row.end(), [](const auto& v) { return v.has_value(); }));
    r.mean_kpi = mean_kpi(row);
    const ModelMetadata& meta = norm.metadata(m);
    r.training_tokens = meta.training_tokens;
    r.active_params = meta.active_params;
    if (meta.training_tokens) {
      r.training_efficiency = training_efficiency(r.mean_kpi, *meta.training_tokens);
      r.training_efficiency_raw = r.mean_kpi / *meta.training_tokens;
    }
    if (meta.active_params) {
      r.inference_efficiency = inference_efficiency(r.mean_kpi, *meta.active_params);
      r.inference_efficiency_raw = r.mean_kpi / *meta.active_params;
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string efficiency_plot_csv(std::span<const EfficiencyRow> rows) {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "model,mean_kpi,training_efficiency_per_T_tokens,inference_efficiency_per_B_active_params\n";
  for (const EfficiencyRow& r : rows) {
    if (!r.training_efficiency || !r.inference_efficiency) continue;
    out << r.model << ',' << r.mean_kpi << ',' << *r.training_efficiency << ',' << *r.inference_efficiency << '\n';
  }
  return out.str();
}

void ComputePhase::validate() const {
  if (!(gpu_hours > 0.0) || !std::isfinite(gpu_hours)) throw ConfigError("phase '" + name + "': gpu_hours must be positive");
  if (!(utilization > 0.0 && utilization <= 1.0)) throw ConfigError("phase '" + name + "': utilization must be in (0, 1]");
  if (!(peak_tflops > 0.0) || !std::isfinite(peak_tflops)) throw ConfigError("phase '" + name + "': peak must be positive");
}

double ComputePhase::flops() const { return peak_tflops * 1e12 * utilization * gpu_hours * 3600.0; }

FlopsAccount flops_account(std::span<const ComputePhase> phases) {
  FlopsAccount a;
  for (const ComputePhase& p : phases) {
    p.validate();
    const double f = p.flops();
    a.phases.emplace_back(p.name, f);
    a.total += f;
  }
  a.gpai_systemic_risk = a.total >= kGpaiThresholdFlops;
  return a;
}

std::vector<ComputePhase> phases_from_json(const nlohmann::json& j) {
  const nlohmann::json& list = j.is_array() ? j : j.at("phases");
  std::vector<ComputePhase> out;
  try {
    for (const auto& p : list) {
      ComputePhase c;
      c.name = p.value("name", std::string("phase"));
      c.gpu_hours = p.at("gpu_hours").get<double>();
      c.utilization = p.at("utilization").get<double>();
      c.peak_tflops = p.value("peak_tflops", 312.0);
      c.validate();
      out.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("compute phases: ") + e.what());
  }
  return out;
}

void ModeStats::validate() const {
  for (const ModeEntry& e : entries) {
    if (!(e.full_tokens > 0.0) || !(e.turbo_tokens > 0.0)) {
      throw InputError("benchmark '" + e.benchmark + "': token counts must be positive");
    }
  }
}

ModeStats ModeStats::parse_csv(std::string_view csv) {
  const auto lines = lines_of(csv);
  if (lines.empty()) throw InputError("mode statistics are empty");
  const auto header = split_csv_line(lines[0]);
  const std::vector<std::string> expected{"benchmark", "full_score", "turbo_score", "full_tokens", "turbo_tokens"};
  if (header != expected) throw InputError("mode statistics header must be benchmark,full_score,turbo_score,full_tokens,turbo_tokens");
  ModeStats s;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split_csv_line(lines[i]);
    const std::string where = "mode statistics line " + std::to_string(i + 1);
    if (cells.size() != expected.size()) throw InputError(where + ": wrong number of cells");
    s.entries.push_back({cells[0], parse_number(cells[1], where), parse_number(cells[2], where),
                         parse_number(cells[3], where), parse_number(cells[4], where)});
  }
  s.validate();
  return s;
}

std::vector<Tradeoff> reasoning_tradeoff(const ModeStats& stats) {
  stats.validate();
  std::vector<Tradeoff> out;
  for (const ModeEntry& e : stats.entries) {
    out.push_back({e.benchmark, e.full_score - e.turbo_score, (e.full_tokens - e.turbo_tokens) / e.full_tokens * 100.0});
  }
  return out;
}

void to_json(nlohmann::json& j, const EfficiencyRow& r) {
  j = {{"model", r.model}, {"mean_kpi", r.mean_kpi}, {"benchmarks_used", r.benchmarks_used}};
  auto put = [&j](const char* key, const std::optional<double>& v) {
    j[key] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  put("training_tokens", r.training_tokens);
  put("active_params", r.active_params);
  put("training_efficiency_per_T_tokens", r.training_efficiency);
  put("inference_efficiency_per_B_active_params", r.inference_efficiency);
  put("training_efficiency_raw", r.training_efficiency_raw);
  put("inference_efficiency_raw", r.inference_efficiency_raw);
}

void to_json(nlohmann::json& j, const FlopsAccount& a) {
  j = nlohmann::json::object();
  j["phases"] = nlohmann::json::array();
  for (const auto& [name, f] : a.phases) j["phases"].push_back({{"name", name}, {"flops", f}});
  j["total_flops"] = a.total;
  j["threshold_flops"] = kGpaiThresholdFlops;
  j["gpai_systemic_risk"] = a.gpai_systemic_risk;
}

void to_json(nlohmann::json& j, const Tradeoff& t) {
  j = {{"benchmark", t.benchmark}, {"perf_drop_points", t.perf_drop_points}, {"token_drop_percent", t.token_drop_percent}};
}

}  // namespace deskmoe
