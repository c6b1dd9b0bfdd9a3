// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include <memory>

#include "cli.hpp"
#include "deskmoe/metrics.hpp"

namespace deskmoe::cli {

namespace {

nlohmann::json table_json(const ScoreTable& t) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t m = 0; m < t.num_models(); ++m) {
    nlohmann::json row = nlohmann::json::object();
    for (std::size_t b = 0; b < t.num_benchmarks(); ++b) {
      const auto v = t.at(m, b);
      row[t.benchmarks()[b]] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    }
    j[t.models()[m]] = std::move(row);
  }
  return j;
}

}  // namespace

void add_eval_metrics(CLI::App& app, CommonFlags& flags, Action& action) {
  struct Opts {
    std::filesystem::path scores;
    std::optional<std::filesystem::path> metadata;
    std::optional<std::filesystem::path> modes;
    std::optional<std::filesystem::path> out;
    std::optional<std::filesystem::path> plot;
    std::optional<std::filesystem::path> normalized;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* sub = app.add_subcommand("eval-metrics", "Normalise benchmark scores and compute efficiency metrics");
  sub->add_option("--scores", o->scores, "Score table CSV")->required()->check(CLI::ExistingFile);
  sub->add_option("--metadata", o->metadata, "Sidecar JSON with training tokens and active parameters")
      ->check(CLI::ExistingFile);
  sub->add_option("--modes", o->modes, "Reasoning-mode statistics CSV")->check(CLI::ExistingFile);
  sub->add_option("--out", o->out, "Report (JSON); stdout when omitted");
  sub->add_option("--plot", o->plot, "Efficiency plot data (CSV)");
  sub->add_option("--normalized", o->normalized, "Normalised score table (CSV)");
  add_common(sub, flags);
  sub->callback([o, &flags, &action] {
    action = [o, &flags] {
      const std::filesystem::path* sidecar = o->metadata ? &*o->metadata : nullptr;
      const ScoreTable table = ScoreTable::load(o->scores, sidecar);
      const ScoreTable norm = normalize(table);
      const std::vector<EfficiencyRow> rows = efficiency_report(table);

      nlohmann::json j = {{"normalized", table_json(norm)}, {"efficiency", rows}};
      if (o->modes) j["reasoning_tradeoff"] = reasoning_tradeoff(ModeStats::parse_csv(read_text(*o->modes)));
      j.update(flags.stamp());
      if (o->plot) emit(o->plot, efficiency_plot_csv(rows));
      if (o->normalized) emit(o->normalized, norm.to_csv());
      emit_json(o->out, j);
      return static_cast<int>(kOk);
    };
  });
}

void add_flops_report(CLI::App& app, CommonFlags& flags, Action& action) {
  struct Opts {
    std::filesystem::path phases;
    std::optional<std::filesystem::path> out;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* sub = app.add_subcommand("flops-report", "Training compute from GPU hours and utilisation");
  sub->add_option("--phases", o->phases, "Phases JSON")->required()->check(CLI::ExistingFile);
  sub->add_option("--out", o->out, "Report (JSON); stdout when omitted");
  add_common(sub, flags);
  sub->callback([o, &flags, &action] {
    action = [o, &flags] {
      const auto phases = phases_from_json(read_json(o->phases));
      nlohmann::json j = flops_account(phases);
      j.update(flags.stamp());
      emit_json(o->out, j);
      return static_cast<int>(kOk);
    };
  });
}

}  // namespace deskmoe::cli
