// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit when any
// criterion fails. Tolerances are pinned here and nowhere else.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "deskmoe/chat_template.hpp"
#include "deskmoe/corpus_filter.hpp"
#include "deskmoe/metrics.hpp"
#include "deskmoe/moe.hpp"
#include "deskmoe/objectives.hpp"
#include "deskmoe/ops.hpp"
#include "deskmoe/packing.hpp"
#include "deskmoe/parameter_store.hpp"
#include "deskmoe/perplexity.hpp"
#include "deskmoe/schedule.hpp"
#include "deskmoe/soup.hpp"
#include "deskmoe/trainer.hpp"
#include "deskmoe/transformer.hpp"
#include "gradient_suite.hpp"
#include "isolation_check.hpp"
#include "overfit_corpus.hpp"
#include "planted_corpus.hpp"
#include "test_util.hpp"

namespace deskmoe::acceptance {
namespace {

namespace tol {
constexpr double kRouting = 1e-6;
constexpr double kIsolationLoss = 1e-6;
constexpr double kSoupMean = 1e-6;
constexpr double kMmluPro = 0.05;
constexpr double kPretrainFlops = 0.01;
constexpr double kTotalFlops = 0.02;
constexpr double kPerplexityUniform = 1e-3;
constexpr double kPreferenceLn2 = 1e-6;
constexpr double kGradientSeconds = 120.0;
constexpr double kArchitectureSeconds = 1.0;
constexpr double kTrainingSeconds = 300.0;
constexpr double kFilterRecordsPerSecond = 5000.0;
constexpr double kOverfitCe = 0.1;
constexpr double kOverfitPerplexity = 1.2;
constexpr double kAuxLow = 1.0;
constexpr double kAuxHigh = 1.5;
constexpr std::size_t kOverfitMaxSteps = 2000;
}  // namespace tol

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

// ---------------------------------------------------------------- 1

void architecture(Outcome& o) {
  const auto t0 = Clock::now();
  ModelConfig ref = reference_config();
  const ParamCounts c = count_params(ref);
  const double secs = seconds_since(t0);
  o.require(c.per_expert == 9'331'200, "per-expert 9,331,200");
  o.require(c.total >= 15'000'000'000ULL && c.total <= 17'000'000'000ULL, "total in [15B, 17B]");
  o.require(c.active_per_token >= 2'700'000'000ULL && c.active_per_token <= 3'300'000'000ULL, "active in [2.7B, 3.3B]");
  o.require(std::abs(100.0 * c.active_fraction() - 20.27) <= 2.0, "active fraction within 2 points of 20.27%");
  o.require(secs < tol::kArchitectureSeconds, "runtime < 1 s");
  o.detail << "per-expert " << c.per_expert << ", total " << c.total / 1e9 << "B, active " << c.active_per_token / 1e9
           << "B (" << 100.0 * c.active_fraction() << "%), " << secs * 1e3 << " ms";
}

// ---------------------------------------------------------------- 2

void routing(Outcome& o) {
  std::mt19937_64 rng(2);
  std::normal_distribution<float> noise(0.0f, 0.5f);
  // Every expert receives the same load; the penalty is then N * (1/N) * sum(P) = 1.
  const std::size_t N = 8, k = 2, T = 64;
  Tensor logits({T, N});
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t e = 0; e < N; ++e) logits.at(t, e) = noise(rng);
    logits.at(t, t % N) += 10.0f;
    logits.at(t, (t + 1) % N) += 9.0f;
  }
  const double balanced = load_balance_loss(route_tokens(logits, k));
  const double uniform = load_balance_loss(route_tokens(Tensor({T, N}), k));
  o.require(std::abs(balanced - 1.0) <= tol::kRouting, "balanced load gives 1");
  o.require(std::abs(uniform - 1.0) <= tol::kRouting, "uniform probabilities give 1");

  std::uniform_real_distribution<float> u(-8.0f, 8.0f);
  double worst = 0.0;
  const std::size_t rows = 10'000;
  Tensor many({rows, N});
  for (std::size_t i = 0; i < many.numel(); ++i) many[i] = u(rng);
  const RouterDecision d = route_tokens(many, k);
  for (std::size_t t = 0; t < rows; ++t) {
    double s = 0;
    for (std::size_t j = 0; j < k; ++j) s += d.weight(t, j);
    worst = std::max(worst, std::abs(s - 1.0));
  }
  o.require(worst <= tol::kRouting, "top-k weights sum to 1");
  o.detail << "balanced " << balanced << ", uniform " << uniform << ", max |sum w - 1| over 10^4 rows " << worst;
}

// ---------------------------------------------------------------- 3

void gradients(Outcome& o) {
  const auto t0 = Clock::now();
  testing::GradCheckOptions opt = testing::f64_options();
  opt.trials = 100;
  const auto results = testing::run_gradient_suite_f64(opt);
  const double secs = seconds_since(t0);
  std::size_t checked = 0, skipped = 0, failing_ops = 0;
  double worst = 0.0;
  for (const auto& r : results) {
    checked += r.checked;
    skipped += r.skipped;
    worst = std::max(worst, r.max_error);
    if (!r.passed() || r.trials != opt.trials) {
      ++failing_ops;
      o.detail << r.op << ": " << r.first_failure << "; ";
    }
  }
  o.require(results.size() == testing::gradient_op_names().size(), "every op checked");
  o.require(failing_ops == 0, "all ops within tolerance");
  o.require(skipped * 10 <= checked + skipped, "kink skips under 10%");
  o.require(secs < tol::kGradientSeconds, "runtime < 2 min");
  o.detail << results.size() << " ops x " << opt.trials << " trials, " << checked << " coordinates, " << skipped
           << " kink skips, max rel error " << worst << " (tol " << opt.tolerance << "), " << secs << " s";
}

// ---------------------------------------------------------------- 4

// Logits are compared in the production 32-bit build. The loss identity is
// checked in the 64-bit build, where summation order cannot hide a real gap;
// the 32-bit gap is reported alongside.
void isolation(Outcome& o) {
  const IsolationStats f32 = isolation_check_f32(50, 4);
  const IsolationStats f64 = isolation_check_f64(50, 4);
  o.require(f32.packings == 50 && f32.logits_differing == 0, "packed logits equal unpacked bit for bit");
  o.require(f64.logits_differing == 0, "64-bit logits equal as well");
  o.require(f64.max_loss_gap <= tol::kIsolationLoss, "masked loss equals weighted per-example mean");
  o.detail << f32.packings << " packings, " << f32.logits_compared << " logits compared, " << f32.logits_differing
           << " differ; max loss gap " << f64.max_loss_gap << " (64-bit), " << f32.max_loss_gap << " (32-bit)";
}

// ---------------------------------------------------------------- 5

void templates(Outcome& o) {
  struct Case {
    const char* file;
    const char* mode;
    const char* reasoning;
    const char* answer;
  };
  const Case cases[] = {
      {"c1_reasoning_en.txt", "reasoning_en", "Step-by-step reasoning in English...", "Final answer."},
      {"c2_reasoning_ita.txt", "reasoning_ita", "Ragionamento passo per passo in italiano...", "Risposta finale."},
      {"c3_turbo_en.txt", "reasoning_en_turbo", "Compressed reasoning trace in English...", "Final answer."},
      {"c4_turbo_ita.txt", "reasoning_ita_turbo", "Ragionamento sintetico in italiano...", "Risposta finale."},
      {"c5_no_reasoning.txt", "none", "", "Final answer only."},
  };
  std::size_t ok = 0;
  for (const Case& c : cases) {
    const std::string want = testing::slurp(testing::fixture(std::string("templates/") + c.file));
    const ReasoningConfig rc = parse_mode(c.mode);
    const std::string rendered = render_assistant(rc, AssistantBody{c.reasoning, c.answer});
    const ParsedOutput p = parse(want);
    const bool good = !want.empty() && rendered == want && p.mode == rc && p.body == AssistantBody{c.reasoning, c.answer} &&
                      render_assistant(p.mode, p.body) == want;
    o.require(good, c.file);
    ok += good;
  }
  o.detail << ok << "/5 configurations round-trip byte-exactly";
}

// ---------------------------------------------------------------- 6

void schedules(Outcome& o) {
  const StageSpec s1 = stages::pretrain_stage1(), s2 = stages::pretrain_stage2(), s3 = stages::pretrain_stage3();
  const double a = lr_at(s1, 0), b = lr_at(s1, 19076), c = lr_at(s2, 91106), d = lr_at(s3, s3.total_steps());
  o.require(a == 1.89e-7, "stage-1 step 0");
  o.require(b == 1.2e-4, "warmup end");
  o.require(c == 1.0e-4, "stage 2");
  o.require(d == 4.52e-10, "stage-3 end");
  o.detail << a << ", " << b << ", " << c << ", " << d;
}

// ---------------------------------------------------------------- 7

void souping(Outcome& o) {
  ModelConfig cfg = desk_config();
  const ParameterStore a = build_model(cfg, 1), b = build_model(cfg, 2);
  const std::vector<double> w4 = make_weights(SoupScheme::kUniformLow, 3, default_anchor_weight(SoupScheme::kUniformLow));
  const std::vector<ParameterStore> same{a, a, a, a};
  const ParameterStore fixed = soup(same, w4);
  bool exact = true;
  for (const auto& [name, t] : a.tensors()) exact = exact && fixed.at(name) == t;
  const std::vector<ParameterStore> two{a, b};
  const std::vector<double> half{0.5, 0.5};
  const ParameterStore mean = soup(two, half);
  double worst = 0.0;
  for (const auto& [name, t] : mean.tensors())
    for (std::size_t i = 0; i < t.numel(); ++i)
      worst = std::max(worst, std::abs(double(t[i]) - (double(a.at(name)[i]) + double(b.at(name)[i])) / 2));
  const bool weights_ok = w4.size() == 4 && std::abs(w4[0] - 0.7) < 1e-12 && std::abs(w4[1] - 0.1) < 1e-12 &&
                          std::abs(w4[2] - 0.1) < 1e-12 && std::abs(w4[3] - 0.1) < 1e-12;
  o.require(exact, "fixed point exact");
  o.require(worst <= tol::kSoupMean, "two-way soup is the mean");
  o.require(weights_ok, "uniform-low weights (0.7, 0.1, 0.1, 0.1)");
  o.detail << "fixed point " << (exact ? "exact" : "differs") << ", max mean gap " << worst << ", weights (" << w4[0]
           << ", " << w4[1] << ", " << w4[2] << ", " << w4[3] << ")";
}

// ---------------------------------------------------------------- 8

void metrics(Outcome& o) {
  const auto csv = testing::fixture("metrics/optimal_config.csv");
  const ScoreTable t = ScoreTable::load(csv);
  const ScoreTable n = normalize(t);
  const double mmlu = *n.at(t.model_index("EngGPT2-16B-A3B"), t.benchmark_index("MMLU-Pro"));
  o.require(std::abs(mmlu - 72.90) <= tol::kMmluPro, "MMLU-Pro 72.90");

  const ModeStats modes = ModeStats::parse_csv(testing::slurp(testing::fixture("metrics/reasoning_modes.csv")));
  double gsm_perf = NAN, gsm_tokens = NAN;
  for (const Tradeoff& tr : reasoning_tradeoff(modes))
    if (tr.benchmark == "GSM8K") gsm_perf = tr.perf_drop_points, gsm_tokens = tr.token_drop_percent;
  // Published values carry one and two decimals; "exact" means equal at that precision.
  o.require(std::round(gsm_perf * 10) / 10 == 13.6, "GSM8K 13.6 points");
  o.require(std::round(gsm_tokens * 100) / 100 == 83.31, "GSM8K 83.31%");

  const auto phases = phases_from_json(nlohmann::json::parse(testing::slurp(testing::data_file("reference_phases.json"))));
  const FlopsAccount f = flops_account(phases);
  const double pre = f.phases.front().second;
  o.require(std::abs(pre - 5.5e22) <= tol::kPretrainFlops * 5.5e22, "pretraining 5.5e22");
  o.require(std::abs(f.total - 5.7e22) <= tol::kTotalFlops * 5.7e22, "total 5.7e22");
  o.require(!f.gpai_systemic_risk, "systemic-risk flag false");
  o.detail << "MMLU-Pro " << mmlu << ", GSM8K (" << gsm_perf << ", " << gsm_tokens << "), pretraining " << pre
           << ", total " << f.total << ", flag " << (f.gpai_systemic_risk ? "true" : "false");
}

// ---------------------------------------------------------------- 9

void corpus_filter(Outcome& o) {
  const testing::PlantedCorpus c = testing::make_planted_corpus(1000, 200, 9);
  const CorpusFilter filter(Blacklist::load(testing::data_file("blacklist.tsv")), FilterOptions{});
  const RiskReport r = filter.run(c.records);
  std::size_t planted_flagged = 0, false_pos = 0, nested_violations = 0;
  for (std::size_t i = 0; i < c.records.size(); ++i) {
    const RecordAssessment& a = r.records[i];
    if (c.planted[i]) planted_flagged += a.signals.any();
    else false_pos += a.signals.any();
    nested_violations += (a.score >= 0.4) && !(a.score >= 0.3);
  }
  o.require(planted_flagged == 200, "all planted flagged");
  o.require(false_pos == 0, "no false positives");
  o.require(nested_violations == 0 && r.excluded_at.at(0.3) >= r.excluded_at.at(0.4), "excluded@0.3 contains excluded@0.4");
  o.require(r.clean + r.flagged == r.total && std::abs(r.percent(r.clean) + r.percent(r.flagged) - 100.0) < 1e-9,
            "clean + flagged = 100%");

  std::vector<CorpusRecord> big;
  for (int rep = 0; rep < 20; ++rep) big.insert(big.end(), c.records.begin(), c.records.end());
  const auto t0 = Clock::now();
  const RiskReport rb = filter.run(big, nullptr, nullptr, false);
  const double rate = static_cast<double>(rb.total) / seconds_since(t0);
  o.require(rate >= tol::kFilterRecordsPerSecond, "throughput >= 5,000 records/s");
  o.detail << planted_flagged << "/200 planted flagged, " << false_pos << " false positives, excluded@0.3 "
           << r.excluded_at.at(0.3) << " >= excluded@0.4 " << r.excluded_at.at(0.4) << ", " << static_cast<long>(rate)
           << " records/s";
}

// ---------------------------------------------------------------- 10

void training(Outcome& o) {
  const auto t0 = Clock::now();
  const ModelConfig cfg = desk_config();
  ParameterStore s = build_model(cfg, 10);
  const auto rows = testing::overfit_corpus(32, 16, static_cast<std::int32_t>(cfg.vocab_size), 10);
  TrainOptions opt;
  opt.stage = stages::desk(tol::kOverfitMaxSteps, 3e-3);
  opt.stage.global_batch.points = {{0, rows.size()}};
  opt.seed = 10;
  Trainer trainer(s, opt);

  double aux_min = INFINITY, aux_max = -INFINITY, last_ce = INFINITY;
  std::size_t steps = 0, aux_outside = 0;
  while (steps < tol::kOverfitMaxSteps && last_ce >= tol::kOverfitCe) {
    const StepMetrics m = trainer.run(rows, 1).front();
    aux_min = std::min(aux_min, m.aux_loss);
    aux_max = std::max(aux_max, m.aux_loss);
    aux_outside += m.aux_loss < tol::kAuxLow || m.aux_loss > tol::kAuxHigh;
    last_ce = m.cross_entropy;
    ++steps;
  }
  // Final masked CE and perplexity of the trained model on the training set.
  double nll = 0.0;
  std::size_t predicted = 0;
  for (const PackedSequence& r : rows) {
    const std::vector<std::int32_t> seq(r.tokens.begin(), r.tokens.begin() + 16);
    const PerplexityResult p = perplexity(s, seq, 16, 16);
    nll += p.nll_sum;
    predicted += p.predicted;
  }
  const double ppl = std::exp(nll / static_cast<double>(predicted));
  const double secs = seconds_since(t0);

  ParameterStore uniform = build_model(cfg, 11);
  uniform.at(param_names::kLmHead).fill(Real(0));
  std::vector<std::int32_t> stream(200);
  std::mt19937_64 rng(12);
  for (auto& t : stream) t = static_cast<std::int32_t>(rng() % cfg.vocab_size);
  const double uppl = perplexity(uniform, stream, 64, 32).perplexity;
  const double V = static_cast<double>(cfg.vocab_size);

  o.require(last_ce < tol::kOverfitCe, "masked CE < 0.1 within 2000 steps");
  o.require(ppl < tol::kOverfitPerplexity, "training-set perplexity < 1.2");
  o.require(aux_min >= tol::kAuxLow && aux_max <= tol::kAuxHigh, "aux loss in [1.0, 1.5]");
  o.require(secs < tol::kTrainingSeconds, "runtime < 5 min");
  o.require(std::abs(uppl - V) <= tol::kPerplexityUniform * V, "uniform-logit perplexity equals V");
  o.detail << "CE " << last_ce << " at step " << steps << ", perplexity " << ppl << ", aux range [" << aux_min << ", "
           << aux_max << "] with " << aux_outside << "/" << steps << " steps outside, " << secs << " s; uniform perplexity " << uppl << " (V=" << cfg.vocab_size << ")";
}

// ---------------------------------------------------------------- 11

void preference(Outcome& o) {
  ParameterStore policy = build_model(desk_config(), 13);
  const ParameterStore reference = policy;
  const PreferencePair pair{{1, 2, 3, 4, 5, 6, 7, 8}, {10, 11, 12, 13}, {20, 21, 22, 23}};
  pair.validate();
  const Real beta = Real(0.1);

  auto logprob = [&](const ParameterStore& store, const std::vector<std::int32_t>& response) {
    Tape tape;
    BoundModel m(store, tape, false);
    return static_cast<double>(sequence_logprob(m, pair.context, response).value()[0]);
  };
  const double rc = logprob(reference, pair.chosen), rr = logprob(reference, pair.rejected);

  Tape tape;
  BoundModel m(policy, tape);
  const Var pc = sequence_logprob(m, pair.context, pair.chosen);
  const Var pr = sequence_logprob(m, pair.context, pair.rejected);
  const Var loss = preference_loss(pc, pr, static_cast<Real>(rc), static_cast<Real>(rr), beta);
  const double l0 = loss.value()[0];
  const GradientMap g = tape.backward(loss);
  sgd_step(policy, g, 1.0);

  const double dc = logprob(policy, pair.chosen) - rc, dr = logprob(policy, pair.rejected) - rr;
  o.require(std::abs(l0 - std::log(2.0)) <= tol::kPreferenceLn2, "policy == reference gives ln 2");
  o.require(dc > 0.0, "chosen log-prob rises");
  o.require(dr < 0.0, "rejected log-prob falls");
  o.detail << "loss " << l0 << " (ln 2 = " << std::log(2.0) << "), after one step: chosen " << (dc >= 0 ? "+" : "") << dc
           << ", rejected " << (dr >= 0 ? "+" : "") << dr;
}

struct Criterion {
  int id;
  const char* name;
  std::function<void(Outcome&)> run;
};

}  // namespace
}  // namespace deskmoe::acceptance

int main() {
  using namespace deskmoe::acceptance;
  const Criterion criteria[] = {
      {1, "architecture arithmetic", architecture}, {2, "routing", routing},
      {3, "gradient correctness", gradients},       {4, "isolation theorem", isolation},
      {5, "template fidelity", templates},          {6, "schedules", schedules},
      {7, "souping", souping},                      {8, "metrics reproduction", metrics},
      {9, "corpus filter", corpus_filter},          {10, "desk-scale training", training},
      {11, "preference objective", preference},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    Outcome o;
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "[exception: " << e.what() << "]";
    }
    failed += !o.pass;
    std::printf("%s  %2d  %-24s %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed, std::size(criteria));
  return failed == 0 ? 0 : 1;
}
