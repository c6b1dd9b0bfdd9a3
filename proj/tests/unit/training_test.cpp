// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "deskmoe/errors.hpp"
#include "deskmoe/objectives.hpp"
#include "deskmoe/ops.hpp"
#include "deskmoe/parameter_store.hpp"
#include "deskmoe/schedule.hpp"
#include "deskmoe/trainer.hpp"
#include "deskmoe/transformer.hpp"
#include "overfit_corpus.hpp"
#include "test_util.hpp"

namespace deskmoe {
namespace {

TrainOptions options(StageSpec stage) {
  TrainOptions o;
  o.stage = std::move(stage);
  return o;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.num_layers = 2;
  c.hidden_size = 8;
  c.moe_intermediate = 6;
  c.num_attention_heads = 2;
  c.num_kv_heads = 1;
  c.num_experts = 4;
  c.experts_per_token = 2;
  c.vocab_size = 16;
  c.context_length = 64;
  return c;
}

// ---------------------------------------------------------------- schedules

TEST(ScheduleTest, PretrainingEndpoints) {
  const StageSpec s1 = stages::pretrain_stage1();
  EXPECT_DOUBLE_EQ(lr_at(s1, 0), 1.89e-7);
  EXPECT_DOUBLE_EQ(lr_at(s1, 19076), 1.2e-4);
  EXPECT_DOUBLE_EQ(lr_at(s1, 75776), 1e-4);
  const StageSpec s2 = stages::pretrain_stage2();
  for (std::size_t step : {0, 1, 90000, 182212}) EXPECT_DOUBLE_EQ(lr_at(s2, step), 1e-4);
  const StageSpec s3 = stages::pretrain_stage3();
  EXPECT_DOUBLE_EQ(lr_at(s3, 0), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at(s3, 63578), 4.52e-10);
}

TEST(ScheduleTest, StepsPastTheEndClamp) {
  EXPECT_DOUBLE_EQ(lr_at(stages::pretrain_stage3(), 10'000'000), 4.52e-10);
  EXPECT_DOUBLE_EQ(lr_at(stages::pretrain_stage1(), 10'000'000), 1e-4);
  const StageSpec sft = stages::sft(100);
  EXPECT_DOUBLE_EQ(lr_at(sft, 100), 2e-6);
  EXPECT_DOUBLE_EQ(lr_at(sft, 1000), 2e-6);
  EXPECT_DOUBLE_EQ(lr_at(stages::preference(50), 50), 5e-8);
}

TEST(ScheduleTest, WarmupIsLinear) {
  const StageSpec s1 = stages::pretrain_stage1();
  const double mid = lr_at(s1, 19076 / 2);
  EXPECT_NEAR(mid, 1.89e-7 + (1.2e-4 - 1.89e-7) * (9538.0 / 19076.0), 1e-15);
  const double decay_mid = lr_at(s1, 19076 + (75776 - 19076) / 2);
  EXPECT_NEAR(decay_mid, 1.1e-4, 1e-12);
}

TEST(ScheduleTest, ContinuousAndPositive) {
  for (const StageSpec& s : {stages::pretrain_stage1(), stages::pretrain_stage2(), stages::pretrain_stage3(),
                             stages::sft(1000), stages::preference(1000)}) {
    const std::size_t n = s.total_steps();
    const double scale = std::max({s.lr.start, s.lr.peak, s.lr.end});
    // Largest per-step change of a piecewise-linear or cosine ramp.
    const double max_jump = 4.0 * scale / static_cast<double>(std::min<std::size_t>(n, s.lr.warmup_steps ? s.lr.warmup_steps : n));
    double prev = lr_at(s, 0);
    for (std::size_t step = 1; step <= n; step += std::max<std::size_t>(1, n / 5000)) {
      const double lr = lr_at(s, step);
      ASSERT_GT(lr, 0.0) << s.name << " " << step;
      ASSERT_LE(std::abs(lr - prev), max_jump * static_cast<double>(std::max<std::size_t>(1, n / 5000))) << s.name;
      prev = lr;
    }
  }
}

TEST(ScheduleTest, BatchBreakpoints) {
  const StageSpec s1 = stages::pretrain_stage1();
  EXPECT_EQ(s1.global_batch.at(0), 1024u);
  EXPECT_EQ(s1.global_batch.at(19075), 1024u);
  EXPECT_EQ(s1.global_batch.at(19076), 2048u);
  EXPECT_EQ(s1.grad_accum.at(19076), 16u);
  EXPECT_DOUBLE_EQ(s1.aux_coefficient, 1e-2);
  EXPECT_DOUBLE_EQ(stages::pretrain_stage2().aux_coefficient, 5e-3);
  EXPECT_DOUBLE_EQ(stages::pretrain_stage3().aux_coefficient, 1e-3);
}

TEST(ScheduleTest, ValidationAndLookup) {
  StageSpec bad = stages::desk(10);
  bad.global_batch.points = {{0, 8}, {0, 16}};
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = stages::desk(10, 0.0);
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = stages::desk(10);
  bad.grad_accum.points = {{5, 1}};
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_EQ(stages::by_name("stage2").name, "pretrain-stage2");
  EXPECT_THROW(stages::by_name("stage4"), ConfigError);
}

TEST(ScheduleTest, JsonRoundTrip) {
  const StageSpec s = stages::pretrain_stage1();
  const StageSpec back = nlohmann::json(s).get<StageSpec>();
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(s));
  for (std::size_t step : {0, 100, 19076, 50000}) EXPECT_EQ(lr_at(back, step), lr_at(s, step));
}

// ---------------------------------------------------------------- sft loss

TEST(SftLossTest, ZeroCoefficientIsCrossEntropy) {
  const ParameterStore s = build_model(tiny_config(), 1);
  const auto rows = testing::overfit_corpus(1, 12, 16, 3);
  Tape tape;
  BoundModel m(s, tape);
  const SftLoss l = sft_loss(m, rows.front(), Real(0));
  EXPECT_EQ(l.total.value()[0], l.cross_entropy.value()[0]);
  EXPECT_EQ(l.target_weight, 11.0);  // the separator is never a target
}

TEST(SftLossTest, BalancedRouterAddsCoefficient) {
  ParameterStore s = build_model(tiny_config(), 2);
  for (std::size_t l = 0; l < 2; ++l) s.at(param_names::layer(l, "moe.router")).fill(Real(0));
  const auto rows = testing::overfit_corpus(1, 12, 16, 4);
  for (double c : {0.01, 0.1, 1.0}) {
    Tape tape;
    BoundModel m(s, tape);
    const SftLoss l = sft_loss(m, rows.front(), static_cast<Real>(c));
    EXPECT_NEAR(l.aux_loss.value()[0], 1.0, 1e-6);
    EXPECT_NEAR(l.total.value()[0], l.cross_entropy.value()[0] + c, 1e-6);
  }
}

TEST(SftLossTest, FullyMaskedBatchIsInputError) {
  const ParameterStore s = build_model(tiny_config(), 3);
  PackedSequence row = testing::overfit_corpus(1, 6, 16, 5).front();
  std::fill(row.weights.begin(), row.weights.end(), 0.0f);
  Tape tape;
  BoundModel m(s, tape);
  EXPECT_THROW(sft_loss(m, row, Real(0.01)), InputError);
}

TEST(SftLossTest, LossDecreasesWhenOverfitting) {
  ParameterStore s = build_model(desk_config(), 7);
  const auto rows = testing::overfit_corpus(32, 16, 256, 8);
  StageSpec stage = stages::desk(40, 3e-3);
  stage.global_batch.points = {{0, 32}};
  Trainer trainer(s, options(stage));
  const auto metrics = trainer.run(rows, 40);
  std::vector<double> window_means;
  for (std::size_t w = 0; w < 4; ++w) {
    double sum = 0;
    for (std::size_t i = 0; i < 10; ++i) sum += metrics[w * 10 + i].cross_entropy;
    window_means.push_back(sum / 10);
  }
  for (std::size_t w = 1; w < window_means.size(); ++w) EXPECT_LT(window_means[w], window_means[w - 1]) << w;
  EXPECT_LT(metrics.back().cross_entropy, 0.5 * metrics.front().cross_entropy);
}

// ---------------------------------------------------------------- preference

double pref(double pc, double pr, double rc, double rr, double beta) {
  Tape tape;
  const Var c = tape.constant(Tensor({1}, {static_cast<Real>(pc)}));
  const Var r = tape.constant(Tensor({1}, {static_cast<Real>(pr)}));
  return preference_loss(c, r, static_cast<Real>(rc), static_cast<Real>(rr), static_cast<Real>(beta)).value()[0];
}

TEST(PreferenceLossTest, Examples) {
  EXPECT_NEAR(pref(-3.0, -4.0, -3.0, -4.0, 0.1), std::log(2.0), 1e-6);
  // Chosen margin +1, rejected margin -0.5: -log sigmoid(0.15).
  EXPECT_NEAR(pref(-2.0, -4.5, -3.0, -4.0, 0.1), std::log1p(std::exp(-0.15)), 1e-6);
  EXPECT_NEAR(pref(-2.0, -4.5, -3.0, -4.0, 0.1), 0.620957, 1e-6);
  EXPECT_LT(pref(1000.0, -1000.0, 0.0, 0.0, 0.1), 1e-30);
  EXPECT_TRUE(std::isfinite(pref(-1000.0, 1000.0, 0.0, 0.0, 0.1)));
}

TEST(PreferenceLossTest, BetaMustBePositive) {
  EXPECT_THROW(pref(0, 0, 0, 0, 0.0), ConfigError);
  EXPECT_THROW(pref(0, 0, 0, 0, -1.0), ConfigError);
}

TEST(PreferenceLossTest, GradientRaisesChosenLowersRejected) {
  Tape tape;
  const Var c = tape.parameter("c", Tensor({1}, {Real(-3)}));
  const Var r = tape.parameter("r", Tensor({1}, {Real(-3.5)}));
  const GradientMap g = tape.backward(preference_loss(c, r, Real(-3), Real(-3.5)));
  EXPECT_LT(g.at("c")[0], 0);  // descent increases the chosen log-prob
  EXPECT_GT(g.at("r")[0], 0);
  const double h = 1e-2;
  EXPECT_LT(pref(-3 + h, -3.5, -3, -3.5, 0.1) - pref(-3 - h, -3.5, -3, -3.5, 0.1), 0);
  EXPECT_GT(pref(-3, -3.5 + h, -3, -3.5, 0.1) - pref(-3, -3.5 - h, -3, -3.5, 0.1), 0);
}

TEST(PreferenceLossTest, PairValidation) {
  EXPECT_THROW((PreferencePair{{1}, {2}, {2}}).validate(), InputError);
  EXPECT_THROW((PreferencePair{{1}, {}, {2}}).validate(), InputError);
  EXPECT_NO_THROW((PreferencePair{{1}, {2}, {3}}).validate());
}

// ---------------------------------------------------------------- optimizer and loop

TEST(OptimizerTest, ZeroLearningRateLeavesParametersUnchanged) {
  ParameterStore s = build_model(tiny_config(), 11);
  const ParameterStore before = s;
  const auto rows = testing::overfit_corpus(2, 10, 16, 12);
  const AccumulatedLoss acc = accumulate_gradients(s, rows, 1, Real(0.01));
  AdamW opt;
  opt.step(s, acc.grads, 0.0);
  sgd_step(s, acc.grads, 0.0);
  for (const auto& [name, t] : before.tensors()) EXPECT_EQ(s.at(name), t) << name;
}

TEST(OptimizerTest, ClipsGlobalNorm) {
  ParameterStore s = build_model(tiny_config(), 13);
  GradientMap g;
  g[std::string(param_names::kEmbedding)] = Tensor::filled(s.at(std::string(param_names::kEmbedding)).shape(), Real(10));
  AdamW opt;
  const UpdateStats st = opt.step(s, g, 1e-3);
  EXPECT_TRUE(st.clipped);
  EXPECT_NEAR(st.grad_norm, global_norm(g), 1e-6 * st.grad_norm);
}

TEST(AccumulationTest, MicroBatchesMatchOneBatch) {
  const ParameterStore s = build_model(tiny_config(), 14);
  // Unequal target weight per row so the share weighting matters.
  auto rows = testing::overfit_corpus(4, 12, 16, 15);
  for (std::size_t t = 0; t < 5; ++t) rows[1].weights[t] = 0.0f;
  const AccumulatedLoss one = accumulate_gradients(s, rows, 1, Real(0));
  const AccumulatedLoss four = accumulate_gradients(s, rows, 4, Real(0));
  const AccumulatedLoss two = accumulate_gradients(s, rows, 2, Real(0));
  EXPECT_NEAR(one.loss, four.loss, 1e-5);
  for (const auto& [name, g] : one.grads) {
    const Tensor& g4 = four.grads.at(name);
    const Tensor& g2 = two.grads.at(name);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ASSERT_NEAR(g4[i], g[i], 1e-5) << name << "[" << i << "]";
      ASSERT_NEAR(g2[i], g[i], 1e-5) << name << "[" << i << "]";
    }
  }
  Tape tape;
  BoundModel m(s, tape);
  const SftLoss joint = sft_loss(m, concat_rows(rows), Real(0));
  EXPECT_NEAR(joint.total.value()[0], one.loss, 1e-5);
}

TEST(AccumulationTest, PaddedRowsConcatenateCleanly) {
  const ParameterStore s = build_model(tiny_config(), 23);
  const std::vector<SourceExample> ex{{"a", {1, 2, 3, 4, 5}, std::vector<bool>(5, true)},
                                      {"b", {6, 7, 8, 9, 10, 11, 12}, std::vector<bool>(7, true)},
                                      {"c", {3, 3, 3}, std::vector<bool>(3, true)}};
  const auto rows = pack(ex, 11, 14, 15);
  ASSERT_EQ(rows.size(), 2u);
  ASSERT_GT(rows[0].padding(), 0u);
  const PackedSequence joint = concat_rows(rows);
  EXPECT_NO_THROW(joint.validate());
  EXPECT_EQ(joint.padding(), rows[0].padding() + rows[1].padding());
  EXPECT_EQ(joint.num_segments(), 3u);
  const AccumulatedLoss one = accumulate_gradients(s, rows, 1, Real(0));
  const AccumulatedLoss two = accumulate_gradients(s, rows, 2, Real(0));
  EXPECT_NEAR(one.loss, two.loss, 1e-5);
}

std::string bytes(const std::filesystem::path& p) { return testing::slurp(p); }

TEST(TrainerTest, SameSeedGivesIdenticalCheckpoints) {
  testing::ScratchDir dir("train");
  const auto rows = testing::overfit_corpus(6, 10, 16, 16);
  for (const char* run : {"a", "b"}) {
    ParameterStore s = build_model(tiny_config(), 17);
    TrainOptions o = options(stages::desk(20, 1e-2));
    o.stage.global_batch.points = {{0, 2}};
    o.seed = 99;
    o.checkpoint_dir = dir / run;
    o.checkpoint_interval = 10;
    Trainer(s, o).run(rows, 20);
  }
  for (const char* f : {"step-000010.bin", "step-000020.bin"})
    EXPECT_EQ(bytes(dir / "a" / f), bytes(dir / "b" / f)) << f;
}

TEST(TrainerTest, CheckpointEveryHundredSteps) {
  testing::ScratchDir dir("train");
  const auto rows = testing::overfit_corpus(4, 6, 16, 18);
  ParameterStore s = build_model(tiny_config(), 19);
  TrainOptions o = options(stages::desk(500, 1e-3));
  o.stage.global_batch.points = {{0, 1}};
  o.checkpoint_dir = dir / "ck";
  o.metrics_path = dir / "metrics.jsonl";
  Trainer t(s, o);
  t.run(rows, 500);
  ASSERT_EQ(t.checkpoints().size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    const ParameterStore loaded = ParameterStore::load(t.checkpoints()[i]);
    EXPECT_EQ(loaded.fingerprint(), s.fingerprint());
    EXPECT_EQ(t.checkpoints()[i].filename().string(), "step-000" + std::to_string((i + 1) * 100) + ".bin");
  }
  std::ifstream in(dir / "metrics.jsonl");
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("step"), ++n);
    EXPECT_TRUE(j.contains("aux_loss") && j.contains("lr") && j.contains("tokens_seen"));
  }
  EXPECT_EQ(n, 500u);
  EXPECT_EQ(t.tokens_seen(), 500u * 7u);  // content plus separator
}

TEST(TrainerTest, NonFiniteLossAbortsWithDiagnostic) {
  testing::ScratchDir dir("train");
  ParameterStore s = build_model(tiny_config(), 20);
  s.at(std::string(param_names::kEmbedding))[3] = std::numeric_limits<Real>::quiet_NaN();
  TrainOptions o = options(stages::desk(5));
  o.checkpoint_dir = dir / "ck";
  Trainer t(s, o);
  std::vector<PackedSequence> rows = testing::overfit_corpus(2, 6, 16, 21);
  for (auto& r : rows) r.tokens[0] = 0;  // embedding row 0 holds the NaN
  EXPECT_THROW(t.train_step(rows), NumericError);
  const auto diag = dir / "ck" / "diagnostic-000000.json";
  ASSERT_TRUE(std::filesystem::exists(diag));
  const auto j = nlohmann::json::parse(testing::slurp(diag));
  EXPECT_EQ(j.at("non_finite_parameters"), nlohmann::json::array({std::string(param_names::kEmbedding)}));
}

TEST(TrainerTest, EmptyDataIsInputError) {
  ParameterStore s = build_model(tiny_config(), 22);
  Trainer t(s, options(stages::desk(5)));
  EXPECT_THROW(t.run({}, 1), InputError);
}

}  // namespace
}  // namespace deskmoe
