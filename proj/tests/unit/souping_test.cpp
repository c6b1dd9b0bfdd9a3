// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "deskmoe/errors.hpp"
#include "deskmoe/parameter_store.hpp"
#include "deskmoe/soup.hpp"

namespace deskmoe {
namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.num_layers = 1;
  c.hidden_size = 8;
  c.moe_intermediate = 6;
  c.num_attention_heads = 2;
  c.num_kv_heads = 1;
  c.num_experts = 4;
  c.experts_per_token = 2;
  c.vocab_size = 16;
  c.context_length = 32;
  return c;
}

void expect_weights(const std::vector<double>& got, const std::vector<double>& want) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12) << i;
}

// ---------------------------------------------------------------- weights

TEST(SoupWeightsTest, UniformLow) { expect_weights(make_weights(SoupScheme::kUniformLow, 3, 0.7), {0.7, 0.1, 0.1, 0.1}); }

TEST(SoupWeightsTest, UniformHighUsesItsDefault) {
  EXPECT_EQ(default_anchor_weight(SoupScheme::kUniformLow), 0.7);
  EXPECT_EQ(default_anchor_weight(SoupScheme::kUniformHigh), 0.3);
  expect_weights(make_weights(SoupScheme::kUniformHigh, 2, 0.3), {0.3, 0.35, 0.35});
}

TEST(SoupWeightsTest, IncreasingRamp) {
  expect_weights(make_weights(SoupScheme::kIncreasing, 3, 0.0), {1.0 / 6, 2.0 / 6, 3.0 / 6});
  expect_weights(make_weights(SoupScheme::kDecreasing, 3, 0.0), {3.0 / 6, 2.0 / 6, 1.0 / 6});
  expect_weights(make_weights(SoupScheme::kIncreasing, 2, 0.4), {0.4, 0.2, 0.4});
}

TEST(SoupWeightsTest, SingleMemberTakesEverything) {
  for (SoupScheme s : {SoupScheme::kUniformLow, SoupScheme::kUniformHigh, SoupScheme::kIncreasing, SoupScheme::kDecreasing})
    expect_weights(make_weights(s, 1, 0.0), {1.0});
}

TEST(SoupWeightsTest, AlwaysSumToOne) {
  for (SoupScheme s : {SoupScheme::kUniformLow, SoupScheme::kUniformHigh, SoupScheme::kIncreasing, SoupScheme::kDecreasing})
    for (std::size_t n = 1; n <= 6; ++n)
      for (double a : {0.0, 0.1, 0.3, 0.7, 0.95}) {
        const auto w = make_weights(s, n, a);
        EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
        for (double x : w) EXPECT_GE(x, 0.0);
      }
}

TEST(SoupWeightsTest, RejectsBadAnchorWeight) {
  EXPECT_THROW(make_weights(SoupScheme::kUniformLow, 3, 1.0), ConfigError);
  EXPECT_THROW(make_weights(SoupScheme::kUniformLow, 3, -0.1), ConfigError);
  EXPECT_THROW(make_weights(SoupScheme::kUniformLow, 0, 0.5), ConfigError);
  EXPECT_THROW(parse_scheme("geometric"), ConfigError);
}

// ---------------------------------------------------------------- recipe

TEST(SoupRecipeTest, FromJson) {
  const auto j = nlohmann::json::parse(R"({"anchor":"base.bin","members":["a.bin","/abs/b.bin"],"scheme":"uniform-high"})");
  const SoupRecipe r = recipe_from_json(j, "/runs/x");
  EXPECT_EQ(r.checkpoints(), (std::vector<std::filesystem::path>{"/runs/x/base.bin", "/runs/x/a.bin", "/abs/b.bin"}));
  EXPECT_DOUBLE_EQ(r.effective_anchor_weight(), 0.3);
  expect_weights(r.weights(), {0.3, 0.35, 0.35});
}

TEST(SoupRecipeTest, Validation) {
  SoupRecipe r;
  EXPECT_THROW(r.validate(), ConfigError);
  r.members.assign(7, "m.bin");
  EXPECT_THROW(r.validate(), ConfigError);
  r.members.resize(2);
  r.anchor = "base.bin";
  r.anchor_weight = 1.0;
  EXPECT_THROW(r.validate(), ConfigError);
  r.anchor_weight = 0.5;
  EXPECT_NO_THROW(r.validate());
}

// ---------------------------------------------------------------- soup

std::vector<ParameterStore> three_checkpoints() {
  return {build_model(tiny_config(), 1), build_model(tiny_config(), 2), build_model(tiny_config(), 3)};
}

TEST(SoupTest, IdenticalCheckpointsAreAFixedPoint) {
  const ParameterStore a = build_model(tiny_config(), 4);
  const std::vector<ParameterStore> cks{a, a, a, a};
  const ParameterStore out = soup(cks, make_weights(SoupScheme::kUniformLow, 3, 0.7));
  for (const auto& [name, t] : a.tensors()) EXPECT_EQ(out.at(name), t) << name;
  EXPECT_EQ(out.fingerprint(), a.fingerprint());
}

TEST(SoupTest, EvenWeightsGiveTheMean) {
  const auto cks = three_checkpoints();
  const std::vector<ParameterStore> two{cks[0], cks[1]};
  const std::vector<double> w{0.5, 0.5};
  const ParameterStore out = soup(two, w);
  for (const auto& [name, t] : out.tensors()) {
    const Tensor& x = cks[0].at(name);
    const Tensor& y = cks[1].at(name);
    for (std::size_t i = 0; i < t.numel(); ++i) ASSERT_NEAR(t[i], (double(x[i]) + double(y[i])) / 2, 1e-6) << name;
  }
}

TEST(SoupTest, OneHotWeightsCopyExactly) {
  const auto cks = three_checkpoints();
  const std::vector<ParameterStore> two{cks[0], cks[1]};
  const std::vector<double> w{1.0, 0.0};
  const ParameterStore out = soup(two, w);
  for (const auto& [name, t] : cks[0].tensors()) EXPECT_EQ(out.at(name), t) << name;
}

TEST(SoupTest, StaysInConvexHull) {
  const auto cks = three_checkpoints();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> w{u(rng), u(rng), u(rng)};
    const double s = w[0] + w[1] + w[2];
    for (double& x : w) x /= s;
    const ParameterStore out = soup(cks, w);
    for (const auto& [name, t] : out.tensors())
      for (std::size_t i = 0; i < t.numel(); ++i) {
        const Real lo = std::min({cks[0].at(name)[i], cks[1].at(name)[i], cks[2].at(name)[i]});
        const Real hi = std::max({cks[0].at(name)[i], cks[1].at(name)[i], cks[2].at(name)[i]});
        ASSERT_GE(t[i], lo) << name;
        ASSERT_LE(t[i], hi) << name;
      }
  }
}

TEST(SoupTest, PermutationInvariant) {
  const auto cks = three_checkpoints();
  const std::vector<double> w{0.5, 0.3, 0.2};
  const ParameterStore ref = soup(cks, w);
  const std::vector<ParameterStore> perm{cks[2], cks[0], cks[1]};
  const std::vector<double> pw{0.2, 0.5, 0.3};
  const ParameterStore out = soup(perm, pw);
  for (const auto& [name, t] : ref.tensors())
    for (std::size_t i = 0; i < t.numel(); ++i) ASSERT_NEAR(out.at(name)[i], t[i], 1e-7) << name;
}

TEST(SoupTest, Associative) {
  const auto cks = three_checkpoints();
  const std::vector<double> w{0.5, 0.3, 0.2};
  const ParameterStore direct = soup(cks, w);
  const std::vector<ParameterStore> ab{cks[0], cks[1]};
  const std::vector<double> wab{0.5 / 0.8, 0.3 / 0.8};
  const std::vector<ParameterStore> abc{soup(ab, wab), cks[2]};
  const std::vector<double> w2{0.8, 0.2};
  const ParameterStore nested = soup(abc, w2);
  for (const auto& [name, t] : direct.tensors())
    for (std::size_t i = 0; i < t.numel(); ++i) ASSERT_NEAR(nested.at(name)[i], t[i], 1e-6) << name;
}

TEST(SoupTest, MismatchedCheckpointsAreIncompatible) {
  ModelConfig other = tiny_config();
  other.moe_intermediate = 4;
  const std::vector<ParameterStore> cks{build_model(tiny_config(), 1), build_model(other, 1)};
  const std::vector<double> w{0.5, 0.5};
  try {
    soup(cks, w);
    FAIL() << "expected IncompatibleError";
  } catch (const IncompatibleError& e) {
    EXPECT_NE(std::string(e.what()).find("experts"), std::string::npos) << e.what();
  }
}

TEST(SoupTest, WeightsMustBeConvex) {
  const auto cks = three_checkpoints();
  EXPECT_THROW(soup(cks, std::vector<double>{0.5, 0.5, 0.5}), ConfigError);
  EXPECT_THROW(soup(cks, std::vector<double>{1.5, -0.25, -0.25}), ConfigError);
  EXPECT_THROW(soup(cks, std::vector<double>{0.5, 0.5}), ConfigError);
}

}  // namespace
}  // namespace deskmoe
