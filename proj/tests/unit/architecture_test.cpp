// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "deskmoe/attention.hpp"
#include "deskmoe/errors.hpp"
#include "deskmoe/moe.hpp"
#include "deskmoe/ops.hpp"
#include "deskmoe/packing.hpp"
#include "deskmoe/parameter_store.hpp"
#include "deskmoe/rope.hpp"
#include "deskmoe/sampling.hpp"
#include "deskmoe/transformer.hpp"
#include "test_util.hpp"

namespace deskmoe {
namespace {

using Rng = std::mt19937_64;

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(std::move(shape));
  for (Real& v : t.data()) v = static_cast<Real>(d(rng));
  return t;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.num_layers = 2;
  c.hidden_size = 8;
  c.moe_intermediate = 4;
  c.num_attention_heads = 2;
  c.num_kv_heads = 1;
  c.num_experts = 4;
  c.experts_per_token = 2;
  c.vocab_size = 16;
  c.context_length = 64;
  return c;
}

// ---------------------------------------------------------------- config

TEST(ModelConfigTest, ReferenceGeometry) {
  const ModelConfig c = reference_config();
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.head_dim(), 90u);
  EXPECT_EQ(c.group_size(), 8u);
}

TEST(ModelConfigTest, InvalidConfigsAreRejected) {
  ModelConfig c = tiny_config();
  c.hidden_size = 9;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.num_kv_heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.hidden_size = 6;  // head_dim 3 is odd
  c.num_attention_heads = 2;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.experts_per_token = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.experts_per_token = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(build_model(c, 1), ConfigError);
}

TEST(ModelConfigTest, JsonRoundTripKeepsFingerprint) {
  const ModelConfig c = reference_config();
  const ModelConfig back = nlohmann::json(c).get<ModelConfig>();
  EXPECT_EQ(back, c);
  EXPECT_EQ(back.fingerprint(), c.fingerprint());
  EXPECT_NE(desk_config().fingerprint(), c.fingerprint());
}

// ---------------------------------------------------------------- counting

TEST(CountParamsTest, SingleExpertSize) {
  ModelConfig c = reference_config();
  EXPECT_EQ(count_params(c).per_expert, 9'331'200u);
}

TEST(CountParamsTest, ReferenceTotalsAndActiveFraction) {
  const ParamCounts p = count_params(reference_config());
  EXPECT_GE(p.total, 15'000'000'000u);
  EXPECT_LE(p.total, 17'000'000'000u);
  EXPECT_GE(p.active_per_token, 2'700'000'000u);
  EXPECT_LE(p.active_per_token, 3'300'000'000u);
  EXPECT_NEAR(p.active_fraction() * 100.0, 20.27, 2.0);
}

TEST(CountParamsTest, AllExpertsActiveMeansActiveEqualsTotal) {
  ModelConfig c = tiny_config();
  c.experts_per_token = c.num_experts;
  const ParamCounts p = count_params(c);
  EXPECT_EQ(p.active_per_token, p.total);
}

TEST(CountParamsTest, AgreesWithBuiltStore) {
  for (bool tied : {false, true}) {
    ModelConfig c = tiny_config();
    c.tie_embeddings = tied;
    const ParamCounts p = count_params(c);
    EXPECT_EQ(build_model(c, 3).num_parameters(), p.total);
    EXPECT_EQ(p.embedding + p.attention + p.router + p.experts + p.norms, p.total);
  }
}

// ---------------------------------------------------------------- store

TEST(BuildModelTest, CanonicalNamesAndShapes) {
  const ModelConfig c = tiny_config();
  const ParameterStore s = build_model(c, 1);
  std::set<std::string> want, got;
  for (const auto& [name, shape] : parameter_shapes(c)) {
    want.insert(name);
    ASSERT_TRUE(s.contains(name)) << name;
    EXPECT_EQ(s.at(name).shape(), shape) << name;
  }
  for (const auto& [name, t] : s.tensors()) got.insert(name);
  EXPECT_EQ(got, want);
  EXPECT_EQ(want.size(), parameter_shapes(c).size());
  EXPECT_EQ(s.fingerprint(), c.fingerprint());
}

TEST(BuildModelTest, DeterministicPerSeedAndNormsAtOne) {
  const ModelConfig c = tiny_config();
  const ParameterStore a = build_model(c, 42), b = build_model(c, 42), other = build_model(c, 43);
  EXPECT_EQ(a.tensors(), b.tensors());
  EXPECT_NE(a.tensors(), other.tensors());
  for (const auto& [name, t] : a.tensors()) {
    if (t.rank() == 1) {
      for (Real v : t.data()) EXPECT_EQ(v, 1) << name;
    } else {
      for (Real v : t.data()) EXPECT_LE(std::abs(v), 0.04 + 1e-7) << name;
    }
  }
}

TEST(CheckpointTest, SaveLoadIsBitExact) {
  testing::ScratchDir dir("ckpt");
  const ParameterStore a = build_model(tiny_config(), 5);
  a.save(dir / "a.bin", {{"note", "x"}});
  const ParameterStore b = ParameterStore::load(dir / "a.bin");
  EXPECT_EQ(b.config(), a.config());
  EXPECT_EQ(b.fingerprint(), a.fingerprint());
  EXPECT_EQ(b.tensors(), a.tensors());
}

TEST(CheckpointTest, TruncatedFileIsRejected) {
  testing::ScratchDir dir("ckpt");
  build_model(tiny_config(), 5).save(dir / "a.bin");
  std::string bytes = testing::slurp(dir / "a.bin");
  testing::spit(dir / "b.bin", bytes.substr(0, bytes.size() - 5));
  EXPECT_THROW(ParameterStore::load(dir / "b.bin"), Error);
}

// ---------------------------------------------------------------- rope

TEST(RopeTest, PositionZeroIsIdentity) {
  Rng rng(1);
  const Tensor x = random_tensor({3, 16}, rng);
  const std::vector<std::int32_t> zeros(3, 0);
  EXPECT_EQ(apply_rope(x, zeros, plain_rope_frequencies(8, 10000.0), 2), x);
}

TEST(RopeTest, DotProductDependsOnOffsetOnly) {
  Rng rng(2);
  for (double s : {1.0, 16.0}) {
    const FrequencyTable table =
        s == 1.0 ? plain_rope_frequencies(16, 10000.0) : yarn_frequencies(16, 10000.0, s, 128);
    for (int trial = 0; trial < 200; ++trial) {
      const Tensor q = random_tensor({1, 16}, rng), k = random_tensor({1, 16}, rng);
      std::uniform_int_distribution<int> pos(0, 500);
      const std::int32_t a = pos(rng), b = pos(rng), c = pos(rng);
      const auto dot = [&](std::int32_t pa, std::int32_t pb) {
        const std::int32_t p1[] = {pa}, p2[] = {pb};
        const Tensor rq = apply_rope(q, p1, table, 1), rk = apply_rope(k, p2, table, 1);
        double d = 0;
        for (std::size_t i = 0; i < 16; ++i) d += double(rq[i]) * rk[i];
        return d;
      };
      EXPECT_NEAR(dot(a, b), dot(a + c, b + c), 1e-4);
    }
  }
}

TEST(RopeTest, UnitYarnFactorIsPlainRope) {
  ModelConfig c = tiny_config();
  const FrequencyTable plain = plain_rope_frequencies(c.head_dim(), c.rope_base);
  const FrequencyTable yarn1 = rope_frequencies(c);
  EXPECT_EQ(yarn1.inv_freq, plain.inv_freq);
  EXPECT_EQ(yarn1.attention_scale, 1.0);
  const FrequencyTable direct = yarn_frequencies(c.head_dim(), c.rope_base, 1.0, 64);
  EXPECT_EQ(direct.inv_freq, plain.inv_freq);
}

TEST(RopeTest, FrequenciesStrictlyDecrease) {
  for (double s : {1.0, 2.0, 16.0}) {
    const FrequencyTable t = s == 1.0 ? plain_rope_frequencies(90, 10000.0) : yarn_frequencies(90, 10000.0, s, 4096);
    for (std::size_t i = 1; i < t.inv_freq.size(); ++i) EXPECT_LT(t.inv_freq[i], t.inv_freq[i - 1]);
  }
}

TEST(RopeTest, YarnInterpolatesLowFrequenciesOnly) {
  const FrequencyTable plain = plain_rope_frequencies(64, 10000.0);
  const FrequencyTable y = yarn_frequencies(64, 10000.0, 16.0, 4096);
  // Fast pairs are kept, the slowest are divided by s.
  EXPECT_DOUBLE_EQ(y.inv_freq.front(), plain.inv_freq.front());
  EXPECT_NEAR(y.inv_freq.back(), plain.inv_freq.back() / 16.0, 1e-15);
  EXPECT_NEAR(y.attention_scale, 0.1 * std::log(16.0) + 1.0, 1e-12);
  EXPECT_NEAR(yarn_frequencies(64, 10000.0, 2.0, 4096).attention_scale, 0.1 * std::log(2.0) + 1.0, 1e-12);
}

TEST(RopeTest, OddHeadDimIsConfigError) { EXPECT_THROW(plain_rope_frequencies(5, 10000.0), ConfigError); }

// ---------------------------------------------------------------- attention

/// Multi-head attention written out with scalar loops.
std::vector<double> mha_oracle(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                               std::span<const std::int32_t> segments) {
  const std::size_t T = q.dim(0), d = q.dim(1) / heads;
  std::vector<double> out(T * heads * d, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < T; ++i) {
      if (segments[i] == 0) continue;
      std::vector<double> s;
      std::vector<std::size_t> js;
      for (std::size_t j = 0; j <= i; ++j) {
        if (segments[j] != segments[i]) continue;
        double dot = 0;
        for (std::size_t c = 0; c < d; ++c) dot += double(q.at(i, h * d + c)) * k.at(j, h * d + c);
        s.push_back(dot / std::sqrt(double(d)));
        js.push_back(j);
      }
      const double mx = *std::max_element(s.begin(), s.end());
      double z = 0;
      for (double& x : s) z += (x = std::exp(x - mx));
      for (std::size_t n = 0; n < js.size(); ++n)
        for (std::size_t c = 0; c < d; ++c) out[i * heads * d + h * d + c] += s[n] / z * v.at(js[n], h * d + c);
    }
  }
  return out;
}

TEST(AttentionTest, EqualHeadCountsMatchMultiHeadOracle) {
  Rng rng(4);
  const std::vector<std::int32_t> segments{1, 1, 1, 2, 2, 2, 2, 0};
  const Tensor mask = mask_tensor(segments);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor q = random_tensor({8, 12}, rng, -2, 2), k = random_tensor({8, 12}, rng, -2, 2),
                 v = random_tensor({8, 12}, rng);
    Tape tape;
    const Tensor y = grouped_attention(tape.constant(q), tape.constant(k), tape.constant(v), mask, 3, 3).value();
    const std::vector<double> want = mha_oracle(q, k, v, 3, segments);
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(y[i], want[i], 1e-5);
  }
}

TEST(AttentionTest, GroupedHeadsShareKeyValues) {
  Rng rng(5);
  const std::vector<std::int32_t> segments(5, 1);
  const Tensor mask = mask_tensor(segments);
  const Tensor q = random_tensor({5, 16}, rng), k = random_tensor({5, 8}, rng), v = random_tensor({5, 8}, rng);
  // Expanding each KV head to its query group turns GQA into MHA.
  Tensor ke({5, 16}), ve({5, 16});
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t h = 0; h < 4; ++h)
      for (std::size_t c = 0; c < 4; ++c) {
        ke.at(t, h * 4 + c) = k.at(t, (h / 2) * 4 + c);
        ve.at(t, h * 4 + c) = v.at(t, (h / 2) * 4 + c);
      }
  Tape tape;
  const Tensor y = grouped_attention(tape.constant(q), tape.constant(k), tape.constant(v), mask, 4, 2).value();
  const std::vector<double> want = mha_oracle(q, ke, ve, 4, segments);
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(y[i], want[i], 1e-5);
}

TEST(AttentionTest, SingleTokenPassesValueThroughOutputProjection) {
  Rng rng(6);
  const Tensor h = random_tensor({1, 8}, rng), wq = random_tensor({8, 8}, rng), wk = random_tensor({8, 4}, rng),
               wv = random_tensor({8, 4}, rng), wo = random_tensor({8, 8}, rng);
  const std::vector<std::int32_t> pos{0}, seg{1};
  Tape tape;
  const AttentionWeights w{tape.constant(wq), tape.constant(wk), tape.constant(wv), tape.constant(wo)};
  const Tensor y =
      attention(tape.constant(h), w, mask_tensor(seg), pos, plain_rope_frequencies(4, 10000.0), 2, 1).value();
  // Both query heads read the single KV head.
  const Tensor vproj = matmul(h, wv);
  Tensor concat({1, 8});
  for (std::size_t c = 0; c < 4; ++c) concat[c] = concat[4 + c] = vproj[c];
  const Tensor want = matmul(concat, wo);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(y[i], want[i], 1e-5);
}

TEST(AttentionTest, BlockedSegmentsMatchSeparateRuns) {
  Rng rng(7);
  const Tensor wq = random_tensor({8, 8}, rng), wk = random_tensor({8, 4}, rng), wv = random_tensor({8, 4}, rng),
               wo = random_tensor({8, 8}, rng);
  const FrequencyTable freq = plain_rope_frequencies(4, 10000.0);
  const Tensor h = random_tensor({7, 8}, rng);
  const std::vector<std::int32_t> seg{1, 1, 1, 2, 2, 2, 2}, pos{0, 1, 2, 0, 1, 2, 3};
  Tape tape;
  const AttentionWeights w{tape.constant(wq), tape.constant(wk), tape.constant(wv), tape.constant(wo)};
  const Tensor packed = attention(tape.constant(h), w, mask_tensor(seg), pos, freq, 2, 1).value();
  for (const auto& [begin, len] : std::vector<std::pair<std::size_t, std::size_t>>{{0, 3}, {3, 4}}) {
    Tensor part({len, 8});
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t c = 0; c < 8; ++c) part.at(t, c) = h.at(begin + t, c);
    std::vector<std::int32_t> p(len), s(len, 1);
    std::iota(p.begin(), p.end(), 0);
    const Tensor alone = attention(tape.constant(part), w, mask_tensor(s), p, freq, 2, 1).value();
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(packed.at(begin + t, c), alone.at(t, c), 1e-5);
  }
}

TEST(AttentionTest, MaskShapeMismatchIsDimensionError) {
  Tape tape;
  const std::vector<std::int32_t> seg{1, 1};
  EXPECT_THROW(grouped_attention(tape.constant(Tensor({3, 4})), tape.constant(Tensor({3, 4})),
                                 tape.constant(Tensor({3, 4})), mask_tensor(seg), 1, 1),
               DimensionError);
}

// ---------------------------------------------------------------- routing

TEST(RouteTokensTest, HandComputedPair) {
  const RouterDecision d = route_tokens(Tensor({1, 4}, {2.0, 1.0, 0.5, -1.0}), 2);
  EXPECT_EQ(d.expert(0, 0), 0u);
  EXPECT_EQ(d.expert(0, 1), 1u);
  EXPECT_NEAR(d.weight(0, 0), 0.731059, 1e-6);
  EXPECT_NEAR(d.weight(0, 1), 0.268941, 1e-6);
}

TEST(RouteTokensTest, EqualLogitsAllExpertsGiveUniformWeights) {
  const RouterDecision d = route_tokens(Tensor::filled({1, 5}, Real(0.7)), 5);
  for (std::size_t s = 0; s < 5; ++s) {
    EXPECT_EQ(d.expert(0, s), s);
    EXPECT_NEAR(d.weight(0, s), 0.2, 1e-7);
  }
}

TEST(RouteTokensTest, TopOneIsArgmaxWithUnitWeight) {
  const RouterDecision d = route_tokens(Tensor({1, 4}, {0.1, 3.0, -2.0, 2.9}), 1);
  EXPECT_EQ(d.expert(0, 0), 1u);
  EXPECT_EQ(d.weight(0, 0), 1);
}

TEST(RouteTokensTest, TiesGoToLowerIndex) {
  const RouterDecision d = route_tokens(Tensor({1, 5}, {0, 1, 0, 1, 1}), 2);
  EXPECT_EQ(d.expert(0, 0), 1u);
  EXPECT_EQ(d.expert(0, 1), 3u);
}

TEST(RouteTokensTest, RandomDecisionInvariants) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t N = 2 + trial % 7, k = 1 + trial % N, T = 1 + trial % 9;
    const RouterDecision d = route_tokens(random_tensor({T, N}, rng, -4, 4), k);
    for (std::size_t t = 0; t < T; ++t) {
      std::set<std::size_t> seen;
      double s = 0;
      for (std::size_t j = 0; j < k; ++j) {
        EXPECT_TRUE(seen.insert(d.expert(t, j)).second);
        EXPECT_GT(d.weight(t, j), 0);
        s += d.weight(t, j);
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
    EXPECT_NEAR(std::accumulate(d.load.begin(), d.load.end(), 0.0), 1.0, 1e-9);
    EXPECT_NEAR(std::accumulate(d.importance.begin(), d.importance.end(), 0.0), 1.0, 1e-6);
  }
}

TEST(LoadBalanceTest, BalancedRoutingIsOne) {
  // Uniform router probabilities.
  EXPECT_NEAR(load_balance_loss(route_tokens(Tensor({6, 4}), 2)), 1.0, 1e-6);
  // Each expert chosen equally often with a symmetric probability pattern.
  Tensor logits({4, 4});
  for (std::size_t t = 0; t < 4; ++t) logits.at(t, t) = 2;
  EXPECT_NEAR(load_balance_loss(route_tokens(logits, 1)), 1.0, 1e-6);
}

TEST(LoadBalanceTest, CollapsedRoutingIsNumExperts) {
  Tensor logits({5, 4});
  for (std::size_t t = 0; t < 5; ++t) logits.at(t, 0) = 100;
  EXPECT_NEAR(load_balance_loss(route_tokens(logits, 1)), 4.0, 1e-6);
}

TEST(LoadBalanceTest, SingleTokenDecisionsNeverFallBelowOne) {
  // Probabilities are 32-bit, so the bound holds to float resolution.
  Rng rng(9);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t N = 2 + trial % 8, k = 1 + trial % N;
    EXPECT_GE(load_balance_loss(route_tokens(random_tensor({1, N}, rng, -5, 5), k)), 1.0 - 1e-6);
  }
}

TEST(LoadBalanceTest, MultiTokenBatchCanFallBelowOne) {
  // Routing chooses by probability but the penalty pairs load with mean
  // probability, so batches with mixed confidence can land under 1.
  Tensor logits({3, 2});
  logits.at(0, 0) = logits.at(1, 0) = Real(std::log(0.51));
  logits.at(0, 1) = logits.at(1, 1) = Real(std::log(0.49));
  logits.at(2, 0) = -100;
  const double loss = load_balance_loss(route_tokens(logits, 1));
  EXPECT_NEAR(loss, 2.0 * (2.0 / 3.0 * 0.34 + 1.0 / 3.0 * 0.66), 1e-6);
  EXPECT_LT(loss, 0.9);
}

TEST(LoadBalanceTest, UncountedTokensAreIgnored) {
  Tensor logits({3, 4});
  logits.at(2, 3) = 50;
  const bool counted[] = {true, true, false};
  EXPECT_NEAR(load_balance_loss(route_tokens(logits, 2, counted)), 1.0, 1e-6);
}

// ---------------------------------------------------------------- moe

struct MoeFixture {
  Tensor router;
  std::vector<std::array<Tensor, 3>> experts;

  MoeLayerWeights bind(Tape& tape) const {
    MoeLayerWeights w{tape.constant(router), {}};
    for (const auto& e : experts) w.experts.push_back({tape.constant(e[0]), tape.constant(e[1]), tape.constant(e[2])});
    return w;
  }
};

MoeFixture random_moe(Rng& rng, std::size_t H, std::size_t m, std::size_t N) {
  MoeFixture f{random_tensor({H, N}, rng, -2, 2), {}};
  for (std::size_t e = 0; e < N; ++e)
    f.experts.push_back({random_tensor({H, m}, rng), random_tensor({H, m}, rng), random_tensor({m, H}, rng)});
  return f;
}

std::vector<double> expert_oracle(std::span<const Real> x, const std::array<Tensor, 3>& e) {
  const std::size_t H = x.size(), m = e[0].dim(1);
  std::vector<double> act(m), out(H, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    double g = 0, u = 0;
    for (std::size_t i = 0; i < H; ++i) {
      g += double(x[i]) * e[0].at(i, j);
      u += double(x[i]) * e[1].at(i, j);
    }
    act[j] = g / (1 + std::exp(-g)) * u;
  }
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i] += act[j] * e[2].at(j, i);
  return out;
}

TEST(MoeTest, MatchesBruteForceOracle) {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const MoeFixture f = random_moe(rng, 6, 5, 4);
    const Tensor x = random_tensor({7, 6}, rng);
    Tape tape;
    const MoeOutput out = moe_forward(tape.constant(x), f.bind(tape), 2);
    const Tensor y = out.output.value();
    const RouterDecision d = route_tokens(matmul(x, f.router), 2);
    for (std::size_t t = 0; t < 7; ++t) {
      std::vector<double> all[4];
      for (std::size_t e = 0; e < 4; ++e) all[e] = expert_oracle(x.row(t), f.experts[e]);
      for (std::size_t i = 0; i < 6; ++i) {
        double want = 0;
        for (std::size_t s = 0; s < 2; ++s) want += d.weight(t, s) * all[d.expert(t, s)][i];
        EXPECT_NEAR(y.at(t, i), want, 1e-5);
      }
    }
    EXPECT_NEAR(out.aux_loss.value()[0], load_balance_loss(d), 1e-6);
  }
}

TEST(MoeTest, ZeroInputGivesZeroOutput) {
  Rng rng(11);
  const MoeFixture f = random_moe(rng, 6, 5, 4);
  Tape tape;
  const Tensor y = moe_forward(tape.constant(Tensor({3, 6})), f.bind(tape), 2).output.value();
  for (Real v : y.data()) EXPECT_EQ(v, 0);
}

TEST(MoeTest, IdenticalExpertsUniformRouterEqualDenseExpert) {
  Rng rng(12);
  MoeFixture f = random_moe(rng, 6, 5, 4);
  f.router = Tensor({6, 4});
  for (auto& e : f.experts) e = f.experts.front();
  const Tensor x = random_tensor({4, 6}, rng);
  Tape tape;
  const Tensor y = moe_forward(tape.constant(x), f.bind(tape), 4).output.value();
  for (std::size_t t = 0; t < 4; ++t) {
    const std::vector<double> want = expert_oracle(x.row(t), f.experts.front());
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(y.at(t, i), want[i], 1e-5);
  }
}

// ---------------------------------------------------------------- forward

PackedSequence two_segment_row(std::vector<std::int32_t> a, std::vector<std::int32_t> b, std::size_t capacity) {
  std::vector<SourceExample> ex(2);
  ex[0].tokens = std::move(a);
  ex[1].tokens = std::move(b);
  for (auto& e : ex) e.eligible.assign(e.tokens.size(), true);
  return pack(ex, capacity, 15, 0).front();
}

TEST(ForwardTest, LogitsShape) {
  const ParameterStore s = build_model(tiny_config(), 1);
  const PackedSequence row = two_segment_row({1, 2, 3}, {4, 5}, 10);
  const Tensor logits = forward_logits(s, TokenBatch::from(row));
  EXPECT_EQ(logits.shape(), (Shape{10, 16}));
  EXPECT_TRUE(logits.all_finite());
}

TEST(ForwardTest, MutatingOneSegmentLeavesOtherBitwiseUnchanged) {
  const ParameterStore s = build_model(tiny_config(), 2);
  const PackedSequence a = two_segment_row({1, 2, 3, 4}, {5, 6, 7}, 12);
  const PackedSequence b = two_segment_row({1, 2, 3, 4}, {9, 9, 1}, 12);
  const Tensor la = forward_logits(s, TokenBatch::from(a)), lb = forward_logits(s, TokenBatch::from(b));
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t v = 0; v < 16; ++v) EXPECT_EQ(la.at(t, v), lb.at(t, v));
}

TEST(ForwardTest, OutOfVocabularyTokenIsInputError) {
  const ParameterStore s = build_model(tiny_config(), 1);
  const std::vector<std::int32_t> tokens{1, 16};
  std::vector<std::int32_t> pos, seg;
  EXPECT_THROW(forward_logits(s, single_sequence(tokens, pos, seg)), InputError);
}

TEST(ForwardTest, AuxLossIsMeanOfLayerPenalties) {
  const ParameterStore s = build_model(tiny_config(), 3);
  const PackedSequence row = two_segment_row({1, 2, 3}, {4, 5, 6}, 10);
  Tape tape;
  BoundModel m(s, tape, true);
  const ForwardResult r = forward(m, TokenBatch::from(row));
  ASSERT_EQ(r.decisions.size(), 2u);
  EXPECT_NEAR(r.aux_loss.value()[0], (load_balance_loss(r.decisions[0]) + load_balance_loss(r.decisions[1])) / 2,
              1e-6);
}

TEST(ForwardTest, RouterReceivesGradientFromAuxLoss) {
  ParameterStore s = build_model(tiny_config(), 4);
  const PackedSequence row = two_segment_row({1, 2, 3, 4}, {5, 6, 7}, 12);
  Tape tape;
  BoundModel m(s, tape, true);
  const ForwardResult r = forward(m, TokenBatch::from(row));
  const GradientMap g = tape.backward(r.aux_loss);
  for (std::size_t l = 0; l < 2; ++l) {
    const Tensor& gr = g.at(param_names::layer(l, "moe.router"));
    EXPECT_TRUE(std::any_of(gr.data().begin(), gr.data().end(), [](Real v) { return v != 0; })) << l;
  }
}

// ---------------------------------------------------------------- sampling

TEST(SamplingTest, DefaultsMatchStandardConfiguration) {
  const SamplingParams p;
  EXPECT_EQ(p.temperature, 0.6);
  EXPECT_EQ(p.top_k, 20u);
  EXPECT_EQ(p.top_p, 0.95);
  EXPECT_EQ(p.min_p, 0.0);
}

TEST(SamplingTest, ZeroTemperatureAndTopOneAreArgmax) {
  const std::vector<Real> logits{0.5, 2.0, 1.9, -1.0};
  Rng rng(1);
  SamplingParams greedy{0.0, 0, 1.0, 0.0};
  SamplingParams top1{1.5, 1, 1.0, 0.0};
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(sample_next(logits, greedy, rng), 1);
    EXPECT_EQ(sample_next(logits, top1, rng), 1);
  }
}

TEST(SamplingTest, NucleusTruncationFrequencies) {
  const std::vector<Real> logits{Real(std::log(0.5)), Real(std::log(0.3)), Real(std::log(0.2))};
  const SamplingParams p{1.0, 0, 0.8, 0.0};
  const std::vector<double> dist = sampling_distribution(logits, p);
  EXPECT_NEAR(dist[0], 0.625, 1e-6);
  EXPECT_NEAR(dist[1], 0.375, 1e-6);
  EXPECT_EQ(dist[2], 0.0);
  Rng rng(2026);
  std::array<int, 3> counts{};
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ++counts[static_cast<std::size_t>(sample_next(logits, p, rng))];
  EXPECT_NEAR(counts[0] / double(draws), 0.625, 0.01);
  EXPECT_NEAR(counts[1] / double(draws), 0.375, 0.01);
  EXPECT_EQ(counts[2], 0);
}

TEST(SamplingTest, EmptySupportFallsBackToArgmax) {
  const std::vector<Real> logits{1.0, 3.0, 2.0};
  const bool banned[] = {true, true, true};
  const std::vector<double> dist = sampling_distribution(logits, SamplingParams{}, banned);
  EXPECT_EQ(dist[1], 1.0);
}

TEST(SamplingTest, InvalidParametersAreConfigErrors) {
  EXPECT_THROW((SamplingParams{-1.0, 0, 1.0, 0.0}.validate()), ConfigError);
  EXPECT_THROW((SamplingParams{1.0, 0, 0.0, 0.0}.validate()), ConfigError);
  EXPECT_THROW((SamplingParams{1.0, 0, 1.0, 1.5}.validate()), ConfigError);
}

}  // namespace
}  // namespace deskmoe
