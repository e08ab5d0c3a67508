/*
 * Copyright 2026 The asymfuse Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "asymfuse/errors.h"
#include "asymfuse/fusion.h"
#include "asymfuse/ops.h"
#include "test_util.h"

namespace asymfuse {
namespace {

using testing::RandomTensor;

void Fill(Tensor& t, double v) {
  std::fill(t.mutable_values().begin(), t.mutable_values().end(), v);
}

FusionConfig SmallConfig(int rounds = 2) {
  FusionConfig cfg;
  cfg.n_rounds = rounds;
  cfg.embed_dim = 8;
  cfg.n_heads = 2;
  cfg.n_classes = 3;
  return cfg;
}

struct Inputs {
  TokenSequence specific, shared, ts;
};

Inputs RandomInputs(std::mt19937_64& g, std::size_t batch = 2) {
  return {{RandomTensor({batch, 4, 8}, g), Modality::kTabular},
          {RandomTensor({batch, 4, 8}, g), Modality::kTabular},
          {RandomTensor({batch, 5, 8}, g), Modality::kTimeSeries}};
}

std::size_t CrossParameterCount(const FusionParams& p) {
  std::vector<NamedTensor> all;
  p.Collect("fusion", all);
  std::size_t n = 0;
  for (const auto& t : all) {
    if (t.path.find("cross") != std::string::npos) n += t.tensor.size();
  }
  return n;
}

TEST(FusionTest, CrossAttentionParametersIndependentOfRounds) {
  Rng one(0);
  const CrossAttentionParams block = CrossAttentionParams::Create(8, one);
  std::vector<NamedTensor> block_params;
  block.Collect("cross", block_params);
  const std::size_t single = CountParameters(block_params);
  for (int rounds : {1, 2, 3, 5}) {
    Rng rng(1);
    const FusionParams p = FusionParams::Create(SmallConfig(rounds), rng);
    EXPECT_EQ(CrossParameterCount(p), single) << rounds << " rounds";
    EXPECT_EQ(p.self_blocks.size(), static_cast<std::size_t>(2 * rounds));
  }
}

TEST(FusionTest, ZeroedCrossOutputMakesLogitsIndependentOfContexts) {
  const FusionConfig cfg = SmallConfig();
  Rng rng(2);
  FusionParams p = FusionParams::Create(cfg, rng);
  Fill(p.cross.attention.w_o, 0.0);
  Fill(p.cross.attention.b_o, 0.0);
  std::mt19937_64 g(2);
  const Inputs a = RandomInputs(g);
  const Inputs b = RandomInputs(g);
  ForwardContext ctx;
  const Tensor la = Fuse(a.specific, a.shared, a.ts, cfg, p, ctx);
  const Tensor lb = Fuse(a.specific, b.shared, b.ts, cfg, p, ctx);
  for (std::size_t i = 0; i < la.size(); ++i) EXPECT_EQ(la.value(i), lb.value(i));
  // Without the zeroing both contexts matter.
  Rng fresh(2);
  const FusionParams q = FusionParams::Create(cfg, fresh);
  const Tensor qa = Fuse(a.specific, a.shared, a.ts, cfg, q, ctx);
  const Tensor qb = Fuse(a.specific, a.shared, b.ts, cfg, q, ctx);
  EXPECT_NE(qa.value(0), qb.value(0));
}

TEST(FusionTest, ZeroedAttentionOutputsGiveHeadOfCls) {
  const FusionConfig cfg = SmallConfig();
  Rng rng(3);
  FusionParams p = FusionParams::Create(cfg, rng);
  for (auto& b : p.self_blocks) {
    Fill(b.attention.w_o, 0.0);
    Fill(b.attention.b_o, 0.0);
  }
  Fill(p.cross.attention.w_o, 0.0);
  Fill(p.cross.attention.b_o, 0.0);
  std::mt19937_64 g(3);
  const Inputs in = RandomInputs(g);
  ForwardContext ctx;
  const Tensor logits = Fuse(in.specific, in.shared, in.ts, cfg, p, ctx);
  const Tensor expected = p.head.Apply(Reshape(p.cls, {1, 8}));
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_NEAR(logits.value(i * 3 + c), expected.value(c), 1e-15);
    }
  }
}

TEST(FusionTest, PermutingTimeSeriesTokensLeavesLogitsUnchanged) {
  const FusionConfig cfg = SmallConfig();
  Rng rng(4);
  const FusionParams p = FusionParams::Create(cfg, rng);
  std::mt19937_64 g(4);
  const Inputs in = RandomInputs(g, 1);
  Tensor permuted({1, 5, 8});
  const std::size_t perm[] = {3, 0, 4, 2, 1};
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t j = 0; j < 8; ++j) {
      permuted.mutable_values()[t * 8 + j] = in.ts.tokens.value(perm[t] * 8 + j);
    }
  }
  ForwardContext ctx;
  const Tensor a = Fuse(in.specific, in.shared, in.ts, cfg, p, ctx);
  const Tensor b = Fuse(in.specific, in.shared, {permuted, Modality::kTimeSeries}, cfg, p, ctx);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a.value(i), b.value(i), 1e-10);
}

TEST(FusionTest, SharedCrossWeightsAffectEveryApplication) {
  // With one round and per-context weights off, perturbing the single cross
  // block changes the output through both the shared and the time-series
  // injection: zeroing either context alone is not enough to hide it.
  const FusionConfig cfg = SmallConfig(1);
  Rng rng(5);
  FusionParams p = FusionParams::Create(cfg, rng);
  EXPECT_FALSE(p.ts_cross.has_value());
  std::mt19937_64 g(5);
  const Inputs in = RandomInputs(g);
  ForwardContext ctx;
  const Tensor base_a = Fuse(in.specific, in.shared, in.ts, cfg, p, ctx);
  Tensor weights;
  const TokenSequence q{PrependCls(p.cls, in.specific.tokens), Modality::kTabular};
  const Tensor before_shared = CrossAttention(q, in.shared, p.cross, 2, ctx).tokens;
  const Tensor before_ts = CrossAttention(q, in.ts, p.cross, 2, ctx).tokens;
  p.cross.attention.w_v.mutable_values()[0] += 0.3;
  const Tensor after_shared = CrossAttention(q, in.shared, p.cross, 2, ctx).tokens;
  const Tensor after_ts = CrossAttention(q, in.ts, p.cross, 2, ctx).tokens;
  EXPECT_NE(before_shared.value(0), after_shared.value(0));
  EXPECT_NE(before_ts.value(0), after_ts.value(0));
  EXPECT_NE(Fuse(in.specific, in.shared, in.ts, cfg, p, ctx).value(0), base_a.value(0));
}

TEST(FusionTest, PerContextWeightsAddOneBlock) {
  FusionConfig cfg = SmallConfig();
  cfg.per_context_weights = true;
  Rng rng(6);
  const FusionParams p = FusionParams::Create(cfg, rng);
  ASSERT_TRUE(p.ts_cross.has_value());
  Rng plain_rng(6);
  const FusionParams plain = FusionParams::Create(SmallConfig(), plain_rng);
  EXPECT_EQ(CrossParameterCount(p), 2 * CrossParameterCount(plain));
}

TEST(CrossAttentionTest, SingleContextTokenGetsAllWeight) {
  Rng rng(7);
  const CrossAttentionParams p = CrossAttentionParams::Create(8, rng);
  std::mt19937_64 g(7);
  Tensor weights;
  ForwardContext ctx;
  const TokenSequence out = CrossAttention({RandomTensor({2, 4, 8}, g)},
                                           {RandomTensor({2, 1, 8}, g)}, p, 2, ctx, &weights);
  for (double w : weights.values()) EXPECT_NEAR(w, 1.0, 1e-15);
  EXPECT_EQ(out.n_tokens(), 4u);
}

TEST(CrossAttentionTest, TokenCountFollowsQueryAndRowsSumToOne) {
  Rng rng(8);
  const CrossAttentionParams p = CrossAttentionParams::Create(8, rng);
  std::mt19937_64 g(8);
  ForwardContext ctx;
  for (std::size_t n_ctx : {1u, 3u, 11u}) {
    Tensor weights;
    const TokenSequence out = CrossAttention({RandomTensor({1, 5, 8}, g)},
                                             {RandomTensor({1, n_ctx, 8}, g, 4.0)}, p, 2,
                                             ctx, &weights);
    EXPECT_EQ(out.tokens.shape(), (Shape{1, 5, 8}));
    const Tensor sums = Sum(weights, -1);
    for (double s : sums.values()) EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(CrossAttentionTest, OneHeadMatchesHandRolledOracle) {
  Rng rng(9);
  const std::size_t d = 4;
  const CrossAttentionParams p = CrossAttentionParams::Create(d, rng);
  std::mt19937_64 g(9);
  const Tensor q = RandomTensor({1, 2, d}, g);
  const Tensor c = RandomTensor({1, 3, d}, g);
  ForwardContext ctx;
  const Tensor out = CrossAttention({q}, {c}, p, 1, ctx).tokens;

  // Oracle: layer norms (unit gain, zero bias at init), projections, softmax.
  auto norm = [](std::vector<double> v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= v.size();
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= v.size();
    for (double& x : v) x = (x - mean) / std::sqrt(var + 1e-5);
    return v;
  };
  auto row = [&](const Tensor& t, std::size_t i) {
    std::vector<double> r(d);
    for (std::size_t j = 0; j < d; ++j) r[j] = t.value(i * d + j);
    return r;
  };
  auto apply = [&](const std::vector<double>& x, const Tensor& w, const Tensor& b) {
    std::vector<double> y(d);
    for (std::size_t j = 0; j < d; ++j) {
      y[j] = b.value(j);
      for (std::size_t k = 0; k < d; ++k) y[j] += x[k] * w.value(k * d + j);
    }
    return y;
  };
  const auto& a = p.attention;
  for (std::size_t i = 0; i < 2; ++i) {
    const auto qi = apply(norm(row(q, i)), a.w_q, a.b_q);
    std::vector<double> e(3);
    double z = 0.0;
    std::vector<std::vector<double>> v(3);
    for (std::size_t j = 0; j < 3; ++j) {
      const auto cj = norm(row(c, j));
      e[j] = std::exp(testing::Dot(qi, apply(cj, a.w_k, a.b_k)) / std::sqrt(double(d)));
      z += e[j];
      v[j] = apply(cj, a.w_v, a.b_v);
    }
    std::vector<double> mixed(d, 0.0);
    for (std::size_t j = 0; j < 3; ++j) {
      for (std::size_t k = 0; k < d; ++k) mixed[k] += e[j] / z * v[j][k];
    }
    const auto o = apply(mixed, a.w_o, a.b_o);
    for (std::size_t k = 0; k < d; ++k) {
      EXPECT_NEAR(out.value(i * d + k), q.value(i * d + k) + o[k], 1e-10);
    }
  }
}

TEST(CrossAttentionTest, WidthMismatchIsDimensionError) {
  Rng rng(10);
  const CrossAttentionParams p = CrossAttentionParams::Create(8, rng);
  ForwardContext ctx;
  EXPECT_THROW(CrossAttention({Tensor({1, 2, 8})}, {Tensor({1, 2, 6})}, p, 2, ctx),
               DimensionError);
}

TEST(FusionTest, ShapeErrorsAndConfigValidation) {
  const FusionConfig cfg = SmallConfig();
  Rng rng(11);
  const FusionParams p = FusionParams::Create(cfg, rng);
  ForwardContext ctx;
  EXPECT_THROW(Fuse({Tensor({1, 2, 6})}, {Tensor({1, 2, 8})}, {Tensor({1, 2, 8})}, cfg, p, ctx),
               DimensionError);
  FusionConfig bad = cfg;
  bad.n_rounds = 0;
  EXPECT_THROW(bad.Validate(), ConfigError);
  bad = cfg;
  bad.n_heads = 3;
  EXPECT_THROW(bad.Validate(), ConfigError);
}

TEST(FusionTest, GradientFlowsToAllInputs) {
  const FusionConfig cfg = SmallConfig(1);
  Rng rng(12);
  const FusionParams p = FusionParams::Create(cfg, rng);
  std::mt19937_64 g(12);
  Tensor s = RandomTensor({2, 3, 8}, g, 1.0, true);
  Tensor sh = RandomTensor({2, 3, 8}, g, 1.0, true);
  Tensor ts = RandomTensor({2, 4, 8}, g, 1.0, true);
  ForwardContext ctx;
  const double err = testing::GradientCheck(
      [&] {
        return SumAll(Mul(Fuse({s}, {sh}, {ts, Modality::kTimeSeries}, cfg, p, ctx),
                          Tensor::Matrix({{1, -2, 0.5}, {0.3, 1, -1}})));
      },
      {s, sh, ts});
  EXPECT_LT(err, 1e-4);
}

TEST(PredictProbaTest, Examples) {
  const Tensor u = PredictProba(Tensor::Matrix({{0, 0, 0}}));
  for (double v : u.values()) EXPECT_NEAR(v, 1.0 / 3, 1e-15);
  const Tensor p = PredictProba(Tensor::Matrix({{2, 0, 0}}));
  EXPECT_NEAR(p.value(0), 0.78699, 1e-5);
  EXPECT_NEAR(p.value(1), 0.10651, 1e-5);
  const Tensor shifted = PredictProba(Tensor::Matrix({{12, 10, 10}}));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(shifted.value(i), p.value(i), 1e-15);
}

}  // namespace
}  // namespace asymfuse
