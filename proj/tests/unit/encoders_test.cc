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

#include "asymfuse/encoders.h"
#include "asymfuse/errors.h"
#include "asymfuse/ops.h"
#include "test_util.h"

namespace asymfuse {
namespace {

using testing::RandomTensor;

void Fill(Tensor& t, double v) {
  std::fill(t.mutable_values().begin(), t.mutable_values().end(), v);
}

TabularSchema ThreeFeatureSchema() {
  TabularSchema s;
  s.numeric_features = {"age", "sbp_tte"};
  s.categorical_features = {{"diastolic_dysfunction", 3}};
  return s;
}

TEST(TabularSchemaTest, RejectsDuplicatesAndSmallCardinality) {
  TabularSchema s;
  s.numeric_features = {"a", "b"};
  s.categorical_features = {{"a", 3}};
  EXPECT_THROW(s.Validate(), SchemaError);
  s.categorical_features = {{"c", 1}};
  EXPECT_THROW(s.Validate(), SchemaError);
  s.categorical_features = {{"c", 2}};
  EXPECT_NO_THROW(s.Validate());
  EXPECT_EQ(s.FeatureNames(), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(TokenizeTabularTest, IdentityWeightsAndLookup) {
  TabularSchema s;
  s.numeric_features = {"x"};
  s.categorical_features = {{"c", 3}};
  Rng rng(0);
  TabularTokenizerParams p = TabularTokenizerParams::Create(s, 3, rng);
  Fill(p.numeric_weight, 1.0);
  Fill(p.numeric_bias, 0.0);
  const TokenSequence t = TokenizeTabular(TabularRecord{{"x", 2.0}, {"c", 0}}, s, p);
  ASSERT_EQ(t.tokens.shape(), (Shape{1, 2, 3}));
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(t.tokens.value(j), 2.0);
    EXPECT_EQ(t.tokens.value(3 + j), p.category_embeddings[0].value(j));
  }
}

TEST(TokenizeTabularTest, ThirteenFeaturesGiveThirteenTokens) {
  TabularSchema s;
  for (int i = 0; i < 12; ++i) s.numeric_features.push_back("f" + std::to_string(i));
  s.categorical_features = {{"cat", 4}};
  Rng rng(1);
  const auto p = TabularTokenizerParams::Create(s, 8, rng);
  TabularRecord r;
  for (const auto& n : s.numeric_features) r[n] = 0.5;
  r["cat"] = 3;
  EXPECT_EQ(TokenizeTabular(r, s, p).tokens.shape(), (Shape{1, 13, 8}));
}

TEST(TokenizeTabularTest, MissingFeatureAndBadCategory) {
  const TabularSchema s = ThreeFeatureSchema();
  Rng rng(2);
  const auto p = TabularTokenizerParams::Create(s, 4, rng);
  try {
    TokenizeTabular(TabularRecord{{"age", 1}, {"diastolic_dysfunction", 0}}, s, p);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("sbp_tte"), std::string::npos) << e.what();
  }
  EXPECT_THROW(TokenizeTabular(TabularRecord{{"age", 1}, {"sbp_tte", 0},
                                             {"diastolic_dysfunction", 3}},
                               s, p),
               ValueError);
}

TEST(TokenizeTabularTest, EachTokenDependsOnOneFeature) {
  const TabularSchema s = ThreeFeatureSchema();
  Rng rng(3);
  const auto p = TabularTokenizerParams::Create(s, 4, rng);
  const TabularRecord base = {{"age", 0.3}, {"sbp_tte", -1.0}, {"diastolic_dysfunction", 1}};
  const Tensor t0 = TokenizeTabular(base, s, p).tokens;
  const auto names = s.FeatureNames();
  for (std::size_t f = 0; f < names.size(); ++f) {
    TabularRecord r = base;
    r[names[f]] = f == 2 ? 2 : r[names[f]] + 0.7;
    const Tensor t1 = TokenizeTabular(r, s, p).tokens;
    for (std::size_t tok = 0; tok < 3; ++tok) {
      bool changed = false;
      for (std::size_t j = 0; j < 4; ++j) {
        changed = changed || t0.value(tok * 4 + j) != t1.value(tok * 4 + j);
      }
      EXPECT_EQ(changed, tok == f) << "feature " << f << " token " << tok;
    }
  }
}

TEST(TokenizeTabularTest, BatchMatchesPerRecord) {
  const TabularSchema s = ThreeFeatureSchema();
  Rng rng(4);
  const auto p = TabularTokenizerParams::Create(s, 4, rng);
  TabularBatch batch{Tensor::Matrix({{0.1, 0.2}, {-1.0, 3.0}}), {{2}, {0}}};
  const Tensor tb = TokenizeTabular(batch, s, p).tokens;
  const Tensor t1 =
      TokenizeTabular(TabularRecord{{"age", -1.0}, {"sbp_tte", 3.0}, {"diastolic_dysfunction", 0}},
                      s, p)
          .tokens;
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(tb.value(12 + i), t1.value(i));
}

TEST(TokenizeTimeSeriesTest, Examples) {
  Rng rng(5);
  SeriesTokenizerParams p = SeriesTokenizerParams::Create(1, 2, 1, rng);
  p.weight.mutable_values()[0] = 0.5;
  p.weight.mutable_values()[1] = 0.5;
  Fill(p.bias, 0.0);
  EXPECT_EQ(TokenizeTimeSeries(Tensor::Matrix({{1, 3}}), p).tokens.item(), 2.0);
  EXPECT_EQ(TokenizeTimeSeries(Tensor::Matrix({{0, 0}}), p).tokens.item(), 0.0);

  const auto p14 = SeriesTokenizerParams::Create(14, 32, 8, rng);
  const TokenSequence t = TokenizeTimeSeries(Tensor({14, 32}), p14);
  EXPECT_EQ(t.tokens.shape(), (Shape{1, 14, 8}));
  EXPECT_EQ(t.modality, Modality::kTimeSeries);
  EXPECT_THROW(TokenizeTimeSeries(Tensor({14, 31}), p14), DimensionError);
}

TEST(SelfAttentionTest, SingleTokenAttendsToItself) {
  Rng rng(6);
  const AttentionParams p = AttentionParams::Create(4, rng);
  std::mt19937_64 g(6);
  const Tensor x = RandomTensor({1, 1, 4}, g);
  Tensor weights;
  const Tensor out = MultiHeadSelfAttention({x}, p, 2, &weights).tokens;
  for (double w : weights.values()) EXPECT_NEAR(w, 1.0, 1e-15);
  const Tensor expected = Linear(Linear(x, p.w_v, p.b_v), p.w_o, p.b_o);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out.value(i), expected.value(i), 1e-12);
}

TEST(SelfAttentionTest, IdenticalTokensGiveIdenticalOutputs) {
  Rng rng(7);
  const AttentionParams p = AttentionParams::Create(4, rng);
  const Tensor x({1, 2, 4}, {1, -2, 0.5, 3, 1, -2, 0.5, 3});
  const Tensor out = MultiHeadSelfAttention({x}, p, 2).tokens;
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(out.value(j), out.value(4 + j));
}

TEST(SelfAttentionTest, OneHeadMatchesHandRolledOracle) {
  Rng rng(8);
  const std::size_t d = 3;
  const AttentionParams p = AttentionParams::Create(d, rng);
  std::mt19937_64 g(8);
  const Tensor x = RandomTensor({1, 3, d}, g);
  const auto xm = testing::ToMat(Reshape(x, {3, d}));
  auto proj = [&](const Tensor& w, const Tensor& b) {
    testing::Mat out(3, std::vector<double>(d));
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        double s = b.value(j);
        for (std::size_t k = 0; k < d; ++k) s += xm[i][k] * w.value(k * d + j);
        out[i][j] = s;
      }
    }
    return out;
  };
  const auto q = proj(p.w_q, p.b_q);
  const auto k = proj(p.w_k, p.b_k);
  const auto v = proj(p.w_v, p.b_v);
  const Tensor out = MultiHeadSelfAttention({x}, p, 1).tokens;
  for (std::size_t i = 0; i < 3; ++i) {
    std::vector<double> a(3);
    double z = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      a[j] = std::exp(testing::Dot(q[i], k[j]) / std::sqrt(3.0));
      z += a[j];
    }
    std::vector<double> mixed(d, 0.0);
    for (std::size_t j = 0; j < 3; ++j) {
      for (std::size_t c = 0; c < d; ++c) mixed[c] += a[j] / z * v[j][c];
    }
    for (std::size_t c = 0; c < d; ++c) {
      double o = p.b_o.value(c);
      for (std::size_t m = 0; m < d; ++m) o += mixed[m] * p.w_o.value(m * d + c);
      EXPECT_NEAR(out.value(i * d + c), o, 1e-10);
    }
  }
}

TEST(SelfAttentionTest, RowsSumToOne) {
  Rng rng(9);
  const AttentionParams p = AttentionParams::Create(8, rng);
  std::mt19937_64 g(9);
  Tensor weights;
  MultiHeadSelfAttention({RandomTensor({3, 7, 8}, g, 5.0)}, p, 4, &weights);
  const Tensor sums = Sum(weights, -1);
  for (double s : sums.values()) EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(EncodeTest, ZeroedResidualBranchesGiveIdentity) {
  EncoderConfig cfg;
  Rng rng(10);
  EncoderParams p = EncoderParams::Create(cfg, rng);
  for (auto& b : p.blocks) {
    Fill(b.attention.w_o, 0.0);
    Fill(b.ffn.w_out, 0.0);
  }
  std::mt19937_64 g(10);
  const Tensor x = RandomTensor({2, 5, 32}, g);
  ForwardContext ctx;
  const Tensor y = Encode({x}, cfg, p, ctx).tokens;
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.value(i), x.value(i));
}

TEST(EncodeTest, ShapePreservedAndWidthChecked) {
  EncoderConfig cfg;
  cfg.embed_dim = 8;
  cfg.n_heads = 2;
  Rng rng(11);
  const EncoderParams p = EncoderParams::Create(cfg, rng);
  ForwardContext ctx;
  for (std::size_t n : {1u, 4u, 9u}) {
    EXPECT_EQ(Encode({Tensor({3, n, 8})}, cfg, p, ctx).tokens.shape(), (Shape{3, n, 8}));
  }
  EXPECT_THROW(Encode({Tensor({3, 4, 6})}, cfg, p, ctx), DimensionError);
}

TEST(EncodeTest, ParameterCountMatchesClosedForm) {
  const EncoderConfig cfg;  // d = 32, 4 heads, 2 blocks, ffn x4
  Rng rng(12);
  std::vector<NamedTensor> params;
  EncoderParams::Create(cfg, rng).Collect("enc", params);
  const std::size_t d = 32;
  const std::size_t m = 4;
  const std::size_t norms = 2 * 2 * (2 * d);
  EXPECT_EQ(CountParameters(params),
            2 * (4 * d * d + 4 * d) + 2 * (2 * d * (m * d) + m * d + d) + norms);
}

TEST(EncodeTest, PermutationEquivariant) {
  EncoderConfig cfg;
  cfg.embed_dim = 8;
  cfg.n_heads = 2;
  Rng rng(13);
  const EncoderParams p = EncoderParams::Create(cfg, rng);
  std::mt19937_64 g(13);
  const Tensor x = RandomTensor({1, 4, 8}, g);
  const std::vector<std::size_t> perm = {2, 0, 3, 1};
  Tensor xp({1, 4, 8});
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t j = 0; j < 8; ++j) xp.mutable_values()[t * 8 + j] = x.value(perm[t] * 8 + j);
  }
  ForwardContext ctx;
  const Tensor y = Encode({x}, cfg, p, ctx).tokens;
  const Tensor yp = Encode({xp}, cfg, p, ctx).tokens;
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t j = 0; j < 8; ++j) {
      EXPECT_NEAR(yp.value(t * 8 + j), y.value(perm[t] * 8 + j), 1e-12);
    }
  }
}

TEST(EncoderConfigTest, Validation) {
  EncoderConfig cfg;
  cfg.n_heads = 5;
  EXPECT_THROW(cfg.Validate(), ConfigError);
  cfg = EncoderConfig{};
  cfg.n_blocks = 0;
  EXPECT_THROW(cfg.Validate(), ConfigError);
  const EncoderConfig wide = EncoderConfig::PaperScale();
  EXPECT_EQ(wide.embed_dim, 192);
  EXPECT_EQ(wide.n_heads, 8);
  EXPECT_EQ(wide.n_blocks, 3);
}

TEST(DropoutTest, IdentityAtEvaluationAndScaledInTraining) {
  std::mt19937_64 g(14);
  const Tensor x = RandomTensor({1000}, g);
  ForwardContext eval;
  eval.dropout_rate = 0.5;
  const Tensor same = Dropout(x, eval);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(same.value(i), x.value(i));
  Rng rng(1);
  ForwardContext train{true, 0.5, &rng};
  const Tensor y = Dropout(x, train);
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (y.value(i) == 0.0) {
      ++zeros;
    } else {
      EXPECT_DOUBLE_EQ(y.value(i), 2.0 * x.value(i));
    }
  }
  EXPECT_GT(zeros, 400u);
  EXPECT_LT(zeros, 600u);
}

}  // namespace
}  // namespace asymfuse
