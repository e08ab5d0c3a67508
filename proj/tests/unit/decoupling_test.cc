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
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "asymfuse/decoupling.h"
#include "asymfuse/errors.h"
#include "asymfuse/evaluation.h"
#include "asymfuse/ops.h"
#include "test_util.h"

namespace asymfuse {
namespace {

using testing::Mat;
using testing::RandomTensor;
using testing::ToMat;

EmbeddingBatch RandomBatch(std::size_t n, std::size_t d, std::mt19937_64& rng,
                           bool requires_grad = false) {
  return {RandomTensor({n, d}, rng, 1.0, requires_grad),
          RandomTensor({n, d}, rng, 1.0, requires_grad),
          RandomTensor({n, d}, rng, 1.0, requires_grad)};
}

std::vector<int> RandomLabels(std::size_t n, int classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, classes - 1);
  std::vector<int> y(n);
  for (int& v : y) v = pick(rng);
  return y;
}

TEST(ShsdLossTest, IdenticalTripleIsZero) {
  const Tensor v = Tensor::Matrix({{0.3, -1.2, 2.0}});
  EXPECT_NEAR(ShsdLoss({v, v, v}, 0.1).item(), 0.0, 1e-12);
}

TEST(ShsdLossTest, OrthogonalSpecificGivesMinusTen) {
  const Tensor e1 = Tensor::Matrix({{1, 0}});
  const Tensor e2 = Tensor::Matrix({{0, 1}});
  EXPECT_NEAR(ShsdLoss({e1, e1, e2}, 0.1).item(), -10.0, 1e-12);
}

TEST(ShsdLossTest, MatchesBruteForceOracle) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> size(1, 8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = size(rng);
    const std::size_t d = size(rng) * 2;
    const EmbeddingBatch b = RandomBatch(n, d, rng);
    const double tau = 0.05 + 0.1 * (trial % 10);
    EXPECT_NEAR(ShsdLoss(b, tau).item(),
                testing::ShsdOracle(ToMat(b.z_s), ToMat(b.z_t_sh), ToMat(b.z_t_sp), tau),
                1e-10);
  }
}

TEST(ShsdLossTest, MonotoneInPositiveAndNegativeSimilarity) {
  // Direction check through the similarity itself: rotate z_sh towards z_s
  // (higher positive similarity) and z_sp towards z_s (higher negative).
  std::mt19937_64 rng(9);
  const EmbeddingBatch b = RandomBatch(4, 6, rng);
  const double base = ShsdLoss(b, 0.1).item();
  auto blend = [](const Tensor& from, const Tensor& to, double t) {
    return Add(MulScalar(from, 1 - t), MulScalar(to, t));
  };
  EXPECT_LT(ShsdLoss({b.z_s, blend(b.z_t_sh, b.z_s, 0.2), b.z_t_sp}, 0.1).item(), base);
  EXPECT_GT(ShsdLoss({b.z_s, b.z_t_sh, blend(b.z_t_sp, b.z_s, 0.2)}, 0.1).item(), base);
}

TEST(RegularizationLossTest, SingleSampleIsZero) {
  const Tensor a = Tensor::Matrix({{1, 2}});
  const Tensor b = Tensor::Matrix({{-2, 0.5}});
  const std::vector<int> y = {0};
  EXPECT_NEAR(RegularizationLoss({a, b, b}, y, 0.1).item(), 0.0, 1e-12);
}

TEST(RegularizationLossTest, EqualSimilaritiesGiveLogTwo) {
  // Every pairwise cosine is 0: z_s rows e1, e2 and z_sp rows e3, e4.
  const Tensor zs = Tensor::Matrix({{1, 0, 0, 0}, {0, 1, 0, 0}});
  const Tensor zsp = Tensor::Matrix({{0, 0, 1, 0}, {0, 0, 0, 1}});
  const std::vector<int> y = {0, 1};
  EXPECT_NEAR(RegularizationLoss({zs, zs, zsp}, y, 0.1).item(), std::log(2.0), 1e-12);
}

TEST(RegularizationLossTest, OneDirectionClosedForm) {
  // sim(z_sp1, z_s1) = 1, sim(z_sp1, z_s2) = 0.
  const Tensor zs = Tensor::Matrix({{1, 0}, {0, 1}});
  const Tensor zsp = Tensor::Matrix({{1, 0}, {1, 0}});
  const std::vector<int> y = {0, 1};
  const Mat s = ToMat(zs);
  const Mat sp = ToMat(zsp);
  double den = std::exp(10.0) + 1.0;
  const double r1 = -std::log(std::exp(10.0) / den);
  EXPECT_NEAR(r1, 4.54e-5, 1e-7);
  // The full loss agrees with the oracle built from the same directions.
  EXPECT_NEAR(RegularizationLoss({zs, zs, zsp}, y, 0.1).item(),
              testing::RegOracle(s, sp, {0, 1}, 0.1), 1e-12);
}

TEST(RegularizationLossTest, MatchesBruteForceOracle) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> size(2, 8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = size(rng);
    const EmbeddingBatch b = RandomBatch(n, 2 * size(rng), rng);
    const auto y = RandomLabels(n, 3, rng);
    EXPECT_NEAR(RegularizationLoss(b, y, 0.1).item(),
                testing::RegOracle(ToMat(b.z_s), ToMat(b.z_t_sp), y, 0.1), 1e-10);
  }
}

TEST(RegularizationLossTest, InvariantToLabelPermutation) {
  std::mt19937_64 rng(3);
  const EmbeddingBatch b = RandomBatch(7, 5, rng);
  const std::vector<int> y = {0, 1, 2, 0, 1, 2, 2};
  std::vector<int> permuted = y;
  for (int& v : permuted) v = (v + 1) % 3;
  EXPECT_NEAR(RegularizationLoss(b, y, 0.2).item(),
              RegularizationLoss(b, permuted, 0.2).item(), 1e-12);
}

TEST(DecouplingLossTest, ScaleInvariance) {
  std::mt19937_64 rng(4);
  const EmbeddingBatch b = RandomBatch(5, 4, rng);
  const std::vector<int> y = {0, 1, 0, 2, 1};
  Tensor scaled = b.z_s.Clone();
  for (std::size_t j = 0; j < 4; ++j) scaled.mutable_values()[2 * 4 + j] *= 3.7;
  const DecouplingConfig cfg;
  EXPECT_NEAR(DecouplingLoss(b, y, cfg).item(),
              DecouplingLoss({scaled, b.z_t_sh, b.z_t_sp}, y, cfg).item(), 1e-10);
}

TEST(DecouplingLossTest, WeightsCompose) {
  std::mt19937_64 rng(5);
  const EmbeddingBatch b = RandomBatch(6, 4, rng);
  const std::vector<int> y = {0, 1, 2, 0, 1, 2};
  DecouplingConfig cfg;
  cfg.w_shsd = 0;
  cfg.w_reg = 0;
  EXPECT_EQ(DecouplingLoss(b, y, cfg).item(), 0.0);
  cfg.w_shsd = 1;
  EXPECT_EQ(DecouplingLoss(b, y, cfg).item(), ShsdLoss(b, cfg.tau).item());
  cfg.w_shsd = 0.5;
  cfg.w_reg = 2.0;
  EXPECT_NEAR(DecouplingLoss(b, y, cfg).item(),
              0.5 * ShsdLoss(b, cfg.tau).item() +
                  2.0 * RegularizationLoss(b, y, cfg.tau).item(),
              1e-12);
}

TEST(DecouplingLossTest, ZeroNormEmbeddingIsDegenerate) {
  const Tensor ok = Tensor::Matrix({{1, 0}, {0, 1}});
  const Tensor bad = Tensor::Matrix({{1, 0}, {0, 0}});
  const std::vector<int> y = {0, 1};
  EXPECT_THROW(ShsdLoss({ok, ok, bad}, 0.1), DegenerateInputError);
  EXPECT_THROW(RegularizationLoss({bad, ok, ok}, y, 0.1), DegenerateInputError);
}

TEST(DecouplingLossTest, ConfigValidation) {
  DecouplingConfig cfg;
  cfg.tau = 0;
  EXPECT_THROW(cfg.Validate(), ConfigError);
  cfg.tau = 0.1;
  cfg.w_reg = -1;
  EXPECT_THROW(cfg.Validate(), ConfigError);
}

TEST(DecouplingLossTest, GradientsPassFiniteDifferences) {
  std::mt19937_64 rng(6);
  for (int point = 0; point < 5; ++point) {
    EmbeddingBatch b = RandomBatch(5, 4, rng, true);
    const std::vector<int> y = {0, 1, 0, 2, 1};
    const DecouplingConfig cfg;
    EXPECT_LT(testing::GradientCheck([&] { return DecouplingLoss(b, y, cfg); },
                                     {b.z_s, b.z_t_sh, b.z_t_sp}),
              1e-4);
  }
}

TEST(ProjectTest, IdentityWeightsPassThrough) {
  std::mt19937_64 rng(7);
  Rng init(0);
  DecouplingParams p = DecouplingParams::Create(3, 3, 3, init);
  std::fill(p.time_series.w.mutable_values().begin(), p.time_series.w.mutable_values().end(), 0.0);
  for (std::size_t i = 0; i < 3; ++i) p.time_series.w.mutable_values()[i * 3 + i] = 1.0;
  std::fill(p.time_series.b.mutable_values().begin(), p.time_series.b.mutable_values().end(), 0.0);
  const Tensor t = RandomTensor({2, 3}, rng);
  const Tensor s = RandomTensor({2, 3}, rng);
  const EmbeddingBatch z = Project(t, s, p);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(z.z_s.value(i), s.value(i));
}

TEST(ProjectTest, HeadsAreIndependent) {
  std::mt19937_64 rng(8);
  Rng init(1);
  DecouplingParams p = DecouplingParams::Create(4, 4, 3, init);
  const Tensor t = RandomTensor({2, 4}, rng);
  const Tensor s = RandomTensor({2, 4}, rng);
  const EmbeddingBatch before = Project(t, s, p);
  p.shared.w.mutable_values()[0] += 0.5;
  const EmbeddingBatch after = Project(t, s, p);
  bool sh_changed = false;
  for (std::size_t i = 0; i < 6; ++i) {
    sh_changed = sh_changed || after.z_t_sh.value(i) != before.z_t_sh.value(i);
    EXPECT_EQ(after.z_t_sp.value(i), before.z_t_sp.value(i));
    EXPECT_EQ(after.z_s.value(i), before.z_s.value(i));
  }
  EXPECT_TRUE(sh_changed);
}

TEST(ProjectTest, ZeroParametersGiveDegenerateLoss) {
  Rng init(2);
  DecouplingParams p = DecouplingParams::Create(3, 3, 3, init);
  for (Tensor* t : {&p.time_series.w, &p.shared.w, &p.specific.w}) {
    std::fill(t->mutable_values().begin(), t->mutable_values().end(), 0.0);
  }
  std::mt19937_64 rng(3);
  const EmbeddingBatch z = Project(RandomTensor({2, 3}, rng), RandomTensor({2, 3}, rng), p);
  for (double v : z.z_s.values()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(ShsdLoss(z, 0.1), DegenerateInputError);
}

TEST(ProjectTest, WidthMismatchIsDimensionError) {
  Rng init(4);
  const DecouplingParams p = DecouplingParams::Create(3, 3, 2, init);
  EXPECT_THROW(Project(Tensor({2, 4}), Tensor({2, 3}), p), DimensionError);
}

// Baseline objectives.

TEST(InfoNceTest, SingleCandidateIsZero) {
  const Tensor a = Tensor::Matrix({{1, 2}});
  const Tensor b = Tensor::Matrix({{-1, 0.3}});
  EXPECT_NEAR(InfoNceLoss(a, b, 0.1).item(), 0.0, 1e-12);
}

TEST(InfoNceTest, MatchesBruteForceOracle) {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<std::size_t> size(1, 8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = size(rng);
    const std::size_t d = size(rng) * 2;
    const Tensor a = RandomTensor({n, d}, rng);
    const Tensor b = RandomTensor({n, d}, rng);
    EXPECT_NEAR(InfoNceLoss(a, b, 0.1).item(),
                testing::InfoNceOracle(ToMat(a), ToMat(b), 0.1), 1e-10);
  }
}

TEST(TripletTest, SatisfiedHingeIsZero) {
  const Tensor e1 = Tensor::Matrix({{1, 0}});
  const Tensor e2 = Tensor::Matrix({{0, 1}});
  EXPECT_EQ(TripletLoss({e1, e1, e2}).item(), 0.0);
}

TEST(TripletTest, MatchesBruteForceOracle) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> size(1, 8);
  for (int trial = 0; trial < 100; ++trial) {
    const EmbeddingBatch b = RandomBatch(size(rng), 2 * size(rng), rng);
    EXPECT_NEAR(TripletLoss(b).item(),
                testing::TripletOracle(ToMat(b.z_s), ToMat(b.z_t_sh), ToMat(b.z_t_sp),
                                       kTripletMargin),
                1e-10);
  }
}

TEST(SupervisedClipTest, MatchesBruteForceOracle) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<std::size_t> size(2, 8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = size(rng);
    const EmbeddingBatch b = RandomBatch(n, 4, rng);
    const auto y = RandomLabels(n, 3, rng);
    const Mat zs = ToMat(b.z_s);
    const Mat zt = ToMat(b.z_t_sh);
    const double oracle = (testing::SupConDirection(zt, zs, y, 0.1) +
                           testing::SupConDirection(zs, zt, y, 0.1)) /
                          (2.0 * n);
    EXPECT_NEAR(SupervisedClipLoss(b, y, 0.1).item(), oracle, 1e-10);
  }
}

TEST(LatentObjectiveTest, DispatchesOnKind) {
  std::mt19937_64 rng(13);
  const EmbeddingBatch b = RandomBatch(6, 4, rng);
  const std::vector<int> y = {0, 1, 2, 0, 1, 2};
  DecouplingConfig cfg;
  EXPECT_EQ(LatentObjective(b, y, cfg).item(), DecouplingLoss(b, y, cfg).item());
  cfg.kind = DecouplingLossKind::kInfoNce;
  EXPECT_EQ(LatentObjective(b, y, cfg).item(), InfoNceLoss(b.z_s, b.z_t_sh, cfg.tau).item());
  cfg.kind = DecouplingLossKind::kTriplet;
  EXPECT_EQ(LatentObjective(b, y, cfg).item(), TripletLoss(b).item());
  cfg.kind = DecouplingLossKind::kSupervisedClip;
  EXPECT_EQ(LatentObjective(b, y, cfg).item(), SupervisedClipLoss(b, y, cfg.tau).item());
}

TEST(BaselineLossTest, GradientsPassFiniteDifferences) {
  std::mt19937_64 rng(14);
  EmbeddingBatch b = RandomBatch(5, 4, rng, true);
  const std::vector<int> y = {0, 1, 0, 2, 1};
  EXPECT_LT(testing::GradientCheck([&] { return InfoNceLoss(b.z_s, b.z_t_sh, 0.1); },
                                   {b.z_s, b.z_t_sh}),
            1e-4);
  EXPECT_LT(testing::GradientCheck([&] { return SupervisedClipLoss(b, y, 0.1); },
                                   {b.z_s, b.z_t_sh}),
            1e-4);
}

}  // namespace
}  // namespace asymfuse
