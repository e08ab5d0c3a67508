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

#include "asymfuse/decoupling.h"

#include <map>

#include "asymfuse/errors.h"
#include "asymfuse/ops.h"

namespace asymfuse {
namespace {

void CheckBatch(const EmbeddingBatch& batch, const char* op) {
  const Shape& s = batch.z_s.shape();
  if (s.size() != 2 || s[0] == 0 || batch.z_t_sh.shape() != s ||
      batch.z_t_sp.shape() != s) {
    throw DimensionError(std::string(op) + ": embedding shapes " +
                         ShapeToString(s) + ", " +
                         ShapeToString(batch.z_t_sh.shape()) + ", " +
                         ShapeToString(batch.z_t_sp.shape()));
  }
}

// W[i][j] = 1{y_j = y_i} / S_i.
Tensor ClassWeights(std::span<const int> labels) {
  const std::size_t n = labels.size();
  std::map<int, double> counts;
  for (int y : labels) counts[y] += 1.0;
  std::vector<double> w(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double inv = 1.0 / counts[labels[i]];
    for (std::size_t j = 0; j < n; ++j) {
      if (labels[j] == labels[i]) w[i * n + j] = inv;
    }
  }
  return Tensor({n, n}, std::move(w));
}

// (1/N) sum_i [ -pos[i]/tau + logsumexp_k(neg[i, k]/tau) ]
Tensor DecoupledContrastTerm(const Tensor& anchor, const Tensor& positive,
                             const Tensor& negatives, double tau) {
  Tensor pos = MulScalar(CosineSimilarity(anchor, positive), 1.0 / tau);
  Tensor neg = LogSumExp(
      MulScalar(PairwiseCosineSimilarity(anchor, negatives), 1.0 / tau), 1);
  return MeanAll(Sub(neg, pos));
}

}  // namespace

void DecouplingConfig::Validate() const {
  if (!(tau > 0.0)) throw ConfigError("decoupling: tau must be > 0");
  if (w_shsd < 0.0 || w_reg < 0.0) {
    throw ConfigError("decoupling: loss weights must be non-negative");
  }
  if (d_z < 0) throw ConfigError("decoupling: d_z must be >= 0");
}

DecouplingParams DecouplingParams::Create(std::size_t tab_width,
                                          std::size_t ts_width,
                                          std::size_t d_z, Rng& rng) {
  DecouplingParams p;
  p.time_series = LinearParams::Create(ts_width, d_z, kEmbeddingInitStd, rng);
  p.shared = LinearParams::Create(tab_width, d_z, kEmbeddingInitStd, rng);
  p.specific = LinearParams::Create(tab_width, d_z, kEmbeddingInitStd, rng);
  return p;
}

void DecouplingParams::Collect(const std::string& prefix,
                               std::vector<NamedTensor>& out) const {
  time_series.Collect(prefix + ".time_series", out);
  shared.Collect(prefix + ".shared", out);
  specific.Collect(prefix + ".specific", out);
}

EmbeddingBatch Project(const Tensor& tab_pooled, const Tensor& ts_pooled,
                       const DecouplingParams& params) {
  if (tab_pooled.rank() != 2 || ts_pooled.rank() != 2 ||
      tab_pooled.dim(1) != params.shared.w.dim(0) ||
      ts_pooled.dim(1) != params.time_series.w.dim(0)) {
    throw DimensionError("Project: pooled inputs " +
                         ShapeToString(tab_pooled.shape()) + " and " +
                         ShapeToString(ts_pooled.shape()) +
                         " do not match projection widths");
  }
  return {params.time_series.Apply(ts_pooled), params.shared.Apply(tab_pooled),
          params.specific.Apply(tab_pooled)};
}

ProjectedTokens ProjectTokens(const TokenSequence& tab, const TokenSequence& ts,
                              const DecouplingParams& params) {
  if (tab.width() != params.shared.w.dim(0) ||
      ts.width() != params.time_series.w.dim(0)) {
    throw DimensionError("ProjectTokens: token widths do not match heads");
  }
  return {{params.time_series.Apply(ts.tokens), Modality::kTimeSeries},
          {params.shared.Apply(tab.tokens), Modality::kTabular},
          {params.specific.Apply(tab.tokens), Modality::kTabular}};
}

EmbeddingBatch PoolEmbeddings(const ProjectedTokens& tokens) {
  return {Mean(tokens.time_series.tokens, 1), Mean(tokens.shared.tokens, 1),
          Mean(tokens.specific.tokens, 1)};
}

Tensor ShsdLoss(const EmbeddingBatch& batch, double tau) {
  CheckBatch(batch, "ShsdLoss");
  Tensor st = DecoupledContrastTerm(batch.z_s, batch.z_t_sh, batch.z_t_sp, tau);
  Tensor ts = DecoupledContrastTerm(batch.z_t_sh, batch.z_s, batch.z_t_sp, tau);
  return MulScalar(Add(st, ts), 0.5);
}

Tensor SupervisedContrastiveLoss(const Tensor& anchors,
                                 const Tensor& candidates,
                                 std::span<const int> labels, double tau) {
  if (anchors.rank() != 2 || anchors.shape() != candidates.shape() ||
      anchors.dim(0) != labels.size() || labels.empty()) {
    throw DimensionError("SupervisedContrastiveLoss: anchors " +
                         ShapeToString(anchors.shape()) + ", candidates " +
                         ShapeToString(candidates.shape()) + ", " +
                         std::to_string(labels.size()) + " labels");
  }
  const Tensor weights = ClassWeights(labels);
  const auto direction = [&](const Tensor& a, const Tensor& c) {
    Tensor log_p = LogSoftmax(
        MulScalar(PairwiseCosineSimilarity(a, c), 1.0 / tau), 1);
    // Mean over anchors of -(1/S_i) sum_j 1{y_j = y_i} log p[i, j].
    return Neg(MeanAll(Sum(Mul(log_p, weights), 1)));
  };
  return MulScalar(Add(direction(anchors, candidates),
                       direction(candidates, anchors)),
                   0.5);
}

Tensor RegularizationLoss(const EmbeddingBatch& batch,
                          std::span<const int> labels, double tau) {
  CheckBatch(batch, "RegularizationLoss");
  return SupervisedContrastiveLoss(batch.z_t_sp, batch.z_s, labels, tau);
}

Tensor DecouplingLoss(const EmbeddingBatch& batch, std::span<const int> labels,
                      const DecouplingConfig& cfg) {
  cfg.Validate();
  Tensor total = Tensor::Scalar(0.0);
  if (cfg.w_shsd != 0.0) {
    total = Add(total, MulScalar(ShsdLoss(batch, cfg.tau), cfg.w_shsd));
  }
  if (cfg.w_reg != 0.0) {
    total = Add(total,
                MulScalar(RegularizationLoss(batch, labels, cfg.tau), cfg.w_reg));
  }
  return total;
}

}  // namespace asymfuse
