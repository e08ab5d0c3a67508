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

// Shared/specific decoupling of the primary (tabular) modality.
//
// Linear heads map the encoded tabular tokens to a shared and a specific
// latent space and the encoded time-series tokens to the time-series latent
// space. Per-sample embeddings are token means, so projecting pooled vectors
// and pooling projected tokens give the same triple.
//
// Two contrastive losses shape the latent space, all with cosine similarity
// sim(.,.) and temperature tau over a batch of N samples:
//
//   SHSD. Anchor z_s[i]; the positive z_sh[i] is pulled closer while the
//   specific embeddings z_sp[k] (all k, including i) form the denominator,
//   so the positive pair is not in the denominator and the loss may be
//   negative:
//     l_st[i] = -sim(z_s[i], z_sh[i])/tau + log sum_k exp(sim(z_s[i], z_sp[k])/tau)
//     l_ts[i] = -sim(z_sh[i], z_s[i])/tau + log sum_k exp(sim(z_sh[i], z_sp[k])/tau)
//     L_shsd  = (1/2N) sum_i (l_st[i] + l_ts[i])
//
//   Regularization. Label-supervised cross-modal contrast between specific
//   tabular and time-series embeddings, with S_i the size of sample i's class:
//     r_ts[i] = -(1/S_i) sum_{j: y_j = y_i} log softmax_k(sim(z_sp[i], z_s[k])/tau)[j]
//     r_st[i] = same with anchor z_s[i] and candidates z_sp[k]
//     L_reg   = (1/2N) sum_i (r_ts[i] + r_st[i])

#ifndef ASYMFUSE_DECOUPLING_H_
#define ASYMFUSE_DECOUPLING_H_

#include <span>
#include <string>
#include <vector>

#include "asymfuse/encoders.h"
#include "asymfuse/layers.h"
#include "asymfuse/tensor.h"

namespace asymfuse {

// Which objective shapes the latent space during training. kShsd is the
// decoupling loss below; the others are comparison baselines from
// evaluation.h that replace it entirely.
enum class DecouplingLossKind { kShsd, kInfoNce, kTriplet, kSupervisedClip };

struct DecouplingConfig {
  double tau = 0.1;
  double w_shsd = 1.0;
  double w_reg = 1.0;
  // 0 means "same as the encoder width".
  int d_z = 0;
  DecouplingLossKind kind = DecouplingLossKind::kShsd;

  void Validate() const;
};

// One row per sample, each [N, d_z].
struct EmbeddingBatch {
  Tensor z_s;
  Tensor z_t_sh;
  Tensor z_t_sp;

  std::size_t size() const { return z_s.defined() ? z_s.dim(0) : 0; }
};

struct DecouplingParams {
  LinearParams time_series;  // g_s
  LinearParams shared;       // shared head of g_t
  LinearParams specific;     // specific head of g_t

  static DecouplingParams Create(std::size_t tab_width, std::size_t ts_width,
                                 std::size_t d_z, Rng& rng);
  void Collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// Pooled inputs: tab_pooled [N, tab_width], ts_pooled [N, ts_width].
EmbeddingBatch Project(const Tensor& tab_pooled, const Tensor& ts_pooled,
                       const DecouplingParams& params);

struct ProjectedTokens {
  TokenSequence time_series;
  TokenSequence shared;
  TokenSequence specific;
};

// Token-level projection feeding the fusion stack.
ProjectedTokens ProjectTokens(const TokenSequence& tab,
                              const TokenSequence& ts,
                              const DecouplingParams& params);

// Mean over tokens of each projected sequence.
EmbeddingBatch PoolEmbeddings(const ProjectedTokens& tokens);

// Throws DegenerateInputError on a zero-norm embedding.
Tensor ShsdLoss(const EmbeddingBatch& batch, double tau);

// Label-supervised contrast between `anchors` and `candidates` rows (both
// [N, d]), averaged over both anchor directions. Also serves as the
// supervised CLIP baseline when given undecoupled embeddings.
Tensor SupervisedContrastiveLoss(const Tensor& anchors,
                                 const Tensor& candidates,
                                 std::span<const int> labels, double tau);

Tensor RegularizationLoss(const EmbeddingBatch& batch,
                          std::span<const int> labels, double tau);

// w_shsd * L_shsd + w_reg * L_reg. Terms with a zero weight are skipped.
Tensor DecouplingLoss(const EmbeddingBatch& batch, std::span<const int> labels,
                      const DecouplingConfig& cfg);

}  // namespace asymfuse

#endif  // ASYMFUSE_DECOUPLING_H_
