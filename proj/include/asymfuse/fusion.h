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

// Asymmetric interleaved attention fusion.
//
// The primary stream is [CLS; specific tabular tokens]. It is the query in
// every block. Each round runs
//
//   self-attention -> cross-attention(shared) -> self-attention
//                  -> cross-attention(time series)
//
// and every cross-attention application, in every round, uses one parameter
// set. Context tokens therefore reach the output only through that block.
// Blocks are pre-norm attention with a residual connection; there is no
// feed-forward sublayer, so zeroing the attention output projections turns
// the whole stack into the identity on the CLS token.

#ifndef ASYMFUSE_FUSION_H_
#define ASYMFUSE_FUSION_H_

#include <optional>
#include <string>
#include <vector>

#include "asymfuse/encoders.h"
#include "asymfuse/layers.h"
#include "asymfuse/tensor.h"

namespace asymfuse {

enum class FusionOrder { kSharedFirst, kTimeSeriesFirst };

struct FusionConfig {
  int n_rounds = 2;
  int embed_dim = 32;
  int n_heads = 4;
  int n_classes = 3;
  // One cross-attention parameter set per context type instead of one for
  // both.
  bool per_context_weights = false;
  // Attend to [shared; time series] as a single context in both
  // cross-attention slots of a round.
  bool concat_context = false;
  FusionOrder order = FusionOrder::kSharedFirst;

  void Validate() const;
};

struct SelfAttentionBlockParams {
  LayerNormParams norm;
  AttentionParams attention;

  static SelfAttentionBlockParams Create(std::size_t width, Rng& rng);
  void Collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct CrossAttentionParams {
  LayerNormParams query_norm;
  LayerNormParams context_norm;
  AttentionParams attention;

  static CrossAttentionParams Create(std::size_t width, Rng& rng);
  void Collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct FusionParams {
  Tensor cls;  // [width]
  std::vector<SelfAttentionBlockParams> self_blocks;  // 2 per round
  CrossAttentionParams cross;
  // Set only with per_context_weights: used for the time-series slot.
  std::optional<CrossAttentionParams> ts_cross;
  LinearParams head;

  static FusionParams Create(const FusionConfig& cfg, Rng& rng);
  void Collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct FusionState {
  TokenSequence primary_stream;  // token 0 is CLS
  TokenSequence shared_context;
  TokenSequence ts_context;
};

// x + MSA(LN(x)).
TokenSequence SelfAttentionBlock(const TokenSequence& x,
                                 const SelfAttentionBlockParams& params,
                                 std::size_t n_heads, ForwardContext& ctx);

// query + MHA(LN_q(query), LN_c(context)); keeps the query token count.
TokenSequence CrossAttention(const TokenSequence& query,
                             const TokenSequence& context,
                             const CrossAttentionParams& params,
                             std::size_t n_heads, ForwardContext& ctx,
                             Tensor* weights = nullptr);

// [CLS; tokens] for every sample in the batch.
Tensor PrependCls(const Tensor& cls, const Tensor& tokens);

FusionState InitialFusionState(const TokenSequence& specific,
                               const TokenSequence& shared,
                               const TokenSequence& time_series,
                               const Tensor& cls);

// Returns logits [batch, n_classes].
Tensor Fuse(const TokenSequence& specific, const TokenSequence& shared,
            const TokenSequence& time_series, const FusionConfig& cfg,
            const FusionParams& params, ForwardContext& ctx);

// Softmax over the class axis.
Tensor PredictProba(const Tensor& logits);

}  // namespace asymfuse

#endif  // ASYMFUSE_FUSION_H_
