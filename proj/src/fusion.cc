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

#include "asymfuse/fusion.h"

#include <array>

#include "asymfuse/errors.h"
#include "asymfuse/ops.h"

namespace asymfuse {

void FusionConfig::Validate() const {
  if (n_rounds < 1) throw ConfigError("fusion: n_rounds must be >= 1");
  if (embed_dim <= 0 || n_heads <= 0 || embed_dim % n_heads != 0) {
    throw ConfigError("fusion: embed_dim must be a positive multiple of "
                      "n_heads");
  }
  if (n_classes < 2) throw ConfigError("fusion: n_classes must be >= 2");
}

SelfAttentionBlockParams SelfAttentionBlockParams::Create(std::size_t width,
                                                          Rng& rng) {
  return {LayerNormParams::Create(width), AttentionParams::Create(width, rng)};
}

void SelfAttentionBlockParams::Collect(const std::string& prefix,
                                       std::vector<NamedTensor>& out) const {
  norm.Collect(prefix + ".norm", out);
  attention.Collect(prefix + ".attention", out);
}

CrossAttentionParams CrossAttentionParams::Create(std::size_t width, Rng& rng) {
  return {LayerNormParams::Create(width), LayerNormParams::Create(width),
          AttentionParams::Create(width, rng)};
}

void CrossAttentionParams::Collect(const std::string& prefix,
                                   std::vector<NamedTensor>& out) const {
  query_norm.Collect(prefix + ".query_norm", out);
  context_norm.Collect(prefix + ".context_norm", out);
  attention.Collect(prefix + ".attention", out);
}

FusionParams FusionParams::Create(const FusionConfig& cfg, Rng& rng) {
  cfg.Validate();
  const auto width = static_cast<std::size_t>(cfg.embed_dim);
  FusionParams p;
  p.cls = GaussianParameter({width}, kEmbeddingInitStd, rng);
  for (int i = 0; i < 2 * cfg.n_rounds; ++i) {
    p.self_blocks.push_back(SelfAttentionBlockParams::Create(width, rng));
  }
  p.cross = CrossAttentionParams::Create(width, rng);
  if (cfg.per_context_weights) p.ts_cross = CrossAttentionParams::Create(width, rng);
  p.head = LinearParams::Create(width, static_cast<std::size_t>(cfg.n_classes),
                                kEmbeddingInitStd, rng);
  return p;
}

void FusionParams::Collect(const std::string& prefix,
                           std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".cls", cls});
  for (std::size_t i = 0; i < self_blocks.size(); ++i) {
    self_blocks[i].Collect(prefix + ".self" + std::to_string(i), out);
  }
  cross.Collect(prefix + ".cross", out);
  if (ts_cross) ts_cross->Collect(prefix + ".ts_cross", out);
  head.Collect(prefix + ".head", out);
}

TokenSequence SelfAttentionBlock(const TokenSequence& x,
                                 const SelfAttentionBlockParams& params,
                                 std::size_t n_heads, ForwardContext& ctx) {
  Tensor normed = ApplyLayerNorm(x.tokens, params.norm);
  Tensor update = MultiHeadAttention(normed, normed, params.attention, n_heads);
  return {Add(x.tokens, Dropout(update, ctx)), x.modality};
}

TokenSequence CrossAttention(const TokenSequence& query,
                             const TokenSequence& context,
                             const CrossAttentionParams& params,
                             std::size_t n_heads, ForwardContext& ctx,
                             Tensor* weights) {
  if (query.tokens.rank() != 3 || context.tokens.rank() != 3 ||
      query.width() != context.width() ||
      query.width() != params.attention.w_q.dim(0)) {
    throw DimensionError("CrossAttention: query " +
                         ShapeToString(query.tokens.shape()) + " and context " +
                         ShapeToString(context.tokens.shape()));
  }
  Tensor update = MultiHeadAttention(
      ApplyLayerNorm(query.tokens, params.query_norm),
      ApplyLayerNorm(context.tokens, params.context_norm), params.attention,
      n_heads, weights);
  return {Add(query.tokens, Dropout(update, ctx)), query.modality};
}

Tensor PrependCls(const Tensor& cls, const Tensor& tokens) {
  const std::size_t batch = tokens.dim(0);
  const std::size_t width = tokens.dim(2);
  if (cls.shape() != Shape{width}) {
    throw DimensionError("PrependCls: CLS " + ShapeToString(cls.shape()) +
                         " vs tokens " + ShapeToString(tokens.shape()));
  }
  // Broadcast the CLS vector over the batch: zeros[batch, 1, width] + cls.
  Tensor cls_tokens = Add(Tensor({batch, 1, width}), cls);
  const std::array<Tensor, 2> parts = {cls_tokens, tokens};
  return Concat(parts, 1);
}

FusionState InitialFusionState(const TokenSequence& specific,
                               const TokenSequence& shared,
                               const TokenSequence& time_series,
                               const Tensor& cls) {
  for (const TokenSequence* seq : {&specific, &shared, &time_series}) {
    if (seq->tokens.rank() != 3 || seq->width() != cls.size() ||
        seq->batch() != specific.batch()) {
      throw DimensionError("Fuse: token sequence " +
                           ShapeToString(seq->tokens.shape()) +
                           " incompatible with width " +
                           std::to_string(cls.size()) + " and batch " +
                           std::to_string(specific.batch()));
    }
  }
  return {{PrependCls(cls, specific.tokens), Modality::kTabular},
          shared,
          time_series};
}

Tensor Fuse(const TokenSequence& specific, const TokenSequence& shared,
            const TokenSequence& time_series, const FusionConfig& cfg,
            const FusionParams& params, ForwardContext& ctx) {
  cfg.Validate();
  FusionState state =
      InitialFusionState(specific, shared, time_series, params.cls);
  const auto heads = static_cast<std::size_t>(cfg.n_heads);

  TokenSequence first = state.shared_context;
  TokenSequence second = state.ts_context;
  const CrossAttentionParams* first_params = &params.cross;
  const CrossAttentionParams* second_params =
      params.ts_cross ? &*params.ts_cross : &params.cross;
  if (cfg.order == FusionOrder::kTimeSeriesFirst) {
    std::swap(first, second);
    std::swap(first_params, second_params);
  }
  if (cfg.concat_context) {
    const std::array<Tensor, 2> parts = {state.shared_context.tokens,
                                         state.ts_context.tokens};
    first = second = {Concat(parts, 1), Modality::kTabular};
  }

  TokenSequence h = state.primary_stream;
  for (int round = 0; round < cfg.n_rounds; ++round) {
    h = SelfAttentionBlock(h, params.self_blocks[2 * round], heads, ctx);
    h = CrossAttention(h, first, *first_params, heads, ctx);
    h = SelfAttentionBlock(h, params.self_blocks[2 * round + 1], heads, ctx);
    h = CrossAttention(h, second, *second_params, heads, ctx);
  }
  const std::size_t batch = h.batch();
  const std::size_t width = h.width();
  Tensor cls_out = Reshape(Slice(h.tokens, 1, 0, 1), {batch, width});
  return params.head.Apply(cls_out);
}

Tensor PredictProba(const Tensor& logits) { return Softmax(logits, -1); }

}  // namespace asymfuse
