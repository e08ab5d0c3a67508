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

// Parameter containers and building blocks shared by encoders and fusion.

#ifndef ASYMFUSE_LAYERS_H_
#define ASYMFUSE_LAYERS_H_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "asymfuse/tensor.h"

namespace asymfuse {

using Rng = std::mt19937_64;

// Derives an independent stream seed from a base seed and a stream id
// (SplitMix64 finalizer).
std::uint64_t MixSeed(std::uint64_t seed, std::uint64_t stream);

// Standard deviation used for embeddings, tokenizers and projections.
inline constexpr double kEmbeddingInitStd = 0.02;

Tensor GaussianParameter(Shape shape, double stddev, Rng& rng);
Tensor ZeroParameter(Shape shape);
Tensor ConstantParameter(Shape shape, double value);

// Per-call state for stochastic layers.
struct ForwardContext {
  bool training = false;
  double dropout_rate = 0.0;
  Rng* rng = nullptr;
};

// Inverted dropout. Identity outside training or with a zero rate.
Tensor Dropout(const Tensor& x, ForwardContext& ctx);

struct LayerNormParams {
  Tensor gain;
  Tensor bias;

  static LayerNormParams Create(std::size_t width);
  void Collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct AttentionParams {
  Tensor w_q, b_q;
  Tensor w_k, b_k;
  Tensor w_v, b_v;
  Tensor w_o, b_o;

  // Weights ~ N(0, 1/width), zero biases.
  static AttentionParams Create(std::size_t width, Rng& rng);
  void Collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct FeedForwardParams {
  Tensor w_in, b_in;
  Tensor w_out, b_out;

  static FeedForwardParams Create(std::size_t width, std::size_t multiplier,
                                  Rng& rng);
  void Collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct LinearParams {
  Tensor w, b;

  static LinearParams Create(std::size_t in, std::size_t out, double stddev,
                             Rng& rng);
  Tensor Apply(const Tensor& x) const;
  void Collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

Tensor ApplyLayerNorm(const Tensor& x, const LayerNormParams& p);

// GELU feed-forward with dropout on the hidden activations.
Tensor ApplyFeedForward(const Tensor& x, const FeedForwardParams& p,
                        ForwardContext& ctx);

// Scaled dot-product attention for batched token tensors.
//   query:   [batch, n_query, width]
//   context: [batch, n_context, width]
// Returns [batch, n_query, width]. When `weights` is non-null it receives the
// attention probabilities [batch, n_heads, n_query, n_context].
Tensor MultiHeadAttention(const Tensor& query, const Tensor& context,
                          const AttentionParams& p, std::size_t n_heads,
                          Tensor* weights = nullptr);

std::size_t CountParameters(const std::vector<NamedTensor>& params);

}  // namespace asymfuse

#endif  // ASYMFUSE_LAYERS_H_
