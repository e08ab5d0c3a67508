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

#include "asymfuse/layers.h"

#include <cmath>

#include "asymfuse/errors.h"
#include "asymfuse/ops.h"

namespace asymfuse {

std::uint64_t MixSeed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Tensor GaussianParameter(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  std::vector<double> values(NumElements(shape));
  for (double& v : values) v = normal(rng);
  return Tensor(std::move(shape), std::move(values), /*requires_grad=*/true);
}

Tensor ZeroParameter(Shape shape) {
  return Tensor(std::move(shape), /*requires_grad=*/true);
}

Tensor ConstantParameter(Shape shape, double value) {
  return Tensor::Filled(std::move(shape), value, /*requires_grad=*/true);
}

Tensor Dropout(const Tensor& x, ForwardContext& ctx) {
  if (!ctx.training || ctx.dropout_rate <= 0.0) return x;
  if (ctx.rng == nullptr) {
    throw ContractError("Dropout: training context without a random stream");
  }
  const double keep = 1.0 - ctx.dropout_rate;
  std::vector<double> mask(x.size());
  for (double& m : mask) {
    // Uniform in [0, 1) from the top 53 bits.
    const double u = static_cast<double>((*ctx.rng)() >> 11) * 0x1.0p-53;
    m = u < keep ? 1.0 / keep : 0.0;
  }
  return Mul(x, Tensor(x.shape(), std::move(mask)));
}

LayerNormParams LayerNormParams::Create(std::size_t width) {
  return {ConstantParameter({width}, 1.0), ZeroParameter({width})};
}

void LayerNormParams::Collect(const std::string& prefix,
                              std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".gain", gain});
  out.push_back({prefix + ".bias", bias});
}

AttentionParams AttentionParams::Create(std::size_t width, Rng& rng) {
  const double std = 1.0 / std::sqrt(static_cast<double>(width));
  AttentionParams p;
  p.w_q = GaussianParameter({width, width}, std, rng);
  p.b_q = ZeroParameter({width});
  p.w_k = GaussianParameter({width, width}, std, rng);
  p.b_k = ZeroParameter({width});
  p.w_v = GaussianParameter({width, width}, std, rng);
  p.b_v = ZeroParameter({width});
  p.w_o = GaussianParameter({width, width}, std, rng);
  p.b_o = ZeroParameter({width});
  return p;
}

void AttentionParams::Collect(const std::string& prefix,
                              std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".w_q", w_q});
  out.push_back({prefix + ".b_q", b_q});
  out.push_back({prefix + ".w_k", w_k});
  out.push_back({prefix + ".b_k", b_k});
  out.push_back({prefix + ".w_v", w_v});
  out.push_back({prefix + ".b_v", b_v});
  out.push_back({prefix + ".w_o", w_o});
  out.push_back({prefix + ".b_o", b_o});
}

FeedForwardParams FeedForwardParams::Create(std::size_t width,
                                            std::size_t multiplier, Rng& rng) {
  const std::size_t hidden = width * multiplier;
  FeedForwardParams p;
  p.w_in = GaussianParameter({width, hidden},
                             1.0 / std::sqrt(static_cast<double>(width)), rng);
  p.b_in = ZeroParameter({hidden});
  p.w_out = GaussianParameter(
      {hidden, width}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
  p.b_out = ZeroParameter({width});
  return p;
}

void FeedForwardParams::Collect(const std::string& prefix,
                                std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".w_in", w_in});
  out.push_back({prefix + ".b_in", b_in});
  out.push_back({prefix + ".w_out", w_out});
  out.push_back({prefix + ".b_out", b_out});
}

LinearParams LinearParams::Create(std::size_t in, std::size_t out,
                                  double stddev, Rng& rng) {
  return {GaussianParameter({in, out}, stddev, rng), ZeroParameter({out})};
}

Tensor LinearParams::Apply(const Tensor& x) const { return Linear(x, w, b); }

void LinearParams::Collect(const std::string& prefix,
                           std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".w", w});
  out.push_back({prefix + ".b", b});
}

Tensor ApplyLayerNorm(const Tensor& x, const LayerNormParams& p) {
  return LayerNorm(x, p.gain, p.bias);
}

Tensor ApplyFeedForward(const Tensor& x, const FeedForwardParams& p,
                        ForwardContext& ctx) {
  Tensor hidden = Dropout(Gelu(Linear(x, p.w_in, p.b_in)), ctx);
  return Linear(hidden, p.w_out, p.b_out);
}

Tensor MultiHeadAttention(const Tensor& query, const Tensor& context,
                          const AttentionParams& p, std::size_t n_heads,
                          Tensor* weights) {
  if (query.rank() != 3 || context.rank() != 3 ||
      query.dim(0) != context.dim(0) || query.dim(2) != context.dim(2)) {
    throw DimensionError("MultiHeadAttention: query " +
                         ShapeToString(query.shape()) + " and context " +
                         ShapeToString(context.shape()));
  }
  const std::size_t batch = query.dim(0);
  const std::size_t n_query = query.dim(1);
  const std::size_t n_context = context.dim(1);
  const std::size_t width = query.dim(2);
  if (n_heads == 0 || width % n_heads != 0) {
    throw DimensionError("MultiHeadAttention: width " + std::to_string(width) +
                         " not divisible by " + std::to_string(n_heads) +
                         " heads");
  }
  const std::size_t head_width = width / n_heads;

  // [batch, n, width] -> [batch, heads, n, head_width]
  const auto split_heads = [&](const Tensor& x, std::size_t n) {
    return Transpose(Reshape(x, {batch, n, n_heads, head_width}), 1, 2);
  };
  Tensor q = split_heads(Linear(query, p.w_q, p.b_q), n_query);
  Tensor k = split_heads(Linear(context, p.w_k, p.b_k), n_context);
  Tensor v = split_heads(Linear(context, p.w_v, p.b_v), n_context);

  Tensor scores = MulScalar(MatMul(q, Transpose(k, 2, 3)),
                            1.0 / std::sqrt(static_cast<double>(head_width)));
  Tensor attention = Softmax(scores, -1);
  if (weights != nullptr) *weights = attention;
  Tensor mixed = Transpose(MatMul(attention, v), 1, 2);
  return Linear(Reshape(mixed, {batch, n_query, width}), p.w_o, p.b_o);
}

std::size_t CountParameters(const std::vector<NamedTensor>& params) {
  std::size_t total = 0;
  for (const auto& p : params) total += p.tensor.size();
  return total;
}

}  // namespace asymfuse
