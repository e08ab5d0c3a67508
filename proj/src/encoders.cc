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

#include "asymfuse/encoders.h"

#include <cmath>
#include <set>

#include "asymfuse/errors.h"
#include "asymfuse/ops.h"

namespace asymfuse {

void TabularSchema::Validate() const {
  std::set<std::string> seen;
  for (const auto& name : numeric_features) {
    if (!seen.insert(name).second) {
      throw SchemaError("duplicate feature name \"" + name + "\"");
    }
  }
  for (const auto& cat : categorical_features) {
    if (!seen.insert(cat.name).second) {
      throw SchemaError("duplicate feature name \"" + cat.name + "\"");
    }
    if (cat.cardinality < 2) {
      throw SchemaError("categorical feature \"" + cat.name +
                        "\" has cardinality " +
                        std::to_string(cat.cardinality) + " (< 2)");
    }
  }
}

std::vector<std::string> TabularSchema::FeatureNames() const {
  std::vector<std::string> names = numeric_features;
  for (const auto& cat : categorical_features) names.push_back(cat.name);
  return names;
}

void EncoderConfig::Validate() const {
  if (embed_dim <= 0 || n_heads <= 0 || embed_dim % n_heads != 0) {
    throw ConfigError("encoder: embed_dim " + std::to_string(embed_dim) +
                      " must be a positive multiple of n_heads " +
                      std::to_string(n_heads));
  }
  if (n_blocks < 1) throw ConfigError("encoder: n_blocks must be >= 1");
  if (ffn_multiplier < 1) {
    throw ConfigError("encoder: ffn_multiplier must be >= 1");
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw ConfigError("encoder: dropout_rate must lie in [0, 1)");
  }
}

TabularTokenizerParams TabularTokenizerParams::Create(
    const TabularSchema& schema, std::size_t width, Rng& rng) {
  TabularTokenizerParams p;
  const std::size_t n_numeric = schema.numeric_features.size();
  p.numeric_weight = GaussianParameter({n_numeric, width}, kEmbeddingInitStd, rng);
  p.numeric_bias = ZeroParameter({n_numeric, width});
  for (const auto& cat : schema.categorical_features) {
    p.category_embeddings.push_back(GaussianParameter(
        {static_cast<std::size_t>(cat.cardinality), width}, kEmbeddingInitStd,
        rng));
  }
  return p;
}

void TabularTokenizerParams::Collect(const std::string& prefix,
                                     std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".numeric_weight", numeric_weight});
  out.push_back({prefix + ".numeric_bias", numeric_bias});
  for (std::size_t j = 0; j < category_embeddings.size(); ++j) {
    out.push_back({prefix + ".category" + std::to_string(j),
                   category_embeddings[j]});
  }
}

SeriesTokenizerParams SeriesTokenizerParams::Create(std::size_t n_series,
                                                    std::size_t length,
                                                    std::size_t width,
                                                    Rng& rng) {
  return {GaussianParameter({n_series, length, width}, kEmbeddingInitStd, rng),
          ZeroParameter({n_series, width})};
}

void SeriesTokenizerParams::Collect(const std::string& prefix,
                                    std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

EncoderParams EncoderParams::Create(const EncoderConfig& cfg, Rng& rng) {
  cfg.Validate();
  const auto width = static_cast<std::size_t>(cfg.embed_dim);
  EncoderParams p;
  for (int b = 0; b < cfg.n_blocks; ++b) {
    EncoderBlockParams block;
    block.attention_norm = LayerNormParams::Create(width);
    block.attention = AttentionParams::Create(width, rng);
    block.ffn_norm = LayerNormParams::Create(width);
    block.ffn = FeedForwardParams::Create(
        width, static_cast<std::size_t>(cfg.ffn_multiplier), rng);
    p.blocks.push_back(std::move(block));
  }
  return p;
}

void EncoderParams::Collect(const std::string& prefix,
                            std::vector<NamedTensor>& out) const {
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string block = prefix + ".block" + std::to_string(b);
    blocks[b].attention_norm.Collect(block + ".attention_norm", out);
    blocks[b].attention.Collect(block + ".attention", out);
    blocks[b].ffn_norm.Collect(block + ".ffn_norm", out);
    blocks[b].ffn.Collect(block + ".ffn", out);
  }
}

TokenSequence TokenizeTabular(const TabularRecord& record,
                              const TabularSchema& schema,
                              const TabularTokenizerParams& params) {
  TabularBatch batch;
  std::vector<double> numeric;
  for (const auto& name : schema.numeric_features) {
    auto it = record.find(name);
    if (it == record.end()) {
      throw SchemaError("record is missing feature \"" + name + "\"");
    }
    numeric.push_back(it->second);
  }
  const std::size_t n_numeric = numeric.size();
  batch.numeric = Tensor({1, n_numeric}, std::move(numeric));
  batch.categorical.emplace_back();
  for (const auto& cat : schema.categorical_features) {
    auto it = record.find(cat.name);
    if (it == record.end()) {
      throw SchemaError("record is missing feature \"" + cat.name + "\"");
    }
    const double v = it->second;
    if (v != std::floor(v)) {
      throw ValueError("categorical feature \"" + cat.name +
                       "\" has non-integer value " + std::to_string(v));
    }
    batch.categorical[0].push_back(static_cast<int>(v));
  }
  return TokenizeTabular(batch, schema, params);
}

TokenSequence TokenizeTabular(const TabularBatch& batch,
                              const TabularSchema& schema,
                              const TabularTokenizerParams& params) {
  const std::size_t n_numeric = schema.numeric_features.size();
  const std::size_t n_categorical = schema.categorical_features.size();
  const std::size_t width = params.numeric_weight.dim(1);
  const std::size_t n = batch.categorical.size();
  if (batch.numeric.shape() != Shape{n, n_numeric}) {
    throw DimensionError("TokenizeTabular: numeric block " +
                         ShapeToString(batch.numeric.shape()) +
                         " does not match " + std::to_string(n) + " rows x " +
                         std::to_string(n_numeric) + " numeric features");
  }

  std::vector<Tensor> parts;
  if (n_numeric > 0) {
    Tensor x = Reshape(batch.numeric, {n, n_numeric, 1});
    parts.push_back(
        Add(Mul(x, params.numeric_weight), params.numeric_bias));
  }
  for (std::size_t j = 0; j < n_categorical; ++j) {
    const auto& cat = schema.categorical_features[j];
    const auto card = static_cast<std::size_t>(cat.cardinality);
    std::vector<double> one_hot(n * card, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (batch.categorical[i].size() != n_categorical) {
        throw SchemaError("TokenizeTabular: row " + std::to_string(i) +
                          " has " +
                          std::to_string(batch.categorical[i].size()) +
                          " categorical values, schema expects " +
                          std::to_string(n_categorical));
      }
      const int c = batch.categorical[i][j];
      if (c < 0 || c >= cat.cardinality) {
        throw ValueError("categorical feature \"" + cat.name + "\" value " +
                         std::to_string(c) + " outside [0, " +
                         std::to_string(cat.cardinality) + ")");
      }
      one_hot[i * card + static_cast<std::size_t>(c)] = 1.0;
    }
    Tensor lookup =
        MatMul(Tensor({n, card}, std::move(one_hot)),
               params.category_embeddings[j]);
    parts.push_back(Reshape(lookup, {n, 1, width}));
  }
  if (parts.empty()) throw SchemaError("TokenizeTabular: empty schema");
  Tensor tokens = parts.size() == 1 ? parts[0] : Concat(parts, 1);
  return {tokens, Modality::kTabular};
}

TokenSequence TokenizeTimeSeries(const Tensor& series,
                                 const SeriesTokenizerParams& params) {
  Tensor batched = series;
  if (series.rank() == 2) {
    batched = Reshape(series, {1, series.dim(0), series.dim(1)});
  }
  if (batched.rank() != 3) {
    throw DimensionError("TokenizeTimeSeries: expected [n_series, length], got " +
                         ShapeToString(series.shape()));
  }
  const std::size_t n_series = params.weight.dim(0);
  const std::size_t length = params.weight.dim(1);
  if (batched.dim(1) != n_series || batched.dim(2) != length) {
    throw DimensionError("TokenizeTimeSeries: series block " +
                         ShapeToString(series.shape()) +
                         " does not match projection " +
                         ShapeToString(params.weight.shape()));
  }
  // [batch, S, T] -> [S, batch, T] x [S, T, width] -> [S, batch, width]
  Tensor projected = MatMul(Transpose(batched, 0, 1), params.weight);
  Tensor tokens = Add(Transpose(projected, 0, 1), params.bias);
  return {tokens, Modality::kTimeSeries};
}

TokenSequence MultiHeadSelfAttention(const TokenSequence& x,
                                     const AttentionParams& params,
                                     std::size_t n_heads, Tensor* weights) {
  return {MultiHeadAttention(x.tokens, x.tokens, params, n_heads, weights),
          x.modality};
}

TokenSequence Encode(const TokenSequence& x, const EncoderConfig& cfg,
                     const EncoderParams& params, ForwardContext& ctx) {
  if (x.tokens.rank() != 3 ||
      x.width() != static_cast<std::size_t>(cfg.embed_dim)) {
    throw DimensionError("Encode: tokens " + ShapeToString(x.tokens.shape()) +
                         " do not have width " +
                         std::to_string(cfg.embed_dim));
  }
  const auto heads = static_cast<std::size_t>(cfg.n_heads);
  Tensor h = x.tokens;
  for (const EncoderBlockParams& block : params.blocks) {
    Tensor normed = ApplyLayerNorm(h, block.attention_norm);
    h = Add(h, Dropout(MultiHeadAttention(normed, normed, block.attention,
                                          heads),
                       ctx));
    h = Add(h, Dropout(ApplyFeedForward(ApplyLayerNorm(h, block.ffn_norm),
                                        block.ffn, ctx),
                       ctx));
  }
  return {h, x.modality};
}

}  // namespace asymfuse
