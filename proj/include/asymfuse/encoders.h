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

// Per-modality tokenizers and the FT-Transformer style encoder.
//
// Tabular records become one token per feature: numeric feature j maps to
// x_j * W_j + b_j, categorical features select a row of a learned embedding
// table. No positional information is added, so feature identity lives only
// in the per-feature weights and the encoder is permutation-equivariant.
//
// Each time series becomes one token through its own linear projection over
// the time axis.

#ifndef ASYMFUSE_ENCODERS_H_
#define ASYMFUSE_ENCODERS_H_

#include <map>
#include <string>
#include <vector>

#include "asymfuse/layers.h"
#include "asymfuse/tensor.h"

namespace asymfuse {

enum class Modality { kTabular, kTimeSeries };

// tokens: [batch, n_tokens, width]. Single-sample sequences use batch = 1.
struct TokenSequence {
  Tensor tokens;
  Modality modality = Modality::kTabular;

  std::size_t batch() const { return tokens.dim(0); }
  std::size_t n_tokens() const { return tokens.dim(1); }
  std::size_t width() const { return tokens.dim(2); }
};

struct TabularSchema {
  struct Categorical {
    std::string name;
    int cardinality = 2;
  };
  std::vector<std::string> numeric_features;
  std::vector<Categorical> categorical_features;

  // Throws SchemaError on duplicate names or cardinality < 2.
  void Validate() const;
  std::size_t num_features() const {
    return numeric_features.size() + categorical_features.size();
  }
  // Numeric features first, then categorical, in declaration order. This is
  // also the token order.
  std::vector<std::string> FeatureNames() const;
};

// Categorical values are stored as their integer index.
using TabularRecord = std::map<std::string, double>;

struct EncoderConfig {
  int embed_dim = 32;
  int n_heads = 4;
  int n_blocks = 2;
  int ffn_multiplier = 4;
  double dropout_rate = 0.1;

  void Validate() const;
  static EncoderConfig DeskScale() { return {}; }
  static EncoderConfig PaperScale() { return {192, 8, 3, 4, 0.1}; }
};

struct TabularTokenizerParams {
  Tensor numeric_weight;  // [n_numeric, width]
  Tensor numeric_bias;    // [n_numeric, width]
  std::vector<Tensor> category_embeddings;  // [cardinality, width] each

  static TabularTokenizerParams Create(const TabularSchema& schema,
                                       std::size_t width, Rng& rng);
  void Collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct SeriesTokenizerParams {
  Tensor weight;  // [n_series, length, width]
  Tensor bias;    // [n_series, width]

  static SeriesTokenizerParams Create(std::size_t n_series, std::size_t length,
                                      std::size_t width, Rng& rng);
  void Collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct EncoderBlockParams {
  LayerNormParams attention_norm;
  AttentionParams attention;
  LayerNormParams ffn_norm;
  FeedForwardParams ffn;
};

struct EncoderParams {
  std::vector<EncoderBlockParams> blocks;

  static EncoderParams Create(const EncoderConfig& cfg, Rng& rng);
  void Collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// Batched tabular input. `numeric` is [batch, n_numeric] (already
// normalized); `categorical[i][j]` is the category index of feature j for
// sample i.
struct TabularBatch {
  Tensor numeric;
  std::vector<std::vector<int>> categorical;
};

// Single record. Throws SchemaError when a feature is missing and ValueError
// for a category outside [0, cardinality).
TokenSequence TokenizeTabular(const TabularRecord& record,
                              const TabularSchema& schema,
                              const TabularTokenizerParams& params);
TokenSequence TokenizeTabular(const TabularBatch& batch,
                              const TabularSchema& schema,
                              const TabularTokenizerParams& params);

// series: [n_series, length] or [batch, n_series, length].
TokenSequence TokenizeTimeSeries(const Tensor& series,
                                 const SeriesTokenizerParams& params);

// Bare attention sublayer (no norm, no residual).
TokenSequence MultiHeadSelfAttention(const TokenSequence& x,
                                     const AttentionParams& params,
                                     std::size_t n_heads,
                                     Tensor* weights = nullptr);

// n_blocks x (x + MSA(LN(x)); x + FFN(LN(x))).
TokenSequence Encode(const TokenSequence& x, const EncoderConfig& cfg,
                     const EncoderParams& params, ForwardContext& ctx);

}  // namespace asymfuse

#endif  // ASYMFUSE_ENCODERS_H_
