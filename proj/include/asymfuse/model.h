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


// Model variants: the full decoupled asymmetric model, its ablations and the
// baselines it is compared with.

#ifndef ASYMFUSE_MODEL_H_
#define ASYMFUSE_MODEL_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "asymfuse/data.h"
#include "asymfuse/decoupling.h"
#include "asymfuse/encoders.h"
#include "asymfuse/fusion.h"
#include "asymfuse/layers.h"
#include "asymfuse/tensor.h"

namespace asymfuse {

// kDafted              decoupling + interleaved asymmetric fusion
// kNoDecoupling        one tabular projection serves as primary stream and
//                      shared context; no decoupling loss
// kNoAsymFusion        decoupling + token-concatenation self-attention fusion
// kNeither             one tabular projection + token-concatenation fusion
// kMlpConcat           pooled encoder outputs concatenated into an MLP
// kFtConcat            all tokens in one joint encoder with a CLS token
// kSymmetricCross      two mirrored cross-attention streams, CLS averaged
// kTabularOnly         tabular encoder + head
// kTimeSeriesOnly      time-series encoder + head
enum class ModelVariant {
  kDafted,
  kNoDecoupling,
  kNoAsymFusion,
  kNeither,
  kMlpConcat,
  kFtConcat,
  kSymmetricCross,
  kTabularOnly,
  kTimeSeriesOnly,
};

std::string VariantName(ModelVariant variant);
// Throws ConfigError naming the tag.
ModelVariant ParseVariant(const std::string& name);
std::vector<ModelVariant> AllVariants();
// True when the variant has a shared/specific split and trains the latent
// objective.
bool UsesDecoupling(ModelVariant variant);

struct ModelConfig {
  ModelVariant variant = ModelVariant::kDafted;
  EncoderConfig encoder;
  DecouplingConfig decoupling;
  // embed_dim, n_heads and n_classes are filled from the encoder and the data
  // by Resolve().
  FusionConfig fusion;

  // Copies shared sizes into the fusion config and checks consistency.
  ModelConfig Resolved(int n_classes) const;
  void Validate() const;
};

// Shapes of the model inputs.
struct InputSpec {
  TabularSchema schema;
  std::size_t n_series = 0;
  std::size_t series_length = 0;
  int n_classes = 0;

  static InputSpec FromData(const PreparedData& data);
};

struct ModelOutput {
  Tensor logits;              // [batch, n_classes]
  EmbeddingBatch embeddings;  // empty for variants without a latent space
};

class Model {
 public:
  // Parameters are drawn from MixSeed(seed, 1).
  static Model Build(const ModelConfig& config, const InputSpec& input,
                     std::uint64_t seed);

  // Checks every intermediate for non-finite values and throws
  // NumericalError naming the first offending component.
  ModelOutput Forward(const Batch& batch, ForwardContext& ctx) const;

  // Stable order and paths; also the checkpoint layout.
  std::vector<NamedTensor> Parameters() const;
  std::size_t ParameterCount() const;

  const ModelConfig& config() const { return config_; }
  const InputSpec& input() const { return input_; }

  // Visible for tests: the fusion-stack parameters of fusion variants.
  const std::optional<FusionParams>& fusion_params() const { return fusion_; }

 private:
  struct ConcatFusionParams {
    Tensor cls;
    std::vector<SelfAttentionBlockParams> blocks;
    LinearParams head;
  };
  struct SymmetricStreamParams {
    Tensor cls;
    std::vector<SelfAttentionBlockParams> self_blocks;
    std::vector<CrossAttentionParams> cross_blocks;
  };

  TokenSequence EncodeTabular(const Batch& batch, ForwardContext& ctx) const;
  TokenSequence EncodeSeries(const Batch& batch, ForwardContext& ctx) const;
  Tensor ConcatFuse(const std::vector<Tensor>& token_sets,
                    ForwardContext& ctx) const;
  Tensor SymmetricFuse(const TokenSequence& tab, const TokenSequence& ts,
                       ForwardContext& ctx) const;

  ModelConfig config_;
  InputSpec input_;

  std::optional<TabularTokenizerParams> tab_tokenizer_;
  std::optional<SeriesTokenizerParams> ts_tokenizer_;
  std::optional<EncoderParams> tab_encoder_;
  std::optional<EncoderParams> ts_encoder_;
  std::optional<DecouplingParams> decoupling_;
  // Undecoupled projections of kNoDecoupling and kNeither.
  std::optional<LinearParams> tab_projection_;
  std::optional<LinearParams> ts_projection_;
  std::optional<FusionParams> fusion_;
  std::optional<ConcatFusionParams> concat_;
  std::optional<SymmetricStreamParams> tab_stream_;
  std::optional<SymmetricStreamParams> ts_stream_;
  std::optional<LinearParams> mlp_hidden_;
  // Head of the MLP, unimodal and symmetric variants.
  std::optional<LinearParams> head_;
};

}  // namespace asymfuse

#endif  // ASYMFUSE_MODEL_H_
