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


#include "asymfuse/model.h"

#include <array>

#include "asymfuse/errors.h"
#include "asymfuse/ops.h"

namespace asymfuse {
namespace {

struct VariantTag {
  ModelVariant variant;
  const char* name;
};

constexpr VariantTag kVariantTags[] = {
    {ModelVariant::kDafted, "dafted"},
    {ModelVariant::kNoDecoupling, "no_decoupling"},
    {ModelVariant::kNoAsymFusion, "no_asym_fusion"},
    {ModelVariant::kNeither, "neither"},
    {ModelVariant::kMlpConcat, "mlp_concat"},
    {ModelVariant::kFtConcat, "ft_concat"},
    {ModelVariant::kSymmetricCross, "symmetric_cross"},
    {ModelVariant::kTabularOnly, "tab_only"},
    {ModelVariant::kTimeSeriesOnly, "ts_only"},
};

void CheckFinite(const Tensor& t, const char* component) {
  if (!t.AllFinite()) {
    throw NumericalError(component, std::string("non-finite values in ") +
                                        component + " output");
  }
}

Tensor ClsToken(const Tensor& tokens) {
  return Reshape(Slice(tokens, 1, 0, 1), {tokens.dim(0), tokens.dim(2)});
}

}  // namespace

std::string VariantName(ModelVariant variant) {
  for (const auto& tag : kVariantTags) {
    if (tag.variant == variant) return tag.name;
  }
  throw ConfigError("unknown model variant");
}

ModelVariant ParseVariant(const std::string& name) {
  for (const auto& tag : kVariantTags) {
    if (name == tag.name) return tag.variant;
  }
  std::string known;
  for (const auto& tag : kVariantTags) {
    known += known.empty() ? "" : ", ";
    known += tag.name;
  }
  throw ConfigError("unknown model variant \"" + name + "\" (expected one of " +
                    known + ")");
}

std::vector<ModelVariant> AllVariants() {
  std::vector<ModelVariant> out;
  for (const auto& tag : kVariantTags) out.push_back(tag.variant);
  return out;
}

bool UsesDecoupling(ModelVariant variant) {
  return variant == ModelVariant::kDafted ||
         variant == ModelVariant::kNoAsymFusion;
}

ModelConfig ModelConfig::Resolved(int n_classes) const {
  ModelConfig out = *this;
  out.fusion.embed_dim = encoder.embed_dim;
  out.fusion.n_heads = encoder.n_heads;
  out.fusion.n_classes = n_classes;
  if (out.decoupling.d_z == 0) out.decoupling.d_z = encoder.embed_dim;
  out.Validate();
  return out;
}

void ModelConfig::Validate() const {
  encoder.Validate();
  decoupling.Validate();
  fusion.Validate();
  if (fusion.embed_dim != encoder.embed_dim) {
    throw ConfigError("model: fusion width must equal the encoder width");
  }
  if (decoupling.d_z != 0 && decoupling.d_z != encoder.embed_dim) {
    throw ConfigError("model: d_z (" + std::to_string(decoupling.d_z) +
                      ") must equal embed_dim (" +
                      std::to_string(encoder.embed_dim) +
                      ") because projected tokens feed the fusion stack");
  }
}

InputSpec InputSpec::FromData(const PreparedData& data) {
  return {data.schema, data.n_series, data.series_length, data.n_classes};
}

Model Model::Build(const ModelConfig& config, const InputSpec& input,
                   std::uint64_t seed) {
  input.schema.Validate();
  if (input.n_classes < 2) throw ConfigError("model: need at least 2 classes");
  Model m;
  m.config_ = config.Resolved(input.n_classes);
  m.input_ = input;
  const ModelConfig& cfg = m.config_;
  const auto width = static_cast<std::size_t>(cfg.encoder.embed_dim);
  const auto n_classes = static_cast<std::size_t>(input.n_classes);
  const ModelVariant v = cfg.variant;
  const bool has_tab = v != ModelVariant::kTimeSeriesOnly;
  const bool has_ts = v != ModelVariant::kTabularOnly;
  if (has_tab && input.schema.num_features() == 0) {
    throw ConfigError("model: variant " + VariantName(v) +
                      " needs tabular features");
  }
  if (has_ts && (input.n_series == 0 || input.series_length < 2)) {
    throw ConfigError("model: variant " + VariantName(v) +
                      " needs time series of length >= 2");
  }

  Rng rng(MixSeed(seed, 1));
  if (has_tab) {
    m.tab_tokenizer_ = TabularTokenizerParams::Create(input.schema, width, rng);
  }
  if (has_ts) {
    m.ts_tokenizer_ = SeriesTokenizerParams::Create(
        input.n_series, input.series_length, width, rng);
  }
  const bool per_modality_encoders =
      v != ModelVariant::kMlpConcat && v != ModelVariant::kFtConcat;
  if (per_modality_encoders && has_tab) {
    m.tab_encoder_ = EncoderParams::Create(cfg.encoder, rng);
  }
  if (per_modality_encoders && has_ts) {
    m.ts_encoder_ = EncoderParams::Create(cfg.encoder, rng);
  }

  switch (v) {
    case ModelVariant::kDafted:
    case ModelVariant::kNoAsymFusion:
      m.decoupling_ = DecouplingParams::Create(width, width, width, rng);
      break;
    case ModelVariant::kNoDecoupling:
    case ModelVariant::kNeither:
      m.tab_projection_ = LinearParams::Create(width, width, kEmbeddingInitStd, rng);
      m.ts_projection_ = LinearParams::Create(width, width, kEmbeddingInitStd, rng);
      break;
    default:
      break;
  }

  switch (v) {
    case ModelVariant::kDafted:
    case ModelVariant::kNoDecoupling:
      m.fusion_ = FusionParams::Create(cfg.fusion, rng);
      break;
    case ModelVariant::kNoAsymFusion:
    case ModelVariant::kNeither: {
      ConcatFusionParams c;
      c.cls = GaussianParameter({width}, kEmbeddingInitStd, rng);
      for (int i = 0; i < 2 * cfg.fusion.n_rounds; ++i) {
        c.blocks.push_back(SelfAttentionBlockParams::Create(width, rng));
      }
      c.head = LinearParams::Create(width, n_classes, kEmbeddingInitStd, rng);
      m.concat_ = std::move(c);
      break;
    }
    case ModelVariant::kFtConcat: {
      m.tab_encoder_ = EncoderParams::Create(cfg.encoder, rng);
      ConcatFusionParams c;
      c.cls = GaussianParameter({width}, kEmbeddingInitStd, rng);
      c.head = LinearParams::Create(width, n_classes, kEmbeddingInitStd, rng);
      m.concat_ = std::move(c);
      break;
    }
    case ModelVariant::kSymmetricCross: {
      for (auto* stream : {&m.tab_stream_, &m.ts_stream_}) {
        SymmetricStreamParams s;
        s.cls = GaussianParameter({width}, kEmbeddingInitStd, rng);
        for (int i = 0; i < cfg.fusion.n_rounds; ++i) {
          s.self_blocks.push_back(SelfAttentionBlockParams::Create(width, rng));
          s.cross_blocks.push_back(CrossAttentionParams::Create(width, rng));
        }
        *stream = std::move(s);
      }
      m.head_ = LinearParams::Create(width, n_classes, kEmbeddingInitStd, rng);
      break;
    }
    case ModelVariant::kMlpConcat:
      m.mlp_hidden_ = LinearParams::Create(2 * width, width, kEmbeddingInitStd, rng);
      m.head_ = LinearParams::Create(width, n_classes, kEmbeddingInitStd, rng);
      break;
    case ModelVariant::kTabularOnly:
    case ModelVariant::kTimeSeriesOnly:
      m.head_ = LinearParams::Create(width, n_classes, kEmbeddingInitStd, rng);
      break;
  }
  return m;
}

TokenSequence Model::EncodeTabular(const Batch& batch, ForwardContext& ctx) const {
  TokenSequence tokens = TokenizeTabular(batch.tabular, input_.schema, *tab_tokenizer_);
  CheckFinite(tokens.tokens, "tabular tokenizer");
  if (!tab_encoder_ || config_.variant == ModelVariant::kFtConcat) return tokens;
  tokens = Encode(tokens, config_.encoder, *tab_encoder_, ctx);
  CheckFinite(tokens.tokens, "tabular encoder");
  return tokens;
}

TokenSequence Model::EncodeSeries(const Batch& batch, ForwardContext& ctx) const {
  TokenSequence tokens = TokenizeTimeSeries(batch.series, *ts_tokenizer_);
  CheckFinite(tokens.tokens, "time-series tokenizer");
  if (!ts_encoder_) return tokens;
  tokens = Encode(tokens, config_.encoder, *ts_encoder_, ctx);
  CheckFinite(tokens.tokens, "time-series encoder");
  return tokens;
}

Tensor Model::ConcatFuse(const std::vector<Tensor>& token_sets,
                         ForwardContext& ctx) const {
  Tensor joined = Concat(token_sets, 1);
  TokenSequence h{PrependCls(concat_->cls, joined), Modality::kTabular};
  const auto heads = static_cast<std::size_t>(config_.fusion.n_heads);
  for (const auto& block : concat_->blocks) {
    h = SelfAttentionBlock(h, block, heads, ctx);
  }
  return concat_->head.Apply(ClsToken(h.tokens));
}

Tensor Model::SymmetricFuse(const TokenSequence& tab, const TokenSequence& ts,
                            ForwardContext& ctx) const {
  const auto heads = static_cast<std::size_t>(config_.fusion.n_heads);
  TokenSequence a{PrependCls(tab_stream_->cls, tab.tokens), Modality::kTabular};
  TokenSequence b{PrependCls(ts_stream_->cls, ts.tokens), Modality::kTimeSeries};
  for (int r = 0; r < config_.fusion.n_rounds; ++r) {
    a = SelfAttentionBlock(a, tab_stream_->self_blocks[r], heads, ctx);
    b = SelfAttentionBlock(b, ts_stream_->self_blocks[r], heads, ctx);
    // Both streams read the other's state from before this exchange.
    TokenSequence a_next = CrossAttention(a, b, tab_stream_->cross_blocks[r], heads, ctx);
    b = CrossAttention(b, a, ts_stream_->cross_blocks[r], heads, ctx);
    a = a_next;
  }
  Tensor cls = MulScalar(Add(ClsToken(a.tokens), ClsToken(b.tokens)), 0.5);
  return head_->Apply(cls);
}

ModelOutput Model::Forward(const Batch& batch, ForwardContext& ctx) const {
  ModelOutput out;
  const ModelVariant v = config_.variant;
  switch (v) {
    case ModelVariant::kDafted:
    case ModelVariant::kNoAsymFusion: {
      const TokenSequence tab = EncodeTabular(batch, ctx);
      const TokenSequence ts = EncodeSeries(batch, ctx);
      const ProjectedTokens proj = ProjectTokens(tab, ts, *decoupling_);
      out.embeddings = PoolEmbeddings(proj);
      CheckFinite(out.embeddings.z_s, "decoupling projection");
      CheckFinite(out.embeddings.z_t_sh, "decoupling projection");
      CheckFinite(out.embeddings.z_t_sp, "decoupling projection");
      if (v == ModelVariant::kDafted) {
        out.logits = Fuse(proj.specific, proj.shared, proj.time_series,
                          config_.fusion, *fusion_, ctx);
      } else {
        out.logits = ConcatFuse({proj.specific.tokens, proj.shared.tokens,
                                 proj.time_series.tokens},
                                ctx);
      }
      break;
    }
    case ModelVariant::kNoDecoupling:
    case ModelVariant::kNeither: {
      const TokenSequence tab = EncodeTabular(batch, ctx);
      const TokenSequence ts = EncodeSeries(batch, ctx);
      const TokenSequence tab_z{tab_projection_->Apply(tab.tokens), Modality::kTabular};
      const TokenSequence ts_z{ts_projection_->Apply(ts.tokens), Modality::kTimeSeries};
      // Without a split the single tabular embedding stands in for both the
      // shared and the specific one.
      const Tensor z_t = Mean(tab_z.tokens, 1);
      out.embeddings = {Mean(ts_z.tokens, 1), z_t, z_t};
      CheckFinite(out.embeddings.z_s, "tabular/time-series projection");
      CheckFinite(z_t, "tabular/time-series projection");
      if (v == ModelVariant::kNoDecoupling) {
        out.logits = Fuse(tab_z, tab_z, ts_z, config_.fusion, *fusion_, ctx);
      } else {
        out.logits = ConcatFuse({tab_z.tokens, ts_z.tokens}, ctx);
      }
      break;
    }
    case ModelVariant::kMlpConcat: {
      const TokenSequence tab = EncodeTabular(batch, ctx);
      const TokenSequence ts = EncodeSeries(batch, ctx);
      const std::array<Tensor, 2> pooled = {Mean(tab.tokens, 1), Mean(ts.tokens, 1)};
      Tensor hidden = Dropout(Gelu(mlp_hidden_->Apply(Concat(pooled, 1))), ctx);
      out.logits = head_->Apply(hidden);
      break;
    }
    case ModelVariant::kFtConcat: {
      const TokenSequence tab = EncodeTabular(batch, ctx);
      const TokenSequence ts = EncodeSeries(batch, ctx);
      const std::array<Tensor, 2> parts = {tab.tokens, ts.tokens};
      TokenSequence joint{PrependCls(concat_->cls, Concat(parts, 1)),
                          Modality::kTabular};
      joint = Encode(joint, config_.encoder, *tab_encoder_, ctx);
      CheckFinite(joint.tokens, "joint encoder");
      out.logits = concat_->head.Apply(ClsToken(joint.tokens));
      break;
    }
    case ModelVariant::kSymmetricCross: {
      const TokenSequence tab = EncodeTabular(batch, ctx);
      const TokenSequence ts = EncodeSeries(batch, ctx);
      out.logits = SymmetricFuse(tab, ts, ctx);
      break;
    }
    case ModelVariant::kTabularOnly:
      out.logits = head_->Apply(Mean(EncodeTabular(batch, ctx).tokens, 1));
      break;
    case ModelVariant::kTimeSeriesOnly:
      out.logits = head_->Apply(Mean(EncodeSeries(batch, ctx).tokens, 1));
      break;
  }
  CheckFinite(out.logits, "fusion");
  return out;
}

std::vector<NamedTensor> Model::Parameters() const {
  std::vector<NamedTensor> out;
  if (tab_tokenizer_) tab_tokenizer_->Collect("tab_tokenizer", out);
  if (ts_tokenizer_) ts_tokenizer_->Collect("ts_tokenizer", out);
  const bool joint = config_.variant == ModelVariant::kFtConcat;
  if (tab_encoder_) tab_encoder_->Collect(joint ? "encoder" : "tab_encoder", out);
  if (ts_encoder_) ts_encoder_->Collect("ts_encoder", out);
  if (decoupling_) decoupling_->Collect("decoupling", out);
  if (tab_projection_) tab_projection_->Collect("tab_projection", out);
  if (ts_projection_) ts_projection_->Collect("ts_projection", out);
  if (fusion_) fusion_->Collect("fusion", out);
  if (concat_) {
    out.push_back({"concat_fusion.cls", concat_->cls});
    for (std::size_t i = 0; i < concat_->blocks.size(); ++i) {
      concat_->blocks[i].Collect("concat_fusion.self" + std::to_string(i), out);
    }
    concat_->head.Collect("concat_fusion.head", out);
  }
  const std::pair<const char*, const std::optional<SymmetricStreamParams>*>
      streams[] = {{"tab_stream", &tab_stream_}, {"ts_stream", &ts_stream_}};
  for (const auto& [name, stream] : streams) {
    if (!*stream) continue;
    const std::string prefix = name;
    out.push_back({prefix + ".cls", (*stream)->cls});
    for (std::size_t i = 0; i < (*stream)->self_blocks.size(); ++i) {
      (*stream)->self_blocks[i].Collect(prefix + ".self" + std::to_string(i), out);
      (*stream)->cross_blocks[i].Collect(prefix + ".cross" + std::to_string(i), out);
    }
  }
  if (mlp_hidden_) mlp_hidden_->Collect("mlp_hidden", out);
  if (head_) head_->Collect("head", out);
  return out;
}

std::size_t Model::ParameterCount() const { return CountParameters(Parameters()); }

}  // namespace asymfuse
