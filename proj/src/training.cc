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


#include "asymfuse/training.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "asymfuse/errors.h"
#include "asymfuse/evaluation.h"
#include "asymfuse/ops.h"

namespace asymfuse {
namespace {

void CheckFinite(const Tensor& t, const char* component) {
  if (t.defined() && !t.AllFinite()) {
    throw NumericalError(component,
                         std::string("non-finite value in ") + component);
  }
}

std::vector<std::vector<double>> Snapshot(const std::vector<NamedTensor>& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  }
  return out;
}

void Restore(const std::vector<NamedTensor>& params,
             const std::vector<std::vector<double>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor handle = params[i].tensor;  // shares storage
    std::copy(values[i].begin(), values[i].end(), handle.mutable_values().begin());
  }
}

std::vector<int> BatchLabels(const PreparedData& data,
                             std::span<const std::size_t> indices) {
  std::vector<int> labels;
  for (std::size_t i : indices) labels.push_back(data.labels[i]);
  return labels;
}

EmbeddingBatch ConcatEmbeddings(const std::vector<EmbeddingBatch>& parts) {
  if (parts.empty() || !parts.front().z_s.defined()) return {};
  std::vector<Tensor> s, sh, sp;
  for (const auto& p : parts) {
    s.push_back(p.z_s);
    sh.push_back(p.z_t_sh);
    sp.push_back(p.z_t_sp);
  }
  return {Concat(s, 0), Concat(sh, 0), Concat(sp, 0)};
}

}  // namespace

void TrainConfig::Validate() const {
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (!(lambda >= 0.0)) throw ConfigError("train: lambda must be >= 0");
  if (clip_norm < 0.0) throw ConfigError("train: clip_norm must be >= 0");
  if (patience < 0) throw ConfigError("train: patience must be >= 0");
  if (!compute_decoupling && lambda != 0.0) {
    throw ConfigError("train: compute_decoupling = false requires lambda = 0");
  }
}

Tensor CrossEntropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size() || labels.empty()) {
    throw DimensionError("CrossEntropy: logits " + ShapeToString(logits.shape()) +
                         " vs " + std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor one_hot({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw ValueError("CrossEntropy: label " + std::to_string(labels[i]) +
                       " outside [0, " + std::to_string(k) + ")");
    }
    one_hot.mutable_values()[i * k + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return MulScalar(SumAll(Mul(LogSoftmax(logits, 1), one_hot)),
                   -1.0 / static_cast<double>(n));
}

LossTerms TotalLoss(const ModelOutput& output, std::span<const int> labels,
                    const ModelConfig& model, const TrainConfig& train) {
  LossTerms terms;
  terms.cross_entropy = CrossEntropy(output.logits, labels);
  CheckFinite(terms.cross_entropy, "cross-entropy");
  terms.total = terms.cross_entropy;
  if (!UsesDecoupling(model.variant) || !train.compute_decoupling ||
      !output.embeddings.z_s.defined()) {
    return terms;
  }
  if (train.lambda == 0.0) {
    NoGradGuard no_grad;
    terms.decoupling = LatentObjective(output.embeddings, labels, model.decoupling);
  } else {
    terms.decoupling = LatentObjective(output.embeddings, labels, model.decoupling);
    terms.total = Add(terms.total, MulScalar(terms.decoupling, train.lambda));
  }
  CheckFinite(terms.decoupling, "decoupling loss");
  return terms;
}

void AdamStep(std::span<Tensor> params,
              const std::vector<std::vector<double>>& grads, AdamState& state,
              const AdamOptions& options) {
  if (grads.size() != params.size()) {
    throw ContractError("AdamStep: " + std::to_string(grads.size()) +
                        " gradients for " + std::to_string(params.size()) +
                        " parameters");
  }
  if (state.m.empty()) {
    for (const Tensor& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw ContractError("AdamStep: optimizer state does not match parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].size() || state.m[i].size() != params[i].size()) {
      throw ContractError("AdamStep: gradient " + std::to_string(i) + " has " +
                          std::to_string(grads[i].size()) + " values for a " +
                          ShapeToString(params[i].shape()) + " parameter");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(options.beta1, t);
  const double c2 = 1.0 - std::pow(options.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_values();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = options.beta1 * m[j] + (1.0 - options.beta1) * g[j];
      v[j] = options.beta2 * v[j] + (1.0 - options.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      w[j] -= options.learning_rate * m_hat / (std::sqrt(v_hat) + options.epsilon);
    }
  }
}

double ClipGlobalNorm(std::vector<std::vector<double>>& grads, double max_norm) {
  double ss = 0.0;
  for (const auto& g : grads) {
    for (double x : g) ss += x * x;
  }
  const double norm = std::sqrt(ss);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& g : grads) {
      for (double& x : g) x *= scale;
    }
  }
  return norm;
}

std::vector<std::vector<std::size_t>> MakeBatches(
    std::span<const std::size_t> order, int batch_size, bool drop_singleton) {
  const auto size = static_cast<std::size_t>(std::max(1, batch_size));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += size) {
    const std::size_t end = std::min(order.size(), start + size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (!batches.empty() && batches.back().size() == 1) {
    if (drop_singleton) {
      batches.pop_back();
    } else if (batches.size() > 1) {
      const std::size_t last = batches.back().front();
      batches.pop_back();
      batches.back().push_back(last);
    }
  }
  return batches;
}

LossSummary EvaluateLoss(const Model& model, const PreparedData& data,
                         std::span<const std::size_t> indices,
                         const TrainConfig& train) {
  NoGradGuard no_grad;
  ForwardContext ctx;
  LossSummary sum;
  std::size_t count = 0;
  for (const auto& batch_idx : MakeBatches(indices, train.batch_size, false)) {
    const Batch batch = data.MakeBatch(batch_idx);
    const ModelOutput out = model.Forward(batch, ctx);
    // A lone sample cannot be contrasted; its CE still counts.
    TrainConfig cfg = train;
    if (batch.size() < 2) {
      cfg.compute_decoupling = false;
      cfg.lambda = 0.0;
    }
    const LossTerms terms = TotalLoss(out, batch.labels, model.config(), cfg);
    const auto w = static_cast<double>(batch.size());
    sum.total += w * terms.total.item();
    sum.cross_entropy += w * terms.cross_entropy.item();
    if (terms.decoupling.defined()) sum.decoupling += w * terms.decoupling.item();
    count += batch.size();
  }
  if (count > 0) {
    sum.total /= static_cast<double>(count);
    sum.cross_entropy /= static_cast<double>(count);
    sum.decoupling /= static_cast<double>(count);
  }
  return sum;
}

Predictions Predict(const Model& model, const PreparedData& data,
                    std::span<const std::size_t> indices, int batch_size) {
  NoGradGuard no_grad;
  ForwardContext ctx;
  Predictions out;
  std::vector<Tensor> probs;
  std::vector<EmbeddingBatch> embeddings;
  for (const auto& batch_idx : MakeBatches(indices, batch_size, false)) {
    const Batch batch = data.MakeBatch(batch_idx);
    const ModelOutput result = model.Forward(batch, ctx);
    probs.push_back(PredictProba(result.logits));
    embeddings.push_back(result.embeddings);
  }
  if (!probs.empty()) {
    out.probabilities = Concat(probs, 0);
    out.embeddings = ConcatEmbeddings(embeddings);
  }
  out.labels = BatchLabels(data, indices);
  for (std::size_t i : indices) out.sample_ids.push_back(data.sample_ids[i]);
  return out;
}

TrainResult Train(const PreparedData& data, std::span<const std::size_t> train,
                  std::span<const std::size_t> val, const TrainConfig& train_cfg,
                  const ModelConfig& model_cfg) {
  train_cfg.Validate();
  if (train.empty() || val.empty()) {
    throw DimensionError("train: training and validation splits must be non-empty");
  }
  TrainResult result{Model::Build(model_cfg, InputSpec::FromData(data), train_cfg.seed),
                     {},
                     {}};
  Model& model = result.model;
  TrainState& state = result.state;
  RunReport& report = result.report;
  state.parameters = model.Parameters();
  std::vector<Tensor> tensors;
  for (const auto& p : state.parameters) tensors.push_back(p.tensor);

  report.variant = VariantName(model.config().variant);
  report.seed = train_cfg.seed;
  report.untrained = train_cfg.epochs == 0;
  report.n_parameters = CountParameters(state.parameters);
  for (const auto& p : state.parameters) {
    report.parameter_breakdown[p.path.substr(0, p.path.find('.'))] += p.tensor.size();
  }

  report.initial_val = EvaluateLoss(model, data, val, train_cfg);
  CheckFinite(Tensor::Scalar(report.initial_val.total), "validation loss");
  state.best_val_loss = report.initial_val.Select(train_cfg.selection);
  state.best_parameters = Snapshot(state.parameters);

  Rng shuffle_rng(MixSeed(train_cfg.seed, 2));
  Rng dropout_rng(MixSeed(train_cfg.seed, 3));
  ForwardContext ctx{true, model.config().encoder.dropout_rate, &dropout_rng};
  const AdamOptions adam{train_cfg.learning_rate};
  std::vector<std::size_t> order(train.begin(), train.end());
  std::vector<std::vector<double>> grads(tensors.size());

  for (int epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double train_loss = 0.0;
    std::size_t seen = 0;
    for (const auto& batch_idx : MakeBatches(order, train_cfg.batch_size, true)) {
      const Batch batch = data.MakeBatch(batch_idx);
      for (Tensor& t : tensors) t.ZeroGrad();
      const ModelOutput out = model.Forward(batch, ctx);
      const LossTerms terms = TotalLoss(out, batch.labels, model.config(), train_cfg);
      terms.total.Backward();
      for (std::size_t i = 0; i < tensors.size(); ++i) {
        const auto g = tensors[i].grad();
        if (g.empty()) {
          grads[i].assign(tensors[i].size(), 0.0);
        } else {
          grads[i].assign(g.begin(), g.end());
        }
      }
      const double norm = ClipGlobalNorm(grads, train_cfg.clip_norm);
      if (!std::isfinite(norm)) {
        throw NumericalError("backward", "non-finite gradient at epoch " +
                                             std::to_string(epoch));
      }
      if (train_cfg.clip_norm > 0.0 && norm > train_cfg.clip_norm) {
        ++report.n_clipped_steps;
      }
      AdamStep(tensors, grads, state.optimizer, adam);
      ++report.n_steps;
      train_loss += terms.total.item() * static_cast<double>(batch.size());
      seen += batch.size();
    }
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = seen ? train_loss / static_cast<double>(seen) : 0.0;
    record.val = EvaluateLoss(model, data, val, train_cfg);
    CheckFinite(Tensor::Scalar(record.val.total), "validation loss");
    const double selected = record.val.Select(train_cfg.selection);
    if (selected < state.best_val_loss) {
      state.best_val_loss = selected;
      state.best_parameters = Snapshot(state.parameters);
      report.best_epoch = epoch;
    }
    report.curve.push_back(record);
    state.epoch = epoch;
    if (train_cfg.patience > 0 && epoch - report.best_epoch >= train_cfg.patience) break;
  }
  report.epochs_run = state.epoch;
  report.best_val_loss = state.best_val_loss;
  Restore(state.parameters, state.best_parameters);

  const Predictions pred = Predict(model, data, val, train_cfg.batch_size);
  try {
    report.val_metrics = ComputeMetrics(pred.probabilities, pred.labels);
  } catch (const MetricError&) {
    // A validation split missing a class has no macro metrics.
    report.val_metrics = {};
  }
  report.val_separation_gap = pred.embeddings.z_s.defined()
                                  ? SeparationGap(pred.embeddings)
                                  : std::numeric_limits<double>::quiet_NaN();
  return result;
}

}  // namespace asymfuse
