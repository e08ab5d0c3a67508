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


// Objective, optimizer and the training loop with best-validation snapshots.

#ifndef ASYMFUSE_TRAINING_H_
#define ASYMFUSE_TRAINING_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "asymfuse/data.h"
#include "asymfuse/metrics.h"
#include "asymfuse/model.h"
#include "asymfuse/tensor.h"

namespace asymfuse {

// Validation quantity that picks the best snapshot.
enum class SelectionMetric { kTotal, kCrossEntropy };

struct TrainConfig {
  int epochs = 200;
  int batch_size = 128;
  double learning_rate = 1e-4;
  double lambda = 1.0;
  std::uint64_t seed = 0;
  // Global gradient-norm clipping threshold; 0 disables clipping.
  double clip_norm = 1.0;
  // When false the latent objective is not evaluated at all. Only valid
  // together with lambda = 0.
  bool compute_decoupling = true;
  SelectionMetric selection = SelectionMetric::kTotal;
  // Stop after this many epochs without a new best; 0 runs every epoch.
  int patience = 0;

  void Validate() const;
};

// Mean over the batch of -log softmax(logits)[y].
Tensor CrossEntropy(const Tensor& logits, std::span<const int> labels);

struct LossTerms {
  Tensor total;
  Tensor cross_entropy;
  // Undefined when the variant has no latent objective or it is disabled.
  // With lambda = 0 it is computed without gradient tracking, for reporting.
  Tensor decoupling;
};

// CE + lambda * latent objective. Variants without a shared/specific split
// contribute CE only.
LossTerms TotalLoss(const ModelOutput& output, std::span<const int> labels,
                    const ModelConfig& model, const TrainConfig& train);

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long step = 0;
};

// One bias-corrected Adam update of `params` given `grads` (one vector per
// parameter, same sizes). Throws ContractError on a size mismatch.
void AdamStep(std::span<Tensor> params,
              const std::vector<std::vector<double>>& grads, AdamState& state,
              const AdamOptions& options);

// Scales gradients in place so that their global L2 norm is at most
// max_norm. Returns the norm before clipping.
double ClipGlobalNorm(std::vector<std::vector<double>>& grads, double max_norm);

// Batch partition used everywhere: consecutive chunks of `batch_size`. A
// trailing chunk of one sample is dropped when `drop_singleton` and merged
// into the previous chunk otherwise.
std::vector<std::vector<std::size_t>> MakeBatches(
    std::span<const std::size_t> order, int batch_size, bool drop_singleton);

struct LossSummary {
  double total = 0.0;
  double cross_entropy = 0.0;
  double decoupling = 0.0;  // 0 when not computed

  double Select(SelectionMetric metric) const {
    return metric == SelectionMetric::kTotal ? total : cross_entropy;
  }
};

// Sample-weighted mean of the batch losses over `indices` (evaluation mode,
// no gradient).
LossSummary EvaluateLoss(const Model& model, const PreparedData& data,
                         std::span<const std::size_t> indices,
                         const TrainConfig& train);

struct Predictions {
  Tensor probabilities;       // [N, n_classes]
  EmbeddingBatch embeddings;  // empty for variants without a latent space
  std::vector<int> labels;
  std::vector<std::int64_t> sample_ids;
};

Predictions Predict(const Model& model, const PreparedData& data,
                    std::span<const std::size_t> indices, int batch_size);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  LossSummary val;
};

struct RunReport {
  std::string variant;
  std::uint64_t seed = 0;
  bool untrained = false;
  std::size_t n_parameters = 0;
  // Parameter counts by top-level component (first path segment).
  std::map<std::string, std::size_t> parameter_breakdown;
  int epochs_run = 0;
  int best_epoch = 0;  // 0 is the initial model
  LossSummary initial_val;
  double best_val_loss = 0.0;
  std::vector<EpochRecord> curve;
  std::size_t n_steps = 0;
  std::size_t n_clipped_steps = 0;
  MetricReport val_metrics;
  // NaN when the variant has no latent space.
  double val_separation_gap = 0.0;
};

struct TrainState {
  std::vector<NamedTensor> parameters;
  AdamState optimizer;
  int epoch = 0;
  double best_val_loss = 0.0;
  std::vector<std::vector<double>> best_parameters;
};

struct TrainResult {
  // Holds the best-validation parameters.
  Model model;
  TrainState state;
  RunReport report;
};

// Mini-batch training with shuffling from MixSeed(seed, 2) and dropout from
// MixSeed(seed, 3). Throws NumericalError naming the first component that
// produced a non-finite value.
TrainResult Train(const PreparedData& data, std::span<const std::size_t> train,
                  std::span<const std::size_t> val, const TrainConfig& train_cfg,
                  const ModelConfig& model_cfg);

}  // namespace asymfuse

#endif  // ASYMFUSE_TRAINING_H_
