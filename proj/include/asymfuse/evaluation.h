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


// Contrastive baselines, sweeps and embedding export.

#ifndef ASYMFUSE_EVALUATION_H_
#define ASYMFUSE_EVALUATION_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "asymfuse/decoupling.h"
#include "asymfuse/tensor.h"

namespace asymfuse {

inline constexpr double kTripletMargin = 0.3;

// Symmetric in-batch cross-modal InfoNCE between rows of `a` and `b`
// ([N, d] each): row i of one side is the positive for row i of the other and
// every row of the other side is in the denominator.
Tensor InfoNceLoss(const Tensor& a, const Tensor& b, double tau);

// mean_i max(0, margin + sim(z_s[i], z_sp[k*]) - sim(z_s[i], z_sh[i])) where
// k* is the most similar specific embedding in the batch.
Tensor TripletLoss(const EmbeddingBatch& batch, double margin = kTripletMargin);

// Label-supervised contrast between the time-series embedding and a single
// tabular embedding (z_t_sh plays that role).
Tensor SupervisedClipLoss(const EmbeddingBatch& batch,
                          std::span<const int> labels, double tau);

// The training-time latent objective for `cfg.kind`. For kShsd this is
// DecouplingLoss; the baselines ignore the SHSD/regularization weights.
Tensor LatentObjective(const EmbeddingBatch& batch, std::span<const int> labels,
                       const DecouplingConfig& cfg);

// Runs fn(0..n-1) on up to `jobs` threads. Exceptions escaping fn are
// rethrown after all workers finish (the one with the lowest index wins).
void ParallelFor(std::size_t n, int jobs,
                 const std::function<void(std::size_t)>& fn);

struct SweepAxis {
  std::string param;
  std::vector<double> values;
};

struct SweepPointResult {
  std::vector<double> coordinates;  // one value per axis
  std::vector<double> per_seed;     // NaN for failed runs
  std::vector<std::string> errors;  // empty string for successful runs
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation over successful runs
  std::size_t n_ok = 0;
};

struct SweepResult {
  std::vector<std::string> params;
  std::vector<std::uint64_t> seeds;
  std::vector<SweepPointResult> points;  // Cartesian product, last axis fastest
};

using SweepRunFn = std::function<double(
    const std::vector<std::pair<std::string, double>>& point,
    std::uint64_t seed)>;

// Every grid point is run with the same seeds so that points can be compared
// with paired tests. A run that throws is recorded, not fatal.
SweepResult RunSweep(const std::vector<SweepAxis>& grid,
                     std::span<const std::uint64_t> seeds, const SweepRunFn& run,
                     int jobs = 1);

// Columns: point, <param...>, mean, std, n_ok, seed_<s>...
std::string SweepToCsv(const SweepResult& result);
SweepResult ParseSweepCsv(const std::string& text);

// modality tags in export order
inline constexpr const char* kModalityTags[] = {"ts", "tab_shared",
                                                "tab_specific"};

struct EmbeddingRecord {
  std::int64_t sample_id = 0;
  int label = 0;
  std::string modality;
  std::vector<double> values;
};

// Three rows per sample (ts, tab_shared, tab_specific). Columns:
// sample_id, label, modality, z0..z{d-1}.
void ExportEmbeddings(const EmbeddingBatch& batch, std::span<const int> labels,
                      std::span<const std::int64_t> sample_ids,
                      const std::string& path);
std::vector<EmbeddingRecord> ReadEmbeddings(const std::string& path);

// mean_i cos(z_s[i], z_sh[i]) - mean_i cos(z_s[i], z_sp[i]).
double SeparationGap(const EmbeddingBatch& batch);
double SeparationGap(const std::vector<EmbeddingRecord>& records);

}  // namespace asymfuse

#endif  // ASYMFUSE_EVALUATION_H_
