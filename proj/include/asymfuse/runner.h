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


// Orchestration shared by the command-line tool and the acceptance suite:
// data preparation, single training runs with reports and checkpoints,
// checkpoint evaluation, ablations and parameter sweeps.

#ifndef ASYMFUSE_RUNNER_H_
#define ASYMFUSE_RUNNER_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "asymfuse/checkpoint.h"
#include "asymfuse/data.h"
#include "asymfuse/evaluation.h"
#include "asymfuse/metrics.h"
#include "asymfuse/run_config.h"
#include "asymfuse/training.h"

namespace asymfuse {

// <root>/{checkpoints,reports,grids,embeddings}
struct OutputLayout {
  std::string root;

  std::string checkpoints() const { return root + "/checkpoints"; }
  std::string reports() const { return root + "/reports"; }
  std::string grids() const { return root + "/grids"; }
  std::string embeddings() const { return root + "/embeddings"; }

  // Creates the directory tree. Throws std::runtime_error when it cannot.
  static OutputLayout Create(const std::string& root);
};

struct PreparedSplits {
  Dataset dataset;
  SplitIndices split;
  Normalizer normalizer;
  PreparedData data;

  std::span<const std::size_t> Indices(const std::string& name) const;
};

Dataset LoadDataset(const DataSection& data);
PreparedSplits PrepareSplits(const DataSection& data);

// Writes the generated dataset as CSV plus a manifest with the generator
// config: <dir>/tabular.csv, <dir>/series.csv, <dir>/manifest.json.
void WriteSyntheticDataset(const SynthConfig& config, const std::string& dir);

struct TrainRunResult {
  TrainResult train;
  MetricReport test_metrics;
  Json report;
  Checkpoint checkpoint;
};

// Trains config.model.variant with config.train.seed on `prepared`.
TrainRunResult RunTraining(const RunConfig& config, const PreparedSplits& prepared);

// Stem shared by the checkpoint, report and embedding files of a run.
std::string RunName(const RunConfig& config);

// Writes checkpoint, report and (for latent variants) validation embeddings.
void WriteTrainOutputs(const TrainRunResult& run, const RunConfig& config,
                       const PreparedSplits& prepared, const OutputLayout& out);

// Macro metrics restricted to `metrics` (subset of auroc, auprc, f1).
Json MetricsJson(const MetricReport& report, const std::vector<std::string>& metrics);

Checkpoint MakeCheckpoint(const RunConfig& config, const Model& model,
                          const Normalizer& normalizer);

struct LoadedModel {
  RunConfig config;
  Model model;
  Normalizer normalizer;
};

// Rebuilds the model recorded in a checkpoint.
LoadedModel RestoreModel(const Checkpoint& checkpoint);

// Evaluates a restored model on split `split` ("train", "val" or "test") of
// `data`, or of the checkpoint's own data source when `data` is empty. The
// training normalizer from the checkpoint is applied.
Json EvaluateModel(const LoadedModel& loaded, const std::optional<DataSection>& data,
                   const std::string& split);

struct AblationRun {
  std::string variant;
  std::uint64_t seed = 0;
  MetricReport test_metrics;
  double val_separation_gap = 0.0;
  std::string error;  // empty on success
};

struct PairedComparison {
  std::string a;
  std::string b;
  std::optional<TTestResult> test;
  std::string error;
};

struct AblationResult {
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRun> runs;  // variant-major
  std::vector<PairedComparison> comparisons;

  const AblationRun& Run(std::size_t variant, std::size_t seed) const {
    return runs[variant * seeds.size() + seed];
  }
  std::vector<double> Auroc(std::size_t variant) const;
};

// Every variant in config.eval.ablation_variants is trained with every seed
// (paired design). Paired t-tests on test AUROC compare all variant pairs,
// earlier variant minus later variant.
AblationResult RunAblation(const RunConfig& config, const PreparedSplits& prepared,
                           const std::vector<std::uint64_t>& seeds, int jobs);

// Columns: variant, decoupling, asymmetric_fusion, seed, auroc, auprc, f1,
// val_separation_gap, error.
std::string AblationToCsv(const AblationResult& result);
Json AblationToJson(const AblationResult& result, const RunConfig& config);

// "lambda" and "tau" are shorthands for train.lambda and
// model.decoupling.tau; any other dotted config key is used as is.
std::string ResolveSweepParam(const std::string& param);
// Default grid for the shorthands; empty for other keys.
std::vector<double> DefaultSweepValues(const std::string& param,
                                       const EvalSection& eval);

// Test macro AUROC per grid point and seed.
SweepResult RunParameterSweep(const RunConfig& config, const PreparedSplits& prepared,
                              const std::vector<SweepAxis>& grid,
                              const std::vector<std::uint64_t>& seeds, int jobs);

// 0, 1, ..., n - 1
std::vector<std::uint64_t> SeedRange(int n);

}  // namespace asymfuse

#endif  // ASYMFUSE_RUNNER_H_
