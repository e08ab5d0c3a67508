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

// Multimodal samples: synthetic generation with known shared/specific
// structure, CSV ingestion, stratified splitting and train-split
// normalization.

#ifndef ASYMFUSE_DATA_H_
#define ASYMFUSE_DATA_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "asymfuse/encoders.h"
#include "asymfuse/tensor.h"

namespace asymfuse {

struct MultimodalSample {
  std::int64_t sample_id = 0;
  TabularRecord tabular;
  Tensor series;  // [n_series, length]
  int label = 0;
};

struct Dataset {
  TabularSchema schema;
  std::vector<std::string> series_names;
  std::size_t series_length = 0;
  int n_classes = 0;
  std::vector<MultimodalSample> samples;

  std::vector<int> Labels() const;
};

// Latent-factor generator.
//
// For each sample: a class y; a shared latent u and a specific latent v, both
// class-conditional Gaussians whose class means are scaled by
// (1 - label_mix) and label_mix respectively. Numeric features are a fixed
// linear map of [u; v] plus noise; categorical features quantize linear
// scores of v; each series is a low-order Fourier basis whose coefficients
// are a linear map of u only, plus noise. Time series therefore never carry
// information about v.
struct SynthConfig {
  int n_samples = 600;
  int n_classes = 3;
  int n_shared_factors = 4;
  int n_specific_factors = 4;
  int n_numeric_features = 12;
  int n_categorical_features = 1;
  int categorical_cardinality = 5;
  int n_series = 14;
  int series_length = 32;
  double noise_sigma = 0.5;
  double label_mix = 0.85;
  // Norm of each class mean before the label_mix split.
  double class_separation = 2.0;
  std::uint64_t seed = 0;

  void Validate() const;
};

inline constexpr int kFourierBasisSize = 5;

// Ground truth kept alongside a generated dataset, one row per sample.
struct SyntheticLatents {
  std::vector<std::vector<double>> shared;
  std::vector<std::vector<double>> specific;
  // [n_series * kFourierBasisSize] coefficients per sample.
  std::vector<std::vector<double>> series_coefficients;
};

struct GeneratedData {
  Dataset dataset;
  SyntheticLatents latents;
};

GeneratedData GenerateWithLatents(const SynthConfig& cfg);
Dataset Generate(const SynthConfig& cfg);

// Tabular CSV: header of feature names plus "label" (an optional
// "sample_id" column overrides the row index). Series CSV: long format with
// columns sample_id, series_name, t_index, value. Empty cells take the
// feature's fill value when one is given, otherwise they are value errors.
struct CsvOptions {
  int n_classes = 0;  // 0 infers max(label) + 1
  std::map<std::string, double> fill_values;
};

Dataset LoadCsv(const std::string& tabular_path, const std::string& series_path,
                const TabularSchema& schema, const CsvOptions& options = {});

// Writes the same two-file layout that LoadCsv reads. Values are printed with
// 17 significant digits.
void WriteCsv(const Dataset& dataset, const std::string& tabular_path,
              const std::string& series_path);

struct SplitSpec {
  double train_fraction = 171.0 / 239.0;
  double val_fraction = 20.0 / 239.0;
  double test_fraction = 48.0 / 239.0;
  bool stratified = true;
  std::uint64_t seed = 0;

  void Validate() const;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// Deterministic for a fixed seed. Stratified splits need >= 3 samples per
// class (StratificationError otherwise).
SplitIndices Split(std::span<const int> labels, const SplitSpec& spec);

// z-score statistics fitted on the training split only.
struct Normalizer {
  std::vector<double> numeric_mean;
  std::vector<double> numeric_std;
  std::vector<double> series_mean;  // per series, over samples and time
  std::vector<double> series_std;

  static Normalizer Fit(const Dataset& dataset,
                        std::span<const std::size_t> train);
};

// Model input for one mini-batch.
struct Batch {
  TabularBatch tabular;
  Tensor series;  // [batch, n_series, length]
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

// Normalized, array-backed copy of a dataset.
struct PreparedData {
  TabularSchema schema;
  std::size_t n_series = 0;
  std::size_t series_length = 0;
  int n_classes = 0;
  std::vector<double> numeric;      // [N, n_numeric]
  std::vector<int> categorical;     // [N, n_categorical]
  std::vector<double> series;       // [N, n_series, length]
  std::vector<int> labels;
  std::vector<std::int64_t> sample_ids;

  std::size_t size() const { return labels.size(); }
  Batch MakeBatch(std::span<const std::size_t> indices) const;
};

PreparedData Prepare(const Dataset& dataset, const Normalizer& normalizer);

}  // namespace asymfuse

#endif  // ASYMFUSE_DATA_H_
