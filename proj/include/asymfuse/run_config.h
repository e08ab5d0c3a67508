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


// Declarative run configuration: one JSON document with data, model, train
// and eval sections plus the output directory. Unknown keys are rejected so
// that a typo never silently falls back to a default.

#ifndef ASYMFUSE_RUN_CONFIG_H_
#define ASYMFUSE_RUN_CONFIG_H_

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "asymfuse/data.h"
#include "asymfuse/model.h"
#include "asymfuse/training.h"

namespace asymfuse {

using Json = nlohmann::ordered_json;

struct CsvSource {
  std::string tabular_path;
  std::string series_path;
  TabularSchema schema;
  CsvOptions options;
};

// Exactly one of `synthetic` and `csv` is set.
struct DataSection {
  std::optional<SynthConfig> synthetic;
  std::optional<CsvSource> csv;
  SplitSpec split;
};

struct EvalSection {
  std::vector<std::string> metrics = {"auroc", "auprc", "f1"};
  std::vector<std::string> ablation_variants = {"dafted", "no_decoupling",
                                                "no_asym_fusion", "neither"};
  std::vector<double> lambda_values = {0.0, 0.25, 0.5, 1.0, 2.0, 4.0};
  std::vector<double> tau_values = {0.01, 0.05, 0.1, 0.5, 1.0};
  int batch_size = 128;
};

struct RunConfig {
  DataSection data;
  ModelConfig model;
  TrainConfig train;
  EvalSection eval;
  std::string output_dir = "runs";

  // Desk-scale defaults with a synthetic data source.
  static RunConfig Defaults();
  // d = 192, 8 heads, 3 blocks, 1000 epochs.
  static RunConfig PaperScale();

  // Throws ConfigError. With `check_paths`, CSV inputs must exist.
  void Validate(bool check_paths = true) const;
};

// Fully-resolved document; every field is present.
Json ToJson(const RunConfig& config);

// Fields absent from `doc` keep their value in `base`. Unknown keys, wrong
// types and a data section naming both or neither source raise ConfigError.
RunConfig FromJson(const Json& doc, const RunConfig& base = RunConfig::Defaults());

// Applies "section.key=value" to `doc`. The value is parsed as JSON when
// possible and kept as a string otherwise.
void ApplyOverride(Json& doc, const std::string& assignment);

// Reads `path` (ConfigError if missing or malformed), applies the overrides
// in order and resolves against `base`.
RunConfig LoadRunConfig(const std::string& path,
                        const std::vector<std::string>& overrides = {},
                        const RunConfig& base = RunConfig::Defaults());

Json ToJson(const SynthConfig& config);
Json ToJson(const MetricReport& report);

}  // namespace asymfuse

#endif  // ASYMFUSE_RUN_CONFIG_H_
