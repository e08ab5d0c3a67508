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


// asymfuse: generate data, train, evaluate, ablate and sweep from a JSON
// run configuration. Exit codes: 0 success, 2 configuration or usage error,
// 3 numerical failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "asymfuse/csv.h"
#include "asymfuse/errors.h"
#include "asymfuse/runner.h"

namespace {

using namespace asymfuse;

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  bool paper_scale = false;
};

void AddConfigOptions(CLI::App* cmd, CommonOptions& opts, bool required = true) {
  auto* opt = cmd->add_option("--config", opts.config_path, "Run configuration (JSON)")
                  ->check(CLI::ExistingFile);
  if (required) opt->required();
  cmd->add_option("--set", opts.overrides,
                  "Override a config value, e.g. --set train.epochs=50")
      ->allow_extra_args(false);
  cmd->add_flag("--paper-scale", opts.paper_scale,
                "Start from the full-width defaults (d=192, 8 heads, 3 blocks, "
                "1000 epochs)");
}

RunConfig Resolve(const CommonOptions& opts) {
  const RunConfig base = opts.paper_scale ? RunConfig::PaperScale() : RunConfig::Defaults();
  RunConfig config = LoadRunConfig(opts.config_path, opts.overrides, base);
  config.Validate();
  return config;
}

std::vector<double> ParseValueList(const std::string& text) {
  std::vector<double> values;
  if (text.empty()) return values;
  for (const auto& field : SplitCsvLine(text)) {
    const auto v = ParseDouble(field);
    if (!v) throw ConfigError("--values: \"" + field + "\" is not a number");
    values.push_back(*v);
  }
  return values;
}

void PrintSummary(const Json& summary) { std::cout << summary.dump(2) << "\n"; }

int GenerateData(const CommonOptions& opts, const std::string& out_dir) {
  const RunConfig config = Resolve(opts);
  if (!config.data.synthetic) {
    throw ConfigError("generate-data needs a \"data.synthetic\" section");
  }
  WriteSyntheticDataset(*config.data.synthetic, out_dir);
  PrintSummary({{"command", "generate-data"},
                {"out", out_dir},
                {"n_samples", config.data.synthetic->n_samples},
                {"seed", config.data.synthetic->seed}});
  return 0;
}

int TrainCommand(const CommonOptions& opts, const std::optional<std::string>& variant,
                 const std::optional<std::uint64_t>& seed) {
  RunConfig config = Resolve(opts);
  if (variant) config.model.variant = ParseVariant(*variant);
  if (seed) config.train.seed = *seed;
  config.Validate();
  const OutputLayout out = OutputLayout::Create(config.output_dir);
  const PreparedSplits prepared = PrepareSplits(config.data);
  const TrainRunResult run = RunTraining(config, prepared);
  WriteTrainOutputs(run, config, prepared, out);
  PrintSummary({{"command", "train"},
                {"variant", VariantName(config.model.variant)},
                {"seed", config.train.seed},
                {"checkpoint", out.checkpoints() + "/" + RunName(config) + ".ckpt"},
                {"report", out.reports() + "/" + RunName(config) + ".json"},
                {"test_metrics", run.report["test_metrics"]}});
  return 0;
}

int EvaluateCommand(const std::string& checkpoint_path, const std::string& data_config,
                    const std::vector<std::string>& overrides, const std::string& split,
                    const std::string& report_path) {
  const LoadedModel loaded = RestoreModel(LoadCheckpoint(checkpoint_path));
  std::optional<DataSection> data;
  if (!data_config.empty()) {
    RunConfig source = LoadRunConfig(data_config, overrides);
    source.Validate();
    data = source.data;
  }
  Json report = EvaluateModel(loaded, data, split);
  report["checkpoint"] = checkpoint_path;
  if (!report_path.empty()) WriteFile(report_path, report.dump(2) + "\n");
  PrintSummary(report);
  return 0;
}

int AblateCommand(const CommonOptions& opts, int n_seeds, int jobs) {
  const RunConfig config = Resolve(opts);
  if (n_seeds < 2) throw ConfigError("ablate: --seeds must be >= 2 for paired tests");
  const OutputLayout out = OutputLayout::Create(config.output_dir);
  const PreparedSplits prepared = PrepareSplits(config.data);
  const AblationResult result =
      RunAblation(config, prepared, SeedRange(n_seeds), jobs);
  WriteFile(out.grids() + "/ablation.csv", AblationToCsv(result));
  const Json report = AblationToJson(result, config);
  WriteFile(out.reports() + "/ablation.json", report.dump(2) + "\n");
  for (const auto& run : result.runs) {
    if (!run.error.empty()) {
      std::cerr << "warning: " << run.variant << " seed " << run.seed
                << " failed: " << run.error << "\n";
    }
  }
  PrintSummary({{"command", "ablate"},
                {"grid", out.grids() + "/ablation.csv"},
                {"report", out.reports() + "/ablation.json"},
                {"summary", report["summary"]},
                {"paired_tests", report["paired_tests"]}});
  return 0;
}

int SweepCommand(const CommonOptions& opts, const std::string& param,
                 const std::optional<std::string>& values_text, int n_seeds, int jobs) {
  const RunConfig config = Resolve(opts);
  if (n_seeds < 1) throw ConfigError("sweep: --seeds must be >= 1");
  const std::vector<double> values = values_text
                                         ? ParseValueList(*values_text)
                                         : DefaultSweepValues(param, config.eval);
  if (values.empty()) {
    throw ConfigError("sweep: no values for \"" + param +
                      "\" (give --values or use lambda/tau)");
  }
  const OutputLayout out = OutputLayout::Create(config.output_dir);
  const PreparedSplits prepared = PrepareSplits(config.data);
  const SweepResult result =
      RunParameterSweep(config, prepared, {{param, values}}, SeedRange(n_seeds), jobs);
  std::string name = param;
  for (char& c : name) {
    if (c == '.') c = '_';
  }
  const std::string grid_path = out.grids() + "/sweep_" + name + ".csv";
  WriteFile(grid_path, SweepToCsv(result));
  Json points = Json::array();
  for (const auto& p : result.points) {
    points.push_back({{param, p.coordinates.front()},
                      {"auroc_mean", p.mean},
                      {"auroc_std", p.std},
                      {"n_ok", p.n_ok}});
  }
  WriteFile(out.reports() + "/sweep_" + name + ".json",
            Json{{"command", "sweep"},
                 {"param", param},
                 {"key", ResolveSweepParam(param)},
                 {"seeds", result.seeds},
                 {"points", points},
                 {"config", ToJson(config)}}
                    .dump(2) +
                "\n");
  PrintSummary({{"command", "sweep"}, {"grid", grid_path}, {"points", points}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decoupled asymmetric fusion of tabular and time-series data"};
  app.require_subcommand(1);

  CommonOptions gen_opts;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate-data", "Write a synthetic dataset as CSV");
  AddConfigOptions(gen, gen_opts);
  gen->add_option("--out", gen_out, "Output directory")->required();

  CommonOptions train_opts;
  std::optional<std::string> variant;
  std::optional<std::uint64_t> seed;
  auto* train = app.add_subcommand("train", "Train one model variant");
  AddConfigOptions(train, train_opts);
  train->add_option("--variant", variant, "Model variant (overrides model.variant)");
  train->add_option("--seed", seed, "Seed (overrides train.seed)");

  std::string checkpoint;
  std::string data_config;
  std::vector<std::string> eval_overrides;
  std::string split = "test";
  std::string report_path;
  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on a data split");
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("--data", data_config,
                       "Config whose data section to evaluate on (default: the "
                       "checkpoint's own)")
      ->check(CLI::ExistingFile);
  evaluate->add_option("--set", eval_overrides, "Override a value of the --data config");
  evaluate->add_option("--split", split, "train, val or test")
      ->check(CLI::IsMember({"train", "val", "test"}));
  evaluate->add_option("--report", report_path, "Also write the report here");

  CommonOptions ablate_opts;
  int ablate_seeds = 5;
  int ablate_jobs = 1;
  auto* ablate = app.add_subcommand("ablate", "Train every ablation variant per seed");
  AddConfigOptions(ablate, ablate_opts);
  ablate->add_option("--seeds", ablate_seeds, "Number of shared seeds (0..k-1)");
  ablate->add_option("--jobs", ablate_jobs, "Concurrent runs")->check(CLI::PositiveNumber);

  CommonOptions sweep_opts;
  std::string sweep_param;
  std::optional<std::string> sweep_values;
  int sweep_seeds = 3;
  int sweep_jobs = 1;
  auto* sweep = app.add_subcommand("sweep", "Grid over one config value");
  AddConfigOptions(sweep, sweep_opts);
  sweep->add_option("--param", sweep_param,
                    "lambda, tau or any dotted config key")
      ->required();
  sweep->add_option("--values", sweep_values, "Comma-separated values");
  sweep->add_option("--seeds", sweep_seeds, "Number of shared seeds (0..k-1)");
  sweep->add_option("--jobs", sweep_jobs, "Concurrent runs")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) return GenerateData(gen_opts, gen_out);
    if (*train) return TrainCommand(train_opts, variant, seed);
    if (*evaluate) {
      return EvaluateCommand(checkpoint, data_config, eval_overrides, split, report_path);
    }
    if (*ablate) return AblateCommand(ablate_opts, ablate_seeds, ablate_jobs);
    if (*sweep) {
      return SweepCommand(sweep_opts, sweep_param, sweep_values, sweep_seeds, sweep_jobs);
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure in " << e.component() << ": " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
