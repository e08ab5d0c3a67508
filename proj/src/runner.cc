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


#include "asymfuse/runner.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "asymfuse/csv.h"
#include "asymfuse/errors.h"

namespace asymfuse {
namespace {

namespace fs = std::filesystem;

bool IsAsymmetricFusion(ModelVariant v) {
  return v == ModelVariant::kDafted || v == ModelVariant::kNoDecoupling;
}

Json NumberOrNull(double value) {
  return std::isfinite(value) ? Json(value) : Json(nullptr);
}

Json LossJson(const LossSummary& s) {
  return {{"total", s.total},
          {"cross_entropy", s.cross_entropy},
          {"decoupling", s.decoupling}};
}

Json InputJson(const InputSpec& input) {
  Json cats = Json::array();
  for (const auto& c : input.schema.categorical_features) {
    cats.push_back({{"name", c.name}, {"cardinality", c.cardinality}});
  }
  return {{"numeric", input.schema.numeric_features},
          {"categorical", cats},
          {"n_series", input.n_series},
          {"series_length", input.series_length},
          {"n_classes", input.n_classes}};
}

InputSpec InputFromJson(const Json& j) {
  try {
    InputSpec input;
    input.schema.numeric_features = j.at("numeric").get<std::vector<std::string>>();
    for (const auto& c : j.at("categorical")) {
      input.schema.categorical_features.push_back(
          {c.at("name").get<std::string>(), c.at("cardinality").get<int>()});
    }
    input.n_series = j.at("n_series").get<std::size_t>();
    input.series_length = j.at("series_length").get<std::size_t>();
    input.n_classes = j.at("n_classes").get<int>();
    return input;
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("checkpoint: malformed input description: ") +
                      e.what());
  }
}

Tensor VectorTensor(const std::vector<double>& values) {
  return Tensor({values.size()}, values);
}

std::vector<double> TensorVector(const Tensor& t) {
  return {t.values().begin(), t.values().end()};
}

void CheckSameInput(const InputSpec& expected, const PreparedData& data) {
  const InputSpec got = InputSpec::FromData(data);
  const bool same_cats = [&] {
    if (got.schema.categorical_features.size() !=
        expected.schema.categorical_features.size()) {
      return false;
    }
    for (std::size_t i = 0; i < got.schema.categorical_features.size(); ++i) {
      const auto& a = got.schema.categorical_features[i];
      const auto& b = expected.schema.categorical_features[i];
      if (a.name != b.name || a.cardinality != b.cardinality) return false;
    }
    return true;
  }();
  if (got.schema.numeric_features != expected.schema.numeric_features ||
      !same_cats || got.n_series != expected.n_series ||
      got.series_length != expected.series_length ||
      got.n_classes > expected.n_classes) {
    throw SchemaError("evaluation data does not match the checkpoint's inputs (" +
                      InputJson(got).dump() + " vs " + InputJson(expected).dump() +
                      ")");
  }
}

}  // namespace

OutputLayout OutputLayout::Create(const std::string& root) {
  OutputLayout out{root};
  for (const auto& dir : {out.checkpoints(), out.reports(), out.grids(),
                          out.embeddings()}) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
      throw std::runtime_error("cannot create \"" + dir + "\": " + ec.message());
    }
  }
  return out;
}

std::span<const std::size_t> PreparedSplits::Indices(const std::string& name) const {
  if (name == "train") return split.train;
  if (name == "val") return split.val;
  if (name == "test") return split.test;
  throw ConfigError("unknown split \"" + name + "\" (expected train, val or test)");
}

Dataset LoadDataset(const DataSection& data) {
  if (data.synthetic) return Generate(*data.synthetic);
  if (data.csv) {
    return LoadCsv(data.csv->tabular_path, data.csv->series_path,
                   data.csv->schema, data.csv->options);
  }
  throw ConfigError("data: no source configured");
}

PreparedSplits PrepareSplits(const DataSection& data) {
  PreparedSplits p;
  p.dataset = LoadDataset(data);
  p.split = Split(p.dataset.Labels(), data.split);
  p.normalizer = Normalizer::Fit(p.dataset, p.split.train);
  p.data = Prepare(p.dataset, p.normalizer);
  return p;
}

void WriteSyntheticDataset(const SynthConfig& config, const std::string& dir) {
  config.Validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create \"" + dir + "\": " + ec.message());
  const Dataset ds = Generate(config);
  WriteCsv(ds, dir + "/tabular.csv", dir + "/series.csv");
  const Json manifest = {
      {"seed", config.seed},
      {"synthetic", ToJson(config)},
      {"tabular_csv", "tabular.csv"},
      {"series_csv", "series.csv"},
      {"n_samples", ds.samples.size()},
      {"n_series_rows", ds.samples.size() * ds.series_names.size() * ds.series_length}};
  WriteFile(dir + "/manifest.json", manifest.dump(2) + "\n");
}

Json MetricsJson(const MetricReport& report, const std::vector<std::string>& metrics) {
  auto wanted = [&](const char* m) {
    return std::find(metrics.begin(), metrics.end(), m) != metrics.end();
  };
  Json out = {{"n_samples", report.n_samples}};
  if (wanted("auroc")) out["auroc_macro"] = report.auroc_macro;
  if (wanted("auprc")) out["auprc_macro"] = report.auprc_macro;
  if (wanted("f1")) out["f1_macro"] = report.f1_macro;
  Json per_class = Json::array();
  for (const auto& c : report.per_class) {
    Json row = {{"label", c.label}, {"support", c.support}};
    if (wanted("auroc")) row["auroc"] = c.auroc;
    if (wanted("auprc")) row["auprc"] = c.auprc;
    if (wanted("f1")) row["f1"] = c.f1;
    per_class.push_back(row);
  }
  out["per_class"] = per_class;
  return out;
}

std::string RunName(const RunConfig& config) {
  return VariantName(config.model.variant) + "_seed" + std::to_string(config.train.seed);
}

Checkpoint MakeCheckpoint(const RunConfig& config, const Model& model,
                          const Normalizer& normalizer) {
  Checkpoint ck;
  ck.config = Json{{"run_config", ToJson(config)},
                   {"input", InputJson(model.input())}}
                  .dump();
  ck.tensors = model.Parameters();
  ck.tensors.push_back({"normalizer.numeric_mean", VectorTensor(normalizer.numeric_mean)});
  ck.tensors.push_back({"normalizer.numeric_std", VectorTensor(normalizer.numeric_std)});
  ck.tensors.push_back({"normalizer.series_mean", VectorTensor(normalizer.series_mean)});
  ck.tensors.push_back({"normalizer.series_std", VectorTensor(normalizer.series_std)});
  return ck;
}

LoadedModel RestoreModel(const Checkpoint& checkpoint) {
  Json doc = Json::parse(checkpoint.config, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("run_config") ||
      !doc.contains("input")) {
    throw SchemaError("checkpoint: malformed configuration record");
  }
  RunConfig config = FromJson(doc["run_config"], RunConfig::Defaults());
  const InputSpec input = InputFromJson(doc["input"]);
  Model model = Model::Build(config.model, input, config.train.seed);
  LoadParameters(checkpoint, model.Parameters());
  Normalizer norm;
  norm.numeric_mean = TensorVector(checkpoint.Get("normalizer.numeric_mean"));
  norm.numeric_std = TensorVector(checkpoint.Get("normalizer.numeric_std"));
  norm.series_mean = TensorVector(checkpoint.Get("normalizer.series_mean"));
  norm.series_std = TensorVector(checkpoint.Get("normalizer.series_std"));
  return {std::move(config), std::move(model), std::move(norm)};
}

TrainRunResult RunTraining(const RunConfig& config, const PreparedSplits& prepared) {
  TrainRunResult run{Train(prepared.data, prepared.split.train, prepared.split.val,
                           config.train, config.model),
                     {}, {}, {}};
  const Model& model = run.train.model;
  const RunReport& r = run.train.report;
  const Predictions test =
      Predict(model, prepared.data, prepared.split.test, config.eval.batch_size);
  run.test_metrics = ComputeMetrics(test.probabilities, test.labels);

  Json curve = Json::array();
  for (const auto& e : r.curve) {
    curve.push_back({{"epoch", e.epoch},
                     {"train_loss", e.train_loss},
                     {"val", LossJson(e.val)}});
  }
  Json breakdown = Json::object();
  for (const auto& [name, count] : r.parameter_breakdown) breakdown[name] = count;
  run.report = {
      {"command", "train"},
      {"variant", r.variant},
      {"seed", r.seed},
      {"untrained", r.untrained},
      {"parameters", {{"total", r.n_parameters}, {"by_component", breakdown}}},
      {"split_sizes",
       {{"train", prepared.split.train.size()},
        {"val", prepared.split.val.size()},
        {"test", prepared.split.test.size()}}},
      {"training",
       {{"epochs_run", r.epochs_run},
        {"best_epoch", r.best_epoch},
        {"initial_val", LossJson(r.initial_val)},
        {"best_val_loss", r.best_val_loss},
        {"n_steps", r.n_steps},
        {"n_clipped_steps", r.n_clipped_steps},
        {"curve", curve}}},
      {"val_metrics", MetricsJson(r.val_metrics, config.eval.metrics)},
      {"val_separation_gap", NumberOrNull(r.val_separation_gap)},
      {"test_metrics", MetricsJson(run.test_metrics, config.eval.metrics)},
      {"config", ToJson(config)}};
  run.checkpoint = MakeCheckpoint(config, model, prepared.normalizer);
  return run;
}

void WriteTrainOutputs(const TrainRunResult& run, const RunConfig& config,
                       const PreparedSplits& prepared, const OutputLayout& out) {
  const std::string name = RunName(config);
  SaveCheckpoint(out.checkpoints() + "/" + name + ".ckpt", run.checkpoint);
  WriteFile(out.reports() + "/" + name + ".json", run.report.dump(2) + "\n");
  if (UsesDecoupling(config.model.variant)) {
    const Predictions val = Predict(run.train.model, prepared.data,
                                    prepared.split.val, config.eval.batch_size);
    ExportEmbeddings(val.embeddings, val.labels, val.sample_ids,
                     out.embeddings() + "/" + name + "_val.csv");
  }
}

Json EvaluateModel(const LoadedModel& loaded, const std::optional<DataSection>& data,
                   const std::string& split) {
  const DataSection& source = data ? *data : loaded.config.data;
  const Dataset ds = LoadDataset(source);
  const SplitIndices indices = Split(ds.Labels(), source.split);
  const PreparedData prepared = Prepare(ds, loaded.normalizer);
  CheckSameInput(loaded.model.input(), prepared);
  std::span<const std::size_t> chosen;
  if (split == "train") {
    chosen = indices.train;
  } else if (split == "val") {
    chosen = indices.val;
  } else if (split == "test") {
    chosen = indices.test;
  } else {
    throw ConfigError("unknown split \"" + split + "\" (expected train, val or test)");
  }
  const Predictions pred =
      Predict(loaded.model, prepared, chosen, loaded.config.eval.batch_size);
  const MetricReport metrics = ComputeMetrics(pred.probabilities, pred.labels);
  Json report = {{"command", "evaluate"},
                 {"split", split},
                 {"variant", VariantName(loaded.config.model.variant)},
                 {"seed", loaded.config.train.seed},
                 {"metrics", MetricsJson(metrics, loaded.config.eval.metrics)}};
  if (split == "train") {
    report["warning"] = "metrics computed on the training split are optimistic";
  }
  if (pred.embeddings.size() > 0) {
    report["separation_gap"] = NumberOrNull(SeparationGap(pred.embeddings));
  }
  report["data"] = ToJson(RunConfig{source, {}, {}, {}, "-"})["data"];
  return report;
}

std::vector<double> AblationResult::Auroc(std::size_t variant) const {
  std::vector<double> out;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const AblationRun& r = Run(variant, s);
    out.push_back(r.error.empty() ? r.test_metrics.auroc_macro : std::nan(""));
  }
  return out;
}

AblationResult RunAblation(const RunConfig& config, const PreparedSplits& prepared,
                           const std::vector<std::uint64_t>& seeds, int jobs) {
  if (seeds.empty()) throw ConfigError("ablate: need at least one seed");
  AblationResult result;
  result.variants = config.eval.ablation_variants;
  result.seeds = seeds;
  if (result.variants.empty()) throw ConfigError("ablate: no variants configured");
  result.runs.resize(result.variants.size() * seeds.size());
  ParallelFor(result.runs.size(), jobs, [&](std::size_t i) {
    AblationRun& run = result.runs[i];
    run.variant = result.variants[i / seeds.size()];
    run.seed = seeds[i % seeds.size()];
    RunConfig cfg = config;
    cfg.model.variant = ParseVariant(run.variant);
    cfg.train.seed = run.seed;
    try {
      TrainRunResult r = RunTraining(cfg, prepared);
      run.test_metrics = r.test_metrics;
      run.val_separation_gap = r.train.report.val_separation_gap;
    } catch (const std::exception& e) {
      run.error = e.what();
    }
  });
  for (std::size_t a = 0; a < result.variants.size(); ++a) {
    for (std::size_t b = a + 1; b < result.variants.size(); ++b) {
      PairedComparison cmp{result.variants[a], result.variants[b], std::nullopt, ""};
      std::vector<double> xa;
      std::vector<double> xb;
      const auto ra = result.Auroc(a);
      const auto rb = result.Auroc(b);
      for (std::size_t s = 0; s < seeds.size(); ++s) {
        if (std::isfinite(ra[s]) && std::isfinite(rb[s])) {
          xa.push_back(ra[s]);
          xb.push_back(rb[s]);
        }
      }
      try {
        cmp.test = PairedTTest(xa, xb);
      } catch (const std::exception& e) {
        cmp.error = e.what();
      }
      result.comparisons.push_back(std::move(cmp));
    }
  }
  return result;
}

std::string AblationToCsv(const AblationResult& result) {
  std::ostringstream out;
  out << "variant,decoupling,asymmetric_fusion,seed,auroc,auprc,f1,"
         "val_separation_gap,error\n";
  for (const auto& run : result.runs) {
    const ModelVariant v = ParseVariant(run.variant);
    const bool ok = run.error.empty();
    auto num = [&](double x) { return ok ? FormatDouble(x) : std::string("nan"); };
    std::string error = run.error;
    for (char& c : error) {
      if (c == ',' || c == '\n' || c == '"') c = ' ';
    }
    out << run.variant << ',' << (UsesDecoupling(v) ? "yes" : "no") << ','
        << (IsAsymmetricFusion(v) ? "yes" : "no") << ',' << run.seed << ','
        << num(run.test_metrics.auroc_macro) << ','
        << num(run.test_metrics.auprc_macro) << ',' << num(run.test_metrics.f1_macro)
        << ',' << num(run.val_separation_gap) << ',' << error << '\n';
  }
  return out.str();
}

Json AblationToJson(const AblationResult& result, const RunConfig& config) {
  Json summary = Json::array();
  for (std::size_t v = 0; v < result.variants.size(); ++v) {
    const auto auc = result.Auroc(v);
    double sum = 0.0;
    std::size_t n = 0;
    for (double x : auc) {
      if (std::isfinite(x)) {
        sum += x;
        ++n;
      }
    }
    const double mean = n ? sum / n : std::nan("");
    double ss = 0.0;
    for (double x : auc) {
      if (std::isfinite(x)) ss += (x - mean) * (x - mean);
    }
    const ModelVariant mv = ParseVariant(result.variants[v]);
    summary.push_back({{"variant", result.variants[v]},
                       {"decoupling", UsesDecoupling(mv)},
                       {"asymmetric_fusion", IsAsymmetricFusion(mv)},
                       {"auroc_mean", NumberOrNull(mean)},
                       {"auroc_std", NumberOrNull(n > 1 ? std::sqrt(ss / (n - 1))
                                                        : std::nan(""))},
                       {"n_ok", n}});
  }
  Json comparisons = Json::array();
  for (const auto& c : result.comparisons) {
    Json row = {{"a", c.a}, {"b", c.b}};
    if (c.test) {
      row["mean_difference"] = c.test->mean_difference;
      row["t_statistic"] = c.test->t_statistic;
      row["p_value"] = c.test->p_value;
      row["n_pairs"] = c.test->n_pairs;
    } else {
      row["error"] = c.error;
    }
    comparisons.push_back(row);
  }
  Json runs = Json::array();
  for (const auto& r : result.runs) {
    Json row = {{"variant", r.variant}, {"seed", r.seed}};
    if (r.error.empty()) {
      row["test_metrics"] = MetricsJson(r.test_metrics, config.eval.metrics);
      row["val_separation_gap"] = NumberOrNull(r.val_separation_gap);
    } else {
      row["error"] = r.error;
    }
    runs.push_back(row);
  }
  return {{"command", "ablate"},
          {"seeds", result.seeds},
          {"summary", summary},
          {"paired_tests", comparisons},
          {"runs", runs},
          {"config", ToJson(config)}};
}

std::string ResolveSweepParam(const std::string& param) {
  if (param == "lambda") return "train.lambda";
  if (param == "tau") return "model.decoupling.tau";
  return param;
}

std::vector<double> DefaultSweepValues(const std::string& param,
                                       const EvalSection& eval) {
  const std::string key = ResolveSweepParam(param);
  if (key == "train.lambda") return eval.lambda_values;
  if (key == "model.decoupling.tau") return eval.tau_values;
  return {};
}

SweepResult RunParameterSweep(const RunConfig& config, const PreparedSplits& prepared,
                              const std::vector<SweepAxis>& grid,
                              const std::vector<std::uint64_t>& seeds, int jobs) {
  if (grid.empty()) throw ConfigError("sweep: no parameter given");
  const Json base = ToJson(config);
  for (const auto& axis : grid) {
    if (axis.values.empty()) {
      throw ConfigError("sweep: empty value list for \"" + axis.param + "\"");
    }
    // Reject unknown keys before any run starts.
    Json probe = base;
    ApplyOverride(probe, ResolveSweepParam(axis.param) + "=" +
                             FormatDouble(axis.values.front()));
    FromJson(probe, RunConfig::Defaults());
  }
  const SweepRunFn run = [&](const std::vector<std::pair<std::string, double>>& point,
                             std::uint64_t seed) {
    Json doc = base;
    bool touches_data = false;
    for (const auto& [param, value] : point) {
      const std::string key = ResolveSweepParam(param);
      touches_data = touches_data || key.rfind("data.", 0) == 0;
      ApplyOverride(doc, key + "=" + FormatDouble(value));
    }
    RunConfig cfg = FromJson(doc, RunConfig::Defaults());
    cfg.train.seed = seed;
    cfg.Validate();
    if (touches_data) return RunTraining(cfg, PrepareSplits(cfg.data)).test_metrics.auroc_macro;
    return RunTraining(cfg, prepared).test_metrics.auroc_macro;
  };
  return RunSweep(grid, seeds, run, jobs);
}

std::vector<std::uint64_t> SeedRange(int n) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < n; ++i) seeds.push_back(static_cast<std::uint64_t>(i));
  return seeds;
}

}  // namespace asymfuse
