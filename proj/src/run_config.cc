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


#include "asymfuse/run_config.h"

#include <filesystem>
#include <fstream>
#include <set>

#include "asymfuse/errors.h"

namespace asymfuse {
namespace {

// Strict view of one JSON object. Every key must be consumed by a Get or
// Child call before Finish(), otherwise it is reported as unknown.
class Section {
 public:
  Section(const Json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) {
      throw ConfigError(Where() + ": expected an object");
    }
  }

  bool Has(const std::string& key) const { return doc_.contains(key); }

  void Get(const std::string& key, int& out) {
    if (const Json* v = Take(key)) {
      if (!v->is_number_integer()) Fail(key, "an integer");
      out = v->get<int>();
    }
  }
  void Get(const std::string& key, std::uint64_t& out) {
    if (const Json* v = Take(key)) {
      if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0)) {
        Fail(key, "a non-negative integer");
      }
      out = v->get<std::uint64_t>();
    }
  }
  void Get(const std::string& key, double& out) {
    if (const Json* v = Take(key)) {
      if (!v->is_number()) Fail(key, "a number");
      out = v->get<double>();
    }
  }
  void Get(const std::string& key, bool& out) {
    if (const Json* v = Take(key)) {
      if (!v->is_boolean()) Fail(key, "a boolean");
      out = v->get<bool>();
    }
  }
  void Get(const std::string& key, std::string& out) {
    if (const Json* v = Take(key)) {
      if (!v->is_string()) Fail(key, "a string");
      out = v->get<std::string>();
    }
  }
  void Get(const std::string& key, std::vector<double>& out) {
    if (const Json* v = Take(key)) {
      if (!v->is_array()) Fail(key, "an array of numbers");
      std::vector<double> values;
      for (const auto& e : *v) {
        if (!e.is_number()) Fail(key, "an array of numbers");
        values.push_back(e.get<double>());
      }
      out = std::move(values);
    }
  }
  void Get(const std::string& key, std::vector<std::string>& out) {
    if (const Json* v = Take(key)) {
      if (!v->is_array()) Fail(key, "an array of strings");
      std::vector<std::string> values;
      for (const auto& e : *v) {
        if (!e.is_string()) Fail(key, "an array of strings");
        values.push_back(e.get<std::string>());
      }
      out = std::move(values);
    }
  }

  // Raw access for values with a custom layout.
  const Json* Take(const std::string& key) {
    auto it = doc_.find(key);
    if (it == doc_.end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  Section Child(const std::string& key) {
    const Json* v = Take(key);
    return Section(*v, path_.empty() ? key : path_ + "." + key);
  }

  void Finish() const {
    for (auto it = doc_.begin(); it != doc_.end(); ++it) {
      if (!used_.contains(it.key())) {
        throw ConfigError("unknown config key \"" + Join(it.key()) + "\"");
      }
    }
  }

  std::string Join(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  std::string Where() const { return path_.empty() ? "config" : path_; }

  [[noreturn]] void Fail(const std::string& key, const char* expected) const {
    throw ConfigError("config key \"" + Join(key) + "\" must be " + expected);
  }

  const Json& doc_;
  std::string path_;
  std::set<std::string> used_;
};

const char* LossKindName(DecouplingLossKind kind) {
  switch (kind) {
    case DecouplingLossKind::kShsd: return "shsd";
    case DecouplingLossKind::kInfoNce: return "infonce";
    case DecouplingLossKind::kTriplet: return "triplet";
    case DecouplingLossKind::kSupervisedClip: return "supervised_clip";
  }
  return "shsd";
}

DecouplingLossKind ParseLossKind(const std::string& name) {
  for (auto kind : {DecouplingLossKind::kShsd, DecouplingLossKind::kInfoNce,
                    DecouplingLossKind::kTriplet,
                    DecouplingLossKind::kSupervisedClip}) {
    if (name == LossKindName(kind)) return kind;
  }
  throw ConfigError("unknown decoupling loss \"" + name +
                    "\" (expected shsd, infonce, triplet or supervised_clip)");
}

const char* OrderName(FusionOrder order) {
  return order == FusionOrder::kSharedFirst ? "shared_first" : "ts_first";
}

FusionOrder ParseOrder(const std::string& name) {
  if (name == "shared_first") return FusionOrder::kSharedFirst;
  if (name == "ts_first") return FusionOrder::kTimeSeriesFirst;
  throw ConfigError("unknown fusion order \"" + name +
                    "\" (expected shared_first or ts_first)");
}

const char* SelectionName(SelectionMetric metric) {
  return metric == SelectionMetric::kTotal ? "total" : "cross_entropy";
}

SelectionMetric ParseSelection(const std::string& name) {
  if (name == "total") return SelectionMetric::kTotal;
  if (name == "cross_entropy") return SelectionMetric::kCrossEntropy;
  throw ConfigError("unknown selection metric \"" + name +
                    "\" (expected total or cross_entropy)");
}

void ReadSynth(Section s, SynthConfig& c) {
  s.Get("n_samples", c.n_samples);
  s.Get("n_classes", c.n_classes);
  s.Get("n_shared_factors", c.n_shared_factors);
  s.Get("n_specific_factors", c.n_specific_factors);
  s.Get("n_numeric_features", c.n_numeric_features);
  s.Get("n_categorical_features", c.n_categorical_features);
  s.Get("categorical_cardinality", c.categorical_cardinality);
  s.Get("n_series", c.n_series);
  s.Get("series_length", c.series_length);
  s.Get("noise_sigma", c.noise_sigma);
  s.Get("label_mix", c.label_mix);
  s.Get("class_separation", c.class_separation);
  s.Get("seed", c.seed);
  s.Finish();
}

void ReadSchema(Section s, TabularSchema& schema) {
  s.Get("numeric", schema.numeric_features);
  if (const Json* cats = s.Take("categorical")) {
    if (!cats->is_array()) {
      throw ConfigError("config key \"" + s.Join("categorical") +
                        "\" must be an array");
    }
    schema.categorical_features.clear();
    for (std::size_t i = 0; i < cats->size(); ++i) {
      Section c((*cats)[i], s.Join("categorical") + "[" + std::to_string(i) + "]");
      TabularSchema::Categorical cat;
      c.Get("name", cat.name);
      c.Get("cardinality", cat.cardinality);
      c.Finish();
      schema.categorical_features.push_back(cat);
    }
  }
  s.Finish();
}

void ReadCsv(Section s, CsvSource& c) {
  s.Get("tabular_path", c.tabular_path);
  s.Get("series_path", c.series_path);
  s.Get("n_classes", c.options.n_classes);
  if (s.Has("schema")) ReadSchema(s.Child("schema"), c.schema);
  if (const Json* fills = s.Take("fill_values")) {
    if (!fills->is_object()) {
      throw ConfigError("config key \"" + s.Join("fill_values") +
                        "\" must be an object");
    }
    c.options.fill_values.clear();
    for (auto it = fills->begin(); it != fills->end(); ++it) {
      if (!it->is_number()) {
        throw ConfigError("fill value for \"" + it.key() + "\" must be a number");
      }
      c.options.fill_values[it.key()] = it->get<double>();
    }
  }
  s.Finish();
}

void ReadData(Section s, DataSection& d) {
  const bool has_synth = s.Has("synthetic");
  const bool has_csv = s.Has("csv");
  if (has_synth && has_csv) {
    throw ConfigError("data: give either \"synthetic\" or \"csv\", not both");
  }
  if (has_synth) {
    SynthConfig c = d.synthetic.value_or(SynthConfig{});
    ReadSynth(s.Child("synthetic"), c);
    d.synthetic = c;
    d.csv.reset();
  }
  if (has_csv) {
    CsvSource c = d.csv.value_or(CsvSource{});
    ReadCsv(s.Child("csv"), c);
    d.csv = c;
    d.synthetic.reset();
  }
  if (s.Has("split")) {
    Section sp = s.Child("split");
    sp.Get("train_fraction", d.split.train_fraction);
    sp.Get("val_fraction", d.split.val_fraction);
    sp.Get("test_fraction", d.split.test_fraction);
    sp.Get("stratified", d.split.stratified);
    sp.Get("seed", d.split.seed);
    sp.Finish();
  }
  s.Finish();
}

void ReadModel(Section s, ModelConfig& m) {
  std::string variant = VariantName(m.variant);
  s.Get("variant", variant);
  m.variant = ParseVariant(variant);
  if (s.Has("encoder")) {
    Section e = s.Child("encoder");
    e.Get("embed_dim", m.encoder.embed_dim);
    e.Get("n_heads", m.encoder.n_heads);
    e.Get("n_blocks", m.encoder.n_blocks);
    e.Get("ffn_multiplier", m.encoder.ffn_multiplier);
    e.Get("dropout_rate", m.encoder.dropout_rate);
    e.Finish();
  }
  if (s.Has("decoupling")) {
    Section d = s.Child("decoupling");
    d.Get("tau", m.decoupling.tau);
    d.Get("w_shsd", m.decoupling.w_shsd);
    d.Get("w_reg", m.decoupling.w_reg);
    d.Get("d_z", m.decoupling.d_z);
    std::string kind = LossKindName(m.decoupling.kind);
    d.Get("loss", kind);
    m.decoupling.kind = ParseLossKind(kind);
    d.Finish();
  }
  if (s.Has("fusion")) {
    Section f = s.Child("fusion");
    f.Get("n_rounds", m.fusion.n_rounds);
    f.Get("per_context_weights", m.fusion.per_context_weights);
    f.Get("concat_context", m.fusion.concat_context);
    std::string order = OrderName(m.fusion.order);
    f.Get("order", order);
    m.fusion.order = ParseOrder(order);
    f.Finish();
  }
  s.Finish();
}

void ReadTrain(Section s, TrainConfig& t) {
  s.Get("epochs", t.epochs);
  s.Get("batch_size", t.batch_size);
  s.Get("learning_rate", t.learning_rate);
  s.Get("lambda", t.lambda);
  s.Get("seed", t.seed);
  s.Get("clip_norm", t.clip_norm);
  s.Get("compute_decoupling", t.compute_decoupling);
  std::string selection = SelectionName(t.selection);
  s.Get("selection", selection);
  t.selection = ParseSelection(selection);
  s.Get("patience", t.patience);
  s.Finish();
}

void ReadEval(Section s, EvalSection& e) {
  s.Get("metrics", e.metrics);
  s.Get("ablation_variants", e.ablation_variants);
  s.Get("lambda_values", e.lambda_values);
  s.Get("tau_values", e.tau_values);
  s.Get("batch_size", e.batch_size);
  s.Finish();
}

}  // namespace

RunConfig RunConfig::Defaults() {
  RunConfig c;
  c.data.synthetic = SynthConfig{};
  return c;
}

RunConfig RunConfig::PaperScale() {
  RunConfig c = Defaults();
  c.model.encoder = EncoderConfig::PaperScale();
  c.train.epochs = 1000;
  return c;
}

void RunConfig::Validate(bool check_paths) const {
  if (data.synthetic.has_value() == data.csv.has_value()) {
    throw ConfigError("data: exactly one of \"synthetic\" and \"csv\" is required");
  }
  int n_classes = 0;
  try {
    if (data.synthetic) {
      data.synthetic->Validate();
      n_classes = data.synthetic->n_classes;
    } else {
      data.csv->schema.Validate();
      if (data.csv->tabular_path.empty() || data.csv->series_path.empty()) {
        throw ConfigError("data.csv: tabular_path and series_path are required");
      }
      if (check_paths) {
        for (const auto* p : {&data.csv->tabular_path, &data.csv->series_path}) {
          if (!std::filesystem::exists(*p)) {
            throw ConfigError("data.csv: \"" + *p + "\" does not exist");
          }
        }
      }
      n_classes = data.csv->options.n_classes > 0 ? data.csv->options.n_classes : 2;
    }
    data.split.Validate();
    model.Resolved(n_classes).Validate();
    train.Validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  static const std::set<std::string> kMetrics = {"auroc", "auprc", "f1"};
  for (const auto& m : eval.metrics) {
    if (!kMetrics.contains(m)) {
      throw ConfigError("eval.metrics: unknown metric \"" + m +
                        "\" (expected auroc, auprc or f1)");
    }
  }
  for (const auto& v : eval.ablation_variants) ParseVariant(v);
  if (eval.batch_size < 1) throw ConfigError("eval.batch_size must be >= 1");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

Json ToJson(const SynthConfig& c) {
  return {{"n_samples", c.n_samples},
          {"n_classes", c.n_classes},
          {"n_shared_factors", c.n_shared_factors},
          {"n_specific_factors", c.n_specific_factors},
          {"n_numeric_features", c.n_numeric_features},
          {"n_categorical_features", c.n_categorical_features},
          {"categorical_cardinality", c.categorical_cardinality},
          {"n_series", c.n_series},
          {"series_length", c.series_length},
          {"noise_sigma", c.noise_sigma},
          {"label_mix", c.label_mix},
          {"class_separation", c.class_separation},
          {"seed", c.seed}};
}

Json ToJson(const MetricReport& r) {
  Json per_class = Json::array();
  for (const auto& c : r.per_class) {
    per_class.push_back({{"label", c.label},
                         {"support", c.support},
                         {"auroc", c.auroc},
                         {"auprc", c.auprc},
                         {"f1", c.f1}});
  }
  return {{"n_samples", r.n_samples},
          {"auroc_macro", r.auroc_macro},
          {"auprc_macro", r.auprc_macro},
          {"f1_macro", r.f1_macro},
          {"per_class", per_class}};
}

Json ToJson(const RunConfig& c) {
  Json data = Json::object();
  if (c.data.synthetic) data["synthetic"] = ToJson(*c.data.synthetic);
  if (c.data.csv) {
    Json cats = Json::array();
    for (const auto& cat : c.data.csv->schema.categorical_features) {
      cats.push_back({{"name", cat.name}, {"cardinality", cat.cardinality}});
    }
    Json fills = Json::object();
    for (const auto& [k, v] : c.data.csv->options.fill_values) fills[k] = v;
    data["csv"] = {{"tabular_path", c.data.csv->tabular_path},
                   {"series_path", c.data.csv->series_path},
                   {"n_classes", c.data.csv->options.n_classes},
                   {"schema",
                    {{"numeric", c.data.csv->schema.numeric_features},
                     {"categorical", cats}}},
                   {"fill_values", fills}};
  }
  data["split"] = {{"train_fraction", c.data.split.train_fraction},
                   {"val_fraction", c.data.split.val_fraction},
                   {"test_fraction", c.data.split.test_fraction},
                   {"stratified", c.data.split.stratified},
                   {"seed", c.data.split.seed}};
  const ModelConfig& m = c.model;
  Json model = {
      {"variant", VariantName(m.variant)},
      {"encoder",
       {{"embed_dim", m.encoder.embed_dim},
        {"n_heads", m.encoder.n_heads},
        {"n_blocks", m.encoder.n_blocks},
        {"ffn_multiplier", m.encoder.ffn_multiplier},
        {"dropout_rate", m.encoder.dropout_rate}}},
      {"decoupling",
       {{"tau", m.decoupling.tau},
        {"w_shsd", m.decoupling.w_shsd},
        {"w_reg", m.decoupling.w_reg},
        {"d_z", m.decoupling.d_z},
        {"loss", LossKindName(m.decoupling.kind)}}},
      {"fusion",
       {{"n_rounds", m.fusion.n_rounds},
        {"per_context_weights", m.fusion.per_context_weights},
        {"concat_context", m.fusion.concat_context},
        {"order", OrderName(m.fusion.order)}}}};
  Json train = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"lambda", c.train.lambda},
                {"seed", c.train.seed},
                {"clip_norm", c.train.clip_norm},
                {"compute_decoupling", c.train.compute_decoupling},
                {"selection", SelectionName(c.train.selection)},
                {"patience", c.train.patience}};
  Json eval = {{"metrics", c.eval.metrics},
               {"ablation_variants", c.eval.ablation_variants},
               {"lambda_values", c.eval.lambda_values},
               {"tau_values", c.eval.tau_values},
               {"batch_size", c.eval.batch_size}};
  return {{"data", data},
          {"model", model},
          {"train", train},
          {"eval", eval},
          {"output_dir", c.output_dir}};
}

RunConfig FromJson(const Json& doc, const RunConfig& base) {
  RunConfig c = base;
  Section root(doc, "");
  if (root.Has("data")) ReadData(root.Child("data"), c.data);
  if (root.Has("model")) ReadModel(root.Child("model"), c.model);
  if (root.Has("train")) ReadTrain(root.Child("train"), c.train);
  if (root.Has("eval")) ReadEval(root.Child("eval"), c.eval);
  root.Get("output_dir", c.output_dir);
  root.Finish();
  return c;
}

void ApplyOverride(Json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override \"" + assignment + "\" is not key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw ConfigError("override key \"" + key + "\" is malformed");
    if (!node->is_object()) {
      throw ConfigError("override \"" + key + "\": \"" + part +
                        "\" is not inside an object");
    }
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    if (node->is_null()) *node = Json::object();
    start = dot + 1;
  }
  Json value = Json::parse(text, nullptr, /*allow_exceptions=*/false);
  *node = value.is_discarded() ? Json(text) : value;
}

RunConfig LoadRunConfig(const std::string& path,
                        const std::vector<std::string>& overrides,
                        const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config \"" + path + "\"");
  Json doc = Json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) throw ConfigError("config \"" + path + "\" is not valid JSON");
  for (const auto& o : overrides) ApplyOverride(doc, o);
  return FromJson(doc, base);
}

}  // namespace asymfuse
