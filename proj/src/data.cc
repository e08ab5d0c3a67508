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

#include "asymfuse/data.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "asymfuse/csv.h"
#include "asymfuse/errors.h"
#include "asymfuse/layers.h"

namespace asymfuse {
namespace {

// Descriptor names used when the generated schema matches the usual cohort
// layout; generic names are used beyond them.
const char* const kNumericNames[] = {
    "age",           "sbp_tte",         "pp_tte",        "pw_d",
    "lvm_ind",       "e_e_prime_ratio", "gfr",           "lateral_e_prime",
    "septal_e_prime", "a_velocity",     "ddd",           "la_volume"};
const char* const kCategoricalNames[] = {"diastolic_dysfunction"};
const char* const kSeriesMeasures[] = {
    "lv_area", "lv_length",           "gls",
    "ls_left", "ls_right",            "myo_thickness_left",
    "myo_thickness_right"};
const char* const kViews[] = {"a4c", "a2c"};

std::string IndexedName(const char* stem, int i) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%s_%02d", stem, i);
  return buffer;
}

std::vector<std::string> NumericNames(int n) {
  std::vector<std::string> names;
  const int known = static_cast<int>(std::size(kNumericNames));
  for (int i = 0; i < n; ++i) {
    names.push_back(n <= known ? kNumericNames[i] : IndexedName("num", i));
  }
  return names;
}

std::vector<std::string> CategoricalNames(int n) {
  std::vector<std::string> names;
  const int known = static_cast<int>(std::size(kCategoricalNames));
  for (int i = 0; i < n; ++i) {
    names.push_back(n <= known ? kCategoricalNames[i] : IndexedName("cat", i));
  }
  return names;
}

std::vector<std::string> SeriesNames(int n) {
  std::vector<std::string> names;
  const int known =
      static_cast<int>(std::size(kSeriesMeasures) * std::size(kViews));
  for (int i = 0; i < n; ++i) {
    if (n <= known) {
      const int view = i / static_cast<int>(std::size(kSeriesMeasures));
      const int measure = i % static_cast<int>(std::size(kSeriesMeasures));
      names.push_back(std::string(kViews[view]) + "_" + kSeriesMeasures[measure]);
    } else {
      names.push_back(IndexedName("series", i));
    }
  }
  return names;
}

std::vector<double> GaussianMatrix(std::size_t rows, std::size_t cols,
                                   double stddev, Rng& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  std::vector<double> m(rows * cols);
  for (double& v : m) v = normal(rng);
  return m;
}

// Class means: Gram-Schmidt orthonormalized Gaussian directions (plain
// normalized directions when there are more classes than dimensions).
std::vector<std::vector<double>> ClassDirections(int n_classes, int dim,
                                                 Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> dirs;
  for (int c = 0; c < n_classes; ++c) {
    std::vector<double> v(static_cast<std::size_t>(dim));
    for (double& x : v) x = normal(rng);
    if (c < dim) {
      for (const auto& prev : dirs) {
        const double dot = std::inner_product(v.begin(), v.end(), prev.begin(), 0.0);
        for (int k = 0; k < dim; ++k) v[k] -= dot * prev[k];
      }
    }
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    for (double& x : v) x /= norm;
    dirs.push_back(std::move(v));
  }
  return dirs;
}

double FourierBasis(int k, int t, int length) {
  const double phase = 2.0 * std::numbers::pi * t / length;
  switch (k) {
    case 0:
      return 1.0;
    case 1:
      return std::sin(phase);
    case 2:
      return std::cos(phase);
    case 3:
      return std::sin(2.0 * phase);
    default:
      return std::cos(2.0 * phase);
  }
}

}  // namespace

std::vector<int> Dataset::Labels() const {
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.label);
  return labels;
}

void SynthConfig::Validate() const {
  if (n_samples < 0 || n_classes < 2 || n_shared_factors < 1 ||
      n_specific_factors < 1 || n_numeric_features < 0 ||
      n_categorical_features < 0 ||
      n_numeric_features + n_categorical_features < 1 || n_series < 1 ||
      series_length < 2) {
    throw ConfigError("synthetic: counts must be positive (series_length >= 2,"
                      " n_classes >= 2)");
  }
  if (n_categorical_features > 0 && categorical_cardinality < 2) {
    throw ConfigError("synthetic: categorical_cardinality must be >= 2");
  }
  if (label_mix < 0.0 || label_mix > 1.0) {
    throw ConfigError("synthetic: label_mix must lie in [0, 1]");
  }
  if (noise_sigma < 0.0) throw ConfigError("synthetic: noise_sigma < 0");
}

GeneratedData GenerateWithLatents(const SynthConfig& cfg) {
  cfg.Validate();
  const auto n = static_cast<std::size_t>(cfg.n_samples);
  const auto n_sh = static_cast<std::size_t>(cfg.n_shared_factors);
  const auto n_sp = static_cast<std::size_t>(cfg.n_specific_factors);
  const auto n_num = static_cast<std::size_t>(cfg.n_numeric_features);
  const auto n_cat = static_cast<std::size_t>(cfg.n_categorical_features);
  const auto n_series = static_cast<std::size_t>(cfg.n_series);
  const auto length = static_cast<std::size_t>(cfg.series_length);
  const std::size_t n_latent = n_sh + n_sp;

  // Structural parameters shared by all samples.
  Rng structure(MixSeed(cfg.seed, 0));
  const auto shared_means = ClassDirections(cfg.n_classes, cfg.n_shared_factors, structure);
  const auto specific_means =
      ClassDirections(cfg.n_classes, cfg.n_specific_factors, structure);
  const std::vector<double> tab_map = GaussianMatrix(
      n_num, n_latent, 1.0 / std::sqrt(static_cast<double>(n_latent)), structure);
  const std::vector<double> cat_map = GaussianMatrix(
      n_cat, n_sp, 1.0 / std::sqrt(static_cast<double>(n_sp)), structure);
  const std::vector<double> coef_map =
      GaussianMatrix(n_series * kFourierBasisSize, n_sh,
                     1.0 / std::sqrt(static_cast<double>(n_sh)), structure);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(i % static_cast<std::size_t>(cfg.n_classes));
  }
  std::shuffle(labels.begin(), labels.end(), structure);

  GeneratedData out;
  Dataset& ds = out.dataset;
  ds.schema.numeric_features = NumericNames(cfg.n_numeric_features);
  for (const auto& name : CategoricalNames(cfg.n_categorical_features)) {
    ds.schema.categorical_features.push_back({name, cfg.categorical_cardinality});
  }
  ds.series_names = SeriesNames(cfg.n_series);
  ds.series_length = length;
  ds.n_classes = cfg.n_classes;

  std::vector<std::vector<double>> cat_scores(n_cat, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    // Per-sample stream: sample i's draws do not depend on other samples.
    Rng rng(MixSeed(cfg.seed, 1000 + i));
    std::normal_distribution<double> normal(0.0, 1.0);
    const int y = labels[i];
    std::vector<double> u(n_sh), v(n_sp);
    for (std::size_t k = 0; k < n_sh; ++k) {
      u[k] = (1.0 - cfg.label_mix) * cfg.class_separation * shared_means[y][k] +
             normal(rng);
    }
    for (std::size_t k = 0; k < n_sp; ++k) {
      v[k] = cfg.label_mix * cfg.class_separation * specific_means[y][k] +
             normal(rng);
    }

    MultimodalSample sample;
    sample.sample_id = static_cast<std::int64_t>(i);
    sample.label = y;
    for (std::size_t f = 0; f < n_num; ++f) {
      double x = 0.0;
      for (std::size_t k = 0; k < n_sh; ++k) x += tab_map[f * n_latent + k] * u[k];
      for (std::size_t k = 0; k < n_sp; ++k) {
        x += tab_map[f * n_latent + n_sh + k] * v[k];
      }
      sample.tabular[ds.schema.numeric_features[f]] = x + cfg.noise_sigma * normal(rng);
    }
    for (std::size_t f = 0; f < n_cat; ++f) {
      double score = 0.0;
      for (std::size_t k = 0; k < n_sp; ++k) score += cat_map[f * n_sp + k] * v[k];
      cat_scores[f][i] = score;
    }

    std::vector<double> coefficients(n_series * kFourierBasisSize, 0.0);
    for (std::size_t r = 0; r < coefficients.size(); ++r) {
      for (std::size_t k = 0; k < n_sh; ++k) {
        coefficients[r] += coef_map[r * n_sh + k] * u[k];
      }
    }
    std::vector<double> series(n_series * length);
    for (std::size_t s = 0; s < n_series; ++s) {
      for (std::size_t t = 0; t < length; ++t) {
        double value = 0.0;
        for (int k = 0; k < kFourierBasisSize; ++k) {
          value += coefficients[s * kFourierBasisSize + k] *
                   FourierBasis(k, static_cast<int>(t), cfg.series_length);
        }
        series[s * length + t] = value + cfg.noise_sigma * normal(rng);
      }
    }
    sample.series = Tensor({n_series, length}, std::move(series));
    ds.samples.push_back(std::move(sample));
    out.latents.shared.push_back(std::move(u));
    out.latents.specific.push_back(std::move(v));
    out.latents.series_coefficients.push_back(std::move(coefficients));
  }

  // Equal-mass bins of each categorical score.
  for (std::size_t f = 0; f < n_cat; ++f) {
    std::vector<double> sorted = cat_scores[f];
    std::sort(sorted.begin(), sorted.end());
    const int card = cfg.categorical_cardinality;
    std::vector<double> cuts;
    for (int b = 1; b < card; ++b) {
      cuts.push_back(sorted[std::min(n - 1, n * static_cast<std::size_t>(b) /
                                                static_cast<std::size_t>(card))]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto bin = std::upper_bound(cuts.begin(), cuts.end(), cat_scores[f][i]) -
                       cuts.begin();
      ds.samples[i].tabular[ds.schema.categorical_features[f].name] =
          static_cast<double>(bin);
    }
  }
  return out;
}

Dataset Generate(const SynthConfig& cfg) {
  return GenerateWithLatents(cfg).dataset;
}

Dataset LoadCsv(const std::string& tabular_path, const std::string& series_path,
                const TabularSchema& schema, const CsvOptions& options) {
  schema.Validate();
  Dataset ds;
  ds.schema = schema;

  const std::vector<std::string> lines = ReadLines(tabular_path);
  std::size_t first = 0;
  while (first < lines.size() && SplitCsvLine(lines[first]) ==
                                     std::vector<std::string>{""}) {
    ++first;
  }
  if (first == lines.size()) {
    ds.n_classes = options.n_classes;
    return ds;
  }

  const std::vector<std::string> header = SplitCsvLine(lines[first]);
  std::map<std::string, std::size_t> column;
  for (std::size_t c = 0; c < header.size(); ++c) column[header[c]] = c;
  const auto require = [&](const std::string& name) {
    auto it = column.find(name);
    if (it == column.end()) {
      throw SchemaError(tabular_path + ": missing column \"" + name + "\"");
    }
    return it->second;
  };
  std::vector<std::size_t> numeric_col, categorical_col;
  for (const auto& name : schema.numeric_features) {
    numeric_col.push_back(require(name));
  }
  for (const auto& cat : schema.categorical_features) {
    categorical_col.push_back(require(cat.name));
  }
  const std::size_t label_col = require("label");
  const auto id_it = column.find("sample_id");

  std::map<std::int64_t, std::size_t> row_of_id;
  int max_label = -1;
  for (std::size_t r = first + 1; r < lines.size(); ++r) {
    if (lines[r].empty() || lines[r] == "\r") continue;
    const std::vector<std::string> cells = SplitCsvLine(lines[r]);
    const std::size_t row_number = r + 1;
    const auto cell = [&](std::size_t c, const std::string& name) -> std::string {
      if (c >= cells.size()) {
        throw ValueError(tabular_path + ": row " + std::to_string(row_number) +
                         " has no value for column \"" + name + "\"");
      }
      return cells[c];
    };
    const auto number = [&](std::size_t c, const std::string& name) {
      const std::string text = cell(c, name);
      if (text.empty()) {
        auto fill = options.fill_values.find(name);
        if (fill != options.fill_values.end()) return fill->second;
      }
      std::optional<double> v = ParseDouble(text);
      if (!v || !std::isfinite(*v)) {
        throw ValueError(tabular_path + ": row " + std::to_string(row_number) +
                         ", column \"" + name + "\": cannot parse \"" + text +
                         "\"");
      }
      return *v;
    };

    MultimodalSample sample;
    sample.sample_id = static_cast<std::int64_t>(ds.samples.size());
    if (id_it != column.end()) {
      std::optional<long long> id = ParseInt(cell(id_it->second, "sample_id"));
      if (!id) {
        throw ValueError(tabular_path + ": row " + std::to_string(row_number) +
                         ", column \"sample_id\": not an integer");
      }
      sample.sample_id = *id;
    }
    for (std::size_t f = 0; f < schema.numeric_features.size(); ++f) {
      const std::string& name = schema.numeric_features[f];
      sample.tabular[name] = number(numeric_col[f], name);
    }
    for (std::size_t f = 0; f < schema.categorical_features.size(); ++f) {
      const auto& cat = schema.categorical_features[f];
      const double v = number(categorical_col[f], cat.name);
      if (v != std::floor(v) || v < 0 || v >= cat.cardinality) {
        throw ValueError(tabular_path + ": row " + std::to_string(row_number) +
                         ", column \"" + cat.name + "\": category " +
                         FormatDouble(v) + " outside [0, " +
                         std::to_string(cat.cardinality) + ")");
      }
      sample.tabular[cat.name] = v;
    }
    std::optional<long long> label = ParseInt(cell(label_col, "label"));
    if (!label || *label < 0) {
      throw ValueError(tabular_path + ": row " + std::to_string(row_number) +
                       ", column \"label\": not a non-negative integer");
    }
    sample.label = static_cast<int>(*label);
    max_label = std::max(max_label, sample.label);
    if (!row_of_id.emplace(sample.sample_id, ds.samples.size()).second) {
      throw ValueError(tabular_path + ": duplicate sample_id " +
                       std::to_string(sample.sample_id));
    }
    ds.samples.push_back(std::move(sample));
  }
  ds.n_classes = options.n_classes > 0 ? options.n_classes : max_label + 1;
  if (max_label >= ds.n_classes) {
    throw ValueError(tabular_path + ": label " + std::to_string(max_label) +
                     " outside [0, " + std::to_string(ds.n_classes) + ")");
  }
  if (ds.samples.empty()) return ds;

  // Long-format series: discover names in order of first appearance.
  const std::vector<std::string> series_lines = ReadLines(series_path);
  if (series_lines.empty()) {
    throw SchemaError(series_path + ": empty series file");
  }
  const std::vector<std::string> series_header = SplitCsvLine(series_lines[0]);
  const std::vector<std::string> expected = {"sample_id", "series_name",
                                             "t_index", "value"};
  for (const auto& name : expected) {
    if (std::find(series_header.begin(), series_header.end(), name) ==
        series_header.end()) {
      throw SchemaError(series_path + ": missing column \"" + name + "\"");
    }
  }
  const auto col = [&](const std::string& name) {
    return static_cast<std::size_t>(
        std::find(series_header.begin(), series_header.end(), name) -
        series_header.begin());
  };
  const std::size_t c_id = col("sample_id"), c_name = col("series_name"),
                    c_t = col("t_index"), c_value = col("value");

  struct Point {
    std::size_t row;
    std::size_t series;
    std::size_t t;
    double value;
  };
  std::vector<Point> points;
  std::map<std::string, std::size_t> series_index;
  std::size_t length = 0;
  for (std::size_t r = 1; r < series_lines.size(); ++r) {
    if (series_lines[r].empty() || series_lines[r] == "\r") continue;
    const std::vector<std::string> cells = SplitCsvLine(series_lines[r]);
    const std::string where = series_path + ": row " + std::to_string(r + 1);
    if (cells.size() < series_header.size()) {
      throw ValueError(where + ": expected " +
                       std::to_string(series_header.size()) + " cells");
    }
    std::optional<long long> id = ParseInt(cells[c_id]);
    std::optional<long long> t = ParseInt(cells[c_t]);
    std::optional<double> value = ParseDouble(cells[c_value]);
    if (!id) throw ValueError(where + ", column \"sample_id\": not an integer");
    if (!t || *t < 0) {
      throw ValueError(where + ", column \"t_index\": not a non-negative integer");
    }
    if (!value || !std::isfinite(*value)) {
      throw ValueError(where + ", column \"value\": cannot parse \"" +
                       cells[c_value] + "\"");
    }
    auto row = row_of_id.find(*id);
    if (row == row_of_id.end()) {
      throw ValueError(where + ": unknown sample_id " + std::to_string(*id));
    }
    auto [it, inserted] =
        series_index.emplace(cells[c_name], series_index.size());
    if (inserted) ds.series_names.push_back(cells[c_name]);
    points.push_back({row->second, it->second, static_cast<std::size_t>(*t), *value});
    length = std::max(length, static_cast<std::size_t>(*t) + 1);
  }
  const std::size_t n_series = ds.series_names.size();
  if (n_series == 0) throw SchemaError(series_path + ": no series rows");
  if (length < 2) throw DimensionError(series_path + ": series length < 2");
  ds.series_length = length;

  std::vector<std::vector<double>> buffers(
      ds.samples.size(), std::vector<double>(n_series * length, 0.0));
  std::vector<std::vector<char>> seen(ds.samples.size(),
                                      std::vector<char>(n_series * length, 0));
  for (const Point& p : points) {
    char& flag = seen[p.row][p.series * length + p.t];
    if (flag) {
      throw ValueError(series_path + ": duplicate point for sample_id " +
                       std::to_string(ds.samples[p.row].sample_id) + ", series " +
                       ds.series_names[p.series] + ", t " + std::to_string(p.t));
    }
    flag = 1;
    buffers[p.row][p.series * length + p.t] = p.value;
  }
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    for (std::size_t s = 0; s < n_series; ++s) {
      for (std::size_t t = 0; t < length; ++t) {
        if (!seen[i][s * length + t]) {
          throw DimensionError(
              series_path + ": ragged series \"" + ds.series_names[s] +
              "\" for sample_id " + std::to_string(ds.samples[i].sample_id) +
              " (missing t_index " + std::to_string(t) + " of " +
              std::to_string(length) + ")");
        }
      }
    }
    ds.samples[i].series = Tensor({n_series, length}, std::move(buffers[i]));
  }
  return ds;
}

void WriteCsv(const Dataset& dataset, const std::string& tabular_path,
              const std::string& series_path) {
  std::ostringstream tab;
  const std::vector<std::string> names = dataset.schema.FeatureNames();
  for (const auto& name : names) tab << name << ',';
  tab << "label\n";
  for (const auto& s : dataset.samples) {
    for (const auto& name : dataset.schema.numeric_features) {
      tab << FormatDouble(s.tabular.at(name)) << ',';
    }
    for (const auto& cat : dataset.schema.categorical_features) {
      tab << static_cast<long long>(s.tabular.at(cat.name)) << ',';
    }
    tab << s.label << '\n';
  }
  WriteFile(tabular_path, tab.str());

  std::ostringstream series;
  series << "sample_id,series_name,t_index,value\n";
  const std::size_t length = dataset.series_length;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& s = dataset.samples[i];
    const auto values = s.series.values();
    for (std::size_t k = 0; k < dataset.series_names.size(); ++k) {
      for (std::size_t t = 0; t < length; ++t) {
        // Row index is the implicit id of the tabular file.
        series << i << ',' << dataset.series_names[k] << ',' << t << ','
               << FormatDouble(values[k * length + t]) << '\n';
      }
    }
  }
  WriteFile(series_path, series.str());
}

void SplitSpec::Validate() const {
  if (train_fraction < 0 || val_fraction < 0 || test_fraction < 0 ||
      std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
    throw ConfigError("split: fractions must be non-negative and sum to 1");
  }
}

namespace {

// Largest-remainder apportionment of `total` over `fractions`.
std::vector<std::size_t> Apportion(std::size_t total,
                                   const std::vector<double>& fractions) {
  std::vector<std::size_t> counts(fractions.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < fractions.size(); ++s) {
    const double ideal = fractions[s] * static_cast<double>(total);
    counts[s] = static_cast<std::size_t>(std::floor(ideal + 1e-9));
    assigned += counts[s];
    remainders.emplace_back(-(ideal - static_cast<double>(counts[s])), s);
  }
  std::stable_sort(remainders.begin(), remainders.end());
  for (std::size_t r = 0; assigned < total; ++r, ++assigned) {
    ++counts[remainders[r % remainders.size()].second];
  }
  return counts;
}

}  // namespace

SplitIndices Split(std::span<const int> labels, const SplitSpec& spec) {
  spec.Validate();
  const std::vector<double> fractions = {spec.train_fraction, spec.val_fraction,
                                         spec.test_fraction};
  const std::vector<std::size_t> totals = Apportion(labels.size(), fractions);
  Rng rng(MixSeed(spec.seed, 7));
  std::vector<std::vector<std::size_t>> parts(3);

  if (!spec.stratified) {
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      parts[s].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                      order.begin() + static_cast<std::ptrdiff_t>(pos + totals[s]));
      pos += totals[s];
    }
  } else {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    for (const auto& [label, members] : by_class) {
      if (members.size() < 3) {
        throw StratificationError("class " + std::to_string(label) + " has " +
                                  std::to_string(members.size()) +
                                  " samples; stratified splitting needs >= 3");
      }
    }
    // Cell quotas: floors of the ideal counts, then single-unit increments
    // chosen by largest fractional part so that row sums match the class
    // sizes and column sums match the split totals.
    const std::size_t n_classes = by_class.size();
    std::vector<std::vector<std::size_t>> quota(n_classes, std::vector<std::size_t>(3));
    std::vector<std::size_t> row_left(n_classes), col_left = totals;
    struct Candidate {
      double fraction;
      std::size_t c, s;
    };
    std::vector<Candidate> candidates;
    // raised: the cell was rounded up. fractional: rounding up is allowed.
    std::vector<std::vector<bool>> raised(n_classes, std::vector<bool>(3, false));
    std::vector<std::vector<bool>> fractional(n_classes, std::vector<bool>(3, false));
    std::size_t c = 0;
    for (const auto& [label, members] : by_class) {
      std::size_t used = 0;
      for (std::size_t s = 0; s < 3; ++s) {
        const double ideal = fractions[s] * static_cast<double>(members.size());
        quota[c][s] = static_cast<std::size_t>(std::floor(ideal + 1e-9));
        used += quota[c][s];
        col_left[s] -= std::min(col_left[s], quota[c][s]);
        candidates.push_back({ideal - static_cast<double>(quota[c][s]), c, s});
        fractional[c][s] = candidates.back().fraction > 1e-9;
      }
      row_left[c] = members.size() - used;
      ++c;
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) {
                       return a.fraction > b.fraction;
                     });
    for (const Candidate& cand : candidates) {
      if (fractional[cand.c][cand.s] && row_left[cand.c] > 0 && col_left[cand.s] > 0) {
        ++quota[cand.c][cand.s];
        raised[cand.c][cand.s] = true;
        --row_left[cand.c];
        --col_left[cand.s];
      }
    }
    // Place what the greedy pass could not by augmenting paths: a class with
    // samples left takes a free fractional cell in some split, and if that
    // split is full, a class already rounded up there gives its unit to
    // another of its fractional cells. Every cell stays within one sample of
    // its ideal count.
    for (std::size_t k = 0; k < n_classes; ++k) {
      while (row_left[k] > 0) {
        // Breadth-first search over classes; parent links rebuild the path.
        std::vector<int> class_from(n_classes, -1), split_via(n_classes, -1);
        std::vector<bool> seen(n_classes, false);
        std::vector<std::size_t> queue = {k};
        seen[k] = true;
        int end_class = -1, end_split = -1;
        for (std::size_t head = 0; head < queue.size() && end_class < 0; ++head) {
          const std::size_t a = queue[head];
          for (std::size_t s = 0; s < 3 && end_class < 0; ++s) {
            if (!fractional[a][s] || raised[a][s]) continue;
            if (col_left[s] > 0) {
              end_class = static_cast<int>(a);
              end_split = static_cast<int>(s);
              break;
            }
            for (std::size_t b = 0; b < n_classes; ++b) {
              if (!seen[b] && raised[b][s]) {
                seen[b] = true;
                class_from[b] = static_cast<int>(a);
                split_via[b] = static_cast<int>(s);
                queue.push_back(b);
              }
            }
          }
        }
        if (end_class < 0) break;
        // Walk back: each hop moves a unit from (b, via) to (b, next).
        auto a = static_cast<std::size_t>(end_class);
        auto s = static_cast<std::size_t>(end_split);
        --col_left[s];
        while (true) {
          raised[a][s] = true;
          ++quota[a][s];
          if (class_from[a] < 0) break;
          const auto via = static_cast<std::size_t>(split_via[a]);
          raised[a][via] = false;
          --quota[a][via];
          s = via;
          a = static_cast<std::size_t>(class_from[a]);
        }
        --row_left[k];
      }
      // Unreachable for consistent margins; keeps the cover complete.
      if (row_left[k] > 0) {
        quota[k][0] += row_left[k];
        row_left[k] = 0;
      }
    }
    c = 0;
    for (auto& [label, members] : by_class) {
      std::vector<std::size_t> shuffled = members;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      std::size_t pos = 0;
      for (std::size_t s = 0; s < 3; ++s) {
        parts[s].insert(parts[s].end(),
                        shuffled.begin() + static_cast<std::ptrdiff_t>(pos),
                        shuffled.begin() +
                            static_cast<std::ptrdiff_t>(pos + quota[c][s]));
        pos += quota[c][s];
      }
      ++c;
    }
  }
  for (auto& p : parts) std::sort(p.begin(), p.end());
  return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
}

Normalizer Normalizer::Fit(const Dataset& dataset,
                           std::span<const std::size_t> train) {
  Normalizer norm;
  const auto stats = [](const std::vector<double>& values, double& mean,
                        double& std) {
    mean = 0.0;
    for (double v : values) mean += v;
    mean = values.empty() ? 0.0 : mean / static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var = values.empty() ? 0.0 : var / static_cast<double>(values.size());
    std = var > 0.0 ? std::sqrt(var) : 1.0;
  };
  for (const auto& name : dataset.schema.numeric_features) {
    std::vector<double> column;
    for (std::size_t i : train) column.push_back(dataset.samples[i].tabular.at(name));
    double mean, std;
    stats(column, mean, std);
    norm.numeric_mean.push_back(mean);
    norm.numeric_std.push_back(std);
  }
  const std::size_t length = dataset.series_length;
  for (std::size_t s = 0; s < dataset.series_names.size(); ++s) {
    std::vector<double> column;
    for (std::size_t i : train) {
      const auto values = dataset.samples[i].series.values();
      column.insert(column.end(), values.begin() + static_cast<std::ptrdiff_t>(s * length),
                    values.begin() + static_cast<std::ptrdiff_t>((s + 1) * length));
    }
    double mean, std;
    stats(column, mean, std);
    norm.series_mean.push_back(mean);
    norm.series_std.push_back(std);
  }
  return norm;
}

PreparedData Prepare(const Dataset& dataset, const Normalizer& normalizer) {
  PreparedData out;
  out.schema = dataset.schema;
  out.n_series = dataset.series_names.size();
  out.series_length = dataset.series_length;
  out.n_classes = dataset.n_classes;
  const std::size_t n_num = dataset.schema.numeric_features.size();
  if (normalizer.numeric_mean.size() != n_num ||
      normalizer.series_mean.size() != out.n_series) {
    throw DimensionError("Prepare: normalizer does not match the dataset");
  }
  for (const auto& s : dataset.samples) {
    for (std::size_t f = 0; f < n_num; ++f) {
      const double x = s.tabular.at(dataset.schema.numeric_features[f]);
      out.numeric.push_back((x - normalizer.numeric_mean[f]) /
                            normalizer.numeric_std[f]);
    }
    for (const auto& cat : dataset.schema.categorical_features) {
      out.categorical.push_back(static_cast<int>(s.tabular.at(cat.name)));
    }
    if (s.series.shape() != Shape{out.n_series, out.series_length}) {
      throw DimensionError("Prepare: sample " + std::to_string(s.sample_id) +
                           " has series block " + ShapeToString(s.series.shape()));
    }
    const auto values = s.series.values();
    for (std::size_t k = 0; k < out.n_series; ++k) {
      for (std::size_t t = 0; t < out.series_length; ++t) {
        out.series.push_back((values[k * out.series_length + t] -
                              normalizer.series_mean[k]) /
                             normalizer.series_std[k]);
      }
    }
    out.labels.push_back(s.label);
    out.sample_ids.push_back(s.sample_id);
  }
  return out;
}

Batch PreparedData::MakeBatch(std::span<const std::size_t> indices) const {
  const std::size_t n = indices.size();
  const std::size_t n_num = schema.numeric_features.size();
  const std::size_t n_cat = schema.categorical_features.size();
  const std::size_t block = n_series * series_length;
  std::vector<double> num(n * n_num);
  std::vector<double> ser(n * block);
  Batch batch;
  batch.tabular.categorical.resize(n);
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t i = indices[b];
    std::copy_n(numeric.begin() + static_cast<std::ptrdiff_t>(i * n_num), n_num,
                num.begin() + static_cast<std::ptrdiff_t>(b * n_num));
    std::copy_n(series.begin() + static_cast<std::ptrdiff_t>(i * block), block,
                ser.begin() + static_cast<std::ptrdiff_t>(b * block));
    batch.tabular.categorical[b].assign(
        categorical.begin() + static_cast<std::ptrdiff_t>(i * n_cat),
        categorical.begin() + static_cast<std::ptrdiff_t>((i + 1) * n_cat));
    batch.labels.push_back(labels[i]);
  }
  batch.tabular.numeric = Tensor({n, n_num}, std::move(num));
  batch.series = Tensor({n, n_series, series_length}, std::move(ser));
  return batch;
}

}  // namespace asymfuse
