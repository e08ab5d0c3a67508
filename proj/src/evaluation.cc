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


#include "asymfuse/evaluation.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "asymfuse/csv.h"
#include "asymfuse/errors.h"
#include "asymfuse/ops.h"

namespace asymfuse {
namespace {

Tensor Identity(std::size_t n) {
  Tensor eye({n, n});
  for (std::size_t i = 0; i < n; ++i) eye.mutable_values()[i * n + i] = 1.0;
  return eye;
}

void CheckPair(const Tensor& a, const Tensor& b, const char* what) {
  if (a.rank() != 2 || a.shape() != b.shape() || a.dim(0) == 0) {
    throw DimensionError(std::string(what) + ": embeddings " +
                         ShapeToString(a.shape()) + " and " +
                         ShapeToString(b.shape()));
  }
}

double Cosine(std::span<const double> u, std::span<const double> v) {
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    uv += u[k] * v[k];
    uu += u[k] * u[k];
    vv += v[k] * v[k];
  }
  if (uu == 0.0 || vv == 0.0) {
    throw DegenerateInputError("separation gap: zero-norm embedding");
  }
  return uv / std::sqrt(uu * vv);
}

}  // namespace

Tensor InfoNceLoss(const Tensor& a, const Tensor& b, double tau) {
  CheckPair(a, b, "InfoNCE");
  if (!(tau > 0.0)) throw ConfigError("InfoNCE: tau must be > 0");
  const std::size_t n = a.dim(0);
  const Tensor logits = MulScalar(PairwiseCosineSimilarity(a, b), 1.0 / tau);
  const Tensor eye = Identity(n);
  // Rows: anchors from a; columns: anchors from b.
  const Tensor a_to_b = SumAll(Mul(LogSoftmax(logits, 1), eye));
  const Tensor b_to_a = SumAll(Mul(LogSoftmax(logits, 0), eye));
  return MulScalar(Add(a_to_b, b_to_a), -0.5 / static_cast<double>(n));
}

Tensor TripletLoss(const EmbeddingBatch& batch, double margin) {
  CheckPair(batch.z_s, batch.z_t_sh, "triplet");
  CheckPair(batch.z_s, batch.z_t_sp, "triplet");
  const std::size_t n = batch.z_s.dim(0);
  const Tensor positive = CosineSimilarity(batch.z_s, batch.z_t_sh);  // [N]
  const Tensor negatives = PairwiseCosineSimilarity(batch.z_s, batch.z_t_sp);
  // One-hot mask of the hardest negative per anchor; the selection itself is
  // not differentiated.
  Tensor mask({n, n});
  const auto sims = negatives.values();
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = sims.subspan(i * n, n);
    const auto k = static_cast<std::size_t>(
        std::max_element(row.begin(), row.end()) - row.begin());
    mask.mutable_values()[i * n + k] = 1.0;
  }
  const Tensor hardest = Sum(Mul(negatives, mask), 1);
  return MeanAll(Relu(AddScalar(Sub(hardest, positive), margin)));
}

Tensor SupervisedClipLoss(const EmbeddingBatch& batch,
                          std::span<const int> labels, double tau) {
  return SupervisedContrastiveLoss(batch.z_t_sh, batch.z_s, labels, tau);
}

Tensor LatentObjective(const EmbeddingBatch& batch, std::span<const int> labels,
                       const DecouplingConfig& cfg) {
  switch (cfg.kind) {
    case DecouplingLossKind::kShsd:
      return DecouplingLoss(batch, labels, cfg);
    case DecouplingLossKind::kInfoNce:
      return InfoNceLoss(batch.z_s, batch.z_t_sh, cfg.tau);
    case DecouplingLossKind::kTriplet:
      return TripletLoss(batch);
    case DecouplingLossKind::kSupervisedClip:
      return SupervisedClipLoss(batch, labels, cfg.tau);
  }
  throw ConfigError("unknown decoupling loss kind");
}

void ParallelFor(std::size_t n, int jobs,
                 const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  const auto guarded = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) guarded(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) guarded(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

SweepResult RunSweep(const std::vector<SweepAxis>& grid,
                     std::span<const std::uint64_t> seeds, const SweepRunFn& run,
                     int jobs) {
  if (grid.empty()) throw ConfigError("sweep: empty grid");
  if (seeds.empty()) throw ConfigError("sweep: no seeds");
  SweepResult result;
  result.seeds.assign(seeds.begin(), seeds.end());
  std::size_t n_points = 1;
  for (const auto& axis : grid) {
    if (axis.values.empty()) {
      throw ConfigError("sweep: no values for \"" + axis.param + "\"");
    }
    result.params.push_back(axis.param);
    n_points *= axis.values.size();
  }
  for (std::size_t p = 0; p < n_points; ++p) {
    SweepPointResult point;
    std::size_t rest = p;
    point.coordinates.resize(grid.size());
    for (std::size_t a = grid.size(); a-- > 0;) {
      point.coordinates[a] = grid[a].values[rest % grid[a].values.size()];
      rest /= grid[a].values.size();
    }
    point.per_seed.assign(seeds.size(), std::numeric_limits<double>::quiet_NaN());
    point.errors.assign(seeds.size(), "");
    result.points.push_back(std::move(point));
  }

  const std::size_t n_runs = n_points * seeds.size();
  ParallelFor(n_runs, jobs, [&](std::size_t r) {
    SweepPointResult& point = result.points[r / seeds.size()];
    const std::size_t s = r % seeds.size();
    std::vector<std::pair<std::string, double>> assignment;
    for (std::size_t a = 0; a < grid.size(); ++a) {
      assignment.emplace_back(grid[a].param, point.coordinates[a]);
    }
    try {
      point.per_seed[s] = run(assignment, seeds[s]);
    } catch (const std::exception& e) {
      point.errors[s] = e.what();
    }
  });

  for (auto& point : result.points) {
    double sum = 0.0;
    for (double v : point.per_seed) {
      if (!std::isnan(v)) {
        sum += v;
        ++point.n_ok;
      }
    }
    point.mean = point.n_ok ? sum / static_cast<double>(point.n_ok)
                            : std::numeric_limits<double>::quiet_NaN();
    double ss = 0.0;
    for (double v : point.per_seed) {
      if (!std::isnan(v)) ss += (v - point.mean) * (v - point.mean);
    }
    point.std = point.n_ok > 1 ? std::sqrt(ss / static_cast<double>(point.n_ok - 1))
                               : 0.0;
  }
  return result;
}

std::string SweepToCsv(const SweepResult& result) {
  std::ostringstream out;
  out << "point";
  for (const auto& p : result.params) out << ',' << p;
  out << ",mean,std,n_ok";
  for (auto s : result.seeds) out << ",seed_" << s;
  out << '\n';
  for (std::size_t i = 0; i < result.points.size(); ++i) {
    const auto& point = result.points[i];
    out << i;
    for (double c : point.coordinates) out << ',' << FormatDouble(c);
    out << ',' << FormatDouble(point.mean) << ',' << FormatDouble(point.std)
        << ',' << point.n_ok;
    for (double v : point.per_seed) out << ',' << FormatDouble(v);
    out << '\n';
  }
  return out.str();
}

SweepResult ParseSweepCsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ValueError("sweep CSV: empty");
  const std::vector<std::string> header = SplitCsvLine(line);
  const auto mean_it = std::find(header.begin(), header.end(), "mean");
  if (header.empty() || header[0] != "point" || mean_it == header.end() ||
      mean_it + 2 >= header.end() || *(mean_it + 1) != "std" ||
      *(mean_it + 2) != "n_ok") {
    throw SchemaError("sweep CSV: unexpected header \"" + line + "\"");
  }
  SweepResult result;
  const std::size_t n_params = static_cast<std::size_t>(mean_it - header.begin()) - 1;
  result.params.assign(header.begin() + 1, mean_it);
  for (auto it = mean_it + 3; it != header.end(); ++it) {
    std::optional<long long> seed;
    if (it->rfind("seed_", 0) == 0) seed = ParseInt(it->substr(5));
    if (!seed) throw SchemaError("sweep CSV: bad seed column \"" + *it + "\"");
    result.seeds.push_back(static_cast<std::uint64_t>(*seed));
  }
  std::size_t row = 1;
  const auto number = [&](const std::string& cell) {
    std::optional<double> v = ParseDouble(cell);
    if (!v) {
      throw ValueError("sweep CSV: row " + std::to_string(row) +
                       ": cannot parse \"" + cell + "\"");
    }
    return *v;
  };
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const std::vector<std::string> cells = SplitCsvLine(line);
    if (cells.size() != header.size()) {
      throw ValueError("sweep CSV: row " + std::to_string(row) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(header.size()));
    }
    SweepPointResult point;
    for (std::size_t a = 0; a < n_params; ++a) {
      point.coordinates.push_back(number(cells[1 + a]));
    }
    point.mean = number(cells[1 + n_params]);
    point.std = number(cells[2 + n_params]);
    point.n_ok = static_cast<std::size_t>(number(cells[3 + n_params]));
    for (std::size_t s = 0; s < result.seeds.size(); ++s) {
      point.per_seed.push_back(number(cells[4 + n_params + s]));
      point.errors.emplace_back();
    }
    result.points.push_back(std::move(point));
  }
  return result;
}

void ExportEmbeddings(const EmbeddingBatch& batch, std::span<const int> labels,
                      std::span<const std::int64_t> sample_ids,
                      const std::string& path) {
  CheckPair(batch.z_s, batch.z_t_sh, "export");
  CheckPair(batch.z_s, batch.z_t_sp, "export");
  const std::size_t n = batch.z_s.dim(0), d = batch.z_s.dim(1);
  if (labels.size() != n || sample_ids.size() != n) {
    throw DimensionError("export: " + std::to_string(n) + " embeddings, " +
                         std::to_string(labels.size()) + " labels, " +
                         std::to_string(sample_ids.size()) + " ids");
  }
  std::ostringstream out;
  out << "sample_id,label,modality";
  for (std::size_t k = 0; k < d; ++k) out << ",z" << k;
  out << '\n';
  const Tensor* parts[] = {&batch.z_s, &batch.z_t_sh, &batch.z_t_sp};
  for (std::size_t i = 0; i < n; ++i) {
    for (int m = 0; m < 3; ++m) {
      out << sample_ids[i] << ',' << labels[i] << ',' << kModalityTags[m];
      const auto v = parts[m]->values().subspan(i * d, d);
      for (double x : v) out << ',' << FormatDouble(x);
      out << '\n';
    }
  }
  WriteFile(path, out.str());
}

std::vector<EmbeddingRecord> ReadEmbeddings(const std::string& path) {
  const std::vector<std::string> lines = ReadLines(path);
  if (lines.empty()) throw SchemaError(path + ": empty embedding file");
  const std::vector<std::string> header = SplitCsvLine(lines[0]);
  if (header.size() < 4 || header[0] != "sample_id" || header[1] != "label" ||
      header[2] != "modality") {
    throw SchemaError(path + ": unexpected embedding header");
  }
  std::vector<EmbeddingRecord> records;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    if (lines[r].empty()) continue;
    const std::vector<std::string> cells = SplitCsvLine(lines[r]);
    if (cells.size() != header.size()) {
      throw ValueError(path + ": row " + std::to_string(r + 1) +
                       " has the wrong number of cells");
    }
    EmbeddingRecord rec;
    std::optional<long long> id = ParseInt(cells[0]);
    std::optional<long long> label = ParseInt(cells[1]);
    if (!id || !label) {
      throw ValueError(path + ": row " + std::to_string(r + 1) +
                       ": bad sample_id or label");
    }
    rec.sample_id = *id;
    rec.label = static_cast<int>(*label);
    rec.modality = cells[2];
    for (std::size_t c = 3; c < cells.size(); ++c) {
      std::optional<double> v = ParseDouble(cells[c]);
      if (!v) {
        throw ValueError(path + ": row " + std::to_string(r + 1) + ", column " +
                         header[c] + ": cannot parse \"" + cells[c] + "\"");
      }
      rec.values.push_back(*v);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

double SeparationGap(const EmbeddingBatch& batch) {
  CheckPair(batch.z_s, batch.z_t_sh, "separation gap");
  CheckPair(batch.z_s, batch.z_t_sp, "separation gap");
  const std::size_t n = batch.z_s.dim(0), d = batch.z_s.dim(1);
  double shared = 0.0, specific = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = batch.z_s.values().subspan(i * d, d);
    shared += Cosine(s, batch.z_t_sh.values().subspan(i * d, d));
    specific += Cosine(s, batch.z_t_sp.values().subspan(i * d, d));
  }
  return (shared - specific) / static_cast<double>(n);
}

double SeparationGap(const std::vector<EmbeddingRecord>& records) {
  std::map<std::int64_t, std::map<std::string, const EmbeddingRecord*>> by_id;
  for (const auto& r : records) by_id[r.sample_id][r.modality] = &r;
  if (by_id.empty()) throw DimensionError("separation gap: no records");
  double shared = 0.0, specific = 0.0;
  for (const auto& [id, rows] : by_id) {
    for (const char* tag : kModalityTags) {
      if (!rows.count(tag)) {
        throw SchemaError("separation gap: sample " + std::to_string(id) +
                          " lacks modality " + tag);
      }
    }
    const auto& s = rows.at("ts")->values;
    shared += Cosine(s, rows.at("tab_shared")->values);
    specific += Cosine(s, rows.at("tab_specific")->values);
  }
  return (shared - specific) / static_cast<double>(by_id.size());
}

}  // namespace asymfuse
