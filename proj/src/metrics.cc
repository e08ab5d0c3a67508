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


#include "asymfuse/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "asymfuse/errors.h"

namespace asymfuse {
namespace {

void CheckBinary(std::span<const double> scores, std::span<const int> positive,
                 std::size_t& n_pos, std::size_t& n_neg) {
  if (scores.size() != positive.size()) {
    throw DimensionError("metric: " + std::to_string(scores.size()) +
                         " scores vs " + std::to_string(positive.size()) +
                         " labels");
  }
  n_pos = static_cast<std::size_t>(
      std::count_if(positive.begin(), positive.end(), [](int p) { return p != 0; }));
  n_neg = positive.size() - n_pos;
}

// Indices sorted by descending score.
std::vector<std::size_t> DescendingOrder(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  return order;
}

void CheckScores(const Tensor& scores, std::span<const int> labels) {
  if (scores.rank() != 2 || scores.dim(0) != labels.size()) {
    throw DimensionError("metric: scores " + ShapeToString(scores.shape()) +
                         " vs " + std::to_string(labels.size()) + " labels");
  }
  const int n_classes = static_cast<int>(scores.dim(1));
  for (int y : labels) {
    if (y < 0 || y >= n_classes) {
      throw MetricError("metric: label " + std::to_string(y) + " outside [0, " +
                        std::to_string(n_classes) + ")");
    }
  }
}

std::vector<double> Column(const Tensor& scores, std::size_t c) {
  const std::size_t n = scores.dim(0), k = scores.dim(1);
  std::vector<double> col(n);
  for (std::size_t i = 0; i < n; ++i) col[i] = scores.value(i * k + c);
  return col;
}

std::vector<int> Indicator(std::span<const int> labels, int c) {
  std::vector<int> ind(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) ind[i] = labels[i] == c;
  return ind;
}

template <typename BinaryMetric>
double MacroOverClasses(const Tensor& scores, std::span<const int> labels,
                        BinaryMetric metric) {
  CheckScores(scores, labels);
  const std::size_t n_classes = scores.dim(1);
  double total = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const std::vector<int> ind = Indicator(labels, static_cast<int>(c));
    if (std::find(ind.begin(), ind.end(), 1) == ind.end()) {
      throw MetricError("metric: class " + std::to_string(c) +
                        " has no samples");
    }
    total += metric(Column(scores, c), ind);
  }
  return total / static_cast<double>(n_classes);
}

// F1 of class c against the rest; 0 when the class has no true positive.
double ClassF1(std::span<const int> predictions, std::span<const int> labels,
               int c) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred = predictions[i] == c, truth = labels[i] == c;
    tp += pred && truth;
    fp += pred && !truth;
    fn += !pred && truth;
  }
  if (tp == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

}  // namespace

double BinaryAuroc(std::span<const double> scores,
                   std::span<const int> positive) {
  std::size_t n_pos, n_neg;
  CheckBinary(scores, positive, n_pos, n_neg);
  if (n_pos == 0 || n_neg == 0) {
    throw MetricError("AUROC needs at least one positive and one negative");
  }
  // Mann-Whitney U from average ascending ranks.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  double positive_rank_sum = 0.0;
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start;
    while (end < order.size() && scores[order[end]] == scores[order[start]]) ++end;
    const double rank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t i = start; i < end; ++i) {
      if (positive[order[i]]) positive_rank_sum += rank;
    }
    start = end;
  }
  const double np = static_cast<double>(n_pos);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) /
         (np * static_cast<double>(n_neg));
}

double AveragePrecision(std::span<const double> scores,
                        std::span<const int> positive) {
  std::size_t n_pos, n_neg;
  CheckBinary(scores, positive, n_pos, n_neg);
  if (n_pos == 0) throw MetricError("AUPRC needs at least one positive");
  const std::vector<std::size_t> order = DescendingOrder(scores);
  double ap = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start, group_tp = 0;
    while (end < order.size() && scores[order[end]] == scores[order[start]]) {
      group_tp += positive[order[end]] != 0;
      ++end;
    }
    tp += group_tp;
    seen = end;
    if (group_tp > 0) {
      ap += (static_cast<double>(group_tp) / static_cast<double>(n_pos)) *
            (static_cast<double>(tp) / static_cast<double>(seen));
    }
    start = end;
  }
  return ap;
}

double RocAucOvrMacro(const Tensor& scores, std::span<const int> labels) {
  return MacroOverClasses(scores, labels, [](const auto& s, const auto& p) {
    return BinaryAuroc(s, p);
  });
}

double AuprcMacro(const Tensor& scores, std::span<const int> labels) {
  return MacroOverClasses(scores, labels, [](const auto& s, const auto& p) {
    return AveragePrecision(s, p);
  });
}

double F1Macro(std::span<const int> predictions, std::span<const int> labels,
               int n_classes) {
  if (predictions.size() != labels.size()) {
    throw DimensionError("F1: " + std::to_string(predictions.size()) +
                         " predictions vs " + std::to_string(labels.size()) +
                         " labels");
  }
  if (n_classes < 1) throw MetricError("F1: n_classes must be positive");
  double total = 0.0;
  for (int c = 0; c < n_classes; ++c) total += ClassF1(predictions, labels, c);
  return total / n_classes;
}

std::vector<int> ArgmaxPredictions(const Tensor& scores) {
  if (scores.rank() != 2) {
    throw DimensionError("argmax: expected [N, C], got " +
                         ShapeToString(scores.shape()));
  }
  const std::size_t n = scores.dim(0), k = scores.dim(1);
  std::vector<int> preds(n);
  const auto v = scores.values();
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = v.subspan(i * k, k);
    preds[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return preds;
}

MetricReport ComputeMetrics(const Tensor& scores, std::span<const int> labels) {
  CheckScores(scores, labels);
  MetricReport report;
  report.n_samples = labels.size();
  const int n_classes = static_cast<int>(scores.dim(1));
  const std::vector<int> preds = ArgmaxPredictions(scores);
  for (int c = 0; c < n_classes; ++c) {
    const std::vector<int> ind = Indicator(labels, c);
    const std::vector<double> col = Column(scores, static_cast<std::size_t>(c));
    ClassMetrics m;
    m.label = c;
    m.support = static_cast<std::size_t>(std::count(ind.begin(), ind.end(), 1));
    if (m.support == 0 || m.support == labels.size()) {
      throw MetricError("metric: class " + std::to_string(c) +
                        (m.support == 0 ? " has no samples"
                                        : " is the only class present"));
    }
    m.auroc = BinaryAuroc(col, ind);
    m.auprc = AveragePrecision(col, ind);
    m.f1 = ClassF1(preds, labels, c);
    report.per_class.push_back(m);
    report.auroc_macro += m.auroc / n_classes;
    report.auprc_macro += m.auprc / n_classes;
  }
  report.f1_macro = F1Macro(preds, labels, n_classes);
  return report;
}

double RegularizedIncompleteBeta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw DegenerateInputError("incomplete beta: a and b must be positive");
  }
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  // The continued fraction converges fast for x < (a + 1) / (a + b + 2).
  if (x > (a + 1.0) / (a + b + 2.0)) {
    return 1.0 - RegularizedIncompleteBeta(b, a, 1.0 - x);
  }
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double f = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + num * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    f *= d * c;
    num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + num * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    f *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return std::exp(log_front) * f / a;
}

double StudentTCdf(double t, double dof) {
  if (!(dof > 0.0)) throw DegenerateInputError("Student t: dof must be positive");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double x = dof / (dof + t * t);
  const double tail = 0.5 * RegularizedIncompleteBeta(0.5 * dof, 0.5, x);
  return t > 0.0 ? 1.0 - tail : tail;
}

TTestResult PairedTTest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("paired t-test: lengths " + std::to_string(a.size()) +
                         " and " + std::to_string(b.size()));
  }
  const std::size_t n = a.size();
  if (n < 2) throw DimensionError("paired t-test needs at least 2 pairs");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double var = ss / static_cast<double>(n - 1);
  if (!(var > 0.0)) {
    throw DegenerateInputError("paired t-test: differences have zero variance");
  }
  TTestResult r;
  r.n_pairs = n;
  r.mean_difference = mean;
  r.t_statistic = mean / std::sqrt(var / static_cast<double>(n));
  const double dof = static_cast<double>(n - 1);
  r.p_value = RegularizedIncompleteBeta(
      0.5 * dof, 0.5, dof / (dof + r.t_statistic * r.t_statistic));
  r.p_value = std::clamp(r.p_value, 0.0, 1.0);
  return r;
}

}  // namespace asymfuse
