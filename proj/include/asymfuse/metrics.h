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


// Classification metrics and paired significance tests.

#ifndef ASYMFUSE_METRICS_H_
#define ASYMFUSE_METRICS_H_

#include <cstddef>
#include <span>
#include <vector>

#include "asymfuse/tensor.h"

namespace asymfuse {

struct ClassMetrics {
  int label = 0;
  std::size_t support = 0;
  double auroc = 0.0;
  double auprc = 0.0;
  double f1 = 0.0;
};

struct MetricReport {
  double auroc_macro = 0.0;
  double auprc_macro = 0.0;
  double f1_macro = 0.0;
  std::vector<ClassMetrics> per_class;
  std::size_t n_samples = 0;
};

// Binary AUC with ties counted as one half (average ranks). `positive[i]`
// is nonzero for positives. Throws MetricError without both classes.
double BinaryAuroc(std::span<const double> scores,
                   std::span<const int> positive);

// Step-wise average precision: sum over distinct score thresholds of
// (recall increment) x (precision at that threshold).
double AveragePrecision(std::span<const double> scores,
                        std::span<const int> positive);

// scores: [N, C]. One-vs-rest per class, then the unweighted mean. A class
// with no positive (or no negative) sample raises MetricError naming it.
double RocAucOvrMacro(const Tensor& scores, std::span<const int> labels);
double AuprcMacro(const Tensor& scores, std::span<const int> labels);

// Macro F1 over classes 0..n_classes-1. A class that is never predicted and
// never present contributes 0.
double F1Macro(std::span<const int> predictions, std::span<const int> labels,
               int n_classes);

// Row-wise argmax; ties resolve to the lowest class index.
std::vector<int> ArgmaxPredictions(const Tensor& scores);

MetricReport ComputeMetrics(const Tensor& scores, std::span<const int> labels);

struct TTestResult {
  double mean_difference = 0.0;
  double t_statistic = 0.0;
  double p_value = 1.0;
  std::size_t n_pairs = 0;
};

// Paired two-sided t-test on d = a - b with n - 1 degrees of freedom.
// Throws DimensionError on unequal lengths or n < 2 and
// DegenerateInputError when the differences have zero variance.
TTestResult PairedTTest(std::span<const double> a, std::span<const double> b);

// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
double RegularizedIncompleteBeta(double a, double b, double x);

// CDF of Student's t distribution with `dof` degrees of freedom.
double StudentTCdf(double t, double dof);

}  // namespace asymfuse

#endif  // ASYMFUSE_METRICS_H_
