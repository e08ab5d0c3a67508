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


// End-to-end acceptance suite. Each criterion prints one PASS/FAIL line.
// Criterion failures are reported, not turned into a non-zero exit status,
// unless --strict is given; an exception that escapes a criterion is a FAIL.
// --report also writes the result lines to a file.
//
//   asymfuse_acceptance [--strict] [--only N[,N...]] [--jobs J] [--report PATH]

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "asymfuse/decoupling.h"
#include "asymfuse/evaluation.h"
#include "asymfuse/fusion.h"
#include "asymfuse/layers.h"
#include "asymfuse/metrics.h"
#include "asymfuse/model.h"
#include "asymfuse/ops.h"
#include "asymfuse/run_config.h"
#include "asymfuse/runner.h"
#include "asymfuse/training.h"

namespace asymfuse {
namespace {

using Mat = std::vector<std::vector<double>>;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// Independent reference evaluators. They work on plain nested vectors and do
// not call into the library.

Mat RandomMat(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Mat m(n, std::vector<double>(d));
  for (auto& row : m) {
    for (double& v : row) v = normal(rng);
  }
  return m;
}

Tensor ToTensor(const Mat& m) {
  std::vector<double> flat;
  for (const auto& row : m) flat.insert(flat.end(), row.begin(), row.end());
  return Tensor({m.size(), m.empty() ? 0 : m[0].size()}, std::move(flat));
}

double CosSim(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

double ShsdReference(const Mat& zs, const Mat& zsh, const Mat& zsp, double tau) {
  const std::size_t n = zs.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double den_s = 0.0, den_t = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      den_s += std::exp(CosSim(zs[i], zsp[k]) / tau);
      den_t += std::exp(CosSim(zsh[i], zsp[k]) / tau);
    }
    const double num = std::exp(CosSim(zs[i], zsh[i]) / tau);
    total += -std::log(num / den_s) - std::log(num / den_t);
  }
  return total / (2.0 * n);
}

double SupConReference(const Mat& anchors, const Mat& candidates,
                       const std::vector<int>& y, double tau) {
  double total = 0.0;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    double den = 0.0;
    for (const auto& c : candidates) den += std::exp(CosSim(anchors[i], c) / tau);
    double acc = 0.0;
    double same = 0.0;
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      if (y[j] != y[i]) continue;
      same += 1.0;
      acc += std::log(std::exp(CosSim(anchors[i], candidates[j]) / tau) / den);
    }
    total += -acc / same;
  }
  return total;
}

double RegReference(const Mat& zs, const Mat& zsp, const std::vector<int>& y,
                    double tau) {
  return (SupConReference(zsp, zs, y, tau) + SupConReference(zs, zsp, y, tau)) /
         (2.0 * zs.size());
}

double InfoNceReference(const Mat& a, const Mat& b, double tau) {
  const std::size_t n = a.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double den_a = 0.0, den_b = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      den_a += std::exp(CosSim(a[i], b[k]) / tau);
      den_b += std::exp(CosSim(a[k], b[i]) / tau);
    }
    const double pos = std::exp(CosSim(a[i], b[i]) / tau);
    total += -std::log(pos / den_a) - std::log(pos / den_b);
  }
  return total / (2.0 * n);
}

double TripletReference(const Mat& zs, const Mat& zsh, const Mat& zsp, double margin) {
  double total = 0.0;
  for (std::size_t i = 0; i < zs.size(); ++i) {
    double hardest = -2.0;
    for (const auto& sp : zsp) hardest = std::max(hardest, CosSim(zs[i], sp));
    total += std::max(0.0, margin + hardest - CosSim(zs[i], zsh[i]));
  }
  return total / zs.size();
}

double CrossEntropyReference(const Mat& logits, const std::vector<int>& y) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double den = 0.0;
    for (double v : logits[i]) den += std::exp(v);
    total += -std::log(std::exp(logits[i][y[i]]) / den);
  }
  return total / logits.size();
}

// P(score_pos > score_neg) + P(tie) / 2 over all pairs.
double PairwiseAuc(const std::vector<double>& s, const std::vector<int>& pos) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!pos[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (pos[j]) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

// Sum over distinct thresholds of recall increment times precision.
double ThresholdAp(const std::vector<double>& s, const std::vector<int>& pos) {
  std::set<double, std::greater<>> thresholds(s.begin(), s.end());
  const double n_pos = std::count(pos.begin(), pos.end(), 1);
  double ap = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    double tp = 0.0, predicted = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] < t) continue;
      predicted += 1.0;
      tp += pos[i];
    }
    ap += (tp / n_pos - prev_recall) * (tp / predicted);
    prev_recall = tp / n_pos;
  }
  return ap;
}

double MacroF1Reference(const Mat& scores, const std::vector<int>& y, int classes) {
  std::vector<int> pred;
  for (const auto& row : scores) {
    pred.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
  double f1 = 0.0;
  for (int c = 0; c < classes; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      tp += pred[i] == c && y[i] == c;
      fp += pred[i] == c && y[i] != c;
      fn += pred[i] != c && y[i] == c;
    }
    f1 += tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
  }
  return f1 / classes;
}

double Mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string Join(const std::vector<double>& v) {
  std::string out;
  for (double x : v) out += (out.empty() ? "" : " ") + Fmt("%.3f", x);
  return out;
}

// ---------------------------------------------------------------------------
// Shared training setup for the directional criteria.

RunConfig TrainingConfig(double label_mix) {
  RunConfig c = RunConfig::Defaults();
  c.data.synthetic->n_samples = 900;
  c.data.synthetic->n_classes = 3;
  c.data.synthetic->label_mix = label_mix;
  c.data.synthetic->seed = 0;
  c.model.encoder.embed_dim = 16;
  c.model.encoder.n_heads = 2;
  c.model.encoder.n_blocks = 1;
  c.model.encoder.dropout_rate = 0.3;
  c.model.fusion.n_rounds = 1;
  c.train.epochs = 200;
  c.train.learning_rate = 1e-3;
  c.train.lambda = 1.0;
  c.train.selection = SelectionMetric::kCrossEntropy;
  c.train.patience = 30;
  return c;
}

std::string Describe(const RunConfig& c) {
  return Fmt("d=%d heads=%d blocks=%d rounds=%d dropout=%.2f lr=%g epochs<=%d patience=%d",
             c.model.encoder.embed_dim, c.model.encoder.n_heads, c.model.encoder.n_blocks,
             c.model.fusion.n_rounds, c.model.encoder.dropout_rate, c.train.learning_rate,
             c.train.epochs, c.train.patience);
}

int g_jobs = 1;

// Ablation shared by criteria 5 and 6.
struct AblationCache {
  bool done = false;
  AblationResult result;
  double seconds = 0.0;
  std::string error;
};

AblationCache& MainAblation() {
  static AblationCache cache;
  if (cache.done) return cache;
  cache.done = true;
  try {
    RunConfig c = TrainingConfig(0.85);
    c.eval.ablation_variants = {"dafted", "no_decoupling", "neither", "mlp_concat"};
    const PreparedSplits prepared = PrepareSplits(c.data);
    std::printf("  [ablation] %s, n=900, 5 seeds\n", Describe(c).c_str());
    std::fflush(stdout);
    const auto t0 = std::chrono::steady_clock::now();
    cache.result = RunAblation(c, prepared, SeedRange(5), g_jobs);
    cache.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& run : cache.result.runs) {
      if (!run.error.empty()) cache.error += run.variant + ": " + run.error + "; ";
    }
  } catch (const std::exception& e) {
    cache.error = e.what();
  }
  return cache;
}

// ---------------------------------------------------------------------------
// Criteria.

Outcome LossOracles() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20260101);
  std::uniform_int_distribution<std::size_t> batch(2, 8);
  std::uniform_int_distribution<std::size_t> width(2, 16);
  std::uniform_int_distribution<int> label(0, 2);
  double worst[5] = {0, 0, 0, 0, 0};
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = batch(rng);
    const std::size_t d = width(rng);
    const Mat zs = RandomMat(n, d, rng);
    const Mat zsh = RandomMat(n, d, rng);
    const Mat zsp = RandomMat(n, d, rng);
    const Mat logits = RandomMat(n, 3, rng);
    std::vector<int> y(n);
    for (int& v : y) v = label(rng);
    const EmbeddingBatch b{ToTensor(zs), ToTensor(zsh), ToTensor(zsp)};
    const double tau = 0.1;
    const double got[5] = {ShsdLoss(b, tau).item(), RegularizationLoss(b, y, tau).item(),
                           InfoNceLoss(b.z_s, b.z_t_sh, tau).item(),
                           TripletLoss(b, kTripletMargin).item(),
                           CrossEntropy(ToTensor(logits), y).item()};
    const double want[5] = {ShsdReference(zs, zsh, zsp, tau), RegReference(zs, zsp, y, tau),
                            InfoNceReference(zs, zsh, tau),
                            TripletReference(zs, zsh, zsp, kTripletMargin),
                            CrossEntropyReference(logits, y)};
    for (int k = 0; k < 5; ++k) worst[k] = std::max(worst[k], std::abs(got[k] - want[k]));
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double max_err = *std::max_element(std::begin(worst), std::end(worst));
  return {max_err <= 1e-10 && seconds < 10.0,
          Fmt("max |err| shsd %.1e reg %.1e infonce %.1e triplet %.1e ce %.1e; %.2fs",
              worst[0], worst[1], worst[2], worst[3], worst[4], seconds)};
}

Outcome GradientSuite() {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig c = RunConfig::Defaults();  // desk-scale model
  c.data.synthetic->n_samples = 60;
  const PreparedSplits prepared = PrepareSplits(c.data);
  const ModelConfig model_cfg = c.model.Resolved(c.data.synthetic->n_classes);
  const Model model = Model::Build(model_cfg, InputSpec::FromData(prepared.data), 7);
  std::vector<std::size_t> idx(prepared.split.train.begin(),
                               prepared.split.train.begin() + 8);
  const Batch batch = prepared.data.MakeBatch(idx);
  TrainConfig train_cfg = c.train;
  train_cfg.lambda = 1.0;

  auto loss = [&] {
    ForwardContext ctx;  // evaluation mode: no dropout
    return TotalLoss(model.Forward(batch, ctx), batch.labels, model.config(), train_cfg)
        .total;
  };

  std::vector<NamedTensor> params = model.Parameters();
  for (auto& p : params) p.tensor.ZeroGrad();
  loss().Backward();

  std::size_t total = 0;
  for (const auto& p : params) total += p.tensor.size();
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  std::set<std::size_t> chosen;
  while (chosen.size() < 20) chosen.insert(pick(rng));

  constexpr double kH = 1e-5;
  constexpr double kFloor = 1e-6;
  double worst = 0.0;
  std::string worst_path;
  for (std::size_t flat : chosen) {
    std::size_t p = 0;
    while (flat >= params[p].tensor.size()) flat -= params[p++].tensor.size();
    Tensor& t = params[p].tensor;
    const auto grad = t.grad();
    const double analytic = grad.empty() ? 0.0 : grad[flat];
    auto values = t.mutable_values();
    const double saved = values[flat];
    double up, down;
    {
      NoGradGuard guard;
      values[flat] = saved + kH;
      up = loss().item();
      values[flat] = saved - kH;
      down = loss().item();
    }
    values[flat] = saved;
    const double numeric = (up - down) / (2 * kH);
    const double rel = std::abs(analytic - numeric) /
                       std::max({std::abs(analytic), std::abs(numeric), kFloor});
    if (rel >= worst) {
      worst = rel;
      worst_path = params[p].path;
    }
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst < 1e-4 && seconds < 60.0,
          Fmt("20 of %zu parameters, worst relative error %.2e (%s); %.2fs", total, worst,
              worst_path.c_str(), seconds)};
}

Outcome ClosedForms() {
  const Tensor e1 = Tensor::Matrix({{1, 0}});
  const Tensor e2 = Tensor::Matrix({{0, 1}});
  const double shsd_zero = ShsdLoss({e1, e1, e1}, 0.1).item();
  const double shsd_ten = ShsdLoss({e1, e1, e2}, 0.1).item();
  const Tensor same = Tensor::Matrix({{0.6, 0.8}, {0.6, 0.8}});
  const std::vector<int> two = {0, 1};
  const double reg = RegularizationLoss({same, same, same}, two, 0.1).item();
  const std::vector<int> three = {0, 1, 2};
  const double ce = CrossEntropy(Tensor::Matrix({{0.5, 0.5, 0.5}, {-2, -2, -2}, {7, 7, 7}}),
                                 three)
                        .item();
  const double errs[4] = {std::abs(shsd_zero), std::abs(shsd_ten + 10.0),
                          std::abs(reg - std::log(2.0)), std::abs(ce - std::log(3.0))};
  const bool ok = *std::max_element(std::begin(errs), std::end(errs)) <= 1e-9;
  return {ok, Fmt("shsd %.12g, %.12g; reg %.12g (log 2); ce %.12g (log 3)", shsd_zero,
                  shsd_ten, reg, ce)};
}

Outcome ArchitectureInvariants() {
  // (a) shared cross-attention weights: count is flat in the number of rounds.
  RunConfig c = RunConfig::Defaults();
  c.data.synthetic->n_samples = 60;
  const PreparedSplits prepared = PrepareSplits(c.data);
  const InputSpec input = InputSpec::FromData(prepared.data);
  std::vector<std::size_t> cross_counts;
  for (int rounds : {1, 2, 3, 4}) {
    ModelConfig mc = c.model;
    mc.fusion.n_rounds = rounds;
    const Model m = Model::Build(mc.Resolved(3), input, 1);
    std::size_t n = 0;
    for (const auto& p : m.Parameters()) {
      if (p.path.find("cross") != std::string::npos) n += p.tensor.size();
    }
    cross_counts.push_back(n);
  }
  const bool shared = std::all_of(cross_counts.begin(), cross_counts.end(),
                                  [&](std::size_t n) { return n == cross_counts[0]; }) &&
                      cross_counts[0] > 0;

  // (b) zeroed cross-attention output projections cut both context paths.
  std::mt19937_64 g(5);
  auto tokens = [&](std::size_t n, Modality m) {
    Mat flat = RandomMat(2 * n, 32, g);
    std::vector<double> v;
    for (const auto& row : flat) v.insert(v.end(), row.begin(), row.end());
    return TokenSequence{Tensor({2, n, 32}, std::move(v)), m};
  };
  FusionConfig fc;
  fc.embed_dim = 32;
  fc.n_heads = 4;
  fc.n_rounds = 2;
  Rng rng(6);
  FusionParams fp = FusionParams::Create(fc, rng);
  const TokenSequence sp = tokens(14, Modality::kTabular);
  const TokenSequence sh_a = tokens(14, Modality::kTabular);
  const TokenSequence sh_b = tokens(14, Modality::kTabular);
  const TokenSequence ts_a = tokens(14, Modality::kTimeSeries);
  const TokenSequence ts_b = tokens(14, Modality::kTimeSeries);
  ForwardContext ctx;
  auto max_diff = [](const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.value(i) - b.value(i)));
    return m;
  };
  const double live = max_diff(Fuse(sp, sh_a, ts_a, fc, fp, ctx), Fuse(sp, sh_b, ts_b, fc, fp, ctx));
  for (Tensor* t : {&fp.cross.attention.w_o, &fp.cross.attention.b_o}) {
    for (double& v : t->mutable_values()) v = 0.0;
  }
  const double cut = max_diff(Fuse(sp, sh_a, ts_a, fc, fp, ctx), Fuse(sp, sh_b, ts_b, fc, fp, ctx));

  // Same witness on a full model: the series input no longer reaches the logits.
  Model m = Model::Build(c.model.Resolved(3), input, 2);
  for (auto& p : m.Parameters()) {
    if (p.path.starts_with("fusion.cross.attention.w_o") ||
        p.path.starts_with("fusion.cross.attention.b_o")) {
      for (double& v : p.tensor.mutable_values()) v = 0.0;
    }
  }
  std::vector<std::size_t> idx(prepared.split.train.begin(), prepared.split.train.begin() + 4);
  Batch batch = prepared.data.MakeBatch(idx);
  const Tensor before = m.Forward(batch, ctx).logits;
  for (double& v : batch.series.mutable_values()) v = -3.0 * v + 1.0;
  const double model_cut = max_diff(before, m.Forward(batch, ctx).logits);

  // (c) attention rows are distributions.
  double row_err = 0.0;
  const std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> shapes = {
      {1, 1, 1}, {5, 3, 2}, {15, 14, 4}, {9, 30, 8}};
  for (const auto& [nq, nc, heads] : shapes) {
    Rng r(nq * 31 + nc);
    const AttentionParams ap = AttentionParams::Create(32, r);
    const TokenSequence q = tokens(nq, Modality::kTabular);
    const TokenSequence k = tokens(nc, Modality::kTimeSeries);
    Tensor weights;
    MultiHeadAttention(q.tokens, k.tokens, ap, heads, &weights);
    const Tensor sums = Sum(weights, -1);
    for (double s : sums.values()) row_err = std::max(row_err, std::abs(s - 1.0));
  }

  const bool ok = shared && live > 0.0 && cut == 0.0 && model_cut == 0.0 && row_err <= 1e-12;
  return {ok, Fmt("(a) cross params %zu/%zu/%zu/%zu for 1-4 rounds; (b) context effect %.2e "
                  "-> %.1e, model series effect %.1e; (c) max |row sum - 1| %.1e",
                  cross_counts[0], cross_counts[1], cross_counts[2], cross_counts[3], live,
                  cut, model_cut, row_err)};
}

Outcome DirectionalAblation() {
  AblationCache& cache = MainAblation();
  if (!cache.error.empty()) return {false, "training failed: " + cache.error};
  const AblationResult& r = cache.result;
  const auto dafted = r.Auroc(0);
  const auto no_dec = r.Auroc(1);
  const auto neither = r.Auroc(2);
  const auto mlp = r.Auroc(3);
  int wins = 0;
  for (std::size_t s = 0; s < dafted.size(); ++s) wins += dafted[s] > neither[s];
  const TTestResult t = PairedTTest(dafted, neither);
  const bool ordering = Mean(dafted) >= Mean(no_dec) && Mean(no_dec) >= Mean(neither);
  const bool beats_mlp = Mean(dafted) - Mean(mlp) > 0.0;
  const bool ok = ordering && beats_mlp && wins >= 4 && t.mean_difference > 0.0 &&
                  cache.seconds < 600.0;
  std::printf("  [5] test AUROC per seed\n      dafted        %s\n      no_decoupling %s\n"
              "      neither       %s\n      mlp_concat    %s\n",
              Join(dafted).c_str(), Join(no_dec).c_str(), Join(neither).c_str(),
              Join(mlp).c_str());
  return {ok, Fmt("means dafted %.4f no_decoupling %.4f neither %.4f mlp_concat %.4f; "
                  "ordering %s; dafted-mlp_concat %+.4f; dafted>neither in %d/5; "
                  "t-test diff %+.4f t=%.2f p=%.3f; %.0fs",
                  Mean(dafted), Mean(no_dec), Mean(neither), Mean(mlp),
                  ordering ? "holds" : "violated", Mean(dafted) - Mean(mlp), wins,
                  t.mean_difference, t.t_statistic, t.p_value, cache.seconds)};
}

Outcome DecouplingGeometry() {
  AblationCache& cache = MainAblation();
  if (!cache.error.empty()) return {false, "training failed: " + cache.error};
  const AblationResult& r = cache.result;
  std::vector<double> dafted, no_dec;
  int good = 0;
  for (std::size_t s = 0; s < r.seeds.size(); ++s) {
    dafted.push_back(r.Run(0, s).val_separation_gap);
    no_dec.push_back(r.Run(1, s).val_separation_gap);
    good += dafted.back() > 0.2 && no_dec.back() < dafted.back();
  }
  return {good >= 4, Fmt("val gap dafted [%s], no_decoupling [%s]; holds in %d/5 seeds",
                         Join(dafted).c_str(), Join(no_dec).c_str(), good)};
}

Outcome UnimodalAsymmetry() {
  RunConfig c = TrainingConfig(1.0);
  c.eval.ablation_variants = {"ts_only", "tab_only"};
  const PreparedSplits prepared = PrepareSplits(c.data);
  const AblationResult r = RunAblation(c, prepared, SeedRange(3), g_jobs);
  for (const auto& run : r.runs) {
    if (!run.error.empty()) return {false, run.variant + ": " + run.error};
  }
  const double ts = Mean(r.Auroc(0));
  const double tab = Mean(r.Auroc(1));
  return {ts >= 0.4 && ts <= 0.6 && tab > 0.8,
          Fmt("label_mix 1.0, mean test AUROC over 3 seeds: ts_only %.4f [%s], "
              "tab_only %.4f [%s]",
              ts, Join(r.Auroc(0)).c_str(), tab, Join(r.Auroc(1)).c_str())};
}

Outcome LambdaSweep() {
  RunConfig c = TrainingConfig(0.85);
  const PreparedSplits prepared = PrepareSplits(c.data);
  const std::vector<SweepAxis> grid = {
      {ResolveSweepParam("lambda"), {0.0, 0.25, 0.5, 1.0, 2.0, 4.0}}};
  const SweepResult r = RunParameterSweep(c, prepared, grid, SeedRange(3), g_jobs);

  const auto dir = std::filesystem::temp_directory_path() / "asymfuse_acceptance";
  std::filesystem::create_directories(dir);
  const auto path = dir / "lambda_grid.csv";
  { std::ofstream(path) << SweepToCsv(r); }
  std::ifstream in(path);
  const SweepResult back = ParseSweepCsv(
      std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()));

  bool parsed = back.params == r.params && back.seeds == r.seeds &&
                back.points.size() == r.points.size();
  for (std::size_t i = 0; parsed && i < r.points.size(); ++i) {
    parsed = back.points[i].coordinates == r.points[i].coordinates &&
             back.points[i].per_seed == r.points[i].per_seed &&
             back.points[i].n_ok == r.points[i].n_ok;
  }
  double at0 = NAN, at1 = NAN;
  std::string means;
  std::size_t failed = 0;
  for (const auto& p : r.points) {
    if (p.coordinates[0] == 0.0) at0 = p.mean;
    if (p.coordinates[0] == 1.0) at1 = p.mean;
    means += Fmt(" %g:%.4f", p.coordinates[0], p.mean);
    failed += r.seeds.size() - p.n_ok;
  }
  return {parsed && failed == 0 && at1 >= at0,
          Fmt("mean AUROC by lambda%s; lambda=1 %s lambda=0; CSV %s (%s)", means.c_str(),
              at1 >= at0 ? ">=" : "<", parsed ? "re-parsed identically" : "mismatch",
              path.c_str())};
}

Outcome MetricOracles() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> size(6, 50);
  std::uniform_int_distribution<int> grid(0, 8);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = size(rng);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % 3);
    std::shuffle(y.begin(), y.end(), rng);
    Mat s(n, std::vector<double>(3));
    for (auto& row : s) {
      for (double& v : row) v = grid(rng) / 8.0;  // coarse grid: frequent ties
    }
    double auc = 0.0, ap = 0.0;
    for (int c = 0; c < 3; ++c) {
      std::vector<double> col;
      std::vector<int> pos;
      for (std::size_t i = 0; i < n; ++i) {
        col.push_back(s[i][c]);
        pos.push_back(y[i] == c);
      }
      auc += PairwiseAuc(col, pos) / 3;
      ap += ThresholdAp(col, pos) / 3;
    }
    const Tensor scores = ToTensor(s);
    worst = std::max({worst, std::abs(RocAucOvrMacro(scores, y) - auc),
                      std::abs(AuprcMacro(scores, y) - ap),
                      std::abs(F1Macro(ArgmaxPredictions(scores), y, 3) -
                               MacroF1Reference(s, y, 3))});
  }
  const std::vector<double> a = {1, 2, 4};
  const std::vector<double> b = {0, 1, 2};
  const double t = PairedTTest(a, b).t_statistic;
  return {worst <= 1e-10 && t == 4.0,
          Fmt("50 instances, max |err| %.1e; paired t = %.17g", worst, t)};
}

std::string ReadAll(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome Determinism() {
  const auto dir = std::filesystem::temp_directory_path() / "asymfuse_acceptance_det";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  RunConfig c = RunConfig::Defaults();
  c.data.synthetic->n_samples = 120;
  c.train.epochs = 3;
  c.output_dir = (dir / "out").string();
  { std::ofstream(dir / "config.json") << ToJson(c).dump(2); }
  const std::string cmd = std::string(ASYMFUSE_CLI_PATH) + " train --config " +
                          (dir / "config.json").string() + " > " +
                          (dir / "log.txt").string() + " 2>&1";
  const auto ckpt = dir / "out/checkpoints/dafted_seed0.ckpt";
  const auto report = dir / "out/reports/dafted_seed0.json";
  std::string first_ckpt, first_report;
  for (int run = 0; run < 2; ++run) {
    const int status = std::system(cmd.c_str());
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
      return {false, "train exited abnormally: " + ReadAll(dir / "log.txt")};
    }
    if (run == 0) {
      first_ckpt = ReadAll(ckpt);
      first_report = ReadAll(report);
    }
  }
  const bool same_ckpt = !first_ckpt.empty() && ReadAll(ckpt) == first_ckpt;
  const bool same_report = !first_report.empty() && ReadAll(report) == first_report;
  return {same_ckpt && same_report,
          Fmt("two CLI train runs: checkpoint %zu bytes %s, report %zu bytes %s",
              first_ckpt.size(), same_ckpt ? "identical" : "DIFFERENT", first_report.size(),
              same_report ? "identical" : "DIFFERENT")};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace asymfuse

int main(int argc, char** argv) {
  using namespace asymfuse;
  bool strict = false;
  std::set<int> only;
  std::string report_path;
  g_jobs = std::max(1u, std::thread::hardware_concurrency());
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--strict") {
      strict = true;
    } else if (arg == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else if (arg == "--jobs" && i + 1 < argc) {
      g_jobs = std::max(1, std::stoi(argv[++i]));
    } else if (arg == "--report" && i + 1 < argc) {
      report_path = argv[++i];
    } else {
      std::fprintf(stderr, "usage: %s [--strict] [--only N[,N...]] [--jobs J] [--report PATH]\n", argv[0]);
      return 2;
    }
  }

  const std::vector<Criterion> criteria = {
      {1, "loss oracles", LossOracles},
      {2, "end-to-end gradient", GradientSuite},
      {3, "closed-form losses", ClosedForms},
      {4, "architecture invariants", ArchitectureInvariants},
      {5, "directional ablation", DirectionalAblation},
      {6, "decoupling geometry", DecouplingGeometry},
      {7, "unimodal asymmetry", UnimodalAsymmetry},
      {8, "lambda sweep", LambdaSweep},
      {9, "metric oracles", MetricOracles},
      {10, "determinism", Determinism},
  };
  int passed = 0, ran = 0;
  std::string lines;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.contains(c.id)) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    passed += o.pass;
    const std::string line = Fmt("criterion %2d %-24s %s  ", c.id, c.name,
                                 o.pass ? "PASS" : "FAIL") +
                             o.detail + Fmt(" [%.1fs]\n", s);
    lines += line;
    std::fputs(line.c_str(), stdout);
    std::fflush(stdout);
  }
  lines += Fmt("%d/%d criteria passed\n", passed, ran);
  std::printf("%d/%d criteria passed\n", passed, ran);
  if (!report_path.empty()) std::ofstream(report_path) << lines;
  return strict && passed != ran ? 1 : 0;
}
