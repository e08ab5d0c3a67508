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

#include "asymfuse/ops.h"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <utility>

#include "asymfuse/errors.h"

namespace asymfuse {
namespace {

using internal::Node;
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutableMap = Eigen::Map<RowMatrix>;

// Output node whose inputs are recorded only when a gradient can flow.
std::shared_ptr<Node> MakeNode(Shape shape, std::vector<double> value,
                               const char* op,
                               std::initializer_list<const Tensor*> inputs) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  if (GradEnabled()) {
    for (const Tensor* t : inputs) {
      if (t->requires_grad()) node->requires_grad = true;
    }
    if (node->requires_grad) {
      for (const Tensor* t : inputs) node->inputs.push_back(t->node_ptr());
    }
  }
  return node;
}

std::shared_ptr<Node> MakeNodeFromList(Shape shape, std::vector<double> value,
                                       const char* op,
                                       std::span<const Tensor> inputs) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  if (GradEnabled()) {
    for (const Tensor& t : inputs) {
      if (t.requires_grad()) node->requires_grad = true;
    }
    if (node->requires_grad) {
      for (const Tensor& t : inputs) node->inputs.push_back(t.node_ptr());
    }
  }
  return node;
}

// Gradient buffer of an input, or nullptr when it does not require one.
std::vector<double>* InputGrad(Node& node, std::size_t i) {
  Node& input = *node.inputs[i];
  if (!input.requires_grad) return nullptr;
  return &input.EnsureGrad();
}

void RequireDefined(const Tensor& t, const char* op) {
  if (!t.defined()) {
    throw ContractError(std::string(op) + ": undefined tensor argument");
  }
}

std::size_t NormalizeAxis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

// outer x len x inner decomposition of a shape around `axis`.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit SplitAt(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// --- Broadcasting ----------------------------------------------------------

bool IsSuffix(const Shape& small, const Shape& large) {
  if (small.size() > large.size()) return false;
  return std::equal(small.begin(), small.end(),
                    large.end() - static_cast<std::ptrdiff_t>(small.size()));
}

struct BroadcastPlan {
  enum class Kind { kSame, kBSuffix, kASuffix, kGeneral };
  Kind kind = Kind::kSame;
  Shape out;
  std::size_t na = 0;
  std::size_t nb = 0;
  std::vector<std::uint32_t> a_index;  // kGeneral only
  std::vector<std::uint32_t> b_index;
};

BroadcastPlan PlanBroadcast(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan plan;
  plan.na = NumElements(a);
  plan.nb = NumElements(b);
  if (a == b) {
    plan.kind = BroadcastPlan::Kind::kSame;
    plan.out = a;
    return plan;
  }
  if (IsSuffix(b, a)) {
    plan.kind = BroadcastPlan::Kind::kBSuffix;
    plan.out = a;
    return plan;
  }
  if (IsSuffix(a, b)) {
    plan.kind = BroadcastPlan::Kind::kASuffix;
    plan.out = b;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  Shape pa(rank - a.size(), 1), pb(rank - b.size(), 1);
  pa.insert(pa.end(), a.begin(), a.end());
  pb.insert(pb.end(), b.begin(), b.end());
  plan.out.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast " +
                           ShapeToString(a) + " with " + ShapeToString(b));
    }
    plan.out[i] = std::max(pa[i], pb[i]);
  }
  std::vector<std::size_t> sa(rank), sb(rank);
  std::size_t stride_a = 1, stride_b = 1;
  for (std::size_t i = rank; i-- > 0;) {
    sa[i] = pa[i] == 1 ? 0 : stride_a;
    sb[i] = pb[i] == 1 ? 0 : stride_b;
    stride_a *= pa[i];
    stride_b *= pb[i];
  }
  const std::size_t n = NumElements(plan.out);
  plan.kind = BroadcastPlan::Kind::kGeneral;
  plan.a_index.resize(n);
  plan.b_index.resize(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < n; ++i) {
    plan.a_index[i] = static_cast<std::uint32_t>(ia);
    plan.b_index[i] = static_cast<std::uint32_t>(ib);
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      ia += sa[d];
      ib += sb[d];
      if (counter[d] < plan.out[d]) break;
      ia -= sa[d] * counter[d];
      ib -= sb[d] * counter[d];
      counter[d] = 0;
    }
  }
  return plan;
}

enum class BinaryOp { kAdd, kSub, kMul, kDiv };

// Calls visit(i, ia, ib) for every output element with the matching input
// offsets, using a dedicated loop for each broadcast kind.
template <typename Visit>
void ForEachPair(const BroadcastPlan& plan, std::size_t n, Visit visit) {
  switch (plan.kind) {
    case BroadcastPlan::Kind::kSame:
      for (std::size_t i = 0; i < n; ++i) visit(i, i, i);
      break;
    case BroadcastPlan::Kind::kBSuffix:
      for (std::size_t base = 0; base < n; base += plan.nb) {
        for (std::size_t j = 0; j < plan.nb; ++j) visit(base + j, base + j, j);
      }
      break;
    case BroadcastPlan::Kind::kASuffix:
      for (std::size_t base = 0; base < n; base += plan.na) {
        for (std::size_t j = 0; j < plan.na; ++j) visit(base + j, j, base + j);
      }
      break;
    case BroadcastPlan::Kind::kGeneral:
      for (std::size_t i = 0; i < n; ++i) {
        visit(i, plan.a_index[i], plan.b_index[i]);
      }
      break;
  }
}

template <BinaryOp kOp>
void BinaryBackward(const BroadcastPlan& plan, Node& self) {
  const std::vector<double>& g = self.grad;
  std::vector<double>* ga = InputGrad(self, 0);
  std::vector<double>* gb = InputGrad(self, 1);
  const double* av = self.inputs[0]->value.data();
  const double* bv = self.inputs[1]->value.data();
  const std::size_t n = g.size();
  if (ga) {
    double* out = ga->data();
    ForEachPair(plan, n, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      if constexpr (kOp == BinaryOp::kAdd || kOp == BinaryOp::kSub) {
        out[ia] += g[i];
      } else if constexpr (kOp == BinaryOp::kMul) {
        out[ia] += g[i] * bv[ib];
      } else {
        out[ia] += g[i] / bv[ib];
      }
    });
  }
  if (gb) {
    double* out = gb->data();
    ForEachPair(plan, n, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      if constexpr (kOp == BinaryOp::kAdd) {
        out[ib] += g[i];
      } else if constexpr (kOp == BinaryOp::kSub) {
        out[ib] -= g[i];
      } else if constexpr (kOp == BinaryOp::kMul) {
        out[ib] += g[i] * av[ia];
      } else {
        out[ib] -= g[i] * av[ia] / (bv[ib] * bv[ib]);
      }
    });
  }
}

template <BinaryOp kOp>
Tensor BinaryImpl(const Tensor& a, const Tensor& b, const char* name) {
  RequireDefined(a, name);
  RequireDefined(b, name);
  auto plan = std::make_shared<BroadcastPlan>(
      PlanBroadcast(a.shape(), b.shape(), name));
  const std::size_t n = NumElements(plan->out);
  std::vector<double> out(n);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  double* ov = out.data();
  ForEachPair(*plan, n, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    if constexpr (kOp == BinaryOp::kAdd) {
      ov[i] = av[ia] + bv[ib];
    } else if constexpr (kOp == BinaryOp::kSub) {
      ov[i] = av[ia] - bv[ib];
    } else if constexpr (kOp == BinaryOp::kMul) {
      ov[i] = av[ia] * bv[ib];
    } else {
      ov[i] = av[ia] / bv[ib];
    }
  });
  auto node = MakeNode(plan->out, std::move(out), name, {&a, &b});
  if (node->requires_grad) {
    node->backward = [plan](Node& self) { BinaryBackward<kOp>(*plan, self); };
  }
  return Tensor::FromNode(std::move(node));
}

Tensor Binary(const Tensor& a, const Tensor& b, BinaryOp op, const char* name) {
  switch (op) {
    case BinaryOp::kAdd:
      return BinaryImpl<BinaryOp::kAdd>(a, b, name);
    case BinaryOp::kSub:
      return BinaryImpl<BinaryOp::kSub>(a, b, name);
    case BinaryOp::kMul:
      return BinaryImpl<BinaryOp::kMul>(a, b, name);
    case BinaryOp::kDiv:
      return BinaryImpl<BinaryOp::kDiv>(a, b, name);
  }
  throw ContractError(std::string(name) + ": unknown binary op");
}

// Elementwise unary op; `derivative(x, y)` gives dy/dx from input and output.
template <typename F, typename D>
Tensor Unary(const Tensor& x, const char* name, F forward, D derivative) {
  RequireDefined(x, name);
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = forward(xv[i]);
  auto node = MakeNode(x.shape(), std::move(out), name, {&x});
  if (node->requires_grad) {
    node->backward = [derivative](Node& self) {
      std::vector<double>* gx = InputGrad(self, 0);
      if (!gx) return;
      const auto& xv = self.inputs[0]->value;
      for (std::size_t i = 0; i < xv.size(); ++i) {
        (*gx)[i] += self.grad[i] * derivative(xv[i], self.value[i]);
      }
    };
  }
  return Tensor::FromNode(std::move(node));
}

void Gemm(const double* a, const double* b, double* c, std::size_t m,
          std::size_t k, std::size_t n) {
  MutableMap(c, m, n).noalias() = ConstMap(a, m, k) * ConstMap(b, k, n);
}

// c += a * b^T, a: m x n, b: k x n.
void GemmAddBt(const double* a, const double* b, double* c, std::size_t m,
               std::size_t n, std::size_t k) {
  MutableMap(c, m, k).noalias() +=
      ConstMap(a, m, n) * ConstMap(b, k, n).transpose();
}

// c += a^T * b, a: m x k, b: m x n.
void GemmAddAt(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n) {
  MutableMap(c, k, n).noalias() +=
      ConstMap(a, m, k).transpose() * ConstMap(b, m, n);
}

}  // namespace

Tensor MatMul(const Tensor& a, const Tensor& b) {
  RequireDefined(a, "MatMul");
  RequireDefined(b, "MatMul");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const auto mismatch = [&]() {
    return DimensionError("MatMul: incompatible shapes " + ShapeToString(sa) +
                          " and " + ShapeToString(sb));
  };
  if (sa.empty() || sb.size() < 2) throw mismatch();
  const std::size_t k = sa.back();
  const std::size_t n = sb.back();
  if (sb[sb.size() - 2] != k) throw mismatch();

  if (sb.size() == 2) {
    // Shared right operand: flatten all leading dims of `a` into rows.
    const std::size_t m = a.size() / std::max<std::size_t>(k, 1);
    Shape out_shape(sa.begin(), sa.end() - 1);
    out_shape.push_back(n);
    std::vector<double> out(m * n);
    Gemm(a.values().data(), b.values().data(), out.data(), m, k, n);
    auto node = MakeNode(std::move(out_shape), std::move(out), "MatMul",
                         {&a, &b});
    if (node->requires_grad) {
      node->backward = [m, k, n](Node& self) {
        const double* g = self.grad.data();
        if (std::vector<double>* ga = InputGrad(self, 0)) {
          GemmAddBt(g, self.inputs[1]->value.data(), ga->data(), m, n, k);
        }
        if (std::vector<double>* gb = InputGrad(self, 1)) {
          GemmAddAt(self.inputs[0]->value.data(), g, gb->data(), m, k, n);
        }
      };
    }
    return Tensor::FromNode(std::move(node));
  }

  // Batched: identical leading dims.
  if (sa.size() != sb.size() || sa.size() < 3 ||
      !std::equal(sa.begin(), sa.end() - 2, sb.begin())) {
    throw mismatch();
  }
  const std::size_t m = sa[sa.size() - 2];
  std::size_t batch = 1;
  for (std::size_t i = 0; i + 2 < sa.size(); ++i) batch *= sa[i];
  Shape out_shape(sa.begin(), sa.end() - 1);
  out_shape.push_back(n);
  std::vector<double> out(batch * m * n);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t p = 0; p < batch; ++p) {
    Gemm(av + p * m * k, bv + p * k * n, out.data() + p * m * n, m, k, n);
  }
  auto node =
      MakeNode(std::move(out_shape), std::move(out), "MatMul", {&a, &b});
  if (node->requires_grad) {
    node->backward = [batch, m, k, n](Node& self) {
      const double* g = self.grad.data();
      std::vector<double>* ga = InputGrad(self, 0);
      std::vector<double>* gb = InputGrad(self, 1);
      const double* av = self.inputs[0]->value.data();
      const double* bv = self.inputs[1]->value.data();
      for (std::size_t p = 0; p < batch; ++p) {
        if (ga) GemmAddBt(g + p * m * n, bv + p * k * n, ga->data() + p * m * k,
                          m, n, k);
        if (gb) GemmAddAt(av + p * m * k, g + p * m * n, gb->data() + p * k * n,
                          m, k, n);
      }
    };
  }
  return Tensor::FromNode(std::move(node));
}

Tensor Add(const Tensor& a, const Tensor& b) {
  return Binary(a, b, BinaryOp::kAdd, "Add");
}
Tensor Sub(const Tensor& a, const Tensor& b) {
  return Binary(a, b, BinaryOp::kSub, "Sub");
}
Tensor Mul(const Tensor& a, const Tensor& b) {
  return Binary(a, b, BinaryOp::kMul, "Mul");
}
Tensor Div(const Tensor& a, const Tensor& b) {
  return Binary(a, b, BinaryOp::kDiv, "Div");
}

Tensor AddScalar(const Tensor& x, double c) {
  return Unary(
      x, "AddScalar", [c](double v) { return v + c; },
      [](double, double) { return 1.0; });
}

Tensor MulScalar(const Tensor& x, double c) {
  return Unary(
      x, "MulScalar", [c](double v) { return v * c; },
      [c](double, double) { return c; });
}

Tensor Exp(const Tensor& x) {
  return Unary(
      x, "Exp", [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor Log(const Tensor& x) {
  return Unary(
      x, "Log", [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor Relu(const Tensor& x) {
  return Unary(
      x, "Relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor Gelu(const Tensor& x) {
  constexpr double kC = 0.044715;
  static const double kS = std::sqrt(2.0 / std::numbers::pi);
  return Unary(
      x, "Gelu",
      [](double v) {
        return 0.5 * v * (1.0 + std::tanh(kS * (v + kC * v * v * v)));
      },
      [](double v, double) {
        const double t = std::tanh(kS * (v + kC * v * v * v));
        return 0.5 * (1.0 + t) +
               0.5 * v * (1.0 - t * t) * kS * (1.0 + 3.0 * kC * v * v);
      });
}

Tensor Softmax(const Tensor& x, int axis) {
  RequireDefined(x, "Softmax");
  const std::size_t ax = NormalizeAxis(axis, x.rank(), "Softmax");
  const AxisSplit s = SplitAt(x.shape(), ax);
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      double max_v = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < s.len; ++j) {
        max_v = std::max(max_v, xv[base + j * s.inner]);
      }
      double total = 0.0;
      for (std::size_t j = 0; j < s.len; ++j) {
        const double e = std::exp(xv[base + j * s.inner] - max_v);
        out[base + j * s.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < s.len; ++j) out[base + j * s.inner] /= total;
    }
  }
  auto node = MakeNode(x.shape(), std::move(out), "Softmax", {&x});
  if (node->requires_grad) {
    node->backward = [s](Node& self) {
      std::vector<double>* gx = InputGrad(self, 0);
      if (!gx) return;
      const auto& y = self.value;
      const auto& g = self.grad;
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t base = o * s.len * s.inner + i;
          double dot = 0.0;
          for (std::size_t j = 0; j < s.len; ++j) {
            const std::size_t idx = base + j * s.inner;
            dot += g[idx] * y[idx];
          }
          for (std::size_t j = 0; j < s.len; ++j) {
            const std::size_t idx = base + j * s.inner;
            (*gx)[idx] += y[idx] * (g[idx] - dot);
          }
        }
      }
    };
  }
  return Tensor::FromNode(std::move(node));
}

Tensor LayerNorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps) {
  RequireDefined(x, "LayerNorm");
  if (x.rank() == 0 || gain.shape() != Shape{x.shape().back()} ||
      bias.shape() != Shape{x.shape().back()}) {
    throw DimensionError("LayerNorm: input " + ShapeToString(x.shape()) +
                         " with gain " + ShapeToString(gain.shape()) +
                         " and bias " + ShapeToString(bias.shape()));
  }
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.size() / d;
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  std::vector<double> out(xv.size());
  std::vector<double> normalized(xv.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mean) * is;
      normalized[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  auto node =
      MakeNode(x.shape(), std::move(out), "LayerNorm", {&x, &gain, &bias});
  if (node->requires_grad) {
    node->backward = [d, rows, normalized = std::move(normalized),
                      inv_std = std::move(inv_std)](Node& self) {
      std::vector<double>* gx = InputGrad(self, 0);
      std::vector<double>* gg = InputGrad(self, 1);
      std::vector<double>* gb = InputGrad(self, 2);
      const auto& g = self.grad;
      const auto& gain = self.inputs[1]->value;
      std::vector<double> dh(d);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* h = normalized.data() + r * d;
        const double* gr = g.data() + r * d;
        if (gg || gb) {
          for (std::size_t j = 0; j < d; ++j) {
            if (gg) (*gg)[j] += gr[j] * h[j];
            if (gb) (*gb)[j] += gr[j];
          }
        }
        if (!gx) continue;
        double sum_dh = 0.0, sum_dh_h = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          dh[j] = gr[j] * gain[j];
          sum_dh += dh[j];
          sum_dh_h += dh[j] * h[j];
        }
        const double scale = inv_std[r] / static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
          (*gx)[r * d + j] += scale * (static_cast<double>(d) * dh[j] - sum_dh -
                                       h[j] * sum_dh_h);
        }
      }
    };
  }
  return Tensor::FromNode(std::move(node));
}

namespace {

Tensor Reduce(const Tensor& x, int axis, bool keep_dim, bool mean,
              const char* name) {
  RequireDefined(x, name);
  const std::size_t ax = NormalizeAxis(axis, x.rank(), name);
  const AxisSplit s = SplitAt(x.shape(), ax);
  const double scale = mean ? 1.0 / static_cast<double>(s.len) : 1.0;
  const auto xv = x.values();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t j = 0; j < s.len; ++j) {
      const double* src = xv.data() + (o * s.len + j) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  if (mean) {
    for (double& v : out) v *= scale;
  }
  Shape out_shape = x.shape();
  if (keep_dim) {
    out_shape[ax] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  }
  auto node = MakeNode(std::move(out_shape), std::move(out), name, {&x});
  if (node->requires_grad) {
    node->backward = [s, scale](Node& self) {
      std::vector<double>* gx = InputGrad(self, 0);
      if (!gx) return;
      for (std::size_t o = 0; o < s.outer; ++o) {
        const double* src = self.grad.data() + o * s.inner;
        for (std::size_t j = 0; j < s.len; ++j) {
          double* dst = gx->data() + (o * s.len + j) * s.inner;
          for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i] * scale;
        }
      }
    };
  }
  return Tensor::FromNode(std::move(node));
}

}  // namespace

Tensor Sum(const Tensor& x, int axis, bool keep_dim) {
  return Reduce(x, axis, keep_dim, /*mean=*/false, "Sum");
}

Tensor Mean(const Tensor& x, int axis, bool keep_dim) {
  return Reduce(x, axis, keep_dim, /*mean=*/true, "Mean");
}

Tensor SumAll(const Tensor& x) {
  return Sum(Reshape(x, Shape{x.size()}), 0);
}

Tensor MeanAll(const Tensor& x) {
  return Mean(Reshape(x, Shape{x.size()}), 0);
}

Tensor Concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw ContractError("Concat: no inputs");
  for (const Tensor& p : parts) RequireDefined(p, "Concat");
  const Shape& first = parts[0].shape();
  const std::size_t ax = NormalizeAxis(axis, first.size(), "Concat");
  Shape out_shape = first;
  out_shape[ax] = 0;
  for (const Tensor& p : parts) {
    const Shape& sp = p.shape();
    bool ok = sp.size() == first.size();
    for (std::size_t i = 0; ok && i < sp.size(); ++i) {
      if (i != ax && sp[i] != first[i]) ok = false;
    }
    if (!ok) {
      throw DimensionError("Concat: shape " + ShapeToString(sp) +
                           " incompatible with " + ShapeToString(first) +
                           " along axis " + std::to_string(ax));
    }
    out_shape[ax] += sp[ax];
  }
  const AxisSplit s = SplitAt(out_shape, ax);
  std::vector<std::size_t> chunk(parts.size());
  for (std::size_t p = 0; p < parts.size(); ++p) {
    chunk[p] = parts[p].shape()[ax] * s.inner;
  }
  std::vector<double> out(NumElements(out_shape));
  std::size_t pos = 0;
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const double* src = parts[p].values().data() + o * chunk[p];
      std::copy(src, src + chunk[p], out.data() + pos);
      pos += chunk[p];
    }
  }
  auto node = MakeNodeFromList(std::move(out_shape), std::move(out), "Concat",
                               parts);
  if (node->requires_grad) {
    node->backward = [s, chunk](Node& self) {
      std::size_t pos = 0;
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t p = 0; p < chunk.size(); ++p) {
          if (std::vector<double>* gp = InputGrad(self, p)) {
            double* dst = gp->data() + o * chunk[p];
            for (std::size_t i = 0; i < chunk[p]; ++i) {
              dst[i] += self.grad[pos + i];
            }
          }
          pos += chunk[p];
        }
      }
    };
  }
  return Tensor::FromNode(std::move(node));
}

Tensor Slice(const Tensor& x, int axis, std::size_t begin, std::size_t end) {
  RequireDefined(x, "Slice");
  const std::size_t ax = NormalizeAxis(axis, x.rank(), "Slice");
  if (begin > end || end > x.shape()[ax]) {
    throw DimensionError("Slice: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") invalid for shape " +
                         ShapeToString(x.shape()) + " on axis " +
                         std::to_string(ax));
  }
  const AxisSplit s = SplitAt(x.shape(), ax);
  const std::size_t width = (end - begin) * s.inner;
  const std::size_t offset = begin * s.inner;
  const std::size_t stride = s.len * s.inner;
  Shape out_shape = x.shape();
  out_shape[ax] = end - begin;
  std::vector<double> out(s.outer * width);
  const auto xv = x.values();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy(xv.data() + o * stride + offset,
              xv.data() + o * stride + offset + width, out.data() + o * width);
  }
  auto node = MakeNode(std::move(out_shape), std::move(out), "Slice", {&x});
  if (node->requires_grad) {
    node->backward = [s, width, offset, stride](Node& self) {
      std::vector<double>* gx = InputGrad(self, 0);
      if (!gx) return;
      for (std::size_t o = 0; o < s.outer; ++o) {
        double* dst = gx->data() + o * stride + offset;
        const double* src = self.grad.data() + o * width;
        for (std::size_t i = 0; i < width; ++i) dst[i] += src[i];
      }
    };
  }
  return Tensor::FromNode(std::move(node));
}

Tensor Transpose(const Tensor& x, int axis0, int axis1) {
  RequireDefined(x, "Transpose");
  std::size_t a0 = NormalizeAxis(axis0, x.rank(), "Transpose");
  std::size_t a1 = NormalizeAxis(axis1, x.rank(), "Transpose");
  if (a0 > a1) std::swap(a0, a1);
  const Shape& in_shape = x.shape();
  Shape out_shape = in_shape;
  std::swap(out_shape[a0], out_shape[a1]);
  // View the input as [pre, d0, mid, d1, post] and swap d0 with d1.
  const auto product = [&](std::size_t from, std::size_t to) {
    std::size_t p = 1;
    for (std::size_t d = from; d < to; ++d) p *= in_shape[d];
    return p;
  };
  const std::array<std::size_t, 5> dims = {
      product(0, a0), in_shape[a0], product(a0 + 1, a1), in_shape[a1],
      product(a1 + 1, in_shape.size())};
  // Copies `from` (input layout) into `to` (output layout), or accumulates
  // the other way round.
  const auto permute = [dims](const double* in, double* out, bool accumulate) {
    const auto [pre, d0, mid, d1, post] = dims;
    for (std::size_t p = 0; p < pre; ++p) {
      for (std::size_t j = 0; j < d1; ++j) {
        for (std::size_t m = 0; m < mid; ++m) {
          for (std::size_t i = 0; i < d0; ++i) {
            const std::size_t o = (((p * d1 + j) * mid + m) * d0 + i) * post;
            const std::size_t s = (((p * d0 + i) * mid + m) * d1 + j) * post;
            for (std::size_t q = 0; q < post; ++q) {
              if (accumulate) {
                out[s + q] += in[o + q];
              } else {
                out[o + q] = in[s + q];
              }
            }
          }
        }
      }
    }
  };
  std::vector<double> out(x.size());
  permute(x.values().data(), out.data(), false);
  auto node = MakeNode(std::move(out_shape), std::move(out), "Transpose", {&x});
  if (node->requires_grad) {
    node->backward = [permute](Node& self) {
      std::vector<double>* gx = InputGrad(self, 0);
      if (!gx) return;
      permute(self.grad.data(), gx->data(), true);
    };
  }
  return Tensor::FromNode(std::move(node));
}

Tensor Reshape(const Tensor& x, Shape shape) {
  RequireDefined(x, "Reshape");
  if (NumElements(shape) != x.size()) {
    throw DimensionError("Reshape: cannot view " + ShapeToString(x.shape()) +
                         " as " + ShapeToString(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  auto node = MakeNode(std::move(shape), std::move(out), "Reshape", {&x});
  if (node->requires_grad) {
    node->backward = [](Node& self) {
      std::vector<double>* gx = InputGrad(self, 0);
      if (!gx) return;
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        (*gx)[i] += self.grad[i];
      }
    };
  }
  return Tensor::FromNode(std::move(node));
}

Tensor CosineSimilarity(const Tensor& u, const Tensor& v) {
  RequireDefined(u, "CosineSimilarity");
  RequireDefined(v, "CosineSimilarity");
  if (u.shape() != v.shape() || u.rank() == 0) {
    throw DimensionError("CosineSimilarity: shapes " +
                         ShapeToString(u.shape()) + " and " +
                         ShapeToString(v.shape()));
  }
  const std::size_t d = u.shape().back();
  const std::size_t rows = u.size() / d;
  const auto uv = u.values();
  const auto vv = v.values();
  std::vector<double> out(rows), nu(rows), nv(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double dot = 0.0, uu = 0.0, vvv = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dot += uv[r * d + j] * vv[r * d + j];
      uu += uv[r * d + j] * uv[r * d + j];
      vvv += vv[r * d + j] * vv[r * d + j];
    }
    if (uu == 0.0 || vvv == 0.0) {
      throw DegenerateInputError(
          "CosineSimilarity: zero-norm vector at row " + std::to_string(r));
    }
    nu[r] = std::sqrt(uu);
    nv[r] = std::sqrt(vvv);
    out[r] = dot / (nu[r] * nv[r]);
  }
  Shape out_shape(u.shape().begin(), u.shape().end() - 1);
  auto node =
      MakeNode(std::move(out_shape), std::move(out), "CosineSimilarity",
               {&u, &v});
  if (node->requires_grad) {
    node->backward = [d, rows, nu = std::move(nu),
                      nv = std::move(nv)](Node& self) {
      std::vector<double>* gu = InputGrad(self, 0);
      std::vector<double>* gv = InputGrad(self, 1);
      const auto& uv = self.inputs[0]->value;
      const auto& vv = self.inputs[1]->value;
      for (std::size_t r = 0; r < rows; ++r) {
        const double g = self.grad[r];
        const double c = self.value[r];
        const double inv = 1.0 / (nu[r] * nv[r]);
        for (std::size_t j = 0; j < d; ++j) {
          const double a = uv[r * d + j];
          const double b = vv[r * d + j];
          if (gu) (*gu)[r * d + j] += g * (b * inv - c * a / (nu[r] * nu[r]));
          if (gv) (*gv)[r * d + j] += g * (a * inv - c * b / (nv[r] * nv[r]));
        }
      }
    };
  }
  return Tensor::FromNode(std::move(node));
}

Tensor PairwiseCosineSimilarity(const Tensor& a, const Tensor& b) {
  RequireDefined(a, "PairwiseCosineSimilarity");
  RequireDefined(b, "PairwiseCosineSimilarity");
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw DimensionError("PairwiseCosineSimilarity: shapes " +
                         ShapeToString(a.shape()) + " and " +
                         ShapeToString(b.shape()));
  }
  const std::size_t n = a.dim(0), m = b.dim(0), d = a.dim(1);
  const auto normalize = [d](std::span<const double> x, std::size_t rows,
                             const char* which) {
    std::vector<double> unit(x.begin(), x.end());
    std::vector<double> norms(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      double ss = 0.0;
      for (std::size_t j = 0; j < d; ++j) ss += x[r * d + j] * x[r * d + j];
      if (ss == 0.0) {
        throw DegenerateInputError(std::string("PairwiseCosineSimilarity: "
                                               "zero-norm row ") +
                                   std::to_string(r) + " in " + which);
      }
      norms[r] = std::sqrt(ss);
      for (std::size_t j = 0; j < d; ++j) unit[r * d + j] /= norms[r];
    }
    return std::make_pair(std::move(unit), std::move(norms));
  };
  auto [ua, na] = normalize(a.values(), n, "first operand");
  auto [ub, nb] = normalize(b.values(), m, "second operand");
  std::vector<double> out(n * m);
  MutableMap(out.data(), n, m).noalias() =
      ConstMap(ua.data(), n, d) * ConstMap(ub.data(), m, d).transpose();
  auto node = MakeNode({n, m}, std::move(out), "PairwiseCosineSimilarity",
                       {&a, &b});
  if (node->requires_grad) {
    node->backward = [n, m, d, ua = std::move(ua), ub = std::move(ub),
                      na = std::move(na), nb = std::move(nb)](Node& self) {
      // d(unit row)/d(row) projects out the radial component.
      const auto back = [d](const std::vector<double>& d_unit,
                            const std::vector<double>& unit,
                            const std::vector<double>& norms, std::size_t rows,
                            std::vector<double>& grad) {
        for (std::size_t r = 0; r < rows; ++r) {
          double radial = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            radial += d_unit[r * d + j] * unit[r * d + j];
          }
          for (std::size_t j = 0; j < d; ++j) {
            grad[r * d + j] +=
                (d_unit[r * d + j] - radial * unit[r * d + j]) / norms[r];
          }
        }
      };
      if (std::vector<double>* ga = InputGrad(self, 0)) {
        std::vector<double> d_unit(n * d);
        MutableMap(d_unit.data(), n, d).noalias() =
            ConstMap(self.grad.data(), n, m) * ConstMap(ub.data(), m, d);
        back(d_unit, ua, na, n, *ga);
      }
      if (std::vector<double>* gb = InputGrad(self, 1)) {
        std::vector<double> d_unit(m * d);
        MutableMap(d_unit.data(), m, d).noalias() =
            ConstMap(self.grad.data(), n, m).transpose() *
            ConstMap(ua.data(), n, d);
        back(d_unit, ub, nb, m, *gb);
      }
    };
  }
  return Tensor::FromNode(std::move(node));
}

Tensor Linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return Add(MatMul(x, w), b);
}

Tensor Neg(const Tensor& x) { return MulScalar(x, -1.0); }

Tensor Square(const Tensor& x) { return Mul(x, x); }

Tensor LogSumExp(const Tensor& x, int axis) {
  const std::size_t ax = NormalizeAxis(axis, x.rank(), "LogSumExp");
  const AxisSplit s = SplitAt(x.shape(), ax);
  // The shift is a constant: the result does not depend on it analytically.
  Shape shift_shape = x.shape();
  shift_shape[ax] = 1;
  std::vector<double> shift(s.outer * s.inner,
                            -std::numeric_limits<double>::infinity());
  const auto xv = x.values();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t j = 0; j < s.len; ++j) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        double& m = shift[o * s.inner + i];
        m = std::max(m, xv[(o * s.len + j) * s.inner + i]);
      }
    }
  }
  Tensor c(shift_shape, std::move(shift));
  Tensor lse = Add(Log(Sum(Exp(Sub(x, c)), axis, /*keep_dim=*/true)), c);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  return Reshape(lse, out_shape);
}

Tensor LogSoftmax(const Tensor& x, int axis) {
  const std::size_t ax = NormalizeAxis(axis, x.rank(), "LogSoftmax");
  Shape keep = x.shape();
  keep[ax] = 1;
  return Sub(x, Reshape(LogSumExp(x, axis), keep));
}

}  // namespace asymfuse
