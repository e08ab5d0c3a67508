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

#include "asymfuse/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "asymfuse/errors.h"

namespace asymfuse {
namespace {

thread_local bool grad_enabled = true;

}  // namespace

std::size_t NumElements(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string ShapeToString(const Shape& shape) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << "x";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

Tensor::Tensor(Shape shape, bool requires_grad)
    : node_(std::make_shared<internal::Node>()) {
  node_->value.assign(NumElements(shape), 0.0);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<internal::Node>()) {
  if (NumElements(shape) != values.size()) {
    throw DimensionError("Tensor: shape " + ShapeToString(shape) +
                         " holds " + std::to_string(NumElements(shape)) +
                         " elements but " + std::to_string(values.size()) +
                         " values were given");
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::Scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<double>{value}, requires_grad);
}

Tensor Tensor::Filled(Shape shape, double value, bool requires_grad) {
  std::vector<double> values(NumElements(shape), value);
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::Matrix(std::initializer_list<std::initializer_list<double>> rows,
                      bool requires_grad) {
  const std::size_t n_rows = rows.size();
  const std::size_t n_cols = n_rows == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(n_rows * n_cols);
  for (const auto& row : rows) {
    if (row.size() != n_cols) {
      throw DimensionError("Tensor::Matrix: ragged rows");
    }
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({n_rows, n_cols}, std::move(values), requires_grad);
}

Tensor Tensor::Vector(std::initializer_list<double> values,
                      bool requires_grad) {
  return Tensor({values.size()}, std::vector<double>(values), requires_grad);
}

const Shape& Tensor::shape() const {
  static const Shape kEmpty;
  return node_ ? node_->shape : kEmpty;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("Tensor::dim: axis " + std::to_string(axis) +
                         " out of range for shape " + ShapeToString(shape()));
  }
  return shape()[axis];
}

std::size_t Tensor::size() const { return node_ ? node_->value.size() : 0; }

std::span<const double> Tensor::values() const {
  if (!node_) return {};
  return node_->value;
}

std::span<double> Tensor::mutable_values() {
  if (!node_) return {};
  return node_->value;
}

double Tensor::value(std::size_t flat_index) const {
  return node_->value.at(flat_index);
}

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("Tensor::item on tensor of shape " +
                        ShapeToString(shape()));
  }
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool requires_grad) {
  node_->requires_grad = requires_grad;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!node_) return {};
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() { return node_->EnsureGrad(); }

void Tensor::ZeroGrad() {
  if (node_ && !node_->grad.empty()) {
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }
}

void Tensor::Backward() const {
  if (!node_ || node_->value.size() != 1) {
    throw ContractError("Backward requires a scalar loss, got shape " +
                        ShapeToString(shape()));
  }
  if (!node_->requires_grad) {
    throw ContractError(
        "Backward: loss does not depend on any tensor requiring gradients");
  }

  // Iterative post-order DFS yields a topological order (inputs first).
  std::vector<internal::Node*> order;
  std::unordered_set<internal::Node*> visited;
  std::vector<std::pair<internal::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next_input] = stack.back();
    if (next_input < node->inputs.size()) {
      internal::Node* input = node->inputs[next_input++].get();
      if (input->requires_grad && visited.insert(input).second) {
        stack.emplace_back(input, 0);
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  node_->EnsureGrad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    internal::Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

Tensor Tensor::Detach() const {
  return Tensor(shape(), std::vector<double>(values().begin(), values().end()),
                false);
}

Tensor Tensor::Clone() const {
  return Tensor(shape(), std::vector<double>(values().begin(), values().end()),
                requires_grad());
}

bool Tensor::AllFinite() const {
  for (double v : values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::FromNode(std::shared_ptr<internal::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

NoGradGuard::NoGradGuard() : previous_(grad_enabled) { grad_enabled = false; }
NoGradGuard::~NoGradGuard() { grad_enabled = previous_; }

bool GradEnabled() { return grad_enabled; }

}  // namespace asymfuse
