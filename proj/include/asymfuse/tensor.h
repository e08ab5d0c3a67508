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

// Dense float64 tensors with reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a graph node. Copies share storage, which is
// how model parameters are held by modules and updated by the optimizer. Every
// operation in ops.h records a closure that propagates the output gradient to
// its inputs; Backward() runs them in reverse topological order.
//
// Gradients accumulate across uses and across Backward() calls. Callers zero
// them between optimization steps.

#ifndef ASYMFUSE_TENSOR_H_
#define ASYMFUSE_TENSOR_H_

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace asymfuse {

using Shape = std::vector<std::size_t>;

std::size_t NumElements(const Shape& shape);
std::string ShapeToString(const Shape& shape);

namespace internal {

struct Node {
  Shape shape;
  std::vector<double> value;
  // Empty until a gradient flows into the node.
  std::vector<double> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;

  std::vector<double>& EnsureGrad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace internal

class Tensor {
 public:
  Tensor() = default;
  // Zero-filled tensor.
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor Scalar(double value, bool requires_grad = false);
  static Tensor Filled(Shape shape, double value, bool requires_grad = false);
  // Row-major 2-D tensor from nested lists; used heavily in tests.
  static Tensor Matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);
  static Tensor Vector(std::initializer_list<double> values,
                       bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double value(std::size_t flat_index) const;
  // Value of a one-element tensor.
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool requires_grad);

  bool has_grad() const;
  // Zero span when no gradient has been accumulated.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void ZeroGrad();

  // Reverse-mode sweep from this scalar. Throws ContractError when the tensor
  // has more than one element.
  void Backward() const;

  // Value copy with no graph history.
  Tensor Detach() const;
  // Deep copy that keeps requires_grad but no history.
  Tensor Clone() const;

  bool AllFinite() const;

  internal::Node* node() const { return node_.get(); }
  const std::shared_ptr<internal::Node>& node_ptr() const { return node_; }
  static Tensor FromNode(std::shared_ptr<internal::Node> node);

 private:
  std::shared_ptr<internal::Node> node_;
};

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool GradEnabled();

// A parameter together with its dotted path inside a model
// (e.g. "tab_encoder.block0.attention.w_q").
struct NamedTensor {
  std::string path;
  Tensor tensor;
};

}  // namespace asymfuse

#endif  // ASYMFUSE_TENSOR_H_
