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

// Differentiable tensor operations.
//
// The primitive set is closed: every model and loss in the library is built
// from the functions declared in the first block below. The second block
// holds thin compositions of primitives that are used often enough to name.
//
// Axis arguments accept negative values counted from the last axis.

#ifndef ASYMFUSE_OPS_H_
#define ASYMFUSE_OPS_H_

#include <span>
#include <vector>

#include "asymfuse/tensor.h"

namespace asymfuse {

inline constexpr double kLayerNormEpsilon = 1e-5;

// --- Primitives -------------------------------------------------------------

// a: [..., m, k]. b: [k, n] (shared across the leading dims of `a`) or
// [..., k, n] with the same leading dims as `a` (batched product).
Tensor MatMul(const Tensor& a, const Tensor& b);

// Elementwise with NumPy broadcasting.
Tensor Add(const Tensor& a, const Tensor& b);
Tensor Sub(const Tensor& a, const Tensor& b);
Tensor Mul(const Tensor& a, const Tensor& b);
Tensor Div(const Tensor& a, const Tensor& b);

Tensor AddScalar(const Tensor& x, double c);
Tensor MulScalar(const Tensor& x, double c);

Tensor Exp(const Tensor& x);
Tensor Log(const Tensor& x);
Tensor Relu(const Tensor& x);
// Tanh approximation.
Tensor Gelu(const Tensor& x);

// Max-subtracted softmax along `axis`.
Tensor Softmax(const Tensor& x, int axis);

// Normalizes each vector along the last axis to zero mean and unit variance
// (population variance plus `eps`), then applies gain and bias of shape [d].
Tensor LayerNorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps = kLayerNormEpsilon);

Tensor Sum(const Tensor& x, int axis, bool keep_dim = false);
Tensor Mean(const Tensor& x, int axis, bool keep_dim = false);
Tensor SumAll(const Tensor& x);
Tensor MeanAll(const Tensor& x);

Tensor Concat(std::span<const Tensor> parts, int axis);
// Half-open range [begin, end) along `axis`.
Tensor Slice(const Tensor& x, int axis, std::size_t begin, std::size_t end);
Tensor Transpose(const Tensor& x, int axis0, int axis1);
Tensor Reshape(const Tensor& x, Shape shape);

// Cosine similarity along the last axis: [..., d] x [..., d] -> [...].
// Throws DegenerateInputError on a zero-norm vector.
Tensor CosineSimilarity(const Tensor& u, const Tensor& v);
// All-pairs cosine similarity between rows: [n, d] x [m, d] -> [n, m].
Tensor PairwiseCosineSimilarity(const Tensor& a, const Tensor& b);

// --- Compositions -----------------------------------------------------------

// x @ w + b for x: [..., in], w: [in, out], b: [out].
Tensor Linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor Neg(const Tensor& x);
Tensor Square(const Tensor& x);
// log(sum(exp(x))) along `axis`, shifted by a detached per-slice maximum.
Tensor LogSumExp(const Tensor& x, int axis);
Tensor LogSoftmax(const Tensor& x, int axis);

}  // namespace asymfuse

#endif  // ASYMFUSE_OPS_H_
