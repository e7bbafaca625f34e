/*
 * Copyright 2026 The mfuse Authors.
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

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mfuse/graph.hpp"

// Differentiable primitives. Image-like tensors are laid out NHWC. Every
// primitive validates its input shapes and throws Error(kInvalidArgument)
// naming itself and the offending extents.
namespace mfuse::ops {

// [m,k] x [k,n] -> [m,n]
Var matmul(Var a, Var b);
// x[..., n] + b[n]
Var add_bias(Var x, Var bias);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
// Sum of all elements, rank-0 result.
Var sum(Var x);

Var relu(Var x);
Var sigmoid(Var x);
Var tanh(Var x);

Var concat(std::span<const Var> parts, std::size_t axis);
// Elements [begin, end) along `axis`.
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);
Var reshape(Var x, Shape shape);
// Row i of the result is a[i] when take_a[i] is set, else b[i]. Rows are
// taken along axis 0.
Var row_select(std::span<const std::uint8_t> take_a, Var a, Var b);

enum class Padding { kZero, kReplicate };

struct Conv2dAttrs {
  std::size_t stride = 1;
  std::size_t pad = 0;
  Padding padding = Padding::kZero;
};

// x[N,H,W,Cin], w[kh,kw,Cin,Cout] -> [N,Ho,Wo,Cout]
Var conv2d(Var x, Var w, const Conv2dAttrs& attrs);
Shape conv2d_output_shape(const Shape& x, const Shape& w, const Conv2dAttrs& attrs);

// Convolves per-example 1x1 kernels with a feature map over the channel axis.
// map[N,H,W,D], kernels[N,K,D] -> [N,H,W,K]
Var dynamic_conv1x1(Var map, Var kernels);

// [N,H,W,C] -> [N,C]
Var avg_pool_spatial(Var x);
// [N,C] -> [N,H,W,C]
Var tile_spatial(Var v, std::size_t height, std::size_t width);

struct BatchNormAttrs {
  double momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch
  double epsilon = 1e-5;
};

// Normalizes over every axis but the last. In train mode uses batch
// statistics and, when running statistics are supplied, updates them in
// place. In eval mode uses the running statistics, which are then required.
Var batch_norm(Var x, Var gamma, Var beta, Tensor* running_mean,
               Tensor* running_var, const BatchNormAttrs& attrs = {});

// Inverted dropout: scales kept units by 1/(1-rate) in train mode; identity
// in eval mode or when rate == 0.
Var dropout(Var x, double rate);

// table[V,E], indices in [0,V) -> [indices.size(), E]
Var embedding(Var table, std::span<const std::int64_t> indices);

// Row-wise softmax over the last axis of [N,C].
Var softmax(Var x);

// Mean over the batch of w[y_i] * -log softmax(logits_i)[y_i].
// logits[N,C], labels in [0,C), class_weights of length C.
Var weighted_cross_entropy(Var logits, std::span<const std::int64_t> labels,
                           std::span<const double> class_weights);

// Name + attribute front end over the primitives above, used by the
// gradient-check suite and the C API.
struct PrimitiveSpec {
  std::string name;
  std::map<std::string, double> attrs;
  std::vector<std::int64_t> ints;  // indices, labels, shapes, row masks
  std::vector<double> reals;       // class weights
};

const std::vector<std::string>& primitive_names();

Var apply_primitive(Graph& graph, const PrimitiveSpec& spec,
                    std::span<const Var> inputs);

// Evaluates one primitive on constant inputs.
Tensor eval_primitive(const PrimitiveSpec& spec, std::span<const Tensor> inputs,
                      Mode mode = Mode::kTrain, std::uint64_t seed = 0);

}  // namespace mfuse::ops
