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
#include <deque>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "mfuse/tensor.hpp"

namespace mfuse {

enum class Mode { kTrain, kEval };

class Graph;

// Handle to a value recorded on a Graph. Cheap to copy; valid as long as the
// owning Graph lives.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return graph_ != nullptr; }
  Graph& graph() const { return *graph_; }
  std::uint32_t id() const noexcept { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  // Gradient of the loss w.r.t. this value; available after Graph::backward.
  const Tensor& grad() const;

 private:
  friend class Graph;
  Var(Graph* graph, std::uint32_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

// Accumulates into the gradients of a primitive's inputs given the primitive's
// output value and the gradient flowing into it. `input_grads[i]` is null when
// input i does not require a gradient.
using BackwardFn = std::function<void(const Tensor& out, const Tensor& out_grad,
                                      std::span<Tensor* const> input_grads)>;

// Tape of primitive applications, recorded in execution order so the tape is
// topologically sorted by construction. One backward pass per tape.
class Graph {
 public:
  explicit Graph(Mode mode = Mode::kTrain, std::uint64_t seed = 0)
      : mode_(mode), seed_(seed) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Mode mode() const noexcept { return mode_; }
  bool training() const noexcept { return mode_ == Mode::kTrain; }

  // Leaf that never receives a gradient.
  Var constant(Tensor value);
  // Leaf that receives a gradient.
  Var variable(Tensor value);
  // Leaf whose gradient is added into `*grad_sink` at the end of backward().
  // The sink must have the value's shape and outlive the backward pass.
  Var parameter(Tensor value, Tensor* grad_sink);

  Var record(std::string_view op, std::span<const Var> inputs, Tensor value,
             BackwardFn backward);

  void backward(Var loss);
  bool backward_done() const noexcept { return backward_done_; }

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const;
  std::string_view op_name(Var v) const;
  std::span<const std::uint32_t> inputs_of(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  // Seed for the next stochastic primitive (dropout). Deterministic in the
  // graph seed and the order in which stochastic primitives are recorded.
  std::uint64_t next_stochastic_seed();

  // Hash of the active/inactive pattern of every relu input seen so far. Two
  // evaluations with equal signatures sit on the same linear piece of every
  // relu, which is what a finite-difference stencil needs.
  void note_kinks(const Tensor& pre_activation);
  std::uint64_t kink_signature() const noexcept { return kink_signature_; }

 private:
  struct Node {
    std::string_view op;
    std::vector<std::uint32_t> inputs;
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
    Tensor* grad_sink = nullptr;
  };

  Var add_leaf(std::string_view op, Tensor value, bool requires_grad,
               Tensor* sink);
  const Node& node(Var v) const;
  void ensure_grad(Node& n);

  Mode mode_;
  std::uint64_t seed_;
  std::uint64_t stochastic_counter_ = 0;
  std::uint64_t kink_signature_ = 0xcbf29ce484222325ULL;
  bool backward_done_ = false;
  std::deque<Node> nodes_;  // stable addresses
};

}  // namespace mfuse
