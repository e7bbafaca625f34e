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

#include "mfuse/graph.hpp"

#include <string>

#include "mfuse/error.hpp"
#include "mfuse/random.hpp"

namespace mfuse {

const Tensor& Var::value() const { return graph_->value(*this); }
bool Var::requires_grad() const { return graph_->requires_grad(*this); }
const Tensor& Var::grad() const { return graph_->grad(*this); }

Var Graph::add_leaf(std::string_view op, Tensor value, bool requires_grad,
                    Tensor* sink) {
  if (backward_done_) {
    fail(ErrorKind::kState, "graph already backpropagated; record a new forward pass");
  }
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.grad_sink = sink;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::constant(Tensor value) {
  return add_leaf("constant", std::move(value), false, nullptr);
}

Var Graph::variable(Tensor value) {
  return add_leaf("variable", std::move(value), true, nullptr);
}

Var Graph::parameter(Tensor value, Tensor* grad_sink) {
  if (grad_sink && grad_sink->shape() != value.shape()) {
    fail(ErrorKind::kInvalidArgument,
         "parameter gradient sink has shape " + shape_str(grad_sink->shape()) +
             ", value has " + shape_str(value.shape()));
  }
  return add_leaf("parameter", std::move(value), true, grad_sink);
}

Var Graph::record(std::string_view op, std::span<const Var> inputs,
                  Tensor value, BackwardFn backward) {
  if (backward_done_) {
    fail(ErrorKind::kState, "graph already backpropagated; record a new forward pass");
  }
  Node n;
  n.op = op;
  n.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (in.graph_ != this) {
      fail(ErrorKind::kInvalidArgument,
           std::string("primitive '") + std::string(op) +
               "': input belongs to a different graph");
    }
    n.inputs.push_back(in.id_);
    n.requires_grad = n.requires_grad || nodes_[in.id_].requires_grad;
  }
  n.value = std::move(value);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

const Graph::Node& Graph::node(Var v) const {
  if (v.graph_ != this || v.id_ >= nodes_.size()) {
    fail(ErrorKind::kInvalidArgument, "variable does not belong to this graph");
  }
  return nodes_[v.id_];
}

const Tensor& Graph::value(Var v) const { return node(v).value; }

const Tensor& Graph::grad(Var v) const {
  const Node& n = node(v);
  if (!backward_done_) {
    fail(ErrorKind::kState, "gradient requested before backward()");
  }
  if (!n.has_grad) {
    fail(ErrorKind::kState, "value does not require a gradient");
  }
  return n.grad;
}

bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

std::string_view Graph::op_name(Var v) const { return node(v).op; }

std::span<const std::uint32_t> Graph::inputs_of(Var v) const {
  return node(v).inputs;
}

std::uint64_t Graph::next_stochastic_seed() {
  return derive_seed(seed_, stochastic_counter_++);
}

void Graph::note_kinks(const Tensor& pre_activation) {
  std::uint64_t h = kink_signature_;
  for (double v : pre_activation.values()) h = (h ^ static_cast<std::uint64_t>(v > 0.0)) * 0x100000001b3ULL;
  kink_signature_ = h;
}

void Graph::ensure_grad(Node& n) {
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape(), 0.0);
    n.has_grad = true;
  }
}

void Graph::backward(Var loss) {
  const Node& ln = node(loss);
  if (backward_done_) {
    fail(ErrorKind::kState, "backward() already ran on this graph");
  }
  if (ln.value.size() != 1) {
    fail(ErrorKind::kInvalidArgument,
         "backward() needs a scalar loss, got shape " + shape_str(ln.value.shape()));
  }
  backward_done_ = true;

  Node& root = nodes_[loss.id_];
  if (root.requires_grad) {
    ensure_grad(root);
    root.grad[0] = 1.0;
  }

  std::vector<Tensor*> in_grads;
  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.has_grad || !n.backward) continue;
    in_grads.assign(n.inputs.size(), nullptr);
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      Node& in = nodes_[n.inputs[i]];
      if (!in.requires_grad) continue;
      ensure_grad(in);
      in_grads[i] = &in.grad;
    }
    n.backward(n.value, n.grad, in_grads);
  }

  // Everything that asked for a gradient gets one, zero when off the loss path.
  for (Node& n : nodes_) {
    if (!n.requires_grad) continue;
    ensure_grad(n);
    if (n.grad_sink) {
      double* dst = n.grad_sink->data();
      const double* src = n.grad.data();
      for (std::size_t i = 0; i < n.grad.size(); ++i) dst[i] += src[i];
    }
  }
}

}  // namespace mfuse
