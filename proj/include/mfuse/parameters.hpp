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

#include <filesystem>
#include <map>
#include <string>

#include "mfuse/graph.hpp"
#include "mfuse/tensor.hpp"

namespace mfuse {

// A named tensor owned by a model. Non-trainable entries are buffers such as
// batch-norm running statistics: checkpointed, never optimized.
struct Parameter {
  Tensor value;
  Tensor grad;
  bool trainable = true;
};

// Name-ordered parameter collection. References returned by add()/at() stay
// valid for the store's lifetime.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Tensor init, bool trainable = true);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  void zero_grad();
  // Number of trainable scalars.
  std::size_t trainable_size() const;
  std::size_t size() const noexcept { return entries_.size(); }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  // Copies values from `other`, which must hold the same names and shapes.
  void assign_values(const ParameterStore& other);
  bool all_finite() const;

 private:
  std::map<std::string, Parameter> entries_;
};

// Per-forward view of a ParameterStore: lazily binds each parameter to a
// graph leaf once, so repeated uses share one gradient accumulator.
class ParamScope {
 public:
  ParamScope(Graph& graph, ParameterStore& store) : graph_(graph), store_(store) {}

  Graph& graph() { return graph_; }
  ParameterStore& store() { return store_; }

  Var get(const std::string& name);
  // Mutable buffer (e.g. running statistics).
  Tensor& buffer(const std::string& name) { return store_.at(name).value; }
  // Uses `v` in place of the stored parameter `name` for this forward pass.
  void bind(const std::string& name, Var v) { bound_[name] = v; }

  // When set, parameters are bound as constants and never receive gradients.
  void set_frozen(bool frozen) { frozen_ = frozen; }

 private:
  Graph& graph_;
  ParameterStore& store_;
  std::map<std::string, Var> bound_;
  bool frozen_ = false;
};

// Checkpoint file: magic "MFUSE1\n", then a little-endian u64 record count
// and per record: u32 name length, name bytes, u8 trainable flag, u32 rank,
// u64 extents, f64 values. Records are written in name order.
void save_checkpoint(const ParameterStore& store, const std::filesystem::path& path);
ParameterStore load_checkpoint(const std::filesystem::path& path);

}  // namespace mfuse
