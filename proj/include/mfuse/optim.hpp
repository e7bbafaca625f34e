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
#include <span>
#include <vector>

#include "mfuse/parameters.hpp"
#include "mfuse/tensor.hpp"

namespace mfuse {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor> m;  // first moments, zero-initialized on first step
  std::vector<Tensor> v;  // second moments
};

// One bias-corrected ADAM update of `params` in place.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
               AdamState& state);

// Convenience over a ParameterStore: updates trainable entries in name order.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) { state_.config = config; }

  void step(ParameterStore& store);
  const AdamState& state() const noexcept { return state_; }

 private:
  AdamState state_;
};

}  // namespace mfuse
