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

#include "mfuse/optim.hpp"

#include <cmath>
#include <string>

#include "mfuse/error.hpp"

namespace mfuse {

void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
               AdamState& state) {
  if (params.size() != grads.size()) {
    fail(ErrorKind::kInvalidArgument, "adam_step: " + std::to_string(params.size()) +
                                          " parameters but " + std::to_string(grads.size()) +
                                          " gradients");
  }
  if (state.m.empty() && state.step == 0) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->shape(), 0.0);
      state.v.emplace_back(p->shape(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    fail(ErrorKind::kInvalidArgument, "adam_step: optimizer state tracks " +
                                          std::to_string(state.m.size()) +
                                          " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Shape& s = params[i]->shape();
    if (grads[i]->shape() != s || state.m[i].shape() != s || state.v[i].shape() != s) {
      fail(ErrorKind::kInvalidArgument,
           "adam_step: parameter " + std::to_string(i) + " has shape " + shape_str(s) +
               " but gradient/moments are " + shape_str(grads[i]->shape()) + "/" +
               shape_str(state.m[i].shape()));
    }
  }

  const AdamConfig& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i]->data();
    const double* g = grads[i]->data();
    double* m = state.m[i].data();
    double* v = state.v[i].data();
    for (std::size_t j = 0; j < params[i]->size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      p[j] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

void Adam::step(ParameterStore& store) {
  std::vector<Tensor*> params;
  std::vector<const Tensor*> grads;
  for (auto& [name, p] : store) {
    if (!p.trainable) continue;
    params.push_back(&p.value);
    grads.push_back(&p.grad);
  }
  adam_step(params, grads, state_);
}

}  // namespace mfuse
