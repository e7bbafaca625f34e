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

#include <cmath>
#include <string>

#include "mfuse/ops.hpp"
#include "mfuse/parameters.hpp"
#include "mfuse/random.hpp"

// Parameter-naming helpers shared by the encoders and fusion heads.
namespace mfuse::layers {

inline void init_uniform(Tensor& t, double bound, Rng& rng) {
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
}

// He-uniform weights `<prefix>.w` [in,out] and optional zero bias
// `<prefix>.b` [out]. Layers feeding batch norm go without: its beta already
// provides the shift and a bias there would get an identically zero gradient.
inline void init_dense(ParameterStore& store, const std::string& prefix, std::size_t in,
                       std::size_t out, Rng& rng, bool bias = true) {
  Tensor w({in, out});
  init_uniform(w, std::sqrt(6.0 / static_cast<double>(in)), rng);
  store.add(prefix + ".w", std::move(w));
  if (bias) store.add(prefix + ".b", Tensor({out}, 0.0));
}

inline void init_conv(ParameterStore& store, const std::string& prefix, std::size_t k,
                      std::size_t in, std::size_t out, Rng& rng, bool bias = true) {
  Tensor w({k, k, in, out});
  init_uniform(w, std::sqrt(6.0 / static_cast<double>(k * k * in)), rng);
  store.add(prefix + ".w", std::move(w));
  if (bias) store.add(prefix + ".b", Tensor({out}, 0.0));
}

inline void init_batch_norm(ParameterStore& store, const std::string& prefix, std::size_t c) {
  store.add(prefix + ".gamma", Tensor({c}, 1.0));
  store.add(prefix + ".beta", Tensor({c}, 0.0));
  store.add(prefix + ".mean", Tensor({c}, 0.0), false);
  store.add(prefix + ".var", Tensor({c}, 1.0), false);
}

inline Var dense(ParamScope& s, const std::string& prefix, Var x, bool bias = true) {
  Var y = ops::matmul(x, s.get(prefix + ".w"));
  return bias ? ops::add_bias(y, s.get(prefix + ".b")) : y;
}

inline Var conv(ParamScope& s, const std::string& prefix, Var x, const ops::Conv2dAttrs& attrs,
                bool bias = true) {
  Var y = ops::conv2d(x, s.get(prefix + ".w"), attrs);
  return bias ? ops::add_bias(y, s.get(prefix + ".b")) : y;
}

inline Var batch_norm(ParamScope& s, const std::string& prefix, Var x) {
  return ops::batch_norm(x, s.get(prefix + ".gamma"), s.get(prefix + ".beta"),
                         &s.buffer(prefix + ".mean"), &s.buffer(prefix + ".var"));
}

}  // namespace mfuse::layers
