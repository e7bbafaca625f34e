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
#include <functional>
#include <span>
#include <vector>

#include "mfuse/graph.hpp"

namespace mfuse {

// Builds a scalar from the given leaves on a fresh graph.
using ScalarFn = std::function<Var(Graph&, std::span<const Var>)>;

struct GradCheckOptions {
  double eps = 1e-5;
  Mode mode = Mode::kTrain;
  std::uint64_t seed = 0;  // graph seed, fixed across evaluations
  // When nonzero, checks at most this many evenly strided coordinates of
  // each input instead of all of them.
  std::size_t max_coords_per_input = 0;
  // Skip coordinates whose stencil x +- eps flips the sign of some relu
  // input: central differences are no oracle across a kink.
  bool skip_kinks = true;
  // Per tensor instead of per coordinate: ||a - n|| / max(||a||, ||n||, 1e-8)
  // over the checked coordinates of each input. Coordinates whose gradient
  // sits near the finite-difference roundoff floor then no longer decide.
  bool per_tensor = false;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t coords_skipped = 0;  // stencil crossed a relu kink
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares reverse-mode gradients of `fn` against central differences.
// Per coordinate the error is |a - n| / max(|a|, |n|, 1e-8); see per_tensor.
// worst_index is the coordinate with the largest error inside worst_input.
GradCheckReport check_gradients(const ScalarFn& fn, std::vector<Tensor> inputs,
                                const GradCheckOptions& options = {});

}  // namespace mfuse
