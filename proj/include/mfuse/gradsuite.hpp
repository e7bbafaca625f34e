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

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mfuse/gradcheck.hpp"
#include "mfuse/ops.hpp"
#include "mfuse/random.hpp"

namespace mfuse {

// One randomly drawn primitive application: spec, inputs, and the mode it
// runs in. Inputs listed in `inputs` are differentiated; `fixed` ones (batch
// norm running statistics) are passed as constants after them.
struct PrimitiveDraw {
  ops::PrimitiveSpec spec;
  std::vector<Tensor> inputs;
  std::vector<Tensor> fixed;
  Mode mode = Mode::kTrain;
};

// Random shapes/values/attributes for `name`, steering clear of relu kinks.
PrimitiveDraw draw_primitive(const std::string& name, Rng& rng);

// Checks sum(r * primitive(inputs)) for a fixed random projection r.
GradCheckReport check_primitive(const PrimitiveDraw& draw, std::uint64_t projection_seed,
                                double eps = 1e-5);

struct SuiteOptions {
  double eps = 1e-5;
  double tolerance = 1e-4;
  std::size_t draws_per_primitive = 100;
  std::uint64_t seed = 0;
  bool include_models = true;
  std::size_t model_coords_per_input = 16;
};

struct SuiteCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coords = 0;
  std::size_t skipped = 0;  // coordinates whose stencil crossed a relu kink
  bool passed = false;
};

// Every primitive (several random draws each), each fusion head with respect
// to its visual and text inputs, and each full model variant at desk scale
// with respect to its parameters.
std::vector<SuiteCheck> run_gradcheck_suite(const SuiteOptions& options);

void write_suite_csv(std::span<const SuiteCheck> checks, std::ostream& out);

}  // namespace mfuse
