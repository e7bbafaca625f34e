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

#include "mfuse/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mfuse/error.hpp"

namespace mfuse {

namespace {

struct Evaluation {
  double value;
  std::uint64_t kinks;
};

Evaluation evaluate(const ScalarFn& fn, const std::vector<Tensor>& inputs,
                    const GradCheckOptions& o) {
  Graph graph(o.mode, o.seed);
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) leaves.push_back(graph.constant(t));
  Var out = fn(graph, leaves);
  if (out.value().size() != 1) {
    fail(ErrorKind::kInvalidArgument,
         "check_gradients: function output must be scalar, got " + shape_str(out.shape()));
  }
  return {out.value()[0], graph.kink_signature()};
}

}  // namespace

GradCheckReport check_gradients(const ScalarFn& fn, std::vector<Tensor> inputs,
                                const GradCheckOptions& o) {
  if (!(o.eps > 0.0)) fail(ErrorKind::kInvalidArgument, "check_gradients: eps must be positive");
  for (const Tensor& t : inputs) {
    if (!t.all_finite()) {
      fail(ErrorKind::kInvalidArgument, "check_gradients: inputs must be finite");
    }
  }

  std::vector<Tensor> analytic;
  std::uint64_t kinks = 0;
  {
    Graph graph(o.mode, o.seed);
    std::vector<Var> leaves;
    for (const Tensor& t : inputs) leaves.push_back(graph.variable(t));
    Var out = fn(graph, leaves);
    if (out.value().size() != 1) {
      fail(ErrorKind::kInvalidArgument,
           "check_gradients: function output must be scalar, got " + shape_str(out.shape()));
    }
    kinks = graph.kink_signature();
    graph.backward(out);
    for (const Var& v : leaves) analytic.push_back(v.grad());
  }

  GradCheckReport report;
  bool first = true;
  auto note = [&](double err, std::size_t i, std::size_t j, double a, double numeric) {
    if (first || err > report.max_rel_error) {
      first = false;
      report.max_rel_error = err;
      report.worst_input = i;
      report.worst_index = j;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
  };
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::size_t n = inputs[i].size();
    std::size_t stride = 1;
    if (o.max_coords_per_input > 0 && n > o.max_coords_per_input) {
      stride = (n + o.max_coords_per_input - 1) / o.max_coords_per_input;
    }
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    double worst = -1.0;
    std::size_t worst_j = 0;
    double worst_a = 0.0, worst_n = 0.0;
    for (std::size_t j = 0; j < n; j += stride) {
      const double saved = inputs[i][j];
      inputs[i][j] = saved + o.eps;
      const Evaluation plus = evaluate(fn, inputs, o);
      inputs[i][j] = saved - o.eps;
      const Evaluation minus = evaluate(fn, inputs, o);
      inputs[i][j] = saved;
      if (o.skip_kinks && (plus.kinks != kinks || minus.kinks != kinks)) {
        ++report.coords_skipped;
        continue;
      }

      const double numeric = (plus.value - minus.value) / (2.0 * o.eps);
      const double a = analytic[i][j];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++report.coords_checked;
      if (!o.per_tensor) {
        note(err, i, j, a, numeric);
        continue;
      }
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
      if (err > worst) {
        worst = err;
        worst_j = j;
        worst_a = a;
        worst_n = numeric;
      }
    }
    if (o.per_tensor && worst >= 0.0) {
      const double err = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-8});
      note(err, i, worst_j, worst_a, worst_n);
    }
  }
  return report;
}

}  // namespace mfuse
