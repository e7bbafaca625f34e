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

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <unordered_map>

#include "mfuse/error.hpp"
#include "mfuse/ops.hpp"

namespace mfuse::ops {

namespace {

using Handler = std::function<Var(Graph&, const PrimitiveSpec&, std::span<const Var>)>;

void require_arity(const PrimitiveSpec& spec, std::span<const Var> inputs,
                   std::size_t lo, std::size_t hi) {
  if (inputs.size() < lo || inputs.size() > hi) {
    std::string expected = std::to_string(lo);
    if (hi != lo) expected += hi == SIZE_MAX ? "+" : ".." + std::to_string(hi);
    fail(ErrorKind::kInvalidArgument, "primitive '" + spec.name + "': expects " +
                                          expected + " inputs, got " +
                                          std::to_string(inputs.size()));
  }
}

double attr(const PrimitiveSpec& spec, const std::string& key, double fallback) {
  auto it = spec.attrs.find(key);
  return it == spec.attrs.end() ? fallback : it->second;
}

double required_attr(const PrimitiveSpec& spec, const std::string& key) {
  auto it = spec.attrs.find(key);
  if (it == spec.attrs.end()) {
    fail(ErrorKind::kInvalidArgument,
         "primitive '" + spec.name + "': missing attribute '" + key + "'");
  }
  return it->second;
}

std::size_t count_attr(const PrimitiveSpec& spec, const std::string& key) {
  const double v = required_attr(spec, key);
  if (v < 0 || v != std::floor(v)) {
    fail(ErrorKind::kInvalidArgument, "primitive '" + spec.name + "': attribute '" + key +
                                          "' must be a non-negative integer");
  }
  return static_cast<std::size_t>(v);
}

template <Var (*Fn)(Var)>
Handler unary_handler() {
  return [](Graph&, const PrimitiveSpec& spec, std::span<const Var> in) {
    require_arity(spec, in, 1, 1);
    return Fn(in[0]);
  };
}

template <Var (*Fn)(Var, Var)>
Handler binary_handler() {
  return [](Graph&, const PrimitiveSpec& spec, std::span<const Var> in) {
    require_arity(spec, in, 2, 2);
    return Fn(in[0], in[1]);
  };
}

const std::unordered_map<std::string, Handler>& registry() {
  static const std::unordered_map<std::string, Handler> table = {
      {"matmul", binary_handler<&matmul>()},
      {"add_bias", binary_handler<&add_bias>()},
      {"add", binary_handler<&add>()},
      {"mul", binary_handler<&mul>()},
      {"dynamic_conv1x1", binary_handler<&dynamic_conv1x1>()},
      {"relu", unary_handler<&relu>()},
      {"sigmoid", unary_handler<&sigmoid>()},
      {"tanh", unary_handler<&tanh>()},
      {"sum", unary_handler<&sum>()},
      {"softmax", unary_handler<&softmax>()},
      {"avg_pool_spatial", unary_handler<&avg_pool_spatial>()},
      {"scale",
       [](Graph&, const PrimitiveSpec& s, std::span<const Var> in) {
         require_arity(s, in, 1, 1);
         return scale(in[0], required_attr(s, "factor"));
       }},
      {"concat",
       [](Graph&, const PrimitiveSpec& s, std::span<const Var> in) {
         require_arity(s, in, 1, SIZE_MAX);
         return concat(in, count_attr(s, "axis"));
       }},
      {"slice",
       [](Graph&, const PrimitiveSpec& s, std::span<const Var> in) {
         require_arity(s, in, 1, 1);
         return slice(in[0], count_attr(s, "axis"), count_attr(s, "begin"),
                      count_attr(s, "end"));
       }},
      {"reshape",
       [](Graph&, const PrimitiveSpec& s, std::span<const Var> in) {
         require_arity(s, in, 1, 1);
         Shape shape;
         for (std::int64_t d : s.ints) {
           if (d <= 0) {
             fail(ErrorKind::kInvalidArgument, "primitive 'reshape': extents must be positive");
           }
           shape.push_back(static_cast<std::size_t>(d));
         }
         return reshape(in[0], shape);
       }},
      {"row_select",
       [](Graph&, const PrimitiveSpec& s, std::span<const Var> in) {
         require_arity(s, in, 2, 2);
         std::vector<std::uint8_t> mask;
         for (std::int64_t v : s.ints) mask.push_back(v != 0 ? 1 : 0);
         return row_select(mask, in[0], in[1]);
       }},
      {"conv2d",
       [](Graph&, const PrimitiveSpec& s, std::span<const Var> in) {
         require_arity(s, in, 2, 2);
         Conv2dAttrs a;
         a.stride = static_cast<std::size_t>(attr(s, "stride", 1));
         a.pad = static_cast<std::size_t>(attr(s, "pad", 0));
         a.padding = attr(s, "replicate", 0) != 0 ? Padding::kReplicate : Padding::kZero;
         return conv2d(in[0], in[1], a);
       }},
      {"tile_spatial",
       [](Graph&, const PrimitiveSpec& s, std::span<const Var> in) {
         require_arity(s, in, 1, 1);
         return tile_spatial(in[0], count_attr(s, "height"), count_attr(s, "width"));
       }},
      {"batch_norm",
       [](Graph& g, const PrimitiveSpec& s, std::span<const Var> in) {
         require_arity(s, in, 3, 5);
         if (in.size() == 4) {
           fail(ErrorKind::kInvalidArgument,
                "primitive 'batch_norm': running mean and variance come together");
         }
         BatchNormAttrs a;
         a.momentum = attr(s, "momentum", a.momentum);
         a.epsilon = attr(s, "epsilon", a.epsilon);
         if (in.size() == 5) {
           // Statistics passed as inputs are read-only here; updates go to copies.
           Tensor mean = in[3].value();
           Tensor var = in[4].value();
           return batch_norm(in[0], in[1], in[2], &mean, &var, a);
         }
         if (!g.training()) {
           fail(ErrorKind::kInvalidArgument,
                "primitive 'batch_norm': eval mode requires running statistics");
         }
         return batch_norm(in[0], in[1], in[2], nullptr, nullptr, a);
       }},
      {"dropout",
       [](Graph&, const PrimitiveSpec& s, std::span<const Var> in) {
         require_arity(s, in, 1, 1);
         return dropout(in[0], required_attr(s, "rate"));
       }},
      {"embedding",
       [](Graph&, const PrimitiveSpec& s, std::span<const Var> in) {
         require_arity(s, in, 1, 1);
         return embedding(in[0], s.ints);
       }},
      {"weighted_cross_entropy",
       [](Graph&, const PrimitiveSpec& s, std::span<const Var> in) {
         require_arity(s, in, 1, 1);
         return weighted_cross_entropy(in[0], s.ints, s.reals);
       }},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& primitive_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [name, handler] : registry()) v.push_back(name);
    std::sort(v.begin(), v.end());
    return v;
  }();
  return names;
}

Var apply_primitive(Graph& graph, const PrimitiveSpec& spec, std::span<const Var> inputs) {
  const auto& table = registry();
  auto it = table.find(spec.name);
  if (it == table.end()) {
    fail(ErrorKind::kInvalidArgument, "unknown primitive '" + spec.name + "'");
  }
  return it->second(graph, spec, inputs);
}

Tensor eval_primitive(const PrimitiveSpec& spec, std::span<const Tensor> inputs, Mode mode,
                      std::uint64_t seed) {
  Graph graph(mode, seed);
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(graph.constant(t));
  return apply_primitive(graph, spec, vars).value();
}

}  // namespace mfuse::ops
