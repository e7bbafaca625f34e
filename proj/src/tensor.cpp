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

#include "mfuse/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "mfuse/error.hpp"

namespace mfuse {

const char* error_kind_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid argument";
    case ErrorKind::kConfig: return "config error";
    case ErrorKind::kIo: return "i/o error";
    case ErrorKind::kData: return "data error";
    case ErrorKind::kPrecondition: return "precondition failed";
    case ErrorKind::kNumeric: return "numeric failure";
    case ErrorKind::kState: return "invalid state";
  }
  return "error";
}

std::size_t shape_size(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

void check_extents(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) {
      fail(ErrorKind::kInvalidArgument,
           "tensor extents must be positive, got " + shape_str(shape));
    }
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), values_(shape_size(shape_), fill) {
  check_extents(shape_);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  check_extents(shape_);
  if (values_.size() != shape_size(shape_)) {
    fail(ErrorKind::kInvalidArgument,
         "tensor of shape " + shape_str(shape_) + " needs " +
             std::to_string(shape_size(shape_)) + " values, got " +
             std::to_string(values_.size()));
  }
}

double Tensor::item() const {
  if (values_.size() != 1) {
    fail(ErrorKind::kInvalidArgument,
         "item() on tensor of shape " + shape_str(shape_));
  }
  return values_[0];
}

void Tensor::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != values_.size()) {
    fail(ErrorKind::kInvalidArgument, "cannot reshape " + shape_str(shape_) +
                                          " to " + shape_str(shape));
  }
  return Tensor(std::move(shape), values_);
}

}  // namespace mfuse
