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

#include <stdexcept>
#include <string>

namespace mfuse {

// Broad failure classes. The C API and the CLI map these onto status codes
// and exit codes respectively.
enum class ErrorKind {
  kInvalidArgument,  // shape mismatch, bad attribute, out-of-range value
  kConfig,           // unparseable or inconsistent configuration
  kIo,               // unreadable/unwritable file
  kData,             // malformed records, insufficient data
  kPrecondition,     // metric or operation precondition not met
  kNumeric,          // non-finite values, divergence
  kState,            // API misuse (e.g. second backward pass)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

const char* error_kind_name(ErrorKind kind) noexcept;

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace mfuse
