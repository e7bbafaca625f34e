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
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mfuse {

// Flat key=value configuration with dotted keys ("train.lr = 1e-4"). Lines
// starting with '#' are comments. Typed getters record the effective value
// of every key they read, so a run can report its fully resolved config and
// reject keys nothing consumed.
class Config {
 public:
  static Config parse(std::istream& in, const std::string& source = "<config>");
  static Config load(const std::filesystem::path& path);

  // Later values win; `assignment` is "key=value".
  void set(const std::string& key, const std::string& value);
  void apply_override(std::string_view assignment);
  void merge(const Config& overrides);

  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> raw(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const noexcept { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback);
  std::optional<std::string> get_optional(const std::string& key);
  double get_double(const std::string& key, double fallback);
  std::size_t get_size(const std::string& key, std::size_t fallback);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  bool get_bool(const std::string& key, bool fallback);
  // Comma-separated positive integers.
  std::vector<std::size_t> get_sizes(const std::string& key, const std::vector<std::size_t>& fallback);

  // Keys no getter has read, in sorted order.
  std::vector<std::string> unconsumed() const;
  // Throws Error(kConfig) naming every key that no getter read.
  void require_all_consumed() const;
  const std::map<std::string, std::string>& resolved() const noexcept { return resolved_; }

  std::string serialize() const;  // sorted "key = value" lines

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> resolved_;
};

std::string join_sizes(const std::vector<std::size_t>& values);
std::string format_double(double v);  // shortest round-trip form

}  // namespace mfuse
