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

#include "mfuse/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <sstream>

#include "mfuse/error.hpp"

namespace mfuse {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool valid_key(std::string_view key) {
  if (key.empty() || key.front() == '.' || key.back() == '.') return false;
  for (char c : key) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '.';
    if (!ok) return false;
  }
  return true;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
  fail(ErrorKind::kConfig, "config key '" + key + "': '" + value + "' is not " + what);
}

template <typename T>
T parse_unsigned(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, value, "a non-negative integer");
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string join_sizes(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

Config Config::parse(std::istream& in, const std::string& source) {
  Config cfg;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    const std::string where = source + ":" + std::to_string(number);
    if (eq == std::string::npos) fail(ErrorKind::kConfig, where + ": expected key = value");
    const std::string key = trim(std::string_view(text).substr(0, eq));
    if (!valid_key(key)) fail(ErrorKind::kConfig, where + ": invalid key '" + key + "'");
    if (cfg.contains(key)) fail(ErrorKind::kConfig, where + ": duplicate key '" + key + "'");
    cfg.values_[key] = trim(std::string_view(text).substr(eq + 1));
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot read config file " + path.string());
  return parse(in, path.string());
}

void Config::set(const std::string& key, const std::string& value) {
  if (!valid_key(key)) fail(ErrorKind::kConfig, "invalid config key '" + key + "'");
  values_[key] = value;
}

void Config::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    fail(ErrorKind::kConfig, "override '" + std::string(assignment) + "' is not key=value");
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::merge(const Config& overrides) {
  for (const auto& [k, v] : overrides.values_) values_[k] = v;
}

std::optional<std::string> Config::raw(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) {
  const std::string v = raw(key).value_or(fallback);
  resolved_[key] = v;
  return v;
}

std::optional<std::string> Config::get_optional(const std::string& key) {
  auto v = raw(key);
  if (v && !v->empty()) {
    resolved_[key] = *v;
    return v;
  }
  if (v) resolved_[key] = "";
  return std::nullopt;
}

double Config::get_double(const std::string& key, double fallback) {
  double out = fallback;
  if (auto v = raw(key)) {
    char* end = nullptr;
    out = std::strtod(v->c_str(), &end);
    if (v->empty() || end != v->c_str() + v->size() || !std::isfinite(out)) {
      bad_value(key, *v, "a finite number");
    }
  }
  resolved_[key] = format_double(out);
  return out;
}

std::size_t Config::get_size(const std::string& key, std::size_t fallback) {
  std::size_t out = fallback;
  if (auto v = raw(key)) out = parse_unsigned<std::size_t>(key, *v);
  resolved_[key] = std::to_string(out);
  return out;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) {
  std::uint64_t out = fallback;
  if (auto v = raw(key)) out = parse_unsigned<std::uint64_t>(key, *v);
  resolved_[key] = std::to_string(out);
  return out;
}

bool Config::get_bool(const std::string& key, bool fallback) {
  bool out = fallback;
  if (auto v = raw(key)) {
    if (*v == "true" || *v == "1") {
      out = true;
    } else if (*v == "false" || *v == "0") {
      out = false;
    } else {
      bad_value(key, *v, "a boolean (true/false)");
    }
  }
  resolved_[key] = out ? "true" : "false";
  return out;
}

std::vector<std::size_t> Config::get_sizes(const std::string& key,
                                           const std::vector<std::size_t>& fallback) {
  std::vector<std::size_t> out = fallback;
  if (auto v = raw(key)) {
    out.clear();
    std::stringstream in(*v);
    std::string part;
    while (std::getline(in, part, ',')) {
      const std::size_t n = parse_unsigned<std::size_t>(key, trim(part));
      if (n == 0) bad_value(key, *v, "a list of positive integers");
      out.push_back(n);
    }
    if (out.empty()) bad_value(key, *v, "a list of positive integers");
  }
  resolved_[key] = join_sizes(out);
  return out;
}

std::vector<std::string> Config::unconsumed() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) {
    if (!resolved_.count(k)) out.push_back(k);
  }
  return out;
}

void Config::require_all_consumed() const {
  std::string unknown;
  for (const auto& [k, v] : values_) {
    if (resolved_.count(k)) continue;
    if (!unknown.empty()) unknown += ", ";
    unknown += k;
  }
  if (!unknown.empty()) fail(ErrorKind::kConfig, "unknown config keys for this command: " + unknown);
}

std::string Config::serialize() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

}  // namespace mfuse
