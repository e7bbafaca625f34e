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

#include "mfuse/parameters.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "mfuse/error.hpp"

namespace mfuse {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

Parameter& ParameterStore::add(const std::string& name, Tensor init, bool trainable) {
  if (name.empty()) fail(ErrorKind::kInvalidArgument, "parameter name must be non-empty");
  if (entries_.count(name)) {
    fail(ErrorKind::kInvalidArgument, "duplicate parameter '" + name + "'");
  }
  Parameter p;
  p.grad = Tensor(init.shape(), 0.0);
  p.value = std::move(init);
  p.trainable = trainable;
  return entries_.emplace(name, std::move(p)).first->second;
}

Parameter& ParameterStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) fail(ErrorKind::kInvalidArgument, "no parameter '" + name + "'");
  return it->second;
}

const Parameter& ParameterStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) fail(ErrorKind::kInvalidArgument, "no parameter '" + name + "'");
  return it->second;
}

void ParameterStore::zero_grad() {
  for (auto& [name, p] : entries_) p.grad.fill(0.0);
}

std::size_t ParameterStore::trainable_size() const {
  std::size_t n = 0;
  for (const auto& [name, p] : entries_) {
    if (p.trainable) n += p.value.size();
  }
  return n;
}

void ParameterStore::assign_values(const ParameterStore& other) {
  if (other.entries_.size() != entries_.size()) {
    fail(ErrorKind::kInvalidArgument, "parameter sets differ in size");
  }
  for (auto& [name, p] : entries_) {
    const Parameter& src = other.at(name);
    if (src.value.shape() != p.value.shape()) {
      fail(ErrorKind::kInvalidArgument, "parameter '" + name + "' has shape " +
                                            shape_str(src.value.shape()) + ", expected " +
                                            shape_str(p.value.shape()));
    }
    p.value = src.value;
  }
}

bool ParameterStore::all_finite() const {
  for (const auto& [name, p] : entries_) {
    if (!p.value.all_finite()) return false;
  }
  return true;
}

Var ParamScope::get(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Parameter& p = store_.at(name);
  Var v = (frozen_ || !p.trainable) ? graph_.constant(p.value)
                                     : graph_.parameter(p.value, &p.grad);
  bound_.emplace(name, v);
  return v;
}

namespace {

constexpr char kMagic[] = "MFUSE1\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    fail(ErrorKind::kData, "truncated checkpoint " + path.string());
  }
  return value;
}

}  // namespace

void save_checkpoint(const ParameterStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write checkpoint " + path.string());
  out.write(kMagic, kMagicLen);
  put<std::uint64_t>(out, store.size());
  for (const auto& [name, p] : store) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(out, p.trainable ? 1 : 0);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  }
  if (!out) fail(ErrorKind::kIo, "failed writing checkpoint " + path.string());
}

ParameterStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot read checkpoint " + path.string());
  char magic[kMagicLen];
  if (!in.read(magic, kMagicLen) || std::memcmp(magic, kMagic, kMagicLen) != 0) {
    fail(ErrorKind::kData, path.string() + " is not an MFUSE1 checkpoint");
  }
  ParameterStore store;
  const auto count = get<std::uint64_t>(in, path);
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto name_len = get<std::uint32_t>(in, path);
    if (name_len == 0 || name_len > 4096) {
      fail(ErrorKind::kData, "bad parameter name length in " + path.string());
    }
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) {
      fail(ErrorKind::kData, "truncated checkpoint " + path.string());
    }
    const bool trainable = get<std::uint8_t>(in, path) != 0;
    const auto rank = get<std::uint32_t>(in, path);
    if (rank > 8) fail(ErrorKind::kData, "bad rank for '" + name + "' in " + path.string());
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(in, path));
    Tensor value(shape);
    if (!in.read(reinterpret_cast<char*>(value.data()),
                 static_cast<std::streamsize>(value.size() * sizeof(double)))) {
      fail(ErrorKind::kData, "truncated checkpoint " + path.string());
    }
    store.add(name, std::move(value), trainable);
  }
  return store;
}

}  // namespace mfuse
