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

#include "mfuse/text.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mfuse/error.hpp"
#include "mfuse/ops.hpp"

namespace mfuse {

namespace {

constexpr std::array<std::string_view, 6> kSpecials = {
    special_tokens::kPad,     special_tokens::kUnk,    special_tokens::kUser,
    special_tokens::kHashtag, special_tokens::kNumber, special_tokens::kUrl};

bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 128 && std::ispunct(u);
}

bool is_special(std::string_view t) {
  return std::find(kSpecials.begin(), kSpecials.end(), t) != kSpecials.end();
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) != prefix[i]) return false;
  }
  return true;
}

bool is_url(std::string_view s) {
  return starts_with_ci(s, "http://") || starts_with_ci(s, "https://") ||
         starts_with_ci(s, "www.");
}

// Digits with optional '.' or ',' separators, starting and ending in a digit.
bool is_number(std::string_view s) {
  if (s.empty() || !std::isdigit(static_cast<unsigned char>(s.front())) ||
      !std::isdigit(static_cast<unsigned char>(s.back()))) {
    return false;
  }
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == ',';
  });
}

// Lowercase, strip surrounding punctuation, map numbers. Empty result means
// the token vanishes.
std::string plain_token(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_ascii_punct(s[b])) ++b;
  while (e > b && is_ascii_punct(s[e - 1])) --e;
  std::string out(s.substr(b, e - b));
  for (char& c : out) {
    if (static_cast<unsigned char>(c) < 128) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (is_number(out)) return std::string(special_tokens::kNumber);
  return out;
}

std::vector<std::string> split_whitespace(std::string_view raw) {
  std::vector<std::string> out;
  std::istringstream in{std::string(raw)};
  std::string w;
  while (in >> w) out.push_back(std::move(w));
  return out;
}

void init_uniform(Tensor& t, double bound, Rng& rng) {
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
}

}  // namespace

std::vector<std::string> preprocess_tweet_text(std::string_view raw) {
  std::vector<std::string> out;
  for (const std::string& word : split_whitespace(raw)) {
    if (is_special(word)) {
      out.push_back(word);
      continue;
    }
    // Leading punctuation other than the mention/hashtag markers is noise
    // ("(@bob" is still a mention).
    std::string_view w = word;
    while (!w.empty() && is_ascii_punct(w.front()) && w.front() != '@' && w.front() != '#') {
      w.remove_prefix(1);
    }
    if (w.size() > 1 && w.front() == '@') {
      out.emplace_back(special_tokens::kUser);
    } else if (w.size() > 1 && w.front() == '#') {
      out.emplace_back(special_tokens::kHashtag);
      std::string body = plain_token(w.substr(1));
      if (!body.empty()) out.push_back(std::move(body));
    } else if (is_url(w)) {
      out.emplace_back(special_tokens::kUrl);
    } else {
      std::string t = plain_token(w);
      if (!t.empty()) out.push_back(std::move(t));
    }
  }
  return out;
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

Vocabulary::Vocabulary() {
  for (std::string_view s : kSpecials) add(s);
}

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> texts) {
  Vocabulary v;
  for (const auto& tokens : texts) {
    for (const std::string& t : tokens) v.add(t);
  }
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot read vocabulary " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.size() < kSpecials.size()) {
    fail(ErrorKind::kData, "vocabulary " + path.string() + " is missing special tokens");
  }
  for (std::size_t i = 0; i < kSpecials.size(); ++i) {
    if (lines[i] != kSpecials[i]) {
      fail(ErrorKind::kData, "vocabulary " + path.string() + " line " + std::to_string(i + 1) +
                                 ": expected " + std::string(kSpecials[i]));
    }
  }
  Vocabulary v;
  for (std::size_t i = kSpecials.size(); i < lines.size(); ++i) {
    if (lines[i].empty() || v.find(lines[i])) {
      fail(ErrorKind::kData, "vocabulary " + path.string() + " line " + std::to_string(i + 1) +
                                 ": empty or duplicate token");
    }
    v.add(lines[i]);
  }
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write vocabulary " + path.string());
  for (const std::string& t : tokens_) out << t << '\n';
}

std::int64_t Vocabulary::add(std::string_view token) {
  if (auto i = find(token)) return *i;
  const auto index = static_cast<std::int64_t>(tokens_.size());
  tokens_.emplace_back(token);
  index_.emplace(tokens_.back(), index);
  return index;
}

std::optional<std::int64_t> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::int64_t Vocabulary::index_of(std::string_view token) const {
  return find(token).value_or(unk_index());
}

std::vector<std::int64_t> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<std::int64_t> out;
  out.reserve(tokens.size());
  for (const std::string& t : tokens) out.push_back(index_of(t));
  return out;
}

void TextEncoderConfig::validate() const {
  if (embedding_dim == 0 || hidden_dim == 0) {
    fail(ErrorKind::kConfig, "text encoder dimensions must be positive");
  }
  if (vocab_size < kSpecials.size()) {
    fail(ErrorKind::kConfig, "vocabulary size must cover the special tokens");
  }
}

void init_text_encoder(ParameterStore& store, const std::string& prefix,
                       const TextEncoderConfig& config, Rng& rng) {
  config.validate();
  const std::size_t e = config.embedding_dim, h = config.hidden_dim;
  Tensor table({config.vocab_size, e});
  init_uniform(table, 0.05, rng);
  store.add(prefix + ".embedding", std::move(table));

  const double bound = 1.0 / std::sqrt(static_cast<double>(h));
  Tensor w_x({e, 4 * h}), w_h({h, 4 * h}), b({4 * h}, 0.0);
  init_uniform(w_x, bound, rng);
  init_uniform(w_h, bound, rng);
  for (std::size_t j = h; j < 2 * h; ++j) b[j] = 1.0;  // forget gate
  store.add(prefix + ".lstm.w_x", std::move(w_x));
  store.add(prefix + ".lstm.w_h", std::move(w_h));
  store.add(prefix + ".lstm.b", std::move(b));
}

std::size_t import_embeddings(ParameterStore& store, const std::string& prefix,
                              const Vocabulary& vocab, const std::filesystem::path& path) {
  Tensor& table = store.at(prefix + ".embedding").value;
  const std::size_t e = table.dim(1);
  if (table.dim(0) != vocab.size()) {
    fail(ErrorKind::kInvalidArgument, "embedding table has " + std::to_string(table.dim(0)) +
                                          " rows but vocabulary has " +
                                          std::to_string(vocab.size()));
  }
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot read embeddings " + path.string());
  std::size_t set = 0, number = 0;
  std::string line;
  std::vector<double> row;
  while (std::getline(in, line)) {
    ++number;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    row.clear();
    double v;
    while (fields >> v) row.push_back(v);
    if (!fields.eof() || row.size() != e) {
      fail(ErrorKind::kData, path.string() + ":" + std::to_string(number) + ": expected " +
                                 std::to_string(e) + " numeric values after the token");
    }
    auto index = vocab.find(token);
    if (!index) continue;
    std::copy(row.begin(), row.end(), table.data() + static_cast<std::size_t>(*index) * e);
    ++set;
  }
  return set;
}

Var encode_text(ParamScope& scope, const std::string& prefix, TokenBatch batch) {
  Var table = scope.get(prefix + ".embedding");
  Var w_x = scope.get(prefix + ".lstm.w_x");
  Var w_h = scope.get(prefix + ".lstm.w_h");
  Var b = scope.get(prefix + ".lstm.b");
  const std::size_t n = batch.size();
  const std::size_t h = w_h.shape()[0];
  if (n == 0) fail(ErrorKind::kInvalidArgument, "encode_text: empty batch");

  std::size_t steps = 0;
  for (const auto& seq : batch) steps = std::max(steps, seq.size());

  Graph& g = scope.graph();
  Var hidden = g.constant(Tensor({n, h}, 0.0));
  Var cell = hidden;
  std::vector<std::int64_t> ids(n);
  std::vector<std::uint8_t> active(n);
  for (std::size_t t = 0; t < steps; ++t) {
    bool all_active = true;
    for (std::size_t i = 0; i < n; ++i) {
      active[i] = t < batch[i].size();
      ids[i] = active[i] ? batch[i][t] : 0;
      all_active = all_active && active[i];
    }
    Var x = ops::embedding(table, ids);
    Var z = ops::add_bias(ops::add(ops::matmul(x, w_x), ops::matmul(hidden, w_h)), b);
    Var in_gate = ops::sigmoid(ops::slice(z, 1, 0, h));
    Var forget = ops::sigmoid(ops::slice(z, 1, h, 2 * h));
    Var candidate = ops::tanh(ops::slice(z, 1, 2 * h, 3 * h));
    Var out_gate = ops::sigmoid(ops::slice(z, 1, 3 * h, 4 * h));
    Var next_cell = ops::add(ops::mul(forget, cell), ops::mul(in_gate, candidate));
    Var next_hidden = ops::mul(out_gate, ops::tanh(next_cell));
    if (all_active) {
      cell = next_cell;
      hidden = next_hidden;
    } else {
      // Finished sequences carry their last state forward.
      cell = ops::row_select(active, next_cell, cell);
      hidden = ops::row_select(active, next_hidden, hidden);
    }
  }
  return hidden;
}

void init_text_classifier_head(ParameterStore& store, const std::string& prefix,
                               std::size_t hidden_dim, Rng& rng) {
  Tensor w({hidden_dim, 2});
  init_uniform(w, 1.0 / std::sqrt(static_cast<double>(hidden_dim)), rng);
  store.add(prefix + ".head.w", std::move(w));
  store.add(prefix + ".head.b", Tensor({2}, 0.0));
}

Var lstm_text_classifier_forward(ParamScope& scope, const std::string& prefix, TokenBatch batch) {
  Var hidden = encode_text(scope, prefix, batch);
  return ops::add_bias(ops::matmul(hidden, scope.get(prefix + ".head.w")),
                       scope.get(prefix + ".head.b"));
}

}  // namespace mfuse
