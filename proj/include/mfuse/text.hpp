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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mfuse/graph.hpp"
#include "mfuse/parameters.hpp"
#include "mfuse/random.hpp"

namespace mfuse {

namespace special_tokens {
inline constexpr std::string_view kPad = "<pad>";
inline constexpr std::string_view kUnk = "<unk>";
inline constexpr std::string_view kUser = "<user>";
inline constexpr std::string_view kHashtag = "<hashtag>";
inline constexpr std::string_view kNumber = "<number>";
inline constexpr std::string_view kUrl = "<url>";
}  // namespace special_tokens

// Tweet tokenization: whitespace split; URLs -> <url>; @mention -> <user>;
// #tag -> <hashtag> followed by the tag body; bare numbers -> <number>;
// other tokens lowercased with surrounding punctuation stripped.
std::vector<std::string> preprocess_tweet_text(std::string_view raw);
std::string detokenize(std::span<const std::string> tokens);

// Dense token index. The six special tokens always occupy indices 0..5 in the
// order pad, unk, user, hashtag, number, url.
class Vocabulary {
 public:
  Vocabulary();

  // Specials followed by every token of `texts` in first-seen order.
  static Vocabulary build(std::span<const std::vector<std::string>> texts);
  // One token per line; index = line number. Specials must lead the file.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::int64_t add(std::string_view token);
  std::optional<std::int64_t> find(std::string_view token) const;
  // Unknown tokens map to <unk>.
  std::int64_t index_of(std::string_view token) const;
  std::vector<std::int64_t> encode(std::span<const std::string> tokens) const;

  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  std::size_t size() const noexcept { return tokens_.size(); }
  std::int64_t pad_index() const noexcept { return 0; }
  std::int64_t unk_index() const noexcept { return 1; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int64_t> index_;
};

struct TextEncoderConfig {
  std::size_t embedding_dim = 100;
  std::size_t hidden_dim = 150;
  std::size_t vocab_size = 6;

  void validate() const;
};

// Adds `<prefix>.embedding` [V,E] (uniform +-0.05) and a single-layer LSTM
// `<prefix>.lstm.{w_x,w_h,b}` with gates packed as (input, forget, cell,
// output).
void init_text_encoder(ParameterStore& store, const std::string& prefix,
                       const TextEncoderConfig& config, Rng& rng);

// Overwrites embedding rows from a "token v1 ... vE" text file. Returns the
// number of vocabulary rows set.
std::size_t import_embeddings(ParameterStore& store, const std::string& prefix,
                              const Vocabulary& vocab, const std::filesystem::path& path);

using TokenBatch = std::span<const std::vector<std::int64_t>>;

// Final LSTM hidden state per sequence, [N, hidden]. Empty sequences encode
// to zeros.
Var encode_text(ParamScope& scope, const std::string& prefix, TokenBatch batch);

// Adds the 2-way head `<prefix>.head.{w,b}` used by the text-only classifier.
void init_text_classifier_head(ParameterStore& store, const std::string& prefix,
                               std::size_t hidden_dim, Rng& rng);
// Logits [N,2] = affine(final hidden state).
Var lstm_text_classifier_forward(ParamScope& scope, const std::string& prefix, TokenBatch batch);

}  // namespace mfuse
