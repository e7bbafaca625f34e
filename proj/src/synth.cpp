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

#include "mfuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mfuse/error.hpp"
#include "mfuse/random.hpp"

namespace mfuse {

namespace {

constexpr std::array<std::string_view, 4> kModeNames = {"unimodal_text", "unimodal_image",
                                                        "crossmodal_and", "crossmodal_xor"};

bool rule(SynthMode mode, bool t, bool v) {
  switch (mode) {
    case SynthMode::kUnimodalText: return t;
    case SynthMode::kUnimodalImage: return v;
    case SynthMode::kCrossmodalAnd: return t && v;
    case SynthMode::kCrossmodalXor: return t != v;
  }
  return false;
}

// Largest-remainder apportionment of n over the weights.
std::vector<std::size_t> quotas(std::size_t n, std::span<const double> weights) {
  std::vector<std::size_t> out(weights.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(n) * weights[i];
    out[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += out[i];
    remainders.emplace_back(exact - static_cast<double>(out[i]), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) out[remainders[k % remainders.size()].second] += 1;
  return out;
}

std::string token_text(const SynthSpec& spec, Rng& rng, bool with_signal) {
  const std::size_t count = spec.min_tokens + rng.below(spec.max_tokens - spec.min_tokens + 1);
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < count; ++i) tokens.push_back("w" + std::to_string(rng.below(spec.distractor_vocab)));
  if (with_signal) tokens[rng.below(count)] = spec.signal_token;
  return detokenize(tokens);
}

std::shared_ptr<const Image8> render_image(const SynthSpec& spec, Rng& rng, bool patch) {
  const std::size_t side = spec.image_side;
  Image8 img{side, side, std::vector<std::uint8_t>(side * side * 3)};
  for (std::uint8_t& p : img.pixels) {
    const double v = std::clamp(0.5 + 0.1 * rng.normal(), 0.0, 1.0);
    p = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  if (patch) {
    const std::size_t s = std::max<std::size_t>(1, side / 4);
    const std::size_t y0 = rng.below(side - s + 1), x0 = rng.below(side - s + 1);
    for (std::size_t y = y0; y < y0 + s; ++y) {
      for (std::size_t x = x0; x < x0 + s; ++x) {
        for (std::size_t c = 0; c < 3; ++c) img.pixels[(y * side + x) * 3 + c] = 255;
      }
    }
  }
  return std::make_shared<const Image8>(std::move(img));
}

void generate_split(const SynthSpec& spec, Split split, std::size_t n,
                    std::vector<SynthExample>& out) {
  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(split)));
  const auto w = cell_weights(spec);
  const std::array<double, 4> flat = {w[0][0], w[0][1], w[1][0], w[1][1]};
  const auto q = quotas(n, flat);
  std::vector<std::uint8_t> cells;
  for (std::uint8_t c = 0; c < 4; ++c) cells.insert(cells.end(), q[c], c);
  rng.shuffle(std::span<std::uint8_t>(cells));

  const double mu = split == Split::kTest ? 1.0 : spec.multimodal_fraction;
  const auto crossmodal_count = static_cast<std::size_t>(std::llround(mu * static_cast<double>(n)));
  std::vector<std::uint8_t> crossmodal(n, 0);
  std::fill(crossmodal.begin(), crossmodal.begin() + static_cast<std::ptrdiff_t>(crossmodal_count), 1);
  rng.shuffle(std::span<std::uint8_t>(crossmodal));

  for (std::size_t i = 0; i < n; ++i) {
    SynthExample ex;
    ex.id = std::string(split_name(split)) + "-" + std::to_string(i);
    ex.split = split;
    ex.t = cells[i] >= 2;
    ex.v = cells[i] % 2 == 1;
    ex.crossmodal = crossmodal[i] != 0;
    bool label = ex.crossmodal ? rule(spec.mode, ex.t, ex.v) : ex.t;
    ex.image = render_image(spec, rng, ex.v);
    ex.tweet_text = token_text(spec, rng, ex.t);
    ex.image_text = token_text(spec, rng, false);
    if (rng.bernoulli(spec.noise)) label = !label;
    ex.label = label ? BinaryLabel::kHate : BinaryLabel::kNotHate;
    out.push_back(std::move(ex));
  }
}

}  // namespace

std::string_view synth_mode_name(SynthMode m) noexcept {
  return kModeNames[static_cast<std::size_t>(m)];
}

std::optional<SynthMode> parse_synth_mode(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kModeNames.size(); ++i) {
    if (kModeNames[i] == name) return static_cast<SynthMode>(i);
  }
  return std::nullopt;
}

void SynthSpec::validate() const {
  if (n_train + n_val + n_test == 0) fail(ErrorKind::kConfig, "synth: all splits are empty");
  if (!(noise >= 0.0 && noise < 0.5)) fail(ErrorKind::kConfig, "synth.noise must lie in [0, 0.5)");
  if (!(multimodal_fraction > 0.0 && multimodal_fraction <= 1.0)) {
    fail(ErrorKind::kConfig, "synth.multimodal_fraction must lie in (0, 1]");
  }
  if (image_side < 4) fail(ErrorKind::kConfig, "synth.image_side must be at least 4");
  if (distractor_vocab == 0) fail(ErrorKind::kConfig, "synth.distractor_vocab must be positive");
  if (min_tokens == 0 || max_tokens < min_tokens) {
    fail(ErrorKind::kConfig, "synth token counts need 1 <= min_tokens <= max_tokens");
  }
  const auto tokens = preprocess_tweet_text(signal_token);
  if (tokens.size() != 1 || tokens[0] != signal_token || signal_token.front() == 'w') {
    fail(ErrorKind::kConfig, "synth.signal_token must be a plain lowercase word not starting with 'w'");
  }
}

std::array<std::array<double, 2>, 2> cell_weights(const SynthSpec& spec) {
  if (spec.mode == SynthMode::kCrossmodalAnd && spec.balance_and_cells) {
    return {{{1.0 / 6, 1.0 / 6}, {1.0 / 6, 1.0 / 2}}};
  }
  return {{{0.25, 0.25}, {0.25, 0.25}}};
}

std::vector<SynthExample> generate(const SynthSpec& spec) {
  spec.validate();
  std::vector<SynthExample> out;
  out.reserve(spec.n_train + spec.n_val + spec.n_test);
  generate_split(spec, Split::kTrain, spec.n_train, out);
  generate_split(spec, Split::kVal, spec.n_val, out);
  generate_split(spec, Split::kTest, spec.n_test, out);
  return out;
}

double bayes_accuracy(const SynthSpec& spec, Evidence evidence, double multimodal_fraction) {
  const auto w = cell_weights(spec);
  // Groups: what the predictor can distinguish.
  std::array<double, 4> p_group{}, p_hate{};
  for (int t = 0; t < 2; ++t) {
    for (int v = 0; v < 2; ++v) {
      const double clean = multimodal_fraction * rule(spec.mode, t, v) + (1.0 - multimodal_fraction) * t;
      const double hate = clean * (1.0 - spec.noise) + (1.0 - clean) * spec.noise;
      const int g = evidence == Evidence::kText ? t : evidence == Evidence::kImage ? v : 2 * t + v;
      p_group[g] += w[t][v];
      p_hate[g] += w[t][v] * hate;
    }
  }
  double acc = 0.0;
  for (std::size_t g = 0; g < 4; ++g) acc += std::max(p_hate[g], p_group[g] - p_hate[g]);
  return acc;
}

Vocabulary synth_vocabulary(std::span<const SynthExample> examples) {
  std::vector<std::vector<std::string>> texts;
  for (const SynthExample& ex : examples) {
    if (ex.split != Split::kTrain) continue;
    texts.push_back(preprocess_tweet_text(ex.tweet_text));
    texts.push_back(preprocess_tweet_text(ex.image_text));
  }
  return Vocabulary::build(texts);
}

DataSplits to_data_splits(std::span<const SynthExample> examples, const Vocabulary& vocab) {
  DataSplits out;
  for (const SynthExample& ex : examples) {
    Sample s{ex.id, ex.image, vocab.encode(preprocess_tweet_text(ex.tweet_text)),
             vocab.encode(preprocess_tweet_text(ex.image_text)), ex.label};
    switch (ex.split) {
      case Split::kTrain: out.train.push_back(std::move(s)); break;
      case Split::kVal: out.val.push_back(std::move(s)); break;
      case Split::kTest: out.test.push_back(std::move(s)); break;
    }
  }
  return out;
}

void write_synth_dataset(std::span<const SynthExample> examples, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "images", ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + (dir / "images").string() + ": " + ec.message());

  std::vector<TweetRecord> records;
  std::vector<LabeledExample> labeled;
  for (const SynthExample& ex : examples) {
    const std::string ref = "images/" + ex.id + ".ppm";
    write_ppm(*ex.image, dir / ref);

    TweetRecord r;
    r.id = ex.id;
    r.tweet_text = ex.tweet_text;
    r.image_ref = ref;
    r.image_text = ex.image_text;
    r.image_text_probability = 0.0;
    const Category c = ex.label == BinaryLabel::kHate ? Category::kOtherHate : Category::kNotHate;
    for (int k = 0; k < 3; ++k) r.annotations.push_back({"synth-" + std::to_string(k), c, 10.0});
    const Aggregate agg = aggregate_annotations(r.annotations);
    LabeledExample le = make_labeled_example(r, agg);
    le.split = ex.split;
    labeled.push_back(std::move(le));
    records.push_back(std::move(r));
  }
  export_corpus(records, dir / "corpus.jsonl");
  write_examples(labeled, dir / "examples.jsonl");
}

}  // namespace mfuse
