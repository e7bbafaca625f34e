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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mfuse/dataset.hpp"
#include "mfuse/image.hpp"
#include "mfuse/text.hpp"
#include "mfuse/training.hpp"

namespace mfuse {

// Label rule over two latent bits: t (signal token in the tweet) and v
// (bright patch in the image).
enum class SynthMode { kUnimodalText, kUnimodalImage, kCrossmodalAnd, kCrossmodalXor };

std::string_view synth_mode_name(SynthMode m) noexcept;
std::optional<SynthMode> parse_synth_mode(std::string_view name) noexcept;

struct SynthSpec {
  SynthMode mode = SynthMode::kCrossmodalXor;
  std::size_t n_train = 8000;
  std::size_t n_val = 1000;
  std::size_t n_test = 2000;
  double noise = 0.0;  // label flip probability, all splits
  // Share of train/val examples labeled by the mode's rule; the others are
  // labeled by t alone. Test examples always follow the rule.
  double multimodal_fraction = 1.0;
  std::size_t image_side = 64;
  std::size_t distractor_vocab = 50;
  std::size_t min_tokens = 3;
  std::size_t max_tokens = 6;
  std::string signal_token = "zorp";
  // In and-mode, weight the (1,1) cell by 1/2 and the others by 1/6 so the
  // labels are balanced; otherwise all four cells weigh 1/4.
  bool balance_and_cells = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthExample {
  std::string id;
  Split split = Split::kTrain;
  bool t = false;
  bool v = false;
  bool crossmodal = true;   // labeled by the mode's rule rather than by t
  BinaryLabel label = BinaryLabel::kNotHate;  // after noise
  std::shared_ptr<const Image8> image;
  std::string tweet_text;
  std::string image_text;
};

// Train, then val, then test examples. Each split is generated from its own
// derived seed; within a split the (t, v) cells are filled to exact quotas in
// shuffled order.
std::vector<SynthExample> generate(const SynthSpec& spec);

// P(cell) for t, v in {0,1} under the spec's weighting, indexed [t][v].
std::array<std::array<double, 2>, 2> cell_weights(const SynthSpec& spec);

enum class Evidence { kText, kImage, kBoth };

// Accuracy of the Bayes-optimal predictor that sees only `evidence`, on data
// whose crossmodal share is `multimodal_fraction` and labels carry the spec's
// noise.
double bayes_accuracy(const SynthSpec& spec, Evidence evidence, double multimodal_fraction);

// Vocabulary over the train split's tweet and image texts.
Vocabulary synth_vocabulary(std::span<const SynthExample> examples);
DataSplits to_data_splits(std::span<const SynthExample> examples, const Vocabulary& vocab);

// Writes `corpus.jsonl` (dataset record format, three agreeing synthetic
// annotations per record), `examples.jsonl` with splits, and images/<id>.ppm.
void write_synth_dataset(std::span<const SynthExample> examples, const std::filesystem::path& dir);

}  // namespace mfuse
