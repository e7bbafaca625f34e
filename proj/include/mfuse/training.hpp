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
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mfuse/dataset.hpp"
#include "mfuse/evaluation.hpp"
#include "mfuse/fusion.hpp"
#include "mfuse/image.hpp"
#include "mfuse/parameters.hpp"

namespace mfuse {

// One model input: an image (shared, read-only), encoded tweet and image
// texts, and the binary label.
struct Sample {
  std::string id;
  std::shared_ptr<const Image8> image;
  std::vector<std::int64_t> tweet;
  std::vector<std::int64_t> image_text;
  BinaryLabel label = BinaryLabel::kNotHate;
};

struct DataSplits {
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
};

enum class ClassWeightMode { kBalanced, kUniform };

std::string_view class_weight_mode_name(ClassWeightMode m) noexcept;
std::optional<ClassWeightMode> parse_class_weight_mode(std::string_view name) noexcept;

// w_c = N / (C * count_c). Zero counts are rejected.
std::vector<double> class_weights(std::span<const std::size_t> counts);

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  InputMask mask;
  ClassWeightMode weight_mode = ClassWeightMode::kBalanced;
  std::size_t eval_every = 0;  // steps between validation passes; 0 = end of each epoch

  void validate() const;
};

struct EvalPoint {
  std::size_t step = 0;
  double val_auc = 0.0;
};

struct TrainHistory {
  std::vector<double> step_loss;  // index = step
  std::vector<EvalPoint> evals;
  double wall_seconds = 0.0;

  // "step,loss,val_auc"; val_auc is empty on steps without a validation pass.
  void write_csv(std::ostream& out) const;
};

struct TrainResult {
  ParameterStore params;  // best validation AUC, or the final state without validation
  TrainHistory history;
  std::optional<std::size_t> best_step;
  double best_val_auc = 0.0;
  bool diverged = false;
  std::string diagnostic;
};

// Builds a batch. Images are preprocessed with a per-example seed in train
// mode and skipped when the model never reads them.
ModelBatch make_batch(const FusionModelConfig& config, std::span<const Sample* const> samples,
                      Mode mode, const InputMask& mask, std::uint64_t seed);

// The seeded initialization train() starts from when given no `init`.
ParameterStore initial_parameters(const FusionModel& model, const TrainConfig& config);

// `init` replaces the seeded initialization (e.g. a pretrained checkpoint).
TrainResult train(const FusionModel& model, const DataSplits& data, const TrainConfig& config,
                  const ParameterStore* init = nullptr);

// Eval-mode hate probabilities.
std::vector<ScoredExample> score_dataset(const FusionModel& model, ParameterStore& params,
                                         std::span<const Sample> samples, const InputMask& mask,
                                         std::size_t batch_size = 64);

}  // namespace mfuse
