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

#include "mfuse/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "mfuse/error.hpp"
#include "mfuse/ops.hpp"
#include "mfuse/optim.hpp"
#include "mfuse/random.hpp"

namespace mfuse {

namespace {

// Seed streams, kept apart so that e.g. changing the batch size does not
// change augmentation draws.
constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kAugmentStream = 2;
constexpr std::uint64_t kDropoutStream = 3;
constexpr std::uint64_t kInitStream = 4;

std::vector<std::int64_t> labels_of(std::span<const Sample* const> samples) {
  std::vector<std::int64_t> out;
  out.reserve(samples.size());
  for (const Sample* s : samples) out.push_back(static_cast<std::int64_t>(s->label));
  return out;
}

bool uses_image(const FusionModelConfig& c, const InputMask& mask) {
  return c.variant != Variant::kLstm && mask.image;
}

}  // namespace

std::string_view class_weight_mode_name(ClassWeightMode m) noexcept {
  return m == ClassWeightMode::kBalanced ? "balanced" : "uniform";
}

std::optional<ClassWeightMode> parse_class_weight_mode(std::string_view name) noexcept {
  if (name == "balanced") return ClassWeightMode::kBalanced;
  if (name == "uniform") return ClassWeightMode::kUniform;
  return std::nullopt;
}

std::vector<double> class_weights(std::span<const std::size_t> counts) {
  if (counts.empty()) fail(ErrorKind::kInvalidArgument, "class_weights: no classes");
  std::size_t total = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] == 0) {
      fail(ErrorKind::kPrecondition, "class_weights: class " + std::to_string(i) + " has no examples");
    }
    total += counts[i];
  }
  std::vector<double> w;
  for (std::size_t n : counts) {
    w.push_back(static_cast<double>(total) / (static_cast<double>(counts.size()) * static_cast<double>(n)));
  }
  return w;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) fail(ErrorKind::kConfig, "train.lr must be positive");
  if (batch_size < 1) fail(ErrorKind::kConfig, "train.batch_size must be at least 1");
  if (epochs < 1) fail(ErrorKind::kConfig, "train.epochs must be at least 1");
  mask.validate();
}

void TrainHistory::write_csv(std::ostream& out) const {
  out << "step,loss,val_auc\n";
  std::size_t e = 0;
  char buf[64];
  for (std::size_t step = 0; step < step_loss.size(); ++step) {
    std::snprintf(buf, sizeof(buf), "%.17g", step_loss[step]);
    out << step << ',' << buf << ',';
    while (e < evals.size() && evals[e].step < step) ++e;
    if (e < evals.size() && evals[e].step == step) {
      std::snprintf(buf, sizeof(buf), "%.17g", evals[e].val_auc);
      out << buf;
    }
    out << '\n';
  }
}

ModelBatch make_batch(const FusionModelConfig& config, std::span<const Sample* const> samples,
                      Mode mode, const InputMask& mask, std::uint64_t seed) {
  ModelBatch batch;
  const std::size_t n = samples.size();
  batch.tweet.reserve(n);
  batch.image_text.reserve(n);
  for (const Sample* s : samples) {
    batch.tweet.push_back(s->tweet);
    batch.image_text.push_back(s->image_text);
  }
  if (config.variant == Variant::kLstm) return batch;

  const std::size_t side = config.backbone.input_side;
  batch.images = Tensor({n, side, side, 3}, 0.0);
  if (!uses_image(config, mask)) return batch;
  const std::size_t per = side * side * 3;
  for (std::size_t i = 0; i < n; ++i) {
    if (!samples[i]->image) {
      fail(ErrorKind::kData, "sample '" + samples[i]->id + "' has no image");
    }
    const Tensor t = preprocess_image(to_unit(*samples[i]->image), mode, config.backbone,
                                      derive_seed(seed, i));
    std::copy(t.data(), t.data() + per, batch.images.data() + i * per);
  }
  return batch;
}

std::vector<ScoredExample> score_dataset(const FusionModel& model, ParameterStore& params,
                                         std::span<const Sample> samples, const InputMask& mask,
                                         std::size_t batch_size) {
  if (batch_size == 0) fail(ErrorKind::kInvalidArgument, "score_dataset: batch size must be positive");
  std::vector<ScoredExample> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + batch_size);
    std::vector<const Sample*> chunk;
    for (std::size_t i = start; i < end; ++i) chunk.push_back(&samples[i]);
    const ModelBatch batch = make_batch(model.config(), chunk, Mode::kEval, mask, 0);

    Graph graph(Mode::kEval);
    ParamScope scope(graph, params);
    scope.set_frozen(true);
    const Tensor probs = ops::softmax(model.forward(scope, batch, mask)).value();
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      out.push_back({chunk[i]->id, probs[i * 2 + 1], static_cast<std::int64_t>(chunk[i]->label)});
    }
  }
  return out;
}

ParameterStore initial_parameters(const FusionModel& model, const TrainConfig& config) {
  return model.init_parameters(derive_seed(config.seed, kInitStream));
}

TrainResult train(const FusionModel& model, const DataSplits& data, const TrainConfig& config,
                  const ParameterStore* init) {
  config.validate();
  if (data.train.empty()) fail(ErrorKind::kPrecondition, "train: the training split is empty");
  const auto started = std::chrono::steady_clock::now();

  TrainResult result;
  result.params = init ? *init : initial_parameters(model, config);
  ParameterStore& params = result.params;

  std::vector<double> weights = {1.0, 1.0};
  if (config.weight_mode == ClassWeightMode::kBalanced) {
    std::array<std::size_t, 2> counts{};
    for (const Sample& s : data.train) counts[static_cast<std::size_t>(s.label)] += 1;
    weights = class_weights(counts);
  }

  bool validate_auc = false;
  if (!data.val.empty()) {
    std::size_t pos = 0;
    for (const Sample& s : data.val) pos += s.label == BinaryLabel::kHate;
    validate_auc = pos > 0 && pos < data.val.size();
  }

  Adam adam(AdamConfig{config.lr});
  ParameterStore last_finite = params;
  ParameterStore best;
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(config.seed, kShuffleStream));

  auto run_validation = [&](std::size_t step) {
    if (!validate_auc) return;
    const auto scored = score_dataset(model, params, data.val, config.mask);
    const double auc = auc_roc(scored);
    result.history.evals.push_back({step, auc});
    if (!result.best_step || auc > result.best_val_auc) {
      result.best_step = step;
      result.best_val_auc = auc;
      best = params;
    }
  };

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs && !result.diverged; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    const std::uint64_t epoch_seed = derive_seed(derive_seed(config.seed, kAugmentStream), epoch);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++step) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<const Sample*> chunk;
      for (std::size_t i = start; i < end; ++i) chunk.push_back(&data.train[order[i]]);
      const ModelBatch batch =
          make_batch(model.config(), chunk, Mode::kTrain, config.mask, derive_seed(epoch_seed, start));
      const std::vector<std::int64_t> labels = labels_of(chunk);

      Graph graph(Mode::kTrain, derive_seed(derive_seed(config.seed, kDropoutStream), step));
      ParamScope scope(graph, params);
      params.zero_grad();
      Var loss = ops::weighted_cross_entropy(model.forward(scope, batch, config.mask), labels, weights);
      const double value = loss.value().item();
      result.history.step_loss.push_back(value);
      if (!std::isfinite(value)) {
        result.diverged = true;
        result.diagnostic = "non-finite loss at step " + std::to_string(step) + " (epoch " +
                            std::to_string(epoch) + "); restored the last finite parameters";
        params = last_finite;
        break;
      }
      graph.backward(loss);
      adam.step(params);
      if (!params.all_finite()) {
        result.diverged = true;
        result.diagnostic = "non-finite parameters after step " + std::to_string(step) +
                            "; restored the last finite parameters";
        params = last_finite;
        break;
      }
      last_finite = params;
      if (config.eval_every > 0 && (step + 1) % config.eval_every == 0) run_validation(step);
    }
    if (config.eval_every == 0 && !result.diverged) run_validation(step - 1);
  }

  if (result.best_step) params = std::move(best);
  result.history.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace mfuse
