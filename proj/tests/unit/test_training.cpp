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


#include <array>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mfuse/error.hpp"
#include "mfuse/synth.hpp"
#include "mfuse/training.hpp"

using namespace mfuse;

namespace {

struct SynthData {
  DataSplits splits;
  std::size_t vocab = 0;
};

SynthData synth(SynthMode mode, std::size_t n_train, std::size_t n_val, std::size_t n_test,
                std::uint64_t seed = 1) {
  SynthSpec spec;
  spec.mode = mode;
  spec.n_train = n_train;
  spec.n_val = n_val;
  spec.n_test = n_test;
  spec.seed = seed;
  const std::vector<SynthExample> ex = generate(spec);
  const Vocabulary vocab = synth_vocabulary(ex);
  return {to_data_splits(ex, vocab), vocab.size()};
}

FusionModelConfig model_config(Variant v, std::size_t vocab) {
  FusionModelConfig c = FusionModelConfig::desk(v);
  c.text.vocab_size = vocab;
  return c;
}

bool same_parameters(const ParameterStore& a, const ParameterStore& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, p] : a) {
    if (!b.contains(name) || !(b.at(name).value == p.value)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("class weights") {
  SUBCASE("published corpus counts") {
    const std::array<std::size_t, 2> counts = {112845, 36978};
    const std::vector<double> w = class_weights(counts);
    const double n = 112845.0 + 36978.0;
    CHECK(w[0] == doctest::Approx(n / (2.0 * 112845.0)).epsilon(1e-14));
    CHECK(w[1] == doctest::Approx(n / (2.0 * 36978.0)).epsilon(1e-14));
    CHECK(w[1] >= 2.025);
    CHECK(w[1] <= 2.027);
    CHECK(w[0] >= 0.663);
    CHECK(w[0] <= 0.665);
  }
  SUBCASE("equal counts give unit weights") {
    const std::array<std::size_t, 2> counts = {40, 40};
    CHECK(class_weights(counts) == std::vector<double>{1.0, 1.0});
  }
  SUBCASE("weights average to one over the empirical distribution") {
    const std::array<std::size_t, 3> counts = {7, 120, 33};
    const std::vector<double> w = class_weights(counts);
    double mean = 0.0;
    for (std::size_t c = 0; c < 3; ++c) mean += w[c] * static_cast<double>(counts[c]);
    CHECK(mean / 160.0 == doctest::Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("an empty class is rejected") {
    const std::array<std::size_t, 2> counts = {5, 0};
    CHECK_THROWS_AS(class_weights(counts), Error);
  }
}

TEST_CASE("configuration and preconditions") {
  TrainConfig c;
  CHECK(c.lr == 1e-4);
  CHECK_NOTHROW(c.validate());
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.lr = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK(parse_class_weight_mode("uniform") == ClassWeightMode::kUniform);

  const SynthData d = synth(SynthMode::kUnimodalText, 16, 4, 4);
  DataSplits empty = d.splits;
  empty.train.clear();
  const FusionModel model(model_config(Variant::kLstm, d.vocab));
  CHECK_THROWS_AS(train(model, empty, TrainConfig{}), Error);
}

TEST_CASE("training is deterministic given the seed") {
  const SynthData d = synth(SynthMode::kCrossmodalXor, 96, 32, 8);
  const FusionModel model(model_config(Variant::kTkm, d.vocab));
  TrainConfig c;
  c.seed = 17;
  c.epochs = 2;
  c.eval_every = 2;
  const TrainResult a = train(model, d.splits, c);
  const TrainResult b = train(model, d.splits, c);
  CHECK(a.history.step_loss == b.history.step_loss);
  CHECK(same_parameters(a.params, b.params));
  c.seed = 18;
  const TrainResult other = train(model, d.splits, c);
  CHECK(a.history.step_loss != other.history.step_loss);

  std::ostringstream csv;
  a.history.write_csv(csv);
  const std::string text = csv.str();
  CHECK(text.starts_with("step,loss,val_auc\n0,"));
  CHECK(a.history.step_loss.size() == 6);
  REQUIRE(a.history.evals.size() == 3);
  CHECK(a.history.evals[0].step == 1);
}

TEST_CASE("initial loss of a random head on balanced data is near ln 2") {
  const SynthData d = synth(SynthMode::kCrossmodalXor, 64, 0, 8);
  for (Variant v : {Variant::kFcm, Variant::kScm, Variant::kTkm, Variant::kLstm}) {
    const FusionModel model(model_config(v, d.vocab));
    TrainConfig c;
    c.batch_size = 64;
    c.seed = 3;
    const TrainResult r = train(model, d.splits, c);
    INFO(variant_name(v));
    REQUIRE(r.history.step_loss.size() == 1);
    CHECK(std::abs(r.history.step_loss[0] - std::log(2.0)) <= 0.1);
    CHECK_FALSE(r.best_step.has_value());
  }
}

TEST_CASE("uniform weights match balanced weights on balanced data only") {
  SynthData d = synth(SynthMode::kUnimodalText, 64, 0, 8);
  const FusionModel model(model_config(Variant::kLstm, d.vocab));
  TrainConfig bal;
  bal.batch_size = 64;
  TrainConfig uni = bal;
  uni.weight_mode = ClassWeightMode::kUniform;
  CHECK(train(model, d.splits, bal).history.step_loss == train(model, d.splits, uni).history.step_loss);

  std::vector<Sample> skewed;
  std::size_t hate = 0;
  for (const Sample& s : d.splits.train) {
    if (s.label == BinaryLabel::kHate && ++hate > 8) continue;
    skewed.push_back(s);
  }
  d.splits.train = skewed;
  CHECK(train(model, d.splits, bal).history.step_loss != train(model, d.splits, uni).history.step_loss);
}

TEST_CASE("a separable text task converges") {
  const SynthData d = synth(SynthMode::kUnimodalText, 6400, 200, 200);
  const FusionModel model(model_config(Variant::kLstm, d.vocab));
  TrainConfig c;
  c.lr = 1e-2;
  c.batch_size = 32;
  const TrainResult r = train(model, d.splits, c);
  REQUIRE(r.history.step_loss.size() == 200);
  const double tail = std::accumulate(r.history.step_loss.end() - 10, r.history.step_loss.end(), 0.0) / 10.0;
  CHECK(tail < 0.1);
  CHECK(r.best_step == 199);
  CHECK(r.best_val_auc > 0.99);
}

TEST_CASE("a text-only model ignores image content") {
  const SynthData d = synth(SynthMode::kUnimodalText, 64, 0, 16);
  const FusionModel model(model_config(Variant::kTkm, d.vocab));
  TrainConfig c;
  c.mask = InputMask{true, false, false};
  c.lr = 1e-3;
  TrainResult r = train(model, d.splits, c);
  std::vector<Sample> swapped = d.splits.test;
  for (std::size_t i = 0; i < swapped.size(); ++i) {
    swapped[i].image = d.splits.test[(i + 1) % swapped.size()].image;
  }
  const auto a = score_dataset(model, r.params, d.splits.test, c.mask);
  const auto b = score_dataset(model, r.params, swapped, c.mask);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].score == b[i].score);
  const auto full = score_dataset(model, r.params, swapped, InputMask{});
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs |= full[i].score != a[i].score;
  CHECK(differs);
}

TEST_CASE("divergence restores the last finite parameters") {
  const SynthData d = synth(SynthMode::kUnimodalText, 64, 0, 8);
  const FusionModel model(model_config(Variant::kLstm, d.vocab));
  TrainConfig c;
  c.lr = 1e300;
  c.epochs = 3;
  const TrainResult r = train(model, d.splits, c);
  CHECK(r.diverged);
  CHECK_FALSE(r.diagnostic.empty());
  CHECK(r.params.all_finite());
}
