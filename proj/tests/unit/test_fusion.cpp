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


#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "mfuse/error.hpp"
#include "mfuse/fusion.hpp"
#include "mfuse/gradsuite.hpp"
#include "mfuse/ops.hpp"
#include "mfuse/parameters.hpp"
#include "mfuse/random.hpp"

using namespace mfuse;

namespace {

Tensor randn(Shape s, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(s));
  for (double& v : t.values()) v = scale * rng.normal();
  return t;
}

Tensor uniform(Shape s, Rng& rng) {
  Tensor t(std::move(s));
  for (double& v : t.values()) v = rng.uniform();
  return t;
}

// Non-trivial batch-norm statistics so eval mode is not the identity.
void perturb_statistics(ParameterStore& store, Rng& rng) {
  for (auto& [name, p] : store) {
    if (name.ends_with(".mean")) {
      for (double& v : p.value.values()) v = 0.1 * rng.normal();
    } else if (name.ends_with(".var")) {
      for (double& v : p.value.values()) v = 0.5 + rng.uniform();
    } else if (name.ends_with(".beta") || name.ends_with(".b")) {
      for (double& v : p.value.values()) v = 0.1 * rng.normal();
    }
  }
}

std::vector<std::int64_t> random_tokens(Rng& rng, std::size_t vocab) {
  std::vector<std::int64_t> out(1 + rng.below(5));
  for (auto& t : out) t = static_cast<std::int64_t>(rng.below(vocab));
  return out;
}

ModelBatch random_batch(const FusionModelConfig& c, std::size_t n, Rng& rng) {
  ModelBatch b;
  const std::size_t side = c.backbone.input_side;
  b.images = uniform({n, side, side, 3}, rng);
  for (std::size_t i = 0; i < n; ++i) {
    b.tweet.push_back(random_tokens(rng, c.text.vocab_size));
    b.image_text.push_back(random_tokens(rng, c.text.vocab_size));
  }
  return b;
}

constexpr Variant kHeads[] = {Variant::kFcm, Variant::kScm, Variant::kTkm};

}  // namespace

TEST_CASE("input masks") {
  CHECK(mask_name(parse_mask("TT, I")) == "TT,I");
  CHECK(parse_mask("TT,IT,I") == InputMask{});
  CHECK_THROWS_AS(parse_mask(""), Error);
  CHECK_THROWS_AS(parse_mask("TT,XX"), Error);

  Rng rng(1);
  Graph g;
  const ModalInputs in{g.constant(uniform({2, 4, 4, 3}, rng)), g.constant(randn({2, 5}, rng)),
                       g.constant(randn({2, 5}, rng))};

  SUBCASE("text only zeroes the image and the image text") {
    const ModalInputs out = apply_input_mask(g, in, InputMask{true, false, false});
    CHECK(out.image.value() == Tensor({2, 4, 4, 3}, 0.0));
    CHECK(out.image_text.value() == Tensor({2, 5}, 0.0));
    CHECK(out.tweet.value() == in.tweet.value());
  }
  SUBCASE("all-true mask is the identity") {
    const ModalInputs out = apply_input_mask(g, in, InputMask{});
    CHECK(out.image.value() == in.image.value());
    CHECK(out.tweet.value() == in.tweet.value());
    CHECK(out.image_text.value() == in.image_text.value());
  }
  SUBCASE("all-false mask is rejected") {
    CHECK_THROWS_AS(apply_input_mask(g, in, InputMask{false, false, false}), Error);
  }
}

TEST_CASE("configuration validation") {
  FusionModelConfig c = FusionModelConfig::desk(Variant::kTkm);
  CHECK_NOTHROW(c.validate());
  c.fc_plan = {16, 3};
  CHECK_THROWS_AS(c.validate(), Error);
  c = FusionModelConfig::desk(Variant::kTkm);
  c.k_it = 0;
  CHECK_THROWS_AS(FusionModel{c}, Error);
  c.variant = Variant::kScm;
  CHECK_NOTHROW(c.validate());
  CHECK(parse_variant("tkm") == Variant::kTkm);
  CHECK_FALSE(parse_variant("xyz").has_value());
}

TEST_CASE("desk shapes") {
  Rng rng(2);
  for (Variant v : kHeads) {
    const FusionModel model(FusionModelConfig::desk(v));
    ParameterStore store = model.init_parameters(3);
    const ModelBatch batch = random_batch(model.config(), 3, rng);
    Graph g(Mode::kEval);
    ParamScope scope(g, store);
    FusionTrace trace;
    const Var logits = model.forward(scope, batch, InputMask{}, &trace);
    INFO(variant_name(v));
    CHECK(logits.shape() == Shape{3, 2});
    switch (v) {
      case Variant::kFcm:
        CHECK(trace.fcm_concat == Shape{3, 64 + 32 + 32});
        break;
      case Variant::kScm:
        CHECK(trace.fused_map == Shape{3, 4, 4, 64 + 64});
        CHECK(trace.pooled == Shape{3, 32});
        break;
      case Variant::kTkm:
        CHECK(trace.multimodal_map.shape() == Shape{3, 4, 4, 6});
        CHECK(trace.fused_map == Shape{3, 4, 4, 6 + 64});
        break;
      default:
        break;
    }
  }
}

TEST_CASE("paper-config head shapes") {
  // The heads alone, on constant 8x8x2048 maps; narrower fusion blocks keep
  // the test quick and do not affect the checked shapes.
  const Tensor v_map({1, 8, 8, 2048}, 0.01);
  const Tensor t({1, 150}, 0.02);
  for (Variant v : kHeads) {
    FusionModelConfig c = FusionModelConfig::paper(v);
    c.fusion_block_channels = 64;
    ParameterStore store = FusionModel(c).init_parameters(5);
    Graph g(Mode::kEval);
    ParamScope scope(g, store);
    FusionTrace trace;
    Var logits;
    switch (v) {
      case Variant::kFcm:
        logits = fcm_forward(scope, c, g.constant(Tensor({1, 2048}, 0.01)), g.constant(t),
                             g.constant(t), &trace);
        CHECK(trace.fcm_concat == Shape{1, 2348});
        CHECK(store.at("fcm.fc0.w").value.shape() == Shape{2348, 1024});
        CHECK(store.at("fcm.fc1.w").value.shape() == Shape{1024, 512});
        CHECK(store.at("fcm.fc2.w").value.shape() == Shape{512, 2});
        break;
      case Variant::kScm:
        logits = scm_forward(scope, c, g.constant(v_map), g.constant(t), g.constant(t), &trace);
        CHECK(trace.fused_map == Shape{1, 8, 8, 2348});
        break;
      case Variant::kTkm:
        logits = tkm_forward(scope, c, g.constant(v_map), g.constant(t), g.constant(t), &trace);
        CHECK(trace.multimodal_map.shape() == Shape{1, 8, 8, 15});
        CHECK(trace.fused_map == Shape{1, 8, 8, 315});
        CHECK(store.at("tkm.kt.k9.w").value.shape() == Shape{150, 2048});
        CHECK(store.at("tkm.kit.k4.w").value.shape() == Shape{150, 2048});
        CHECK_FALSE(store.contains("tkm.kt.k10.w"));
        break;
      default:
        break;
    }
    CHECK(logits.shape() == Shape{1, 2});
  }
}

TEST_CASE("head inputs with the wrong dimensions are rejected") {
  const FusionModelConfig c = FusionModelConfig::desk(Variant::kTkm);
  ParameterStore store = FusionModel(c).init_parameters(1);
  Graph g(Mode::kEval);
  ParamScope scope(g, store);
  Var t = g.constant(Tensor({1, 32}));
  CHECK_THROWS_AS(tkm_forward(scope, c, g.constant(Tensor({1, 4, 4, 63})), t, t), Error);
  CHECK_THROWS_AS(tkm_forward(scope, c, g.constant(Tensor({1, 4, 4, 64})), t,
                              g.constant(Tensor({1, 31}))),
                  Error);
  CHECK_THROWS_AS(scm_forward(scope, c, g.constant(Tensor({1, 3, 3, 64})), t, t), Error);
  CHECK_THROWS_AS(fcm_forward(scope, c, g.constant(Tensor({2, 64})), t, t), Error);
}

TEST_CASE("masked-modality invariance") {
  Rng rng(6);
  const InputMask masks[] = {{true, true, false}, {true, false, true}, {false, true, true},
                             {true, false, false}, {false, false, true}};
  for (Variant v : kHeads) {
    const FusionModel model(FusionModelConfig::desk(v));
    ParameterStore store = model.init_parameters(7);
    perturb_statistics(store, rng);
    for (const InputMask& mask : masks) {
      for (int pair = 0; pair < 5; ++pair) {
        const ModelBatch a = random_batch(model.config(), 2, rng);
        ModelBatch b = a;
        const ModelBatch other = random_batch(model.config(), 2, rng);
        if (!mask.image) b.images = other.images;
        if (!mask.tweet_text) b.tweet = other.tweet;
        if (!mask.image_text) b.image_text = other.image_text;
        auto logits = [&](const ModelBatch& batch) {
          Graph g(Mode::kEval);
          ParamScope scope(g, store);
          return model.forward(scope, batch, mask).value();
        };
        INFO(variant_name(v) << " mask " << mask_name(mask));
        const Tensor la = logits(a);
        CHECK(la == logits(b));
        // Content that is not masked does change the output.
        ModelBatch c = a;
        if (mask.image) {
          c.images = other.images;
        } else {
          c.tweet = other.tweet;
        }
        if (c.tweet != a.tweet || mask.image) CHECK(la != logits(c));
      }
    }
  }
}

TEST_CASE("textual kernels") {
  Rng rng(8);
  ParameterStore store;
  FusionModelConfig c = FusionModelConfig::desk(Variant::kTkm);
  store = FusionModel(c).init_parameters(9);

  SUBCASE("zero text and zero biases give zero kernels") {
    Graph g;
    ParamScope scope(g, store);
    const Tensor k = make_textual_kernels(scope, "tkm.kt", g.constant(Tensor({2, 32})), 4).value();
    CHECK(k == Tensor({2, 4, 64}, 0.0));
  }

  SUBCASE("kernel j is the j-th affine map of the text") {
    const Tensor text = randn({1, 32}, rng);
    Graph g;
    ParamScope scope(g, store);
    const Tensor k = make_textual_kernels(scope, "tkm.kt", g.constant(text), 4).value();
    for (std::size_t j = 0; j < 4; ++j) {
      const Tensor& w = store.at("tkm.kt.k" + std::to_string(j) + ".w").value;
      for (std::size_t d = 0; d < 64; ++d) {
        double want = 0.0;
        for (std::size_t h = 0; h < 32; ++h) want += text[h] * w[h * 64 + d];
        CHECK(std::abs(k[j * 64 + d] - want) <= 1e-12);
      }
    }
  }

  SUBCASE("one-hot kernels select map channels exactly") {
    const std::size_t c0 = 5, c1 = 41;
    FusionModelConfig one = c;
    one.k_t = 1;
    one.k_it = 1;
    ParameterStore s = FusionModel(one).init_parameters(10);
    s.at("tkm.kt.k0.w").value.fill(0.0);
    s.at("tkm.kit.k0.w").value.fill(0.0);
    s.at("tkm.kt.k0.b").value.fill(0.0);
    s.at("tkm.kit.k0.b").value.fill(0.0);
    s.at("tkm.kt.k0.b").value[c0] = 1.0;
    s.at("tkm.kit.k0.b").value[c1] = 1.0;
    const Tensor map = randn({2, 4, 4, 64}, rng);
    Graph g(Mode::kEval);
    ParamScope scope(g, s);
    FusionTrace trace;
    tkm_forward(scope, one, g.constant(map), g.constant(randn({2, 32}, rng)),
                g.constant(randn({2, 32}, rng)), &trace);
    const Tensor& mm = trace.multimodal_map;
    REQUIRE(mm.shape() == Shape{2, 4, 4, 2});
    for (std::size_t p = 0; p < 32; ++p) {
      CHECK(mm[p * 2] == map[p * 64 + c0]);
      CHECK(mm[p * 2 + 1] == map[p * 64 + c1]);
    }
  }
}

TEST_CASE("spatial concatenation on a constant map") {
  // A spatially constant map stays constant through the fusion blocks, so the
  // pooled vector is the block stack applied to the single tiled vector.
  Rng rng(11);
  const FusionModelConfig c = FusionModelConfig::desk(Variant::kScm);
  ParameterStore store = FusionModel(c).init_parameters(12);
  perturb_statistics(store, rng);
  const Tensor pixel = randn({64}, rng, 0.5);
  Tensor map({1, 4, 4, 64});
  for (std::size_t p = 0; p < 16; ++p) {
    for (std::size_t d = 0; d < 64; ++d) map[p * 64 + d] = pixel[d];
  }
  const Tensor tt = randn({1, 32}, rng), ti = randn({1, 32}, rng);
  Graph g(Mode::kEval);
  ParamScope scope(g, store);
  FusionTrace trace;
  scm_forward(scope, c, g.constant(map), g.constant(tt), g.constant(ti), &trace);

  std::vector<double> x(pixel.values().begin(), pixel.values().end());
  x.insert(x.end(), tt.values().begin(), tt.values().end());
  x.insert(x.end(), ti.values().begin(), ti.values().end());
  for (std::size_t b = 0; b < c.fusion_block_count; ++b) {
    const std::string p = "scm.block" + std::to_string(b);
    const Tensor& w = store.at(p + ".w").value;
    const std::size_t in = x.size(), out = c.fusion_block_channels;
    std::vector<double> y(out, 0.0);
    for (std::size_t tap = 0; tap < 9; ++tap) {
      for (std::size_t i = 0; i < in; ++i) {
        for (std::size_t o = 0; o < out; ++o) y[o] += x[i] * w[(tap * in + i) * out + o];
      }
    }
    for (std::size_t o = 0; o < out; ++o) {
      const double z = store.at(p + ".bn.gamma").value[o] * (y[o] - store.at(p + ".bn.mean").value[o]) /
                           std::sqrt(store.at(p + ".bn.var").value[o] + 1e-5) +
                       store.at(p + ".bn.beta").value[o];
      y[o] = std::max(z, 0.0);
    }
    x = y;
  }
  REQUIRE(trace.pooled_value.size() == x.size());
  for (std::size_t o = 0; o < x.size(); ++o) CHECK(std::abs(trace.pooled_value[o] - x[o]) <= 1e-10);
}

TEST_CASE("concatenation head on zero inputs with zero biases") {
  const FusionModelConfig c = FusionModelConfig::desk(Variant::kFcm);
  ParameterStore store = FusionModel(c).init_parameters(13);
  Graph g(Mode::kEval);
  ParamScope scope(g, store);
  const Tensor logits = fcm_forward(scope, c, g.constant(Tensor({2, 64})), g.constant(Tensor({2, 32})),
                                    g.constant(Tensor({2, 32})))
                            .value();
  CHECK(logits == Tensor({2, 2}, 0.0));
}

TEST_CASE("heads and models pass gradient checks at desk scale") {
  SuiteOptions o;
  o.draws_per_primitive = 0;
  o.model_coords_per_input = 6;
  const std::vector<SuiteCheck> checks = run_gradcheck_suite(o);
  std::size_t models = 0;
  for (const SuiteCheck& c : checks) {
    if (c.name.starts_with("primitive:")) continue;
    ++models;
    INFO(c.name << " " << c.max_rel_error);
    CHECK(c.coords > 0);
    CHECK(c.passed);
  }
  CHECK(models == 7);
}
