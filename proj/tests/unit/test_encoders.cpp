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
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mfuse/error.hpp"
#include "mfuse/gradcheck.hpp"
#include "mfuse/image.hpp"
#include "mfuse/ops.hpp"
#include "mfuse/parameters.hpp"
#include "mfuse/random.hpp"
#include "mfuse/text.hpp"

using namespace mfuse;

namespace {

using Tokens = std::vector<std::string>;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Image random_image(std::size_t h, std::size_t w, Rng& rng) {
  Image im(h, w);
  for (double& v : im.pixels) v = rng.uniform();
  return im;
}

void zero_all(ParameterStore& store) {
  for (auto& [name, p] : store) p.value.fill(0.0);
}

}  // namespace

TEST_CASE("tweet preprocessing") {
  CHECK(preprocess_tweet_text("@john you rock #cool") ==
        Tokens{"<user>", "you", "rock", "<hashtag>", "cool"});
  CHECK(preprocess_tweet_text("").empty());
  CHECK(preprocess_tweet_text("Visit http://x.co 2day") == Tokens{"visit", "<url>", "2day"});
  CHECK(preprocess_tweet_text("I have 42 CATS!") == Tokens{"i", "have", "<number>", "cats"});
  CHECK(preprocess_tweet_text("see https://t.co/abc and www.site.org") ==
        Tokens{"see", "<url>", "and", "<url>"});
}

TEST_CASE("preprocessing is idempotent on its detokenized output") {
  const char* raw[] = {"@john you rock #cool", "Visit http://x.co 2day", "  RT: (@bob) 3.5 stars!! ",
                       "#Hash #tags #everywhere 100%", "émoji ünïcode 12,000 @"};
  for (const char* r : raw) {
    const Tokens once = preprocess_tweet_text(r);
    CHECK(preprocess_tweet_text(detokenize(once)) == once);
  }
}

TEST_CASE("vocabulary") {
  const std::vector<Tokens> texts = {{"a", "b"}, {"b", "c"}};
  const Vocabulary v = Vocabulary::build(texts);
  CHECK(v.size() == 9);
  CHECK(v.token(0) == "<pad>");
  CHECK(v.token(1) == "<unk>");
  CHECK(v.index_of("<user>") == 2);
  CHECK(v.index_of("<url>") == 5);
  CHECK(v.index_of("a") == 6);
  CHECK(v.index_of("never") == v.unk_index());
  const auto path = std::filesystem::temp_directory_path() / "mfuse_unit_vocab.txt";
  v.save(path);
  CHECK(Vocabulary::load(path) == v);
  std::filesystem::remove(path);
}

TEST_CASE("text encoder") {
  TextEncoderConfig c{8, 5, 10};
  ParameterStore store;
  Rng rng(2);
  init_text_encoder(store, "text", c, rng);

  SUBCASE("empty sequences encode to zeros, padding does not leak") {
    Graph g;
    ParamScope scope(g, store);
    const std::vector<std::vector<std::int64_t>> batch = {{}, {3, 4, 5}, {3}};
    const Tensor h = encode_text(scope, "text", batch).value();
    CHECK(h.shape() == Shape{3, 5});
    for (std::size_t j = 0; j < 5; ++j) CHECK(h[j] == 0.0);
    Graph g2;
    ParamScope s2(g2, store);
    const std::vector<std::vector<std::int64_t>> single = {{3}};
    const Tensor one = encode_text(s2, "text", single).value();
    for (std::size_t j = 0; j < 5; ++j) CHECK(h[10 + j] == one[j]);
  }

  SUBCASE("zero weights give a zero state") {
    zero_all(store);
    Graph g;
    ParamScope scope(g, store);
    const std::vector<std::vector<std::int64_t>> batch = {{7}};
    CHECK(encode_text(scope, "text", batch).value() == Tensor({1, 5}, 0.0));
  }

  SUBCASE("one step against a hand-written LSTM cell") {
    const std::int64_t tok = 4;
    const Tensor& emb = store.at("text.embedding").value;
    const Tensor& wx = store.at("text.lstm.w_x").value;
    const Tensor& b = store.at("text.lstm.b").value;
    std::vector<double> want(5);
    for (std::size_t j = 0; j < 5; ++j) {
      double z[4];
      for (std::size_t gate = 0; gate < 4; ++gate) {
        const std::size_t col = gate * 5 + j;
        z[gate] = b[col];
        for (std::size_t e = 0; e < 8; ++e) z[gate] += emb[tok * 8 + e] * wx[e * 20 + col];
      }
      const double cell = sigmoid(z[0]) * std::tanh(z[2]);
      want[j] = sigmoid(z[3]) * std::tanh(cell);
    }
    Graph g;
    ParamScope scope(g, store);
    const std::vector<std::vector<std::int64_t>> batch = {{tok}};
    const Tensor h = encode_text(scope, "text", batch).value();
    for (std::size_t j = 0; j < 5; ++j) CHECK(h[j] == doctest::Approx(want[j]).epsilon(1e-13));
  }

  SUBCASE("out-of-vocabulary indices are rejected") {
    Graph g;
    ParamScope scope(g, store);
    const std::vector<std::vector<std::int64_t>> batch = {{10}};
    CHECK_THROWS_AS(encode_text(scope, "text", batch), Error);
  }
}

TEST_CASE("paper text dimensions") {
  const TextEncoderConfig c;
  CHECK(c.embedding_dim == 100);
  CHECK(c.hidden_dim == 150);
}

TEST_CASE("lstm classifier") {
  TextEncoderConfig c{6, 4, 9};
  ParameterStore store;
  Rng rng(3);
  init_text_encoder(store, "lstm", c, rng);
  init_text_classifier_head(store, "lstm", c.hidden_dim, rng);
  const std::vector<std::vector<std::int64_t>> batch = {{6, 7, 8}, {2}};

  SUBCASE("two logits, zero for zero weights") {
    ParameterStore zero = store;
    zero_all(zero);
    Graph g;
    ParamScope scope(g, zero);
    CHECK(lstm_text_classifier_forward(scope, "lstm", batch).value() == Tensor({2, 2}, 0.0));
  }

  SUBCASE("logit gradient check over every parameter") {
    // At the initial point (embeddings within +-0.05) the recurrent weights
    // get gradients near 1e-9, below finite-difference resolution; check at a
    // generic point instead.
    std::vector<std::string> names;
    std::vector<Tensor> values;
    for (auto& [name, p] : store) {
      for (double& v : p.value.values()) v = name.ends_with(".embedding") ? rng.normal() : v + 0.3 * rng.normal();
      names.push_back(name);
      values.push_back(p.value);
    }
    auto fn = [&](Graph& g, std::span<const Var> leaves) {
      ParamScope scope(g, store);
      for (std::size_t i = 0; i < names.size(); ++i) scope.bind(names[i], leaves[i]);
      Var logits = lstm_text_classifier_forward(scope, "lstm", batch);
      return ops::sum(ops::mul(logits, g.constant(Tensor({2, 2}, {0.7, -1.3, 0.4, 2.1}))));
    };
    const GradCheckReport r = check_gradients(fn, values);
    INFO(names[r.worst_input] << "[" << r.worst_index << "] " << r.worst_analytic << " vs " << r.worst_numeric);
    CHECK(r.coords_checked > 100);
    CHECK(r.max_rel_error <= 1e-4);
  }
}

TEST_CASE("embedding import") {
  const std::vector<Tokens> texts = {{"hello", "world"}};
  const Vocabulary v = Vocabulary::build(texts);
  ParameterStore store;
  Rng rng(4);
  init_text_encoder(store, "text", TextEncoderConfig{3, 2, v.size()}, rng);
  const auto path = std::filesystem::temp_directory_path() / "mfuse_unit_emb.txt";
  std::ofstream(path) << "world 1 2 3\nunseen 9 9 9\nhello 4 5 6\n";
  CHECK(import_embeddings(store, "text", v, path) == 2);
  const Tensor& t = store.at("text.embedding").value;
  const std::size_t w = static_cast<std::size_t>(v.index_of("world"));
  CHECK(t[w * 3 + 0] == 1.0);
  CHECK(t[w * 3 + 2] == 3.0);
  std::ofstream(path) << "hello 1 2\n";
  CHECK_THROWS_AS(import_embeddings(store, "text", v, path), Error);
  std::filesystem::remove(path);
}

TEST_CASE("image resampling and files") {
  Rng rng(5);
  const Image im = random_image(7, 9, rng);
  CHECK(resize_bilinear(im, 7, 9).pixels == im.pixels);
  const Image r = resize_shortest(im, 14);
  CHECK(r.height == 14);
  CHECK(r.width == 18);

  const Image8 q = quantize(im);
  const auto path = std::filesystem::temp_directory_path() / "mfuse_unit.ppm";
  write_ppm(q, path);
  const Image8 back = read_ppm(path);
  CHECK(back.height == 7);
  CHECK(back.pixels == q.pixels);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_ppm(path), Error);
  CHECK_THROWS_AS(preprocess_image(Image(), Mode::kEval, VisionBackboneConfig{}, 0), Error);
}

TEST_CASE("image preprocessing crops") {
  VisionBackboneConfig c;
  c.input_side = 4;
  c.resize_shortest = 6;
  Rng rng(6);

  SUBCASE("eval mode takes the center window") {
    const Image im = random_image(6, 6, rng);
    const Tensor t = preprocess_image(im, Mode::kEval, c, 123);
    for (std::size_t y = 0; y < 4; ++y) {
      for (std::size_t x = 0; x < 4; ++x) {
        for (std::size_t ch = 0; ch < 3; ++ch) CHECK(t[(y * 4 + x) * 3 + ch] == im.at(y + 1, x + 1, ch));
      }
    }
    CHECK(preprocess_image(im, Mode::kEval, c, 7) == t);
  }

  SUBCASE("train mode is a seeded window, possibly mirrored") {
    const Image im = random_image(6, 8, rng);
    std::size_t mirrored = 0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      const Tensor t = preprocess_image(im, Mode::kTrain, c, seed);
      CHECK(preprocess_image(im, Mode::kTrain, c, seed) == t);
      bool found = false;
      for (std::size_t top = 0; top + 4 <= 6 && !found; ++top) {
        for (std::size_t left = 0; left + 4 <= 8 && !found; ++left) {
          for (int m = 0; m < 2 && !found; ++m) {
            bool same = true;
            double mean_out[3] = {}, mean_plain[3] = {};
            for (std::size_t y = 0; y < 4; ++y) {
              for (std::size_t x = 0; x < 4; ++x) {
                const std::size_t sx = left + (m ? 3 - x : x);
                for (std::size_t ch = 0; ch < 3; ++ch) {
                  same = same && t[(y * 4 + x) * 3 + ch] == im.at(top + y, sx, ch);
                  mean_out[ch] += t[(y * 4 + x) * 3 + ch];
                  mean_plain[ch] += im.at(top + y, left + x, ch);
                }
              }
            }
            if (same) {
              found = true;
              mirrored += m;
              for (int ch = 0; ch < 3; ++ch) CHECK(mean_out[ch] == doctest::Approx(mean_plain[ch]));
            }
          }
        }
      }
      CHECK(found);
    }
    CHECK(mirrored > 5);
    CHECK(mirrored < 35);
  }
}

TEST_CASE("backbone configurations") {
  const VisionBackboneConfig desk;
  CHECK(desk.map_side() == 4);
  CHECK(desk.map_channels() == 64);
  const VisionBackboneConfig paper = VisionBackboneConfig::paper();
  CHECK(paper.input_side == 299);
  CHECK(paper.resize_shortest == 500);
  CHECK(paper.map_side() == 8);
  CHECK(paper.map_channels() == 2048);
}

TEST_CASE("vision features") {
  const VisionBackboneConfig c;
  ParameterStore store;
  Rng rng(7);
  init_vision_backbone(store, "backbone", c, rng);

  SUBCASE("zero input gives zero features") {
    Graph g(Mode::kEval);
    ParamScope scope(g, store);
    const VisionFeatures f = vision_features(scope, "backbone", g.constant(Tensor({2, 56, 56, 3})), c);
    CHECK(f.map.shape() == Shape{2, 4, 4, 64});
    CHECK(f.map.value() == Tensor({2, 4, 4, 64}, 0.0));
    CHECK(f.pooled.value() == Tensor({2, 64}, 0.0));
  }

  SUBCASE("pooled vector is the spatial mean of the map") {
    for (auto& [name, p] : store) {
      if (!p.trainable) continue;
      for (double& v : p.value.values()) v += 0.2 * rng.normal();
    }
    Tensor x({2, 56, 56, 3});
    for (double& v : x.values()) v = rng.uniform();
    for (Mode mode : {Mode::kTrain, Mode::kEval}) {
      Graph g(mode);
      ParamScope scope(g, store);
      const VisionFeatures f = vision_features(scope, "backbone", g.constant(x), c);
      const Tensor& m = f.map.value();
      for (std::size_t n = 0; n < 2; ++n) {
        for (std::size_t ch = 0; ch < 64; ++ch) {
          double mean = 0.0;
          for (std::size_t k = 0; k < 16; ++k) mean += m[(n * 16 + k) * 64 + ch];
          mean /= 16.0;
          CHECK(std::abs(f.pooled.value()[n * 64 + ch] - mean) <= 1e-12);
        }
      }
    }
  }

  SUBCASE("wrong input side is rejected") {
    Graph g;
    ParamScope scope(g, store);
    CHECK_THROWS_AS(vision_features(scope, "backbone", g.constant(Tensor({1, 32, 32, 3})), c), Error);
  }
}
