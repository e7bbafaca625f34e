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


#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mfuse/config.hpp"
#include "mfuse/error.hpp"
#include "mfuse/pipeline.hpp"

using namespace mfuse;

namespace {

Config parse(const std::string& text) {
  std::istringstream in(text);
  return Config::parse(in);
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an mfuse::Error");
  return ErrorKind::kState;
}

}  // namespace

TEST_CASE("parsing") {
  Config c = parse("# comment\n\ntrain.lr = 1e-3\n  model.variant=fcm  \nmodel.fc_plan = 16, 8,2\n");
  CHECK(c.raw("train.lr") == "1e-3");
  CHECK(c.raw("model.variant") == "fcm");
  CHECK(c.get_double("train.lr", 0.0) == 1e-3);
  CHECK(c.get_sizes("model.fc_plan", {}) == std::vector<std::size_t>{16, 8, 2});
  CHECK(c.get_size("train.epochs", 4) == 4);
  CHECK_FALSE(c.raw("train.epochs").has_value());

  CHECK(kind_of([] { parse("no equals sign\n"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { parse("Train.LR = 1\n"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { parse("a.b = 1\na.b = 2\n"); }) == ErrorKind::kConfig);
  try {
    parse("a.b = 1\n\nbroken\n");
    FAIL("accepted a broken line");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find('3') != std::string::npos);
  }
  CHECK(kind_of([] { Config::load("/nonexistent/mfuse.cfg"); }) == ErrorKind::kIo);
}

TEST_CASE("typed getters reject malformed values") {
  Config c = parse("a.n = -3\na.x = 1.5e\na.b = maybe\na.s = 4,0\na.inf = inf\n");
  CHECK(kind_of([&] { c.get_size("a.n", 0); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { c.get_double("a.x", 0.0); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { c.get_double("a.inf", 0.0); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { c.get_bool("a.b", false); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { c.get_sizes("a.s", {}); }) == ErrorKind::kConfig);
  Config d = parse("a.t = true\na.f = 0\n");
  CHECK(d.get_bool("a.t", false));
  CHECK_FALSE(d.get_bool("a.f", true));
}

TEST_CASE("overrides, consumption and serialization") {
  Config c = parse("train.lr = 1e-3\ntrain.typo = 1\n");
  c.apply_override("train.lr=0.5");
  c.apply_override("train.epochs = 3");
  CHECK(kind_of([&] { c.apply_override("nonsense"); }) == ErrorKind::kConfig);
  CHECK(c.get_double("train.lr", 0.0) == 0.5);
  CHECK(c.get_size("train.epochs", 1) == 3);
  CHECK(c.get_size("train.batch_size", 32) == 32);
  CHECK(c.unconsumed() == std::vector<std::string>{"train.typo"});
  try {
    c.require_all_consumed();
    FAIL("unconsumed key accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfig);
    CHECK(std::string(e.what()).find("train.typo") != std::string::npos);
  }
  // Defaults are part of the resolved config.
  CHECK(c.resolved().at("train.batch_size") == "32");
  CHECK(c.resolved().at("train.lr") == "0.5");

  Config base = parse("a.x = 1\nb.y = 2\n");
  base.merge(parse("b.y = 3\n"));
  CHECK(base.serialize() == "a.x = 1\nb.y = 3\n");
  std::istringstream again(base.serialize());
  CHECK(Config::parse(again).entries() == base.entries());
}

TEST_CASE("number formatting round-trips") {
  for (double v : {0.1, 1e-4, 2.0 / 3.0, 123456789.0, 5e-324, -0.0}) {
    CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);
  }
  CHECK(format_double(0.5) == "0.5");
  CHECK(join_sizes({1024, 512, 2}) == "1024,512,2");
}

TEST_CASE("model descriptions") {
  Config desk = parse("model.variant = scm\nmodel.k_t = 3\n");
  const FusionModelConfig m = read_model_config(desk, Variant::kTkm);
  CHECK(m.variant == Variant::kScm);
  CHECK(m.k_t == 3);
  CHECK(m.map_side() == 4);
  CHECK(m.map_channels() == 64);
  CHECK(desk.unconsumed().empty());

  Config paper = parse("model.preset = paper\n");
  const FusionModelConfig p = read_model_config(paper, Variant::kFcm);
  CHECK(p.variant == Variant::kFcm);
  CHECK(p.map_side() == 8);
  CHECK(p.map_channels() == 2048);
  CHECK(p.text.hidden_dim == 150);
  CHECK(p.fc_plan == std::vector<std::size_t>{1024, 512, 2});
  CHECK(p.k_t == 10);
  CHECK(p.k_it == 5);

  Config bad = parse("model.fc_plan = 8,3\n");
  CHECK(kind_of([&] { read_model_config(bad, Variant::kFcm); }) == ErrorKind::kConfig);
  Config bad_variant = parse("model.variant = cnn\n");
  CHECK(kind_of([&] { read_model_config(bad_variant, Variant::kFcm); }) == ErrorKind::kConfig);
  CHECK(variant_label(Variant::kLstm) == "LSTM");
  CHECK(variant_label(Variant::kTkm) == "TKM");
}
