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
#include "mfuse/gradsuite.hpp"
#include "mfuse/graph.hpp"
#include "mfuse/ops.hpp"
#include "mfuse/optim.hpp"
#include "mfuse/parameters.hpp"
#include "mfuse/random.hpp"

using namespace mfuse;

namespace {

Tensor randn(Shape s, Rng& rng) {
  Tensor t(std::move(s));
  for (double& v : t.values()) v = rng.normal();
  return t;
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

TEST_CASE("relu clamps negatives") {
  Graph g;
  Var y = ops::relu(g.constant(Tensor({3}, {-1.0, 0.0, 2.5})));
  CHECK(y.value() == Tensor({3}, {0.0, 0.0, 2.5}));
}

TEST_CASE("identity matmul") {
  Rng rng(1);
  Tensor x = randn({3, 5}, rng);
  Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Graph g;
  CHECK(ops::matmul(g.constant(eye), g.constant(x)).value() == x);
}

TEST_CASE("dynamic 1x1 conv is a per-kernel channel dot product") {
  Graph g;
  Var map = g.constant(Tensor({1, 1, 1, 2}, {1.0, 2.0}));
  Var kernels = g.constant(Tensor({1, 2, 2}, {1.0, 1.0, 0.0, 3.0}));
  Var y = ops::dynamic_conv1x1(map, kernels);
  CHECK(y.shape() == Shape{1, 1, 1, 2});
  CHECK(y.value()[0] == 3.0);
  CHECK(y.value()[1] == 6.0);
}

TEST_CASE("backward of sum and of a zero path") {
  Graph g;
  Var x = g.variable(Tensor({4}, {1, 2, 3, 4}));
  g.backward(ops::sum(x));
  CHECK(x.grad() == Tensor({4}, 1.0));

  Graph h;
  Var z = h.variable(Tensor({4}, {1, 2, 3, 4}));
  Var unused = h.variable(Tensor({2}, 5.0));
  h.backward(ops::sum(ops::scale(z, 0.0)));
  CHECK(z.grad() == Tensor({4}, 0.0));
  CHECK(unused.grad() == Tensor({2}, 0.0));
}

TEST_CASE("backward rejects non-scalar losses and second passes") {
  Graph g;
  Var x = g.variable(Tensor({2}, 1.0));
  CHECK(kind_of([&] { g.backward(x); }) == ErrorKind::kInvalidArgument);
  Var s = ops::sum(x);
  g.backward(s);
  CHECK(kind_of([&] { g.backward(s); }) == ErrorKind::kState);
}

TEST_CASE("weighted cross-entropy gradient against central differences") {
  const std::vector<std::int64_t> labels = {1};
  const std::vector<double> weights = {0.7, 2.0};
  auto fn = [&](Graph&, std::span<const Var> x) {
    return ops::weighted_cross_entropy(x[0], labels, weights);
  };
  const GradCheckReport r = check_gradients(fn, {Tensor({1, 2}, {0.3, -1.2})});
  CHECK(r.coords_checked == 2);
  CHECK(r.max_rel_error <= 1e-6);
}

TEST_CASE("weighted cross-entropy with unit weights is plain cross-entropy") {
  Rng rng(3);
  const Tensor logits = randn({5, 3}, rng);
  const std::vector<std::int64_t> labels = {0, 2, 1, 1, 0};
  const std::vector<double> ones = {1.0, 1.0, 1.0};
  Graph g;
  const double got = ops::weighted_cross_entropy(g.constant(logits), labels, ones).value().item();
  double want = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    double z = 0.0;
    for (std::size_t c = 0; c < 3; ++c) z += std::exp(logits[i * 3 + c]);
    want += -(logits[i * 3 + static_cast<std::size_t>(labels[i])] - std::log(z));
  }
  CHECK(got == doctest::Approx(want / 5.0).epsilon(1e-14));
}

TEST_CASE("softmax rows are distributions") {
  Rng rng(4);
  Graph g;
  const Tensor p = ops::softmax(g.constant(randn({6, 4}, rng))).value();
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(p[i * 4 + c] >= 0.0);
      s += p[i * 4 + c];
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("eval-mode batch norm is deterministic and affine") {
  Rng rng(5);
  const Tensor x = randn({4, 3}, rng);
  Tensor mean({3}, {0.1, -0.2, 0.3}), var({3}, {1.5, 0.5, 2.0});
  auto run = [&](const Tensor& in) {
    Graph g(Mode::kEval);
    return ops::batch_norm(g.constant(in), g.constant(Tensor({3}, 2.0)),
                           g.constant(Tensor({3}, 0.5)), &mean, &var)
        .value();
  };
  CHECK(run(x) == run(x));
  const Tensor y = run(x);
  CHECK(y[1] == doctest::Approx(2.0 * (x[1] + 0.2) / std::sqrt(0.5 + 1e-5) + 0.5).epsilon(1e-14));
}

TEST_CASE("dropout is the identity at rate 0 and in eval mode") {
  Rng rng(6);
  const Tensor x = randn({10, 10}, rng);
  Graph train(Mode::kTrain, 1);
  CHECK(ops::dropout(train.constant(x), 0.0).value() == x);
  Graph eval(Mode::kEval, 1);
  CHECK(ops::dropout(eval.constant(x), 0.5).value() == x);
  const Tensor d = ops::dropout(train.constant(x), 0.5).value();
  for (std::size_t i = 0; i < x.size(); ++i) CHECK((d[i] == 0.0 || d[i] == 2.0 * x[i]));
}

TEST_CASE("primitive front end rejects bad input") {
  Tensor a({2, 3}), b({4, 2});
  const std::vector<Tensor> in = {a, b};
  ops::PrimitiveSpec unknown{"nope", {}, {}, {}};
  CHECK(kind_of([&] { ops::eval_primitive(unknown, in); }) == ErrorKind::kInvalidArgument);
  ops::PrimitiveSpec mm{"matmul", {}, {}, {}};
  try {
    ops::eval_primitive(mm, in);
    FAIL("shape mismatch accepted");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find('3') != std::string::npos);
    CHECK(msg.find('4') != std::string::npos);
  }
}

TEST_CASE("check_gradients basics") {
  auto squares = [](Graph&, std::span<const Var> x) { return ops::sum(ops::mul(x[0], x[0])); };
  CHECK(check_gradients(squares, {Tensor({2}, {1.0, 2.0})}).max_rel_error <= 1e-8);

  auto constant = [](Graph& g, std::span<const Var>) { return g.constant(Tensor::scalar(4.0)); };
  const GradCheckReport c = check_gradients(constant, {Tensor({3}, 1.0)});
  CHECK(c.max_rel_error == 0.0);
  CHECK(c.coords_checked == 3);

  auto vector_out = [](Graph&, std::span<const Var> x) { return x[0]; };
  CHECK(kind_of([&] { check_gradients(vector_out, {Tensor({2}, 1.0)}); }) ==
        ErrorKind::kInvalidArgument);
  GradCheckOptions bad;
  bad.eps = 0.0;
  CHECK(kind_of([&] { check_gradients(squares, {Tensor({2}, 1.0)}, bad); }) ==
        ErrorKind::kInvalidArgument);
}

TEST_CASE("every primitive passes a few random gradient checks") {
  Rng rng(11);
  for (const std::string& name : ops::primitive_names()) {
    for (int draw = 0; draw < 5; ++draw) {
      const PrimitiveDraw d = draw_primitive(name, rng);
      const GradCheckReport r = check_primitive(d, rng.next_u64());
      INFO(name << " draw " << draw);
      CHECK(r.coords_checked > 0);
      CHECK(r.max_rel_error <= 1e-4);
    }
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradients leave parameters unchanged") {
    Tensor p({3}, {1.0, -2.0, 3.0});
    const Tensor before = p;
    Tensor gz({3}, 0.0);
    AdamState st;
    Tensor* ps[] = {&p};
    const Tensor* gs[] = {&gz};
    adam_step(ps, gs, st);
    CHECK(p == before);
    CHECK(st.step == 1);
  }
  SUBCASE("first step moves by lr * g / (|g| + eps)") {
    Tensor p = Tensor::scalar(1.0);
    Tensor g = Tensor::scalar(0.5);
    AdamState st;
    CHECK(st.config.lr == 1e-4);
    Tensor* ps[] = {&p};
    const Tensor* gs[] = {&g};
    adam_step(ps, gs, st);
    CHECK(1.0 - p.item() == doctest::Approx(1e-4 * 0.5 / (0.5 + 1e-8)).epsilon(1e-9));
    adam_step(ps, gs, st);
    CHECK(st.step == 2);
  }
  SUBCASE("misaligned shapes are rejected") {
    Tensor p({3}), g({2});
    AdamState st;
    Tensor* ps[] = {&p};
    const Tensor* gs[] = {&g};
    CHECK(kind_of([&] { adam_step(ps, gs, st); }) == ErrorKind::kInvalidArgument);
  }
}

TEST_CASE("forward and backward are bitwise repeatable") {
  auto run = [] {
    Rng rng(21);
    Graph g(Mode::kTrain, 9);
    Var x = g.variable(randn({4, 5}, rng));
    Var w = g.variable(randn({5, 3}, rng));
    Var h = ops::dropout(ops::tanh(ops::matmul(x, w)), 0.3);
    const std::vector<std::int64_t> y = {0, 1, 2, 1};
    const std::vector<double> cw = {1.0, 2.0, 0.5};
    Var loss = ops::weighted_cross_entropy(h, y, cw);
    g.backward(loss);
    return std::vector<Tensor>{loss.value(), x.grad(), w.grad()};
  };
  CHECK(run() == run());
}

TEST_CASE("checkpoint round trip") {
  ParameterStore s;
  s.add("b.w", Tensor({2, 2}, {1.5, -2.0, 3.25, 0.0}));
  s.add("a.running_mean", Tensor({3}, {0.1, 0.2, 0.3}), false);
  const auto path = std::filesystem::temp_directory_path() / "mfuse_unit_ckpt.bin";
  save_checkpoint(s, path);
  {
    std::ifstream in(path, std::ios::binary);
    std::string magic(7, '\0');
    in.read(magic.data(), 7);
    CHECK(magic == "MFUSE1\n");
  }
  const ParameterStore r = load_checkpoint(path);
  CHECK(r.size() == 2);
  CHECK(r.at("b.w").value == s.at("b.w").value);
  CHECK_FALSE(r.at("a.running_mean").trainable);
  std::ofstream(path, std::ios::binary) << "garbage";
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  std::filesystem::remove(path);
}
