// Copyright 2026 The asckit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <functional>
#include <random>

#include "asckit/error.hpp"
#include "asckit/nn/layers.hpp"
#include "asckit/nn/loss.hpp"
#include "asckit/nn/optim.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace asckit;
using namespace asckit::nn;
using namespace asckit::testing;

TEST_CASE("conv2d gradients") {
  for (auto [kh, kw] : {std::pair{3, 3}, std::pair{4, 1}, std::pair{2, 3}}) {
    Conv2d<double> conv(kh, kw, 2, 3);
    init(conv, 1);
    conv.bias().values = {0.1, -0.2, 0.3};
    GradCheck gc{conv};
    gc.objective = projection(5);
    CHECK(gc.run(random_tensor({2, 5, 4, 2}, 2)) < kTol);
  }
}

TEST_CASE("conv2d matches a direct same-padded correlation") {
  Conv2d<double> conv(3, 2, 2, 2);
  init(conv, 4);
  conv.bias().values = {0.5, -0.5};
  const auto x = random_tensor({1, 4, 5, 2}, 3);
  const auto y = conv.forward(x, Mode::kEval);
  const int H = 4, W = 5, kh = 3, kw = 2, cin = 2, cout = 2;
  const int ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j)
      for (int o = 0; o < cout; ++o) {
        double acc = conv.bias().values[o];
        for (int a = 0; a < kh; ++a)
          for (int b = 0; b < kw; ++b)
            for (int c = 0; c < cin; ++c) {
              const int ii = i + a - ph, jj = j + b - pw;
              if (ii < 0 || jj < 0 || ii >= H || jj >= W) continue;
              acc += x.values[(ii * W + jj) * cin + c] * conv.kernel().values[((a * kw + b) * cin + c) * cout + o];
            }
        CHECK(y.values[(i * W + j) * cout + o] == doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("batchnorm gradients in training mode") {
  BatchNorm<double> bn(3);
  bn.scale().values = {1.5, 0.7, -0.4};
  bn.shift().values = {0.1, 0.2, -0.3};
  GradCheck gc{bn};
  gc.objective = projection(6);
  CHECK(gc.run(random_tensor({3, 2, 2, 3}, 7)) < kTol);
}

TEST_CASE("batchnorm gradients in evaluation mode") {
  BatchNorm<double> bn(2);
  bn.forward(random_tensor({4, 2}, 8), Mode::kTrain);
  GradCheck gc{bn, Mode::kEval};
  gc.objective = projection(9);
  CHECK(gc.run(random_tensor({3, 2}, 10)) < kTol);
}

TEST_CASE("batchnorm running statistics") {
  BatchNorm<double> bn(1);
  Tensor<double> x({4, 1}, std::vector<double>{1, 2, 3, 6});
  bn.forward(x, Mode::kTrain);
  // mean 3, biased variance 3.5, momentum 0.9 from (0, 1)
  CHECK(bn.running_mean().values[0] == doctest::Approx(0.3));
  CHECK(bn.running_var().values[0] == doctest::Approx(0.9 + 0.1 * 3.5));
  CHECK(bn.has_batch_stats());
}

TEST_CASE("pooling gradients") {
  AvgPool2d<double> pool(2, 2);
  GradCheck gc{pool};
  gc.objective = projection(11);
  CHECK(gc.run(random_tensor({2, 4, 6, 3}, 12)) < kTol);

  AvgPool2d<double> tall(4, 1);
  GradCheck gt{tall};
  gt.objective = projection(13);
  CHECK(gt.run(random_tensor({1, 8, 3, 2}, 14)) < kTol);

  GlobalAvgPool<double> gap;
  GradCheck gg{gap};
  gg.objective = projection(15);
  CHECK(gg.run(random_tensor({2, 3, 3, 4}, 16)) < kTol);
}

TEST_CASE("pool shapes") {
  AvgPool2d<double> pool(2, 2);
  CHECK(pool.output_shape({128, 128, 32}) == Shape{64, 64, 32});
  AvgPool2d<double> freq(16, 1);
  CHECK(freq.output_shape({16, 128, 256}) == Shape{1, 128, 256});
  GlobalAvgPool<double> gap;
  CHECK(gap.output_shape({16, 16, 256}) == Shape{256});
}

TEST_CASE("dense, relu, feature mean and reshape gradients") {
  Dense<double> dense(6, 4);
  init(dense, 17);
  dense.bias().values = {0.1, 0.2, 0.3, 0.4};
  GradCheck gd{dense};
  gd.objective = projection(18);
  CHECK(gd.run(random_tensor({3, 6}, 19)) < kTol);

  ReLU<double> relu;
  GradCheck gr{relu};
  gr.objective = projection(20);
  CHECK(gr.run(random_tensor({4, 5}, 21)) < kTol);

  FeatureMean<double> mean;
  GradCheck gm{mean};
  gm.objective = projection(22);
  CHECK(gm.run(random_tensor({2, 3, 4}, 23)) < kTol);

  Reshape<double> reshape({6, 2});
  GradCheck gs{reshape};
  gs.objective = projection(24);
  CHECK(gs.run(random_tensor({2, 1, 6, 2}, 25)) < kTol);
}

TEST_CASE("dropout gradients with a fixed mask") {
  Dropout<double> drop(0.4);
  GradCheck gc{drop};
  gc.objective = projection(26);
  CHECK(gc.run(random_tensor({3, 10}, 27)) < kTol);
  const auto x = random_tensor({2, 8}, 28);
  CHECK(drop.forward(x, Mode::kEval).values == x.values);
  CHECK_THROWS_AS(Dropout<double>(1.0), ConfigError);
}

TEST_CASE("softmax with kl loss gradients") {
  Softmax<double> softmax;
  const auto y_true = [] {
    Tensor<double> t({3, 4});
    const double rows[3][4] = {{1, 0, 0, 0}, {0.3, 0.7, 0, 0}, {0.25, 0.25, 0.25, 0.25}};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) t.values[i * 4 + j] = rows[i][j];
    return t;
  }();
  GradCheck gc{softmax};
  gc.objective = [&](const Tensor<double>& y, Tensor<double>& g) {
    auto loss = kl_loss(y_true, y, std::vector<ParamRef<double>>{}, 0.0);
    g = loss.grad;
    return loss.value;
  };
  CHECK(gc.run(random_tensor({3, 4}, 29)) < kTol);
}

TEST_CASE("bidirectional gru gradients") {
  BiGru<double> gru(3, 4, 0.25);
  init(gru, 30);
  for (int d = 0; d < 2; ++d) {
    auto& dir = gru.direction(d);
    for (auto* b : {&dir.b_z, &dir.b_r, &dir.b_h}) {
      std::mt19937_64 rng(31 + d);
      std::normal_distribution<double> n(0.0, 0.3);
      for (auto& v : b->values) v = n(rng);
    }
  }
  GradCheck gc{gru};
  gc.objective = projection(32);
  CHECK(gc.run(random_tensor({2, 5, 3}, 33)) < kTol);
  CHECK(gru.output_shape({128, 3}) == Shape{128, 8});
}

TEST_CASE("two block miniature network end to end") {
  Sequential<double> net("mini");
  auto block1 = std::make_unique<Sequential<double>>("block1", true);
  block1->emplace<BatchNorm<double>>("bn_in", 1);
  block1->emplace<Conv2d<double>>("conv", 3, 3, 1, 3);
  block1->emplace<ReLU<double>>("relu");
  block1->emplace<BatchNorm<double>>("bn", 3);
  block1->emplace<AvgPool2d<double>>("pool", 2, 2);
  block1->emplace<Dropout<double>>("drop", 0.2);
  auto block2 = std::make_unique<Sequential<double>>("block2", true);
  block2->emplace<GlobalAvgPool<double>>("gap");
  block2->emplace<Dense<double>>("fc", 3, 3);
  block2->emplace<Softmax<double>>("softmax");
  net.add("block1", std::move(block1));
  net.add("block2", std::move(block2));
  init(net, 34);

  std::vector<ParamRef<double>> params;
  net.collect("", params);
  Tensor<double> y_true({4, 3}, 0.0);
  for (int i = 0; i < 4; ++i) y_true.values[i * 3 + i % 3] = 1.0;
  GradCheck gc{net};
  gc.objective = [&](const Tensor<double>& y, Tensor<double>& g) {
    // L2 gradients are written straight into the parameters, so only the
    // value is used here; the accumulation is exercised below.
    auto loss = kl_loss(y_true, y, params, 0.0);
    g = loss.grad;
    return loss.value;
  };
  CHECK(gc.run(random_tensor({4, 6, 6, 1}, 35)) < kTol);

  std::vector<TraceEntry> trace;
  net.trace({6, 6, 1}, trace);
  REQUIRE(trace.size() == 2);
  CHECK(trace[0].block == "block1");
  CHECK(trace[0].shape == Shape{3, 3, 3});
  CHECK(trace[1].shape == Shape{3});
}

TEST_CASE("miniature recurrent branch end to end") {
  Sequential<double> net("rnn");
  net.emplace<Conv2d<double>>("conv", 2, 1, 1, 2);
  net.emplace<AvgPool2d<double>>("pool", 2, 1);
  net.emplace<Reshape<double>>("seq", Shape{4, 2});
  net.emplace<BiGru<double>>("gru", 2, 3, 0.0);
  net.emplace<FeatureMean<double>>("mean");
  net.emplace<Dense<double>>("fc", 4, 2);
  net.emplace<Softmax<double>>("softmax");
  init(net, 36);
  Tensor<double> y_true({2, 2}, std::vector<double>{1, 0, 0.4, 0.6});
  GradCheck gc{net};
  gc.objective = [&](const Tensor<double>& y, Tensor<double>& g) {
    auto loss = kl_divergence(y_true, y);
    g = loss.grad;
    return loss.value;
  };
  CHECK(gc.run(random_tensor({2, 2, 4, 1}, 37)) < kTol);
}

TEST_CASE("kl loss values") {
  Tensor<double> p({1, 2}, std::vector<double>{0.5, 0.5});
  Tensor<double> y({1, 2}, std::vector<double>{1.0, 0.0});
  CHECK(kl_divergence(y, p).value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  Tensor<double> q({2, 3}, std::vector<double>{0.2, 0.3, 0.5, 0.6, 0.4, 0.0});
  CHECK(kl_loss(q, q, std::vector<ParamRef<double>>{}, 0.0).value == 0.0);

  Tensor<double> theta({1}, std::vector<double>{2.0});
  theta.enable_grad();
  std::vector<ParamRef<double>> params{{"theta", &theta, true}};
  CHECK(l2_penalty(params, 1e-4, true) == doctest::Approx(2e-4).epsilon(1e-12));
  CHECK(theta.grad[0] == doctest::Approx(2e-4));
}

TEST_CASE("kl loss rejects rows off the simplex") {
  Tensor<double> bad({1, 2}, std::vector<double>{0.7, 0.7});
  Tensor<double> good({1, 2}, std::vector<double>{0.5, 0.5});
  CHECK_THROWS_AS(kl_divergence(bad, good), LossError);
  CHECK_THROWS_AS(kl_divergence(good, Tensor<double>({1, 3}, 1.0 / 3)), ShapeError);
}

TEST_CASE("adam first step moves each weight by the learning rate") {
  Tensor<double> w({3}, std::vector<double>{1.0, -1.0, 0.5});
  w.enable_grad();
  w.grad = {0.3, -2.0, 0.0};
  std::vector<ParamRef<double>> params{{"w", &w, true}};
  Adam<double> adam(0.01, 0.9, 0.999, 1e-8);
  adam.step(params);
  CHECK(w.values[0] == doctest::Approx(1.0 - 0.01 * 0.3 / (0.3 + 1e-8)));
  CHECK(w.values[1] == doctest::Approx(-1.0 + 0.01 * 2.0 / (2.0 + 1e-8)));
  CHECK(w.values[2] == 0.5);
  CHECK(adam.steps() == 1);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.batch_size = 7;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.l2_lambda = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("closed-form layer values") {
  Softmax<double> softmax;
  CHECK(softmax.forward(Tensor<double>({1, 2}, 0.0), Mode::kEval).values == std::vector<double>{0.5, 0.5});

  AvgPool2d<double> pool(2, 2);
  Tensor<double> sq({1, 2, 2, 1}, std::vector<double>{1, 3, 5, 7});
  CHECK(pool.forward(sq, Mode::kEval).values == std::vector<double>{4.0});

  GlobalAvgPool<double> gap;
  CHECK(gap.forward(Tensor<double>({1, 3, 3, 2}, 2.5), Mode::kTrain).values == std::vector<double>{2.5, 2.5});
  const auto g = gap.backward(Tensor<double>({1, 2}, std::vector<double>{9.0, 18.0}));
  CHECK(g.values[0] == 1.0);
  CHECK(g.values[1] == 2.0);

  // Centre-one kernel is the identity; a 1x1 kernel is a channel mix.
  Conv2d<double> ident(3, 3, 1, 1);
  std::fill(ident.kernel().values.begin(), ident.kernel().values.end(), 0.0);
  ident.kernel().values[4] = 1.0;
  const auto x = random_tensor({1, 4, 4, 1}, 40);
  CHECK(ident.forward(x, Mode::kEval).values == x.values);
  Conv2d<double> mix(1, 1, 2, 1);
  mix.kernel().values = {2.0, -1.0};
  Tensor<double> px({1, 1, 1, 2}, std::vector<double>{3.0, 4.0});
  CHECK(mix.forward(px, Mode::kEval).values == std::vector<double>{2.0});
}

TEST_CASE("batchnorm normalizes and applies the affine map") {
  BatchNorm<double> bn(1);
  std::mt19937_64 rng(41);
  std::normal_distribution<double> n(5.0, 2.0);
  Tensor<double> x({4000, 1});
  for (auto& v : x.values) v = n(rng);
  auto stats = [](const Tensor<double>& t) {
    double m = 0, s = 0;
    for (double v : t.values) m += v;
    m /= double(t.size());
    for (double v : t.values) s += (v - m) * (v - m);
    return std::pair{m, std::sqrt(s / double(t.size()))};
  };
  auto [m0, s0] = stats(bn.forward(x, Mode::kTrain));
  CHECK(std::abs(m0) < 1e-9);
  CHECK(s0 == doctest::Approx(1.0).epsilon(1e-4));
  bn.scale().values = {2.0};
  bn.shift().values = {3.0};
  auto [m1, s1] = stats(bn.forward(x, Mode::kTrain));
  CHECK(m1 == doctest::Approx(3.0));
  CHECK(s1 == doctest::Approx(2.0).epsilon(1e-4));
}

TEST_CASE("gru closed forms") {
  BiGru<double> gru(2, 3, 0.0);
  // Zero parameters: z = 0.5 and the candidate is 0, so h stays at 0.
  const auto y = gru.forward(random_tensor({1, 4, 2}, 42), Mode::kEval);
  for (double v : y.values) CHECK(v == 0.0);

  init(gru, 43);
  const auto one = random_tensor({1, 1, 2}, 44);
  const auto y1 = gru.forward(one, Mode::kEval);
  // A single step: both directions start from h0 = 0 and read the same input.
  for (int d = 0; d < 2; ++d) {
    auto& dir = gru.direction(d);
    for (int j = 0; j < 3; ++j) {
      double az = dir.b_z.values[j], ah = dir.b_h.values[j];
      for (int i = 0; i < 2; ++i) {
        az += one.values[i] * dir.w_z.values[i * 3 + j];
        ah += one.values[i] * dir.w_h.values[i * 3 + j];
      }
      const double z = 1.0 / (1.0 + std::exp(-az));
      CHECK(y1.values[d * 3 + j] == doctest::Approx(z * std::tanh(ah)).epsilon(1e-12));
    }
  }
}

TEST_CASE("adam minimizes a quadratic") {
  Tensor<double> w({1}, 0.0);
  w.enable_grad();
  std::vector<ParamRef<double>> params{{"w", &w, true}};
  Adam<double> adam(0.1, 0.9, 0.999, 1e-8);
  for (int i = 0; i < 200; ++i) {
    w.grad[0] = 2.0 * (w.values[0] - 3.0);
    adam.step(params);
  }
  CHECK(std::abs(w.values[0] - 3.0) < 0.05);
  w.grad[0] = 0.0;
  Adam<double> fresh(0.1, 0.9, 0.999, 1e-8);
  const double keep = w.values[0];
  fresh.step(params);
  CHECK(w.values[0] == keep);
}
