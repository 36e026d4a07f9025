// SPDX-License-Identifier: Apache-2.0
//
// semlink: semantic image transmission simulator for MIMO-OFDM links
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "semlink/nn.hpp"

using namespace semlink;
using namespace semlink::nn;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = scale * rng.normal();
  return t;
}

double max_rel_err(const Tensor& got, const Tensor& want) {
  double worst = 0.0;
  for (size_t i = 0; i < got.data.size(); ++i) {
    double denom = std::max({std::fabs(got.data[i]), std::fabs(want.data[i]), 1e-6});
    worst = std::max(worst, std::fabs(got.data[i] - want.data[i]) / denom);
  }
  return worst;
}

// Analytic-vs-central-finite-difference check of d(loss)/d(x) where loss is
// a fixed quadratic readout of build(x). f64, h = 1e-5.
double grad_check(const Tensor& x0,
                  const std::function<Var(Graph&, Var)>& build) {
  Graph g;
  Var x = g.leaf(x0, true);
  Var y = build(g, x);
  // loss = sum(y * w) with fixed pseudo-random weights, so every output
  // element contributes
  Rng wr(77);
  Tensor w = random_tensor(y.val().shape, wr);
  Var loss = sum(mul(y, g.leaf(w)));
  g.backward(loss);
  Tensor analytic = g.grad(x);

  Tensor fd = finite_difference(
      [&](const Tensor& xt) {
        Graph g2;
        Var x2 = g2.leaf(xt, false);
        Var y2 = build(g2, x2);
        double s = 0.0;
        for (size_t i = 0; i < y2.val().data.size(); ++i)
          s += y2.val().data[i] * w.data[i];
        return s;
      },
      x0);
  return max_rel_err(analytic, fd);
}

}  // namespace

TEST_CASE("conv2d forward matches hand results") {
  Graph g;
  Var x = g.leaf(Tensor::full({1, 1, 3, 3}, 1.0));
  Var w = g.leaf(Tensor::full({1, 1, 3, 3}, 1.0));
  Var y = conv2d(x, w, {}, 1, 1);
  CHECK(y.val().shape == std::vector<int>{1, 1, 3, 3});
  CHECK(y.val().at3(0, 1, 1) == doctest::Approx(9.0));  // NOLINT
  CHECK(y.val().data[0] == doctest::Approx(4.0));       // corner
  CHECK(y.val().data[1] == doctest::Approx(6.0));       // edge

  Var wz = g.leaf(Tensor::zeros({2, 1, 3, 3}));
  Var y0 = conv2d(x, wz, {}, 1, 1);
  for (double v : y0.val().data) CHECK(v == 0.0);
}

TEST_CASE("conv2d gradient matches finite differences") {
  Rng rng(1234);
  Tensor x0 = random_tensor({1, 2, 8, 8}, rng);
  Tensor w0 = random_tensor({4, 2, 5, 5}, rng, 0.3);
  Tensor b0 = random_tensor({4}, rng, 0.1);

  double ex = grad_check(x0, [&](Graph& g, Var x) {
    return conv2d(x, g.leaf(w0), g.leaf(b0), 1, 2);
  });
  CHECK(ex < 1e-6);

  double ew = grad_check(w0, [&](Graph& g, Var w) {
    return conv2d(g.leaf(x0), w, g.leaf(b0), 1, 2);
  });
  CHECK(ew < 1e-6);

  double eb = grad_check(b0, [&](Graph& g, Var b) {
    return conv2d(g.leaf(x0), g.leaf(w0), b, 2, 2);
  });
  CHECK(eb < 1e-6);
}

TEST_CASE("dense forward and gradient") {
  Rng rng(99);
  {
    Graph g;
    Tensor eye = Tensor::zeros({4, 4});
    for (int i = 0; i < 4; ++i) eye.data[static_cast<size_t>(i) * 4 + i] = 1.0;
    Tensor x0 = random_tensor({4}, rng);
    Var y = dense(g.leaf(x0), g.leaf(eye), g.leaf(Tensor::zeros({4})));
    for (int i = 0; i < 4; ++i) CHECK(y.val()[i] == doctest::Approx(x0[i]));
  }
  {
    Graph g;
    Tensor b0 = random_tensor({3}, rng);
    Var y = dense(g.leaf(random_tensor({5}, rng)), g.leaf(Tensor::zeros({3, 5})),
                  g.leaf(b0));
    for (int i = 0; i < 3; ++i) CHECK(y.val()[i] == doctest::Approx(b0[i]));
  }
  Tensor x0 = random_tensor({8}, rng);
  Tensor w0 = random_tensor({8, 8}, rng, 0.5);
  Tensor b0 = random_tensor({8}, rng, 0.2);
  CHECK(grad_check(x0, [&](Graph& g, Var x) {
          return dense(x, g.leaf(w0), g.leaf(b0));
        }) < 1e-6);
  CHECK(grad_check(w0, [&](Graph& g, Var w) {
          return dense(g.leaf(x0), w, g.leaf(b0));
        }) < 1e-6);
  CHECK_THROWS_AS(
      [&] {
        Graph g;
        dense(g.leaf(random_tensor({7}, rng)), g.leaf(w0), Var{});
      }(),
      std::invalid_argument);
}

TEST_CASE("elementwise and structural op gradients") {
  Rng rng(555);
  const int reps = 10;
  for (int i = 0; i < reps; ++i) {
    Tensor x0 = random_tensor({2, 4, 4}, rng);
    CHECK(grad_check(x0, [](Graph&, Var x) { return relu(x); }) < 1e-4);
    CHECK(grad_check(x0, [](Graph&, Var x) { return sigmoid(x); }) < 1e-4);
    CHECK(grad_check(x0, [](Graph&, Var x) {
            return resize_nearest(x, 7, 9);
          }) < 1e-4);
    CHECK(grad_check(x0, [](Graph& g, Var x) {
            Var flat = reshape(x, {32});
            Var a = slice0(flat, 0, 12);
            Var b = slice0(flat, 12, 20);
            return concat0({pad_tail(a, 16), b});
          }) < 1e-4);
    Tensor y0 = random_tensor({2, 4, 4}, rng);
    CHECK(grad_check(x0, [&](Graph& g, Var x) {
            return mse(x, g.leaf(y0));
          }) < 1e-4);
    Tensor b0 = random_tensor({2}, rng);
    CHECK(grad_check(x0, [&](Graph& g, Var x) {
            return add_channel_bias(x, g.leaf(b0));
          }) < 1e-4);
    CHECK(grad_check(x0, [&](Graph& g, Var x) {
            return power_normalize(reshape(x, {32}));
          }) < 1e-4);
  }
}

TEST_CASE("straight-through quantizer: codomain and pass-through gradient") {
  Rng rng(31);
  Graph g;
  Var x = g.leaf(random_tensor({64}, rng, 3.0), true);
  Var q = quantize_st(x);
  const double inv = 1.0 / std::sqrt(10.0);
  for (double v : q.val().data) {
    bool ok = v == kQamAmp[0] || v == kQamAmp[1] || v == kQamAmp[2] ||
              v == kQamAmp[3];
    CHECK(ok);
    CHECK(std::fabs(std::fabs(v) - inv) < 2.3 * inv);
  }
  Rng wr(77);
  Tensor w = random_tensor({64}, wr);
  Var loss = sum(mul(q, g.leaf(w)));
  g.backward(loss);
  const Tensor& gx = g.grad(x);
  for (size_t i = 0; i < w.data.size(); ++i)
    CHECK(gx.data[i] == doctest::Approx(w.data[i]));

  // saturation and the x = 0 boundary
  Graph g2;
  Var sat = quantize_st(g2.leaf(Tensor({2}, {40.0, 0.0})));
  CHECK(sat.val()[0] == kQamAmp[3]);
  CHECK(sat.val()[1] == kQamAmp[2]);  // sigmoid(0)=0.5 -> +1/sqrt(10)
}

TEST_CASE("softmax cross-entropy") {
  {
    // near-one-hot logits on the right class
    Graph g;
    Tensor logits = Tensor::zeros({3, 2, 2});
    auto labels = std::make_shared<std::vector<int>>(std::vector<int>{0, 1, 2, 1});
    for (int p = 0; p < 4; ++p)
      logits.data[static_cast<size_t>((*labels)[static_cast<size_t>(p)]) * 4 + p] = 50.0;
    Var l = softmax_ce(g.leaf(logits), labels);
    CHECK(l.val()[0] == doctest::Approx(0.0).epsilon(1e-9));
  }
  {
    // uniform logits, C = 19 -> ln 19
    Graph g;
    Tensor logits = Tensor::zeros({19, 2, 2});
    auto labels = std::make_shared<std::vector<int>>(std::vector<int>{0, 5, 7, 18});
    Var l = softmax_ce(g.leaf(logits), labels);
    CHECK(l.val()[0] == doctest::Approx(std::log(19.0)));
  }
  {
    // random case vs direct softmax computation
    Rng rng(4242);
    Tensor logits = random_tensor({4, 3, 3}, rng);
    auto labels = std::make_shared<std::vector<int>>();
    for (int p = 0; p < 9; ++p) labels->push_back(rng.uniform_int(0, 3));
    double want = 0.0;
    for (int p = 0; p < 9; ++p) {
      double z = 0.0;
      for (int c = 0; c < 4; ++c) z += std::exp(logits.data[static_cast<size_t>(c) * 9 + p]);
      want += std::log(z) - logits.data[static_cast<size_t>((*labels)[static_cast<size_t>(p)]) * 9 + p];
    }
    want /= 9.0;
    Graph g;
    Var l = softmax_ce(g.leaf(logits), labels);
    CHECK(l.val()[0] == doctest::Approx(want));
    // gradient
    CHECK(grad_check(logits, [&](Graph& g2, Var x) {
            return softmax_ce(x, labels);
          }) < 1e-4);
    // out-of-range label rejected
    auto bad = std::make_shared<std::vector<int>>(*labels);
    (*bad)[0] = 4;
    Graph g3;
    CHECK_THROWS_AS(softmax_ce(g3.leaf(logits), bad), std::invalid_argument);
  }
}

TEST_CASE("complex block apply matches conjugate-transpose backward") {
  Rng rng(808);
  const int blocks = 3, in_dim = 2, out_dim = 2;
  auto mats = std::make_shared<std::vector<std::complex<double>>>();
  for (int i = 0; i < blocks * in_dim * out_dim; ++i)
    mats->emplace_back(rng.normal(), rng.normal());
  Tensor x0 = random_tensor({blocks * in_dim * 2}, rng);
  CHECK(grad_check(x0, [&](Graph&, Var x) {
          return complex_block_apply(x, mats, blocks, in_dim, out_dim);
        }) < 1e-6);
}

TEST_CASE("adam optimizer behaviour") {
  {
    // zero gradient leaves parameters unchanged
    ParamStore ps;
    Rng rng(7);
    ps.add("w", random_tensor({4}, rng));
    Tensor before = ps.get("w");
    GradMap g;
    g.emplace("w", Tensor::zeros({4}));
    CHECK(ps.adam_step(g, {.lr = 0.1}));
    for (int i = 0; i < 4; ++i) CHECK(ps.get("w")[i] == before[i]);
  }
  {
    // first step moves by about -lr * sign(g)
    ParamStore ps;
    ps.add("w", Tensor::scalar(1.0));
    GradMap g;
    g.emplace("w", Tensor::scalar(3.5));
    CHECK(ps.adam_step(g, {.lr = 0.01}));
    CHECK(ps.get("w")[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(ps.step_count("w") == 1);
  }
  {
    // lr = 0 is the identity
    ParamStore ps;
    Rng rng(9);
    ps.add("w", random_tensor({8}, rng));
    Tensor before = ps.get("w");
    GradMap g;
    g.emplace("w", random_tensor({8}, rng));
    CHECK(ps.adam_step(g, {.lr = 0.0}));
    for (int i = 0; i < 8; ++i) CHECK(ps.get("w")[i] == before[i]);
  }
  {
    // non-finite gradient rejected
    ParamStore ps;
    ps.add("w", Tensor::scalar(1.0));
    GradMap g;
    g.emplace("w", Tensor::scalar(std::nan("")));
    CHECK_FALSE(ps.adam_step(g, {.lr = 0.1}));
    CHECK(ps.get("w")[0] == 1.0);
  }
  {
    // 100 steps on a quadratic bowl: loss decreases monotonically after
    // warm-up
    ParamStore ps;
    ps.add("w", Tensor({2}, {4.0, -3.0}));
    std::vector<double> losses;
    for (int it = 0; it < 100; ++it) {
      const Tensor& w = ps.get("w");
      losses.push_back(w[0] * w[0] + w[1] * w[1]);
      GradMap g;
      g.emplace("w", Tensor({2}, {2.0 * w[0], 2.0 * w[1]}));
      CHECK(ps.adam_step(g, {.lr = 0.05}));
    }
    for (size_t i = 6; i < losses.size(); ++i) CHECK(losses[i] <= losses[i - 1] + 1e-12);
    CHECK(losses.back() < losses.front());
  }
}

TEST_CASE("loss_mse basics") {
  Graph g;
  Rng rng(3);
  Tensor a = random_tensor({10}, rng);
  CHECK(mse(g.leaf(a), g.leaf(a)).val()[0] == 0.0);
  CHECK(mse(g.leaf(Tensor::scalar(0.0)), g.leaf(Tensor::scalar(1.0))).val()[0] ==
        doctest::Approx(1.0));
  Tensor b = random_tensor({10}, rng);
  double want = 0.0;
  for (int i = 0; i < 10; ++i) want += (a[i] - b[i]) * (a[i] - b[i]);
  want /= 10.0;
  CHECK(mse(g.leaf(a), g.leaf(b)).val()[0] == doctest::Approx(want));
  CHECK_THROWS_AS(mse(g.leaf(a), g.leaf(Tensor::zeros({4}))), std::invalid_argument);
}

TEST_CASE("forward determinism") {
  auto run = [] {
    Rng rng(2024);
    Graph g;
    Var x = g.leaf(random_tensor({1, 2, 6, 6}, rng));
    Var w = g.leaf(random_tensor({3, 2, 3, 3}, rng));
    Var y = conv2d(relu(x), w, {}, 2, 1);
    return y.val();
  };
  Tensor a = run(), b = run();
  CHECK(a.data == b.data);
}

TEST_CASE("weight container round-trip") {
  ParamStore ps;
  Rng rng(606);
  ps.add("conv.w", random_tensor({3, 2, 5, 5}, rng));
  ps.add("conv.b", random_tensor({3}, rng));
  ps.add("head.w", random_tensor({7, 11}, rng));
  std::string path = "/tmp/semlink_test_weights.bin";
  ps.save(path);
  ParamStore back = ParamStore::load(path);
  CHECK(back.total_params() == ps.total_params());
  for (const auto& [name, t] : ps.all()) {
    CHECK(back.get(name).shape == t.shape);
    CHECK(back.get(name).data == t.data);
  }
  CHECK(back.content_hash() == ps.content_hash());
  std::remove(path.c_str());
}

TEST_CASE("batched gradients are thread-count independent") {
  Rng rng(13);
  Tensor w0 = random_tensor({4, 6}, rng);
  std::vector<Tensor> xs, ys;
  for (int i = 0; i < 6; ++i) {
    xs.push_back(random_tensor({6}, rng));
    ys.push_back(random_tensor({4}, rng));
  }
  auto build = [&](ParamStore& ps) {
    return [&ps, &xs, &ys](int i, Graph& g, GradMap& out) {
      Binding bind(g, ps, true);
      Var y = dense(g.leaf(xs[static_cast<size_t>(i)]), bind("w"), Var{});
      Var loss = mse(y, g.leaf(ys[static_cast<size_t>(i)]));
      g.backward(loss);
      bind.collect(out);
      return loss.val()[0];
    };
  };
  ParamStore ps1, ps2;
  ps1.add("w", w0);
  ps2.add("w", w0);
  GradMap g1, g2;
  double l1 = batch_gradients(6, 1, build(ps1), g1);
  double l2 = batch_gradients(6, 4, build(ps2), g2);
  CHECK(l1 == l2);
  CHECK(g1.at("w").data == g2.at("w").data);
}
