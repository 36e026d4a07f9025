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

#include "semlink/diffusion.hpp"
#include "semlink/rng.hpp"

using namespace semlink;
using namespace semlink::diffusion;
using nn::Tensor;

namespace {

// Oracle denoiser that knows the clean sample: returns the exact noise
// linking x_t to x0 under the schedule.
class TrueEpsDenoiser : public Denoiser {
 public:
  TrueEpsDenoiser(Tensor x0, const NoiseSchedule& s) : x0_(std::move(x0)), s_(s) {}
  nn::Var eps(nn::Graph& g, nn::Var x_t, double t_norm, nn::Var, nn::Var,
              nn::Binding*) override {
    int t = static_cast<int>(std::lround(t_norm * s_.T - 0.5));
    double ab = s_.alpha_bar[static_cast<size_t>(t)];
    Tensor e = Tensor::zeros(x0_.shape);
    const Tensor& xt = x_t.val();
    for (size_t i = 0; i < e.data.size(); ++i)
      e.data[i] = (xt.data[i] - std::sqrt(ab) * x0_.data[i]) / std::sqrt(1.0 - ab);
    return g.leaf(std::move(e));
  }
  std::vector<int> sample_shape() const override { return x0_.shape; }
  nn::ParamStore& params() override { return ps_; }

 private:
  Tensor x0_;
  NoiseSchedule s_;
  nn::ParamStore ps_;
};

class ConstantDenoiser : public Denoiser {
 public:
  explicit ConstantDenoiser(std::vector<int> shape) : shape_(std::move(shape)) {}
  nn::Var eps(nn::Graph& g, nn::Var, double, nn::Var, nn::Var,
              nn::Binding*) override {
    return g.leaf(Tensor::zeros(shape_));
  }
  std::vector<int> sample_shape() const override { return shape_; }
  nn::ParamStore& params() override { return ps_; }

 private:
  std::vector<int> shape_;
  nn::ParamStore ps_;
};

}  // namespace

TEST_CASE("cosine schedule endpoints and monotonicity") {
  NoiseSchedule s = NoiseSchedule::cosine(100);
  REQUIRE(s.T == 100);
  CHECK(s.alpha_bar[0] > 0.995);
  CHECK(s.alpha_bar[99] < 1e-4);
  for (int t = 0; t < 100; ++t) {
    CHECK(s.beta[static_cast<size_t>(t)] > 0.0);
    CHECK(s.beta[static_cast<size_t>(t)] < 1.0);
    if (t > 0)
      CHECK(s.alpha_bar[static_cast<size_t>(t)] <
            s.alpha_bar[static_cast<size_t>(t - 1)]);
  }
}

TEST_CASE("forward corruption: endpoints, identity, reproducibility") {
  NoiseSchedule s = NoiseSchedule::cosine(100);
  Rng rng(5);
  Tensor x0 = Tensor::zeros({1024});
  for (double& v : x0.data) v = rng.normal();

  // t = 0: corruption variance 1 - ab_0 below 1e-3
  auto [xt0, e0] = forward_sample(x0, 0, s, 11);
  double dev = 0.0;
  for (size_t i = 0; i < x0.data.size(); ++i) {
    double d = xt0.data[i] - x0.data[i];
    dev += d * d;
  }
  CHECK(dev / static_cast<double>(x0.numel()) < 1e-3);

  // t = T-1 over 1e5 scalars: close to N(0,1) despite x0 = 1
  Tensor ones = Tensor::full({100000}, 1.0);
  auto [xt, e] = forward_sample(ones, 99, s, 12);
  double mean = 0.0, var = 0.0;
  for (double v : xt.data) mean += v;
  mean /= static_cast<double>(xt.numel());
  for (double v : xt.data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(xt.numel());
  CHECK(std::fabs(mean) < 0.02);
  CHECK(std::fabs(var - 1.0) < 0.05);

  // exact algebraic identity x_t - sqrt(ab) x0 = sqrt(1-ab) eps
  auto [xt2, e2] = forward_sample(x0, 57, s, 13);
  double ab = s.alpha_bar[57];
  for (size_t i = 0; i < x0.data.size(); i += 83) {
    double lhs = xt2.data[i] - std::sqrt(ab) * x0.data[i];
    double rhs = std::sqrt(1.0 - ab) * e2.data[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }

  // reproducible per seed
  auto [xa, ea] = forward_sample(x0, 31, s, 999);
  auto [xb, eb] = forward_sample(x0, 31, s, 999);
  CHECK(xa.data == xb.data);
  CHECK(ea.data == eb.data);

  CHECK_THROWS_AS(forward_sample(x0, 100, s, 1), std::invalid_argument);
  CHECK_THROWS_AS(forward_sample(x0, -1, s, 1), std::invalid_argument);
}

TEST_CASE("variance identity Var(x_t) = ab Var(x0) + (1 - ab)") {
  NoiseSchedule s = NoiseSchedule::cosine(100);
  Rng rng(77);
  Tensor x0 = Tensor::zeros({100000});
  for (double& v : x0.data) v = 2.0 + 1.5 * rng.normal();
  for (int t : {25, 50, 99}) {
    auto [xt, e] = forward_sample(x0, t, s, derive_seed(3, "var", t));
    double mean = 0.0;
    for (double v : xt.data) mean += v;
    mean /= static_cast<double>(xt.numel());
    double var = 0.0;
    for (double v : xt.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(xt.numel());
    double ab = s.alpha_bar[static_cast<size_t>(t)];
    double want = ab * 2.25 + (1.0 - ab);
    CHECK(std::fabs(var - want) / want < 0.02);
  }
}

TEST_CASE("untrained denoiser loses ~1.0 on unit-variance noise targets") {
  NoiseSchedule s = NoiseSchedule::cosine(100);
  MlpDenoiser d({.dim = 16, .hidden = 48, .cond_dim = 0, .init_seed = 3});
  Rng rng(21);
  std::vector<Tensor> batch;
  for (int i = 0; i < 32; ++i) {
    Tensor x = Tensor::zeros({16});
    for (double& v : x.data) v = rng.normal();
    batch.push_back(std::move(x));
  }
  double loss = train_step(d, batch, {}, s, 1, {.lr = 0.0});
  CHECK(loss == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("constant-output denoiser is lower bounded near 1") {
  NoiseSchedule s = NoiseSchedule::cosine(100);
  ConstantDenoiser d({16});
  Rng rng(22);
  std::vector<Tensor> batch;
  for (int i = 0; i < 64; ++i) {
    Tensor x = Tensor::zeros({16});
    for (double& v : x.data) v = rng.normal();
    batch.push_back(std::move(x));
  }
  double loss = train_step(d, batch, {}, s, 2, {.lr = 1e-3});
  CHECK(loss > 0.9);
}

TEST_CASE("training on a 2-point dataset reduces loss below 0.5") {
  NoiseSchedule s = NoiseSchedule::cosine(100);
  MlpDenoiser d({.dim = 4, .hidden = 48, .cond_dim = 0, .init_seed = 9});
  Tensor a = Tensor({4}, {1.0, -1.0, 0.5, -0.5});
  Tensor b = Tensor({4}, {-1.0, 1.0, -0.5, 0.5});
  double loss = 1.0;
  for (int step = 0; step < 500; ++step) {
    std::vector<Tensor> batch;
    for (int i = 0; i < 8; ++i) batch.push_back(i % 2 == 0 ? a : b);
    loss = train_step(d, batch, {}, s, derive_seed(4, "2pt", step), {.lr = 2e-3});
  }
  CHECK(loss < 0.5);
}

TEST_CASE("sampler with the true-eps oracle recovers x0") {
  NoiseSchedule s = NoiseSchedule::cosine(100);
  Rng rng(31);
  Tensor x0 = Tensor::zeros({12});
  for (double& v : x0.data) v = rng.normal();
  TrueEpsDenoiser d(x0, s);
  for (int steps : {10, 100}) {
    Tensor out = sample(d, nullptr, s, steps, 5);
    for (size_t i = 0; i < x0.data.size(); ++i)
      CHECK(std::fabs(out.data[i] - x0.data[i]) < 1e-6);
  }
  // determinism
  Tensor o1 = sample(d, nullptr, s, 10, 6);
  Tensor o2 = sample(d, nullptr, s, 10, 6);
  CHECK(o1.data == o2.data);
  CHECK_THROWS_AS(sample(d, nullptr, s, 101, 1), std::invalid_argument);
}

TEST_CASE("two-component Gaussian mixture: generated means match data") {
  NoiseSchedule s = NoiseSchedule::cosine(100);
  MlpDenoiser d({.dim = 1, .hidden = 48, .cond_dim = 0, .init_seed = 17});
  Rng data_rng(88);
  auto draw = [&data_rng]() {
    double m = data_rng.uniform() < 0.5 ? -1.0 : 1.0;
    return Tensor({1}, {m + 0.1 * data_rng.normal()});
  };
  double data_min = 1e9, data_max = -1e9;
  for (int step = 0; step < 2500; ++step) {
    std::vector<Tensor> batch;
    for (int i = 0; i < 16; ++i) {
      batch.push_back(draw());
      data_min = std::min(data_min, batch.back()[0]);
      data_max = std::max(data_max, batch.back()[0]);
    }
    double lr = step < 1200 ? 2e-3 : 5e-4;
    train_step(d, batch, {}, s, derive_seed(5, "gm", step), {.lr = lr});
  }
  double pos = 0.0, neg = 0.0;
  int npos = 0, nneg = 0;
  double out_min = 1e9, out_max = -1e9;
  for (int i = 0; i < 300; ++i) {
    Tensor x = sample(d, nullptr, s, 10, derive_seed(6, "gm-s", i), nullptr,
                      -1.5, 1.5);
    double v = x[0];
    out_min = std::min(out_min, v);
    out_max = std::max(out_max, v);
    if (v >= 0) { pos += v; ++npos; } else { neg += v; ++nneg; }
  }
  REQUIRE(npos > 50);
  REQUIRE(nneg > 50);
  CHECK(std::fabs(pos / npos - 1.0) < 0.1);
  CHECK(std::fabs(neg / nneg + 1.0) < 0.1);
  // trained-model samples stay within the data range bounds
  CHECK(out_min > data_min - 0.3);
  CHECK(out_max < data_max + 0.3);
}
