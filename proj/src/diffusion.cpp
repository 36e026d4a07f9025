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

#include "semlink/diffusion.hpp"

#include <cmath>
#include <stdexcept>

#include "semlink/rng.hpp"

namespace semlink::diffusion {

using nn::Binding;
using nn::Graph;
using nn::GradMap;
using nn::Tensor;
using nn::Var;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

NoiseSchedule NoiseSchedule::cosine(int T, double s) {
  if (T < 2) throw std::invalid_argument("NoiseSchedule: T must be >= 2");
  NoiseSchedule out;
  out.T = T;
  out.beta.resize(static_cast<size_t>(T));
  out.alpha_bar.resize(static_cast<size_t>(T));
  auto f = [s](double u) {
    double c = std::cos((u + s) / (1.0 + s) * kPi / 2.0);
    return c * c;
  };
  double f0 = f(0.0);
  double prev = 1.0;
  for (int t = 0; t < T; ++t) {
    double ab = f(static_cast<double>(t + 1) / T) / f0;
    double beta = std::min(std::max(1.0 - ab / prev, 1e-8), 0.999);
    out.beta[static_cast<size_t>(t)] = beta;
    out.alpha_bar[static_cast<size_t>(t)] = prev * (1.0 - beta);
    prev = out.alpha_bar[static_cast<size_t>(t)];
  }
  return out;
}

std::pair<Tensor, Tensor> forward_sample(const Tensor& x0, int t,
                                         const NoiseSchedule& s, uint64_t seed) {
  if (t < 0 || t >= s.T)
    throw std::invalid_argument("forward_sample: t out of range");
  Rng rng(seed);
  double ab = s.alpha_bar[static_cast<size_t>(t)];
  double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Tensor eps = Tensor::zeros(x0.shape);
  Tensor xt = Tensor::zeros(x0.shape);
  for (size_t i = 0; i < x0.data.size(); ++i) {
    eps.data[i] = rng.normal();
    xt.data[i] = a * x0.data[i] + b * eps.data[i];
  }
  return {std::move(xt), std::move(eps)};
}

double train_step(Denoiser& d, const std::vector<Tensor>& x0s,
                  const std::vector<Tensor>& conds, const NoiseSchedule& s,
                  uint64_t seed, const TrainOpts& opts) {
  if (x0s.empty()) throw std::invalid_argument("train_step: empty batch");
  if (!conds.empty() && conds.size() != x0s.size())
    throw std::invalid_argument("train_step: condition batch size mismatch");
  const int n = static_cast<int>(x0s.size());
  GradMap grads;
  double loss = nn::batch_gradients(
      n, opts.threads,
      [&](int i, Graph& g, GradMap& out) {
        Rng pick(derive_seed(seed, "t-draw", static_cast<uint64_t>(i)));
        int t = pick.uniform_int(0, s.T - 1);
        auto [xt, eps] = forward_sample(x0s[static_cast<size_t>(i)], t, s,
                                        derive_seed(seed, "fwd", static_cast<uint64_t>(i)));
        Var x = g.leaf(std::move(xt));
        Var cond{};
        if (!conds.empty()) cond = g.leaf(conds[static_cast<size_t>(i)]);
        Binding bind(g, d.params(), true);
        Var pred = d.eps(g, x, (t + 0.5) / s.T, cond, Var{}, &bind);
        Var l = nn::mse(pred, g.leaf(std::move(eps)));
        g.backward(l);
        bind.collect(out);
        return l.val()[0];
      },
      grads);
  if (std::isfinite(loss)) {
    nn::AdamOpts a;
    a.lr = opts.lr;
    d.params().adam_step(grads, a);
  }
  return loss;
}

Tensor sample(Denoiser& d, const Tensor* cond, const NoiseSchedule& s,
              int steps, uint64_t seed, const Tensor* inject, double clip_lo,
              double clip_hi) {
  if (steps < 1 || steps > s.T)
    throw std::invalid_argument("sample: steps must be in [1, T]");
  std::vector<int> ts(static_cast<size_t>(steps));
  if (steps == 1) {
    ts[0] = s.T - 1;
  } else {
    for (int j = 0; j < steps; ++j) {
      double u = static_cast<double>(j) / (steps - 1);
      ts[static_cast<size_t>(j)] =
          static_cast<int>(std::lround((1.0 - u) * (s.T - 1)));
    }
  }
  Rng rng(derive_seed(seed, "x_T"));
  Tensor x = Tensor::zeros(d.sample_shape());
  for (double& v : x.data) v = rng.normal();

  for (int j = 0; j < steps; ++j) {
    int t = ts[static_cast<size_t>(j)];
    double ab = s.alpha_bar[static_cast<size_t>(t)];
    double ab_prev =
        (j + 1 < steps)
            ? s.alpha_bar[static_cast<size_t>(ts[static_cast<size_t>(j + 1)])]
            : 1.0;
    Graph g;
    Var xv = g.leaf(x);
    Var cv{};
    if (cond != nullptr) cv = g.leaf(*cond);
    Var iv{};
    if (inject != nullptr) iv = g.leaf(*inject);
    Var ev = d.eps(g, xv, (t + 0.5) / s.T, cv, iv, nullptr);
    const Tensor& eps = ev.val();
    double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    double pa = std::sqrt(ab_prev), pb = std::sqrt(1.0 - ab_prev);
    const bool clip = clip_lo < clip_hi;
    for (size_t i = 0; i < x.data.size(); ++i) {
      double x0_hat = (x.data[i] - sb * eps.data[i]) / sa;
      if (clip) x0_hat = std::min(std::max(x0_hat, clip_lo), clip_hi);
      x.data[i] = pa * x0_hat + pb * eps.data[i];
    }
  }
  return x;
}

Tensor time_features(double t_norm) {
  Tensor f = Tensor::zeros({9});
  f.data[0] = t_norm;
  int idx = 1;
  for (double freq : {1.0, 2.0, 4.0, 8.0}) {
    f.data[static_cast<size_t>(idx++)] = std::sin(2.0 * kPi * freq * t_norm);
    f.data[static_cast<size_t>(idx++)] = std::cos(2.0 * kPi * freq * t_norm);
  }
  return f;
}

// ---- ConvDenoiser ----

ConvDenoiser::ConvDenoiser(const ConvDenoiserConfig& cfg) : cfg_(cfg) {
  init_params();
}

ConvDenoiser::ConvDenoiser(const ConvDenoiserConfig& cfg, nn::ParamStore weights)
    : cfg_(cfg), ps_(std::move(weights)) {}

std::vector<int> ConvDenoiser::latent_shape() const {
  int h1 = (cfg_.h + 1) / 2, w1 = (cfg_.w + 1) / 2;
  return {cfg_.c2, (h1 + 1) / 2, (w1 + 1) / 2};
}

void ConvDenoiser::init_params() {
  Rng rng(cfg_.init_seed);
  const int ch = cfg_.ch, c1 = cfg_.c1, c2 = cfg_.c2;
  ps_.add("conv1.w", nn::init_he_conv(c1, ch, 5, rng));
  ps_.add("conv1.b", Tensor::zeros({c1}));
  ps_.add("conv2.w", nn::init_he_conv(c2, c1, 5, rng));
  ps_.add("conv2.b", Tensor::zeros({c2}));
  ps_.add("res1.w", nn::init_he_conv(c2, c2, 5, rng));
  ps_.add("res1.b", Tensor::zeros({c2}));
  ps_.add("res2.w", nn::init_he_conv(c2, c2, 5, rng));
  ps_.add("res2.b", Tensor::zeros({c2}));
  ps_.add("up1.w", nn::init_he_conv(c1, c2, 5, rng));
  ps_.add("up1.b", Tensor::zeros({c1}));
  // near-zero output path so an untrained model predicts ~0
  ps_.add("out.w", nn::init_normal({ch, c1, 5, 5}, 0.01, rng));
  ps_.add("out.b", Tensor::zeros({ch}));
  ps_.add("skip.w", nn::init_normal({ch, ch, 3, 3}, 0.01, rng));
  ps_.add("skip.b", Tensor::zeros({ch}));
  ps_.add("temb1.w", nn::init_he_dense(cfg_.emb_hidden, 9, rng));
  ps_.add("temb1.b", Tensor::zeros({cfg_.emb_hidden}));
  ps_.add("temb2.w", nn::init_he_dense(c2, cfg_.emb_hidden, rng));
  ps_.add("temb2.b", Tensor::zeros({c2}));
  if (cfg_.cond_dim > 0) {
    ps_.add("cemb1.w", nn::init_he_dense(cfg_.emb_hidden, cfg_.cond_dim, rng));
    ps_.add("cemb1.b", Tensor::zeros({cfg_.emb_hidden}));
    ps_.add("cemb2.w", nn::init_he_dense(c2, cfg_.emb_hidden, rng));
    ps_.add("cemb2.b", Tensor::zeros({c2}));
  }
}

Var ConvDenoiser::eps(Graph& g, Var x_t, double t_norm, Var cond, Var inject,
                      Binding* bind) {
  Binding local(g, ps_, false);
  Binding& p = bind != nullptr ? *bind : local;
  Var l1 = nn::relu(nn::conv2d(x_t, p("conv1.w"), p("conv1.b"), 2, 2));
  Var l2 = nn::conv2d(l1, p("conv2.w"), p("conv2.b"), 2, 2);

  Var temb = nn::dense(g.leaf(time_features(t_norm)), p("temb1.w"), p("temb1.b"));
  temb = nn::dense(nn::relu(temb), p("temb2.w"), p("temb2.b"));
  l2 = nn::add_channel_bias(l2, temb);
  if (cond.valid()) {
    if (cfg_.cond_dim <= 0)
      throw std::invalid_argument("ConvDenoiser: condition on unconditional model");
    if (cond.val().numel() != cfg_.cond_dim)
      throw std::invalid_argument("ConvDenoiser: condition length mismatch");
    Var cemb = nn::dense(nn::reshape(cond, {cfg_.cond_dim}), p("cemb1.w"),
                         p("cemb1.b"));
    cemb = nn::dense(nn::relu(cemb), p("cemb2.w"), p("cemb2.b"));
    l2 = nn::add_channel_bias(l2, cemb);
  }
  if (inject.valid()) l2 = nn::add(l2, inject);
  l2 = nn::relu(l2);

  Var r1 = nn::add(nn::relu(nn::conv2d(l2, p("res1.w"), p("res1.b"), 1, 2)), l2);
  Var r2 = nn::add(nn::relu(nn::conv2d(r1, p("res2.w"), p("res2.b"), 1, 2)), r1);

  const Tensor& l1v = l1.val();
  Var u = nn::resize_nearest(r2, l1v.dim(1), l1v.dim(2));
  u = nn::relu(nn::add(nn::conv2d(u, p("up1.w"), p("up1.b"), 1, 2), l1));
  u = nn::resize_nearest(u, cfg_.h, cfg_.w);
  Var out = nn::conv2d(u, p("out.w"), p("out.b"), 1, 2);
  Var skip = nn::conv2d(x_t, p("skip.w"), p("skip.b"), 1, 1);
  return nn::add(out, skip);
}

// ---- MlpDenoiser ----

MlpDenoiser::MlpDenoiser(const MlpDenoiserConfig& cfg) : cfg_(cfg) {
  Rng rng(cfg.init_seed);
  ps_.add("d1.w", nn::init_he_dense(cfg.hidden, cfg.dim, rng));
  ps_.add("d1.b", Tensor::zeros({cfg.hidden}));
  ps_.add("d2.w", nn::init_he_dense(cfg.hidden, cfg.hidden, rng));
  ps_.add("d2.b", Tensor::zeros({cfg.hidden}));
  // near-zero output path so an untrained model predicts ~0
  ps_.add("d3.w", nn::init_normal({cfg.dim, cfg.hidden}, 0.01, rng));
  ps_.add("d3.b", Tensor::zeros({cfg.dim}));
  ps_.add("skip.w", nn::init_normal({cfg.dim, cfg.dim}, 0.01, rng));
  ps_.add("temb1.w", nn::init_he_dense(cfg.emb_hidden, 9, rng));
  ps_.add("temb1.b", Tensor::zeros({cfg.emb_hidden}));
  ps_.add("temb2.w", nn::init_he_dense(cfg.hidden, cfg.emb_hidden, rng));
  ps_.add("temb2.b", Tensor::zeros({cfg.hidden}));
  if (cfg.cond_dim > 0) {
    ps_.add("cemb1.w", nn::init_he_dense(cfg.emb_hidden, cfg.cond_dim, rng));
    ps_.add("cemb1.b", Tensor::zeros({cfg.emb_hidden}));
    ps_.add("cemb2.w", nn::init_he_dense(cfg.hidden, cfg.emb_hidden, rng));
    ps_.add("cemb2.b", Tensor::zeros({cfg.hidden}));
  }
}

Var MlpDenoiser::eps(Graph& g, Var x_t, double t_norm, Var cond, Var inject,
                     Binding* bind) {
  if (inject.valid())
    throw std::invalid_argument("MlpDenoiser: injection unsupported");
  Binding local(g, ps_, false);
  Binding& p = bind != nullptr ? *bind : local;
  Var x = nn::reshape(x_t, {cfg_.dim});
  Var e = nn::dense(x, p("d1.w"), p("d1.b"));
  Var temb = nn::dense(g.leaf(time_features(t_norm)), p("temb1.w"), p("temb1.b"));
  temb = nn::dense(nn::relu(temb), p("temb2.w"), p("temb2.b"));
  e = nn::add(e, temb);
  if (cond.valid()) {
    Var cemb = nn::dense(nn::reshape(cond, {cfg_.cond_dim}), p("cemb1.w"),
                         p("cemb1.b"));
    cemb = nn::dense(nn::relu(cemb), p("cemb2.w"), p("cemb2.b"));
    e = nn::add(e, cemb);
  }
  e = nn::relu(e);
  Var e2 = nn::add(nn::relu(nn::dense(e, p("d2.w"), p("d2.b"))), e);
  Var out = nn::dense(e2, p("d3.w"), p("d3.b"));
  Var skip = nn::dense(x, p("skip.w"), Var{});
  return nn::reshape(nn::add(out, skip), sample_shape());
}

}  // namespace semlink::diffusion
