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

#include "semlink/precode.hpp"

#include <cmath>
#include <stdexcept>

#include "semlink/rng.hpp"
#include "semlink/semantic.hpp"

namespace semlink::precode {

using nn::Graph;
using nn::GradMap;
using nn::Tensor;
using nn::Var;

Placement payload_slot(size_t index) {
  const size_t kl = static_cast<size_t>(Link::kK) * Link::kL;
  Placement p;
  p.d = static_cast<int>(index / kl);
  p.l = static_cast<int>((index / Link::kK) % Link::kL);
  p.k = static_cast<int>(index % Link::kK);
  return p;
}

PrecodeModel::PrecodeModel(const PrecodeConfig& cfg) : cfg_(cfg) {
  Rng rng(cfg.init_seed);
  const int n = 2 * (cfg.n_se + cfg.n_co);
  ps_.add("w", nn::init_identity(n, 0.01, rng));
  ps_.add("fpre.w", nn::init_identity(n, 0.0, rng));
  ps_.add("fpre.b", Tensor::zeros({n}));
}

PrecodeModel::PrecodeModel(const PrecodeConfig& cfg, nn::ParamStore weights)
    : cfg_(cfg), ps_(std::move(weights)) {}

namespace {

std::vector<double> interleave(const std::vector<cd>& a, const std::vector<cd>& b) {
  std::vector<double> out;
  out.reserve(2 * (a.size() + b.size()));
  for (const cd& v : a) {
    out.push_back(v.real());
    out.push_back(v.imag());
  }
  for (const cd& v : b) {
    out.push_back(v.real());
    out.push_back(v.imag());
  }
  return out;
}

}  // namespace

ofdm::CFrame PrecodeModel::forward(const std::vector<cd>& f_se,
                                   const std::vector<cd>& f_co,
                                   const ofdm::SvdTriple& svd) const {
  if (static_cast<int>(f_se.size()) != cfg_.n_se ||
      static_cast<int>(f_co.size()) != cfg_.n_co)
    throw std::invalid_argument("PrecodeModel::forward: feature length mismatch");
  const int n = 2 * payload_symbols();
  std::vector<double> x = interleave(f_se, f_co);
  const Tensor& w = ps_.get("w");
  std::vector<double> xw(static_cast<size_t>(n), 0.0);
  nn::gemm_nt(1, n, n, x.data(), w.data.data(), xw.data(), false);
  // unit mean complex-symbol power, same accumulation order as the
  // training-graph op
  double ss = 0.0;
  for (double v : xw) ss += v * v;
  double sigma = std::sqrt(ss / static_cast<double>(payload_symbols()));
  if (sigma < 1e-30) sigma = 1e-30;
  ofdm::CFrame streams = ofdm::CFrame::zeros(Link::kK, Link::kL, Link::kStreams);
  for (int i = 0; i < payload_symbols(); ++i) {
    Placement p = payload_slot(static_cast<size_t>(i));
    streams.at(p.k, p.l, p.d) =
        cd(xw[static_cast<size_t>(2 * i)] / sigma,
           xw[static_cast<size_t>(2 * i + 1)] / sigma);
  }
  return ofdm::precode_with_v(streams, svd);
}

std::pair<std::vector<cd>, std::vector<cd>> PrecodeModel::decode(
    const ofdm::CFrame& rx, const ofdm::SvdTriple& svd) const {
  ofdm::CFrame c = ofdm::combine(rx, svd);
  const int n = 2 * payload_symbols();
  std::vector<double> x(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < payload_symbols(); ++i) {
    Placement p = payload_slot(static_cast<size_t>(i));
    cd v = c.at(p.k, p.l, p.d);
    x[static_cast<size_t>(2 * i)] = v.real();
    x[static_cast<size_t>(2 * i + 1)] = v.imag();
  }
  const Tensor& w2 = ps_.get("fpre.w");
  const Tensor& b2 = ps_.get("fpre.b");
  std::vector<double> y(static_cast<size_t>(n), 0.0);
  nn::gemm_nt(1, n, n, x.data(), w2.data.data(), y.data(), false);
  for (int i = 0; i < n; ++i) y[static_cast<size_t>(i)] += b2.data[static_cast<size_t>(i)];
  std::vector<cd> f_se(static_cast<size_t>(cfg_.n_se));
  std::vector<cd> f_co(static_cast<size_t>(cfg_.n_co));
  for (int i = 0; i < cfg_.n_se; ++i)
    f_se[static_cast<size_t>(i)] =
        cd(y[static_cast<size_t>(2 * i)], y[static_cast<size_t>(2 * i + 1)]);
  for (int i = 0; i < cfg_.n_co; ++i)
    f_co[static_cast<size_t>(i)] = cd(y[static_cast<size_t>(2 * (cfg_.n_se + i))],
                                      y[static_cast<size_t>(2 * (cfg_.n_se + i) + 1)]);
  return {std::move(f_se), std::move(f_co)};
}

namespace {

// Per-payload-slot singular values and the frame-mean received power for an
// SVD-precoded unit-power payload.
struct EquivalentLink {
  std::vector<double> lambda;  // per payload symbol
  double rx_power = 0.0;
};

EquivalentLink equivalent_link(const ofdm::SvdTriple& svd, int payload) {
  EquivalentLink eq;
  eq.lambda.resize(static_cast<size_t>(payload));
  double p = 0.0;
  for (int i = 0; i < payload; ++i) {
    Placement pl = payload_slot(static_cast<size_t>(i));
    double l = svd.sing(pl.k, pl.l, pl.d);
    eq.lambda[static_cast<size_t>(i)] = l;
    p += l * l;
  }
  eq.rx_power = p / (static_cast<double>(Link::kK) * Link::kL * Link::kNr);
  return eq;
}

std::vector<cd> random_features(int n, Rng& rng) {
  std::vector<cd> out(static_cast<size_t>(n));
  for (cd& v : out)
    v = cd(nn::kQamAmp[rng.uniform_int(0, 3)], nn::kQamAmp[rng.uniform_int(0, 3)]);
  return out;
}

}  // namespace

PrecodeModel::TrainStats PrecodeModel::train_joint(
    const std::vector<ChannelTensor>& ensemble, const TrainCfg& cfg,
    uint64_t seed) {
  if (ensemble.empty())
    throw std::invalid_argument("train_joint: empty channel ensemble");
  std::vector<EquivalentLink> links;
  links.reserve(ensemble.size());
  for (const ChannelTensor& h : ensemble)
    links.push_back(equivalent_link(ofdm::svd_decompose(h), payload_symbols()));

  const int n = 2 * payload_symbols();
  const int n_se2 = 2 * cfg_.n_se;
  const int n_co2 = 2 * cfg_.n_co;
  for (int step = 0; step < cfg.steps; ++step) {
    GradMap grads;
    double l = nn::batch_gradients(
        cfg.batch, cfg.threads,
        [&](int i, Graph& g, GradMap& out) {
          Rng rng(derive_seed(seed, "sample", static_cast<uint64_t>(step),
                              static_cast<uint64_t>(i)));
          const EquivalentLink& link =
              links[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(links.size()) - 1))];
          double snr_db = rng.uniform(cfg.snr_lo_db, cfg.snr_hi_db);
          double sigma2 = link.rx_power / std::pow(10.0, snr_db / 10.0);
          std::vector<cd> f_se = random_features(cfg_.n_se, rng);
          std::vector<cd> f_co = random_features(cfg_.n_co, rng);

          nn::Binding p(g, ps_, true);
          Var x = g.leaf(Tensor({n}, interleave(f_se, f_co)));
          Var xw = nn::dense(x, p("w"), Var{});
          Var xn = nn::power_normalize(xw);
          Tensor gain = Tensor::zeros({n});
          Tensor noise = Tensor::zeros({n});
          double comp_std = std::sqrt(sigma2 / 2.0);
          for (int s = 0; s < payload_symbols(); ++s) {
            gain.data[static_cast<size_t>(2 * s)] = link.lambda[static_cast<size_t>(s)];
            gain.data[static_cast<size_t>(2 * s + 1)] = link.lambda[static_cast<size_t>(s)];
          }
          for (double& v : noise.data) v = comp_std * rng.normal();
          Var faded = nn::mul(xn, g.leaf(std::move(gain)));
          Var noisy = nn::add(faded, g.leaf(std::move(noise)));
          Var xhat = nn::dense(noisy, p("fpre.w"), p("fpre.b"));
          Var se_hat = nn::slice0(xhat, 0, n_se2);
          Var co_hat = nn::slice0(xhat, n_se2, n_co2);
          Var loss = nn::add(
              nn::mse(se_hat, g.leaf(Tensor({n_se2}, semantic::c2r(f_se)))),
              nn::scale(nn::mse(co_hat, g.leaf(Tensor({n_co2}, semantic::c2r(f_co)))),
                        cfg_.beta));
          g.backward(loss);
          p.collect(out);
          return loss.val()[0];
        },
        grads);
    if (std::isfinite(l)) {
      if (!ps_.adam_step(grads, {.lr = cfg.lr}))
        throw std::runtime_error("train_joint: non-finite gradients");
    }
  }
  double mid = 0.5 * (cfg.snr_lo_db + cfg.snr_hi_db);
  return evaluate(ensemble, mid, 64, derive_seed(seed, "final-eval"));
}

PrecodeModel::TrainStats PrecodeModel::evaluate(
    const std::vector<ChannelTensor>& ensemble, double snr_db, int n_draws,
    uint64_t seed) const {
  if (ensemble.empty())
    throw std::invalid_argument("evaluate: empty channel ensemble");
  std::vector<EquivalentLink> links;
  links.reserve(ensemble.size());
  for (const ChannelTensor& h : ensemble)
    links.push_back(equivalent_link(ofdm::svd_decompose(h), payload_symbols()));
  const int n = 2 * payload_symbols();
  const Tensor& w = ps_.get("w");
  const Tensor& w2 = ps_.get("fpre.w");
  const Tensor& b2 = ps_.get("fpre.b");
  double acc_se = 0.0, acc_co = 0.0;
  for (int rep = 0; rep < n_draws; ++rep) {
    Rng rng(derive_seed(seed, "eval", static_cast<uint64_t>(rep)));
    const EquivalentLink& link =
        links[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(links.size()) - 1))];
    double sigma2 = link.rx_power / std::pow(10.0, snr_db / 10.0);
    std::vector<cd> f_se = random_features(cfg_.n_se, rng);
    std::vector<cd> f_co = random_features(cfg_.n_co, rng);
    std::vector<double> x = interleave(f_se, f_co);
    std::vector<double> xw(static_cast<size_t>(n), 0.0);
    nn::gemm_nt(1, n, n, x.data(), w.data.data(), xw.data(), false);
    double ss = 0.0;
    for (double v : xw) ss += v * v;
    double sigma = std::sqrt(ss / static_cast<double>(payload_symbols()));
    double comp_std = std::sqrt(sigma2 / 2.0);
    for (int s = 0; s < payload_symbols(); ++s) {
      double lam = link.lambda[static_cast<size_t>(s)];
      xw[static_cast<size_t>(2 * s)] =
          xw[static_cast<size_t>(2 * s)] / sigma * lam + comp_std * rng.normal();
      xw[static_cast<size_t>(2 * s + 1)] =
          xw[static_cast<size_t>(2 * s + 1)] / sigma * lam + comp_std * rng.normal();
    }
    std::vector<double> y(static_cast<size_t>(n), 0.0);
    nn::gemm_nt(1, n, n, xw.data(), w2.data.data(), y.data(), false);
    double se = 0.0, co = 0.0;
    for (int i = 0; i < n; ++i) {
      double v = y[static_cast<size_t>(i)] + b2.data[static_cast<size_t>(i)] -
                 x[static_cast<size_t>(i)];
      if (i < 2 * cfg_.n_se)
        se += v * v;
      else
        co += v * v;
    }
    acc_se += se / (2.0 * cfg_.n_se);
    acc_co += co / (2.0 * cfg_.n_co);
  }
  TrainStats st;
  st.mse_se = acc_se / n_draws;
  st.mse_co = acc_co / n_draws;
  st.loss = st.mse_se + cfg_.beta * st.mse_co;
  return st;
}

}  // namespace semlink::precode
