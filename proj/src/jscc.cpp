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

#include "semlink/jscc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "semlink/ofdm.hpp"
#include "semlink/precode.hpp"
#include "semlink/rng.hpp"
#include "semlink/semantic.hpp"

namespace semlink::jscc {

using channel::Link;
using nn::Graph;
using nn::GradMap;
using nn::Tensor;
using nn::Var;

JsccCodec::JsccCodec(uint64_t init_seed) {
  Rng rng(init_seed);
  ps_.add("en.c1.w", nn::init_he_conv(16, 3, 5, rng));
  ps_.add("en.c1.b", Tensor::zeros({16}));
  ps_.add("en.c2.w", nn::init_he_conv(32, 16, 5, rng));
  ps_.add("en.c2.b", Tensor::zeros({32}));
  ps_.add("en.c3.w", nn::init_he_conv(32, 32, 5, rng));
  ps_.add("en.c3.b", Tensor::zeros({32}));
  ps_.add("de.c1.w", nn::init_he_conv(32, 32, 5, rng));
  ps_.add("de.c1.b", Tensor::zeros({32}));
  ps_.add("de.c2.w", nn::init_he_conv(16, 32, 5, rng));
  ps_.add("de.c2.b", Tensor::zeros({16}));
  ps_.add("de.c3.w", nn::init_he_conv(3, 16, 5, rng));
  ps_.add("de.c3.b", Tensor::zeros({3}));
}

JsccCodec::JsccCodec(nn::ParamStore weights) : ps_(std::move(weights)) {}

namespace {

Var encode_graph(Graph& g, nn::Binding& p, const Tensor& image) {
  Var x = g.leaf(image);
  Var h1 = nn::relu(nn::conv2d(x, p("en.c1.w"), p("en.c1.b"), 2, 2));
  Var h2 = nn::relu(nn::conv2d(h1, p("en.c2.w"), p("en.c2.b"), 2, 2));
  Var h3 = nn::conv2d(h2, p("en.c3.w"), p("en.c3.b"), 1, 2);
  return nn::quantize_st(nn::reshape(h3, {2 * kSymbols}));
}

Var decode_graph(Graph& g, nn::Binding& p, Var feat) {
  Var x = nn::reshape(feat, {32, 16, 16});
  Var h1 = nn::relu(nn::conv2d(x, p("de.c1.w"), p("de.c1.b"), 1, 2));
  h1 = nn::resize_nearest(h1, 32, 32);
  Var h2 = nn::relu(nn::conv2d(h1, p("de.c2.w"), p("de.c2.b"), 1, 2));
  h2 = nn::resize_nearest(h2, 64, 64);
  return nn::conv2d(h2, p("de.c3.w"), p("de.c3.b"), 1, 2);
}

}  // namespace

std::vector<cd> JsccCodec::encode(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != 64)
    throw std::invalid_argument("JsccCodec::encode: expected [3][64][64]");
  Graph g;
  nn::ParamStore& ps = const_cast<nn::ParamStore&>(ps_);
  nn::Binding p(g, ps, false);
  return semantic::r2c(encode_graph(g, p, image).val().data);
}

Tensor JsccCodec::decode(const std::vector<cd>& f) const {
  if (f.size() != kSymbols)
    throw std::invalid_argument("JsccCodec::decode: feature length mismatch");
  Graph g;
  nn::ParamStore& ps = const_cast<nn::ParamStore&>(ps_);
  nn::Binding p(g, ps, false);
  Var feat = g.leaf(Tensor({2 * kSymbols}, semantic::c2r(f)));
  Tensor img = decode_graph(g, p, feat).val();
  for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
  return img;
}

double JsccCodec::train(const std::vector<Tensor>& images,
                        const std::vector<ChannelTensor>& ensemble,
                        const TrainCfg& cfg, uint64_t seed) {
  if (images.empty() || ensemble.empty())
    throw std::invalid_argument("JsccCodec::train: empty inputs");
  // per-slot equivalent gains for each pooled channel, over however many
  // frames the payload needs
  const size_t per_frame = static_cast<size_t>(Link::kK) * Link::kL * Link::kStreams;
  const size_t n_frames = (static_cast<size_t>(kSymbols) + per_frame - 1) / per_frame;
  struct Pool {
    std::vector<double> lambda;  // per payload slot
    std::vector<double> sigma_scale;  // sqrt(P_rx of its frame)
  };
  std::vector<ofdm::SvdTriple> svds;
  svds.reserve(ensemble.size());
  for (const ChannelTensor& h : ensemble) svds.push_back(ofdm::svd_decompose(h));

  double loss = 0.0;
  for (int step = 0; step < cfg.steps; ++step) {
    GradMap grads;
    double l = nn::batch_gradients(
        cfg.batch, cfg.threads,
        [&](int i, Graph& g, GradMap& out) {
          Rng rng(derive_seed(seed, "sample", static_cast<uint64_t>(step),
                              static_cast<uint64_t>(i)));
          const Tensor& img =
              images[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(images.size()) - 1))];
          double rho = std::pow(10.0, cfg.snr_db / 10.0);
          // equalized equivalent link: x + n / lambda per payload slot, with
          // a fresh channel draw per frame
          Tensor zf_noise = Tensor::zeros({2 * kSymbols});
          for (size_t f = 0; f < n_frames; ++f) {
            const ofdm::SvdTriple& svd = svds[static_cast<size_t>(
                rng.uniform_int(0, static_cast<int>(svds.size()) - 1))];
            double p_rx = 0.0;
            std::vector<double> lam(per_frame);
            for (size_t s = 0; s < per_frame; ++s) {
              precode::Placement pl = precode::payload_slot(s);
              lam[s] = svd.sing(pl.k, pl.l, pl.d);
              p_rx += lam[s] * lam[s];
            }
            p_rx /= static_cast<double>(Link::kK) * Link::kL * Link::kNr;
            double comp_std = std::sqrt(p_rx / rho / 2.0);
            for (size_t s = 0; s < per_frame; ++s) {
              size_t sym = f * per_frame + s;
              if (sym >= static_cast<size_t>(kSymbols)) break;
              double inv = 1.0 / std::max(lam[s], 1e-3);
              zf_noise.data[2 * sym] = comp_std * inv * rng.normal();
              zf_noise.data[2 * sym + 1] = comp_std * inv * rng.normal();
            }
          }
          nn::Binding p(g, ps_, true);
          Var q = encode_graph(g, p, img);
          Var xn = nn::power_normalize(q);
          Var noisy = nn::add(xn, g.leaf(std::move(zf_noise)));
          Var rec = decode_graph(g, p, noisy);
          Var lv = nn::mse(rec, g.leaf(img));
          g.backward(lv);
          p.collect(out);
          return lv.val()[0];
        },
        grads);
    double u = static_cast<double>(step) / std::max(1, cfg.steps - 1);
    nn::AdamOpts a;
    a.lr = cfg.lr * std::pow(cfg.lr_final / cfg.lr, u);
    if (std::isfinite(l)) {
      if (!ps_.adam_step(grads, a))
        throw std::runtime_error("JsccCodec::train: non-finite gradients");
    }
    loss = l;
  }
  return loss;
}

}  // namespace semlink::jscc
