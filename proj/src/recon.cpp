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

#include "semlink/recon.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "semlink/rng.hpp"

namespace semlink::recon {

using nn::Binding;
using nn::Graph;
using nn::GradMap;
using nn::Tensor;
using nn::Var;

ConditionBranch::ConditionBranch(int in_ch, std::vector<int> latent_shape,
                                 uint64_t init_seed)
    : in_ch_(in_ch), latent_(std::move(latent_shape)) {
  Rng rng(init_seed);
  ps_.add("c1.w", nn::init_he_conv(16, in_ch, 3, rng));
  ps_.add("c1.b", Tensor::zeros({16}));
  // zero-initialized head: untrained branches leave the base untouched
  ps_.add("c2.w", Tensor::zeros({latent_[0], 16, 3, 3}));
  ps_.add("c2.b", Tensor::zeros({latent_[0]}));
}

ConditionBranch::ConditionBranch(int in_ch, std::vector<int> latent_shape,
                                 nn::ParamStore weights)
    : in_ch_(in_ch), latent_(std::move(latent_shape)), ps_(std::move(weights)) {}

Var ConditionBranch::forward(Graph& g, const Tensor& cond, Binding* bind) const {
  if (cond.rank() != 3 || cond.dim(0) != in_ch_)
    throw std::invalid_argument("ConditionBranch: bad condition shape " +
                                cond.shape_str());
  nn::ParamStore& ps = const_cast<nn::ParamStore&>(ps_);
  Binding local(g, ps, false);
  Binding& p = bind != nullptr ? *bind : local;
  Var x = g.leaf(cond);
  if (cond.dim(1) != latent_[1] || cond.dim(2) != latent_[2])
    x = nn::resize_nearest(x, latent_[1], latent_[2]);
  Var h = nn::relu(nn::conv2d(x, p("c1.w"), p("c1.b"), 1, 1));
  return nn::conv2d(h, p("c2.w"), p("c2.b"), 1, 1);
}

Tensor ConditionBranch::eval(const Tensor& cond) const {
  Graph g;
  return forward(g, cond, nullptr).val();
}

bool ConditionBranch::zero_output() const {
  const Tensor& w = ps_.get("c2.w");
  const Tensor& b = ps_.get("c2.b");
  for (double v : w.data)
    if (v != 0.0) return false;
  for (double v : b.data)
    if (v != 0.0) return false;
  return true;
}

namespace {

diffusion::ConvDenoiserConfig scene_net_config(uint64_t seed) {
  diffusion::ConvDenoiserConfig cfg;
  cfg.ch = 3;
  cfg.h = semantic::kImageSize;
  cfg.w = semantic::kImageSize;
  cfg.c1 = 16;
  cfg.c2 = 32;
  cfg.cond_dim = 0;
  cfg.init_seed = seed;
  return cfg;
}

Tensor to_signed(const Tensor& img) {
  Tensor out = img;
  for (double& v : out.data) v = 2.0 * v - 1.0;
  return out;
}

Tensor to_unit(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data) v = std::clamp(0.5 * (v + 1.0), 0.0, 1.0);
  return out;
}

}  // namespace

Reconstructor::Reconstructor(uint64_t init_seed)
    : sched_(diffusion::NoiseSchedule::cosine(100)),
      base_(std::make_unique<diffusion::ConvDenoiser>(scene_net_config(init_seed))) {
  se_ = std::make_unique<ConditionBranch>(semantic::kClasses,
                                          base_->latent_shape(),
                                          derive_seed(init_seed, "se-branch"));
  co_ = std::make_unique<ConditionBranch>(3, base_->latent_shape(),
                                          derive_seed(init_seed, "co-branch"));
}

Reconstructor::Reconstructor(nn::ParamStore base, nn::ParamStore se,
                             nn::ParamStore co)
    : sched_(diffusion::NoiseSchedule::cosine(100)),
      base_(std::make_unique<diffusion::ConvDenoiser>(scene_net_config(0),
                                                      std::move(base))),
      base_trained_(true) {
  se_ = std::make_unique<ConditionBranch>(semantic::kClasses,
                                          base_->latent_shape(), std::move(se));
  co_ = std::make_unique<ConditionBranch>(3, base_->latent_shape(), std::move(co));
}

double Reconstructor::train_base(const std::vector<Tensor>& images,
                                 const TrainCfg& cfg, uint64_t seed) {
  if (images.empty()) throw std::invalid_argument("train_base: empty dataset");
  double loss = 0.0;
  for (int step = 0; step < cfg.steps; ++step) {
    Rng pick(derive_seed(seed, "batch", static_cast<uint64_t>(step)));
    std::vector<Tensor> x0s;
    for (int b = 0; b < cfg.batch; ++b)
      x0s.push_back(to_signed(
          images[static_cast<size_t>(pick.uniform_int(0, static_cast<int>(images.size()) - 1))]));
    double u = static_cast<double>(step) / std::max(1, cfg.steps - 1);
    diffusion::TrainOpts opts;
    opts.lr = cfg.lr * std::pow(cfg.lr_final / cfg.lr, u);
    opts.threads = cfg.threads;
    loss = diffusion::train_step(*base_, x0s, {}, sched_,
                                 derive_seed(seed, "step", static_cast<uint64_t>(step)),
                                 opts);
  }
  base_trained_ = true;
  return loss;
}

namespace {

double train_branch(diffusion::ConvDenoiser& base, ConditionBranch& branch,
                    const diffusion::NoiseSchedule& sched,
                    const std::vector<ReconSample>& data, bool se_branch,
                    const Reconstructor::TrainCfg& cfg, uint64_t seed) {
  if (data.empty()) throw std::invalid_argument("train_branch: empty dataset");
  double loss = 0.0;
  for (int step = 0; step < cfg.steps; ++step) {
    Rng pick(derive_seed(seed, "batch", static_cast<uint64_t>(step)));
    std::vector<const ReconSample*> batch;
    std::vector<bool> dropped;
    for (int b = 0; b < cfg.batch; ++b) {
      batch.push_back(
          &data[static_cast<size_t>(pick.uniform_int(0, static_cast<int>(data.size()) - 1))]);
      dropped.push_back(pick.uniform() < cfg.cond_dropout);
    }
    GradMap grads;
    double l = nn::batch_gradients(
        cfg.batch, cfg.threads,
        [&](int i, Graph& g, GradMap& out) {
          const ReconSample& s = *batch[static_cast<size_t>(i)];
          Rng tr(derive_seed(seed, "t", static_cast<uint64_t>(step),
                             static_cast<uint64_t>(i)));
          int t = tr.uniform_int(0, sched.T - 1);
          auto [xt, eps] = diffusion::forward_sample(
              to_signed(s.image), t, sched,
              derive_seed(seed, "fwd", static_cast<uint64_t>(step),
                          static_cast<uint64_t>(i)));
          Var x = g.leaf(std::move(xt));
          Binding bind(g, branch.params(), true);
          Var inject{};
          if (!dropped[static_cast<size_t>(i)]) {
            Tensor cond = se_branch ? semantic::seg_one_hot(s.seg) : s.thumb;
            inject = branch.forward(g, cond, &bind);
          }
          Var pred = base.eps(g, x, (t + 0.5) / sched.T, Var{}, inject, nullptr);
          Var lv = nn::mse(pred, g.leaf(std::move(eps)));
          g.backward(lv);
          bind.collect(out);
          return lv.val()[0];
        },
        grads);
    double u = static_cast<double>(step) / std::max(1, cfg.steps - 1);
    nn::AdamOpts a;
    a.lr = cfg.lr * std::pow(cfg.lr_final / cfg.lr, u);
    if (std::isfinite(l)) branch.params().adam_step(grads, a);
    loss = l;
  }
  return loss;
}

}  // namespace

double Reconstructor::train_se_branch(const std::vector<ReconSample>& data,
                                      const TrainCfg& cfg, uint64_t seed) {
  if (!base_trained_)
    throw std::runtime_error("train_se_branch: base denoiser not trained");
  return train_branch(*base_, *se_, sched_, data, true, cfg, seed);
}

double Reconstructor::train_co_branch(const std::vector<ReconSample>& data,
                                      const TrainCfg& cfg, uint64_t seed) {
  if (!base_trained_)
    throw std::runtime_error("train_co_branch: base denoiser not trained");
  return train_branch(*base_, *co_, sched_, data, false, cfg, seed);
}

Tensor Reconstructor::reconstruct(const std::vector<int>& seg,
                                  const Tensor& thumb, int steps, uint64_t seed,
                                  bool use_se, bool use_co) const {
  if (!base_trained_)
    throw std::runtime_error("reconstruct: base denoiser not trained");
  std::vector<int> latent = base_->latent_shape();
  Tensor inject = Tensor::zeros(latent);
  if (use_se) {
    Tensor b = se_->eval(semantic::seg_one_hot(seg));
    for (size_t i = 0; i < inject.data.size(); ++i) inject.data[i] += b.data[i];
  }
  if (use_co) {
    Tensor b = co_->eval(thumb);
    for (size_t i = 0; i < inject.data.size(); ++i) inject.data[i] += b.data[i];
  }
  Tensor x = diffusion::sample(*base_, nullptr, sched_, steps, seed, &inject,
                               -1.0, 1.0);
  return to_unit(x);
}

Tensor Reconstructor::sample_unconditional(int steps, uint64_t seed) const {
  if (!base_trained_)
    throw std::runtime_error("sample_unconditional: base denoiser not trained");
  Tensor x = diffusion::sample(*base_, nullptr, sched_, steps, seed, nullptr,
                               -1.0, 1.0);
  return to_unit(x);
}

double Reconstructor::eval_eps_loss(const std::vector<ReconSample>& data,
                                    uint64_t seed, bool with_se,
                                    bool with_co) const {
  double acc = 0.0;
  int n = 0;
  for (size_t i = 0; i < data.size(); ++i) {
    const ReconSample& s = data[i];
    Rng tr(derive_seed(seed, "eval-t", i));
    int t = tr.uniform_int(0, sched_.T - 1);
    auto [xt, eps] = diffusion::forward_sample(to_signed(s.image), t, sched_,
                                               derive_seed(seed, "eval-fwd", i));
    Graph g;
    Var x = g.leaf(std::move(xt));
    Tensor inject = Tensor::zeros(base_->latent_shape());
    if (with_se) {
      Tensor b = se_->eval(semantic::seg_one_hot(s.seg));
      for (size_t j = 0; j < inject.data.size(); ++j) inject.data[j] += b.data[j];
    }
    if (with_co) {
      Tensor b = co_->eval(s.thumb);
      for (size_t j = 0; j < inject.data.size(); ++j) inject.data[j] += b.data[j];
    }
    Var iv = g.leaf(inject);
    Var pred = base_->eps(g, x, (t + 0.5) / sched_.T, Var{}, iv, nullptr);
    acc += nn::mse(pred, g.leaf(std::move(eps))).val()[0];
    ++n;
  }
  return acc / std::max(1, n);
}

}  // namespace semlink::recon
