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

#ifndef SEMLINK_DIFFUSION_HPP
#define SEMLINK_DIFFUSION_HPP

#include <memory>
#include <utility>
#include <vector>

#include "semlink/nn.hpp"

namespace semlink::diffusion {

// Cosine noise schedule. alpha_bar is strictly decreasing with
// alpha_bar[0] ~ 1 and alpha_bar[T-1] ~ 0.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;
  std::vector<double> alpha_bar;
  static NoiseSchedule cosine(int T, double s = 0.008);
};

// Conditional epsilon predictor. Output shape always equals the sample
// shape. cond and inject may be invalid Vars (unconditional / no branch
// injection). When bind is non-null the caller owns gradient collection for
// the backbone weights; a null bind freezes them.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual nn::Var eps(nn::Graph& g, nn::Var x_t, double t_norm, nn::Var cond,
                      nn::Var inject, nn::Binding* bind) = 0;
  virtual std::vector<int> sample_shape() const = 0;
  virtual nn::ParamStore& params() = 0;
};

// Closed-form forward corruption: x_t = sqrt(ab_t) x0 + sqrt(1-ab_t) eps.
// Returns (x_t, eps); the identity between them holds exactly.
std::pair<nn::Tensor, nn::Tensor> forward_sample(const nn::Tensor& x0, int t,
                                                 const NoiseSchedule& s,
                                                 uint64_t seed);

struct TrainOpts {
  double lr = 1e-3;
  int threads = 1;
};

// One Adam step on E || eps - eps_theta(x_t, t; p) ||^2 over the batch.
// conds is empty for unconditional training. A non-finite loss aborts the
// update and is returned unapplied.
double train_step(Denoiser& d, const std::vector<nn::Tensor>& x0s,
                  const std::vector<nn::Tensor>& conds, const NoiseSchedule& s,
                  uint64_t seed, const TrainOpts& opts);

// Deterministic sampler. steps == T walks the full schedule; fewer steps use
// an evenly strided deterministic update keeping the predicted-x0 form.
// inject, when non-null, is added at the denoiser's latent injection point.
// When clip_lo < clip_hi the predicted x0 is clamped to that range each
// step, which keeps few-step trajectories inside the data manifold.
nn::Tensor sample(Denoiser& d, const nn::Tensor* cond, const NoiseSchedule& s,
                  int steps, uint64_t seed, const nn::Tensor* inject = nullptr,
                  double clip_lo = 0.0, double clip_hi = 0.0);

// ---- backbones ----

struct ConvDenoiserConfig {
  int ch = 0, h = 0, w = 0;  // sample shape [ch, h, w]
  int c1 = 16, c2 = 32;      // widths after the two stride-2 stages
  int cond_dim = 0;          // 0 = unconditional
  int emb_hidden = 64;
  uint64_t init_seed = 1;
};

// Stride-2 conv pyramid with two residual blocks at the bottom, additive
// time/condition embeddings at the latent, upsampling head and a direct
// conv skip from the input.
class ConvDenoiser : public Denoiser {
 public:
  explicit ConvDenoiser(const ConvDenoiserConfig& cfg);
  ConvDenoiser(const ConvDenoiserConfig& cfg, nn::ParamStore weights);

  nn::Var eps(nn::Graph& g, nn::Var x_t, double t_norm, nn::Var cond,
              nn::Var inject, nn::Binding* bind) override;
  std::vector<int> sample_shape() const override { return {cfg_.ch, cfg_.h, cfg_.w}; }
  nn::ParamStore& params() override { return ps_; }
  const ConvDenoiserConfig& config() const { return cfg_; }
  // Injection point shape [c2][h/4][w/4] (ceil division).
  std::vector<int> latent_shape() const;

 private:
  void init_params();
  ConvDenoiserConfig cfg_;
  nn::ParamStore ps_;
};

struct MlpDenoiserConfig {
  int dim = 1;
  int hidden = 64;
  int cond_dim = 0;
  int emb_hidden = 32;
  uint64_t init_seed = 1;
};

// Small dense backbone for low-dimensional data.
class MlpDenoiser : public Denoiser {
 public:
  explicit MlpDenoiser(const MlpDenoiserConfig& cfg);
  nn::Var eps(nn::Graph& g, nn::Var x_t, double t_norm, nn::Var cond,
              nn::Var inject, nn::Binding* bind) override;
  std::vector<int> sample_shape() const override { return {cfg_.dim}; }
  nn::ParamStore& params() override { return ps_; }

 private:
  MlpDenoiserConfig cfg_;
  nn::ParamStore ps_;
};

// Featurization of the scalar timestep (raw value plus a small fixed
// Fourier basis) ahead of the embedding FC layers.
nn::Tensor time_features(double t_norm);

}  // namespace semlink::diffusion

#endif
