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

#ifndef SEMLINK_RECON_HPP
#define SEMLINK_RECON_HPP

#include <memory>
#include <vector>

#include "semlink/diffusion.hpp"
#include "semlink/semantic.hpp"

namespace semlink::recon {

// Condition encoder feeding the frozen scene denoiser at its latent
// injection point. The final conv starts at zero, so an untrained branch
// leaves the base model untouched.
class ConditionBranch {
 public:
  ConditionBranch(int in_ch, std::vector<int> latent_shape, uint64_t init_seed);
  explicit ConditionBranch(int in_ch, std::vector<int> latent_shape,
                           nn::ParamStore weights);

  nn::Var forward(nn::Graph& g, const nn::Tensor& cond, nn::Binding* bind) const;
  nn::Tensor eval(const nn::Tensor& cond) const;
  bool zero_output() const;

  nn::ParamStore& params() { return ps_; }
  const nn::ParamStore& params() const { return ps_; }

 private:
  int in_ch_;
  std::vector<int> latent_;
  nn::ParamStore ps_;
};

// One training record: clean scene plus the received (noisy) decoded
// semantics it should be reconstructed from.
struct ReconSample {
  nn::Tensor image;       // [3][64][64] clean
  std::vector<int> seg;   // received decoded class map, 16x16
  nn::Tensor thumb;       // received decoded thumbnail [3][8][8]
};

// Scene-level DDPM with two additive condition branches.
class Reconstructor {
 public:
  explicit Reconstructor(uint64_t init_seed = 55);
  Reconstructor(nn::ParamStore base, nn::ParamStore se, nn::ParamStore co);

  struct TrainCfg {
    int steps = 2000;
    int batch = 8;
    double lr = 1e-3;
    double lr_final = 2e-4;
    int threads = 1;
    double cond_dropout = 0.1;  // branch training only
  };

  // Unconditional pre-training of the scene denoiser on clean images.
  double train_base(const std::vector<nn::Tensor>& images, const TrainCfg& cfg,
                    uint64_t seed);
  // Branch training with the base frozen; each branch minimizes its own
  // eps-prediction loss given its condition.
  double train_se_branch(const std::vector<ReconSample>& data,
                         const TrainCfg& cfg, uint64_t seed);
  double train_co_branch(const std::vector<ReconSample>& data,
                         const TrainCfg& cfg, uint64_t seed);

  // 10-step conditional generation; either branch may be disabled for
  // ablations. Output is an image in [0,1].
  nn::Tensor reconstruct(const std::vector<int>& seg, const nn::Tensor& thumb,
                         int steps, uint64_t seed, bool use_se = true,
                         bool use_co = true) const;
  nn::Tensor sample_unconditional(int steps, uint64_t seed) const;

  // Mean eps-prediction loss of the frozen base with/without a branch, for
  // paired comparisons.
  double eval_eps_loss(const std::vector<ReconSample>& data, uint64_t seed,
                       bool with_se, bool with_co) const;

  bool base_trained() const { return base_trained_; }
  void mark_base_trained() { base_trained_ = true; }
  diffusion::ConvDenoiser& base() { return *base_; }
  ConditionBranch& se_branch() { return *se_; }
  ConditionBranch& co_branch() { return *co_; }
  const diffusion::NoiseSchedule& schedule() const { return sched_; }

 private:
  diffusion::NoiseSchedule sched_;
  std::unique_ptr<diffusion::ConvDenoiser> base_;
  std::unique_ptr<ConditionBranch> se_;
  std::unique_ptr<ConditionBranch> co_;
  bool base_trained_ = false;
};

}  // namespace semlink::recon

#endif
