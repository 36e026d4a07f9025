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

#ifndef SEMLINK_EXPERIMENT_HPP
#define SEMLINK_EXPERIMENT_HPP

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "semlink/cekm.hpp"
#include "semlink/config.hpp"
#include "semlink/jscc.hpp"
#include "semlink/metrics.hpp"
#include "semlink/precode.hpp"
#include "semlink/recon.hpp"
#include "semlink/semantic.hpp"

namespace semlink::exp {

using channel::ChannelTensor;
using channel::RegionSpec;
using channel::UserState;

// Desk-scale training budgets; every knob has a config key under "budget.".
struct Budget {
  int train_scenes = 800;
  int codec_epochs = 6;
  double codec_lr = 1e-3;
  int ddpm_steps = 2200;
  int branch_steps = 1100;
  int recon_dataset = 600;
  int jscc_steps = 1300;
  int cdm_steps = 900;
  int cdm_batch = 8;
  int est_epochs = 8;
  double est_lr = 5e-3;
  int est_train_samples = 512;
  int synth_samples = 640;
  int precode_steps = 320;
  int precode_batch = 4;
  double precode_lr = 3e-3;

  static Budget from_config(const cli::Config& cfg);
};

// Channel evaluation scenario: a disc inside one scenario region plus a
// velocity band; deliberately matching one knowledge-map key.
struct EvalScenario {
  RegionSpec region;
  double center_x = 50.0, center_y = 50.0, radius = 10.0;
  double v_lo_kmh = 24.0, v_hi_kmh = 36.0;
  // delay-spread override for mismatch studies (<= 0 keeps the region's)
  double ds_min_ns = 0.0, ds_max_ns = 0.0;

  RegionSpec effective_region() const;
  UserState draw_user(uint64_t seed) const;
  ChannelTensor draw_channel(uint64_t seed, int symbols) const;
};
EvalScenario default_scenario();

struct Context {
  Budget budget;
  uint64_t master_seed = 1;
  int threads = 2;
  std::string artifact_dir;  // "" disables the weight cache
  bool verbose = false;

  uint64_t seed(std::string_view tag, uint64_t a = 0, uint64_t b = 0) const {
    return derive_seed(master_seed, tag, a, b);
  }
  void log(const std::string& msg) const;
};

// ---- artifact construction (deterministic; cached on disk by tag) ----
std::vector<semantic::Scene> training_scenes(const Context& ctx);
std::shared_ptr<semantic::Codec> get_codec(const Context& ctx);
std::shared_ptr<jscc::JsccCodec> get_jscc(const Context& ctx);
std::shared_ptr<recon::Reconstructor> get_recon(const Context& ctx,
                                                const semantic::Codec& codec);
std::shared_ptr<precode::PrecodeModel> get_precode(const Context& ctx,
                                                   double beta, int n_se,
                                                   int n_co);

// The two condition-kind diffusion models, trained once on the mixed
// multi-scenario dataset and shared across evaluation scenarios.
struct Cdms {
  std::shared_ptr<cekm::Cdm> pv;
  std::shared_ptr<cekm::Cdm> ls;
};
Cdms get_cdms(const Context& ctx);

// Estimators for the evaluation scenario, one per policy.
struct CekmSet {
  std::shared_ptr<cekm::Estimator> pv;      // trained on PV-synthesized data
  std::shared_ptr<cekm::Estimator> ls;      // trained on LS-synthesized data
  std::shared_ptr<cekm::Estimator> mixed;   // mixed-real fallback
  std::shared_ptr<cekm::Estimator> truth;   // matched-real upper bound
  const cekm::Estimator& by_policy(const std::string& policy) const;
};
CekmSet get_cekm(const Context& ctx, const EvalScenario& scenario);

// ---- single-link pipeline ----
struct LinkOutcome {
  double ssim = 0.0;
  double perceptual = 0.0;
  double iou = 0.0;
  double nmse_db = 0.0;
  nn::Tensor recon_image;
};

struct PipelineArtifacts {
  const semantic::Codec* codec = nullptr;
  const recon::Reconstructor* recon = nullptr;
  const jscc::JsccCodec* jscc = nullptr;
  const precode::PrecodeModel* precode = nullptr;  // adaptive variant only
  const cekm::Estimator* estimator = nullptr;
  const metrics::FeatureExtractor* fx = nullptr;
};

// Full scene -> encode -> precode -> channel -> estimate -> decode ->
// reconstruct -> metrics chain for one scene and SNR.
LinkOutcome run_link(const std::string& variant, double snr_db,
                     const semantic::Scene& scene, const EvalScenario& scenario,
                     const PipelineArtifacts& art, uint64_t seed,
                     int recon_steps = 10);

// ---- aggregated runners; each returns CSV text with a fixed header ----
extern const char* kChannelBenchHeader;  // policy,snr_db,seed,nmse_db
extern const char* kE2eHeader;  // scenario,snr_db,seed,ssim,perceptual,fid,iou,nmse_db
extern const char* kBetaSweepHeader;  // beta,snr_db,seed,fid,iou

std::string bench_channel_csv(const Context& ctx, const EvalScenario& scenario,
                              const std::vector<std::string>& policies,
                              const std::vector<double>& snr_list,
                              int n_channels);
std::string bench_e2e_csv(const Context& ctx, const EvalScenario& scenario,
                          const std::vector<std::string>& variants,
                          const std::vector<double>& snr_list, int n_scenes,
                          const std::string& policy, double beta);
std::string sweep_beta_csv(const Context& ctx, const EvalScenario& scenario,
                           const std::vector<double>& betas, double snr_db,
                           int n_scenes, const std::string& policy);

// Deterministic CSV float formatting.
std::string fmt(double v);

}  // namespace semlink::exp

#endif
