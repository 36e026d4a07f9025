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

#include "semlink/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <stdexcept>

namespace semlink::exp {

using cekm::Estimator;
using nn::Tensor;
using ofdm::CFrame;
using semantic::Scene;

Budget Budget::from_config(const cli::Config& cfg) {
  Budget b;
  b.train_scenes = cfg.integer("budget.train_scenes", b.train_scenes);
  b.codec_epochs = cfg.integer("budget.codec_epochs", b.codec_epochs);
  b.codec_lr = cfg.number("budget.codec_lr", b.codec_lr);
  b.ddpm_steps = cfg.integer("budget.ddpm_steps", b.ddpm_steps);
  b.branch_steps = cfg.integer("budget.branch_steps", b.branch_steps);
  b.recon_dataset = cfg.integer("budget.recon_dataset", b.recon_dataset);
  b.jscc_steps = cfg.integer("budget.jscc_steps", b.jscc_steps);
  b.cdm_steps = cfg.integer("budget.cdm_steps", b.cdm_steps);
  b.cdm_batch = cfg.integer("budget.cdm_batch", b.cdm_batch);
  b.est_epochs = cfg.integer("budget.est_epochs", b.est_epochs);
  b.est_lr = cfg.number("budget.est_lr", b.est_lr);
  b.est_train_samples = cfg.integer("budget.est_train_samples", b.est_train_samples);
  b.synth_samples = cfg.integer("budget.synth_samples", b.synth_samples);
  b.precode_steps = cfg.integer("budget.precode_steps", b.precode_steps);
  b.precode_batch = cfg.integer("budget.precode_batch", b.precode_batch);
  b.precode_lr = cfg.number("budget.precode_lr", b.precode_lr);
  return b;
}

RegionSpec EvalScenario::effective_region() const {
  RegionSpec r = region;
  if (ds_min_ns > 0.0 && ds_max_ns >= ds_min_ns) {
    r.ds_min_ns = ds_min_ns;
    r.ds_max_ns = ds_max_ns;
  }
  return r;
}

UserState EvalScenario::draw_user(uint64_t seed) const {
  Rng rng(seed);
  UserState u;
  double ang = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  double rad = radius * std::sqrt(rng.uniform());
  u.x = center_x + rad * std::cos(ang);
  u.y = center_y + rad * std::sin(ang);
  u.speed_kmh = rng.uniform(v_lo_kmh, v_hi_kmh);
  u.heading_rad = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  return u;
}

ChannelTensor EvalScenario::draw_channel(uint64_t seed, int symbols) const {
  return channel::generate(effective_region(), draw_user(derive_seed(seed, "user")),
                           derive_seed(seed, "fading"), symbols);
}

EvalScenario default_scenario() {
  EvalScenario s;
  s.region = channel::table_regions()[0];  // scenario region 1
  s.center_x = 50.0;
  s.center_y = 50.0;
  s.radius = 10.0;
  s.v_lo_kmh = 24.0;
  s.v_hi_kmh = 36.0;
  return s;
}

void Context::log(const std::string& msg) const {
  if (verbose) std::fprintf(stderr, "semlink: %s\n", msg.c_str());
}

namespace {

std::string cache_path(const Context& ctx, const std::string& tag) {
  if (ctx.artifact_dir.empty()) return "";
  std::filesystem::create_directories(ctx.artifact_dir);
  return ctx.artifact_dir + "/" + tag + ".slnn";
}

bool cache_exists(const std::string& path) {
  return !path.empty() && std::filesystem::exists(path);
}

}  // namespace

std::vector<Scene> training_scenes(const Context& ctx) {
  std::vector<Scene> scenes(static_cast<size_t>(ctx.budget.train_scenes));
  nn::parallel_for(ctx.budget.train_scenes, ctx.threads, [&](int i) {
    scenes[static_cast<size_t>(i)] =
        semantic::generate_scene(ctx.seed("train-scene", static_cast<uint64_t>(i)));
  });
  return scenes;
}

std::shared_ptr<semantic::Codec> get_codec(const Context& ctx) {
  std::string tag = "codec_s" + std::to_string(ctx.master_seed) + "_n" +
                    std::to_string(ctx.budget.train_scenes) + "_e" +
                    std::to_string(ctx.budget.codec_epochs);
  std::string path = cache_path(ctx, tag);
  if (cache_exists(path)) {
    ctx.log("codec: loading " + path);
    return std::make_shared<semantic::Codec>(nn::ParamStore::load(path));
  }
  ctx.log("codec: training");
  auto codec = std::make_shared<semantic::Codec>(ctx.seed("codec-init"));
  std::vector<Scene> scenes = training_scenes(ctx);
  codec->train(scenes, ctx.budget.codec_epochs, ctx.budget.codec_lr,
               ctx.seed("codec-train"), ctx.threads);
  if (!path.empty()) codec->params().save(path);
  return codec;
}

namespace {

std::vector<ChannelTensor> mixed_channel_pool(const Context& ctx, int n,
                                              std::string_view tag) {
  auto grid = cekm::sampling_grid();
  auto regions = channel::table_regions();
  std::vector<ChannelTensor> pool(static_cast<size_t>(n));
  nn::parallel_for(n, ctx.threads, [&](int i) {
    const cekm::SubRegion& c = grid[static_cast<size_t>(i) % grid.size()];
    Rng rng(ctx.seed(tag, static_cast<uint64_t>(i)));
    UserState u;
    u.x = c.x + rng.uniform(-15.0, 15.0);
    u.y = c.y + rng.uniform(-15.0, 15.0);
    u.speed_kmh = rng.uniform(12.0, 144.0);
    u.heading_rad = rng.uniform(0.0, 6.283185307179586);
    pool[static_cast<size_t>(i)] =
        channel::generate(regions[static_cast<size_t>(c.region_id - 1)], u,
                          ctx.seed(tag, static_cast<uint64_t>(i), 1));
  });
  return pool;
}

}  // namespace

std::shared_ptr<jscc::JsccCodec> get_jscc(const Context& ctx) {
  std::string tag = "jscc_s" + std::to_string(ctx.master_seed) + "_n" +
                    std::to_string(ctx.budget.train_scenes) + "_t" +
                    std::to_string(ctx.budget.jscc_steps);
  std::string path = cache_path(ctx, tag);
  if (cache_exists(path)) {
    ctx.log("jscc: loading " + path);
    return std::make_shared<jscc::JsccCodec>(nn::ParamStore::load(path));
  }
  ctx.log("jscc: training");
  auto codec = std::make_shared<jscc::JsccCodec>(ctx.seed("jscc-init"));
  std::vector<Scene> scenes = training_scenes(ctx);
  std::vector<Tensor> images;
  images.reserve(scenes.size());
  for (const Scene& s : scenes) images.push_back(s.image);
  std::vector<ChannelTensor> pool = mixed_channel_pool(ctx, 24, "jscc-pool");
  jscc::JsccCodec::TrainCfg cfg;
  cfg.steps = ctx.budget.jscc_steps;
  cfg.threads = ctx.threads;
  codec->train(images, pool, cfg, ctx.seed("jscc-train"));
  if (!path.empty()) codec->params().save(path);
  return codec;
}

namespace {

// Received decoded semantics for branch training: both features transit the
// link at a uniformly drawn SNR in [-8, 12] dB with a random stream
// priority.
recon::ReconSample make_recon_sample(const Scene& scene,
                                     const semantic::Codec& codec,
                                     const std::vector<ChannelTensor>& pool,
                                     uint64_t seed) {
  Rng rng(seed);
  const ChannelTensor& h2 =
      pool[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(pool.size()) - 1))];
  ChannelTensor pilot_h = h2.slice_symbols(0, channel::Link::kL);
  ChannelTensor data_h = h2.slice_symbols(channel::Link::kL, channel::Link::kL);
  double snr_db = rng.uniform(-8.0, 12.0);
  bool sem_priority = rng.uniform() < 0.5;

  auto f_se = codec.encode_se(scene.seg);
  auto f_co = codec.encode_co(
      semantic::downsample_area(scene.image, semantic::kThumbSize, semantic::kThumbSize));
  ofdm::SvdTriple svd = ofdm::svd_decompose(pilot_h);  // clean CSI here
  std::vector<CFrame> frames = ofdm::map_streams(f_se, f_co, sem_priority);
  CFrame rx = ofdm::transmit(frames[0], data_h, svd, snr_db, derive_seed(seed, "z"));
  CFrame zf = ofdm::equalize_zf(ofdm::combine(rx, svd), svd);
  std::vector<ofdm::cd> se_hat, co_hat;
  ofdm::demap_streams({zf}, sem_priority, f_se.size(), f_co.size(), se_hat, co_hat);
  recon::ReconSample out;
  out.image = scene.image;
  out.seg = codec.decode_se(se_hat);
  out.thumb = codec.decode_co(co_hat);
  return out;
}

}  // namespace

std::shared_ptr<recon::Reconstructor> get_recon(const Context& ctx,
                                                const semantic::Codec& codec) {
  std::string base_tag = "recon_base_s" + std::to_string(ctx.master_seed) + "_t" +
                         std::to_string(ctx.budget.ddpm_steps);
  std::string br_tag = "recon_branch_s" + std::to_string(ctx.master_seed) + "_t" +
                       std::to_string(ctx.budget.branch_steps) + "_d" +
                       std::to_string(ctx.budget.recon_dataset);
  std::string base_path = cache_path(ctx, base_tag);
  std::string se_path = cache_path(ctx, br_tag + "_se");
  std::string co_path = cache_path(ctx, br_tag + "_co");
  if (cache_exists(base_path) && cache_exists(se_path) && cache_exists(co_path)) {
    ctx.log("recon: loading cached weights");
    return std::make_shared<recon::Reconstructor>(nn::ParamStore::load(base_path),
                                                  nn::ParamStore::load(se_path),
                                                  nn::ParamStore::load(co_path));
  }
  auto rec = std::make_shared<recon::Reconstructor>(ctx.seed("recon-init"));
  std::vector<Scene> scenes = training_scenes(ctx);
  std::vector<Tensor> images;
  images.reserve(scenes.size());
  for (const Scene& s : scenes) images.push_back(s.image);
  recon::Reconstructor::TrainCfg cfg;
  cfg.steps = ctx.budget.ddpm_steps;
  cfg.threads = ctx.threads;
  ctx.log("recon: training base denoiser");
  rec->train_base(images, cfg, ctx.seed("recon-base"));

  ctx.log("recon: building branch dataset");
  std::vector<ChannelTensor> pool(24);
  nn::parallel_for(static_cast<int>(pool.size()), ctx.threads, [&](int i) {
    auto grid = cekm::sampling_grid();
    const cekm::SubRegion& c = grid[static_cast<size_t>(i) % grid.size()];
    Rng rng(ctx.seed("recon-pool", static_cast<uint64_t>(i)));
    UserState u{c.x + rng.uniform(-15.0, 15.0), c.y + rng.uniform(-15.0, 15.0),
                rng.uniform(12.0, 144.0), rng.uniform(0.0, 6.283185307179586)};
    pool[static_cast<size_t>(i)] = channel::generate(
        channel::table_regions()[static_cast<size_t>(c.region_id - 1)], u,
        ctx.seed("recon-pool", static_cast<uint64_t>(i), 1), 2 * channel::Link::kL);
  });
  std::vector<recon::ReconSample> data(static_cast<size_t>(ctx.budget.recon_dataset));
  nn::parallel_for(ctx.budget.recon_dataset, ctx.threads, [&](int i) {
    const Scene& s = scenes[static_cast<size_t>(i) % scenes.size()];
    data[static_cast<size_t>(i)] =
        make_recon_sample(s, codec, pool, ctx.seed("recon-data", static_cast<uint64_t>(i)));
  });
  recon::Reconstructor::TrainCfg bcfg;
  bcfg.steps = ctx.budget.branch_steps;
  bcfg.threads = ctx.threads;
  ctx.log("recon: training se branch");
  rec->train_se_branch(data, bcfg, ctx.seed("recon-se"));
  ctx.log("recon: training co branch");
  rec->train_co_branch(data, bcfg, ctx.seed("recon-co"));
  if (!base_path.empty()) {
    rec->base().params().save(base_path);
    rec->se_branch().params().save(se_path);
    rec->co_branch().params().save(co_path);
  }
  return rec;
}

std::shared_ptr<precode::PrecodeModel> get_precode(const Context& ctx, double beta,
                                                   int n_se, int n_co) {
  char beta_str[32];
  std::snprintf(beta_str, sizeof(beta_str), "%g", beta);
  std::string tag = "precode_s" + std::to_string(ctx.master_seed) + "_b" +
                    beta_str + "_n" + std::to_string(n_se) + "x" +
                    std::to_string(n_co) + "_t" +
                    std::to_string(ctx.budget.precode_steps);
  std::string path = cache_path(ctx, tag);
  precode::PrecodeConfig pcfg;
  pcfg.n_se = n_se;
  pcfg.n_co = n_co;
  pcfg.beta = beta;
  pcfg.init_seed = ctx.seed("precode-init");
  if (cache_exists(path)) {
    ctx.log("precode: loading " + path);
    return std::make_shared<precode::PrecodeModel>(pcfg, nn::ParamStore::load(path));
  }
  ctx.log("precode: training beta=" + std::string(beta_str));
  auto model = std::make_shared<precode::PrecodeModel>(pcfg);
  EvalScenario scenario = default_scenario();
  std::vector<ChannelTensor> ensemble(48);
  nn::parallel_for(static_cast<int>(ensemble.size()), ctx.threads, [&](int i) {
    ensemble[static_cast<size_t>(i)] = scenario.draw_channel(
        ctx.seed("precode-chan", static_cast<uint64_t>(i)), channel::Link::kL);
  });
  precode::PrecodeModel::TrainCfg tcfg;
  tcfg.steps = ctx.budget.precode_steps;
  tcfg.batch = ctx.budget.precode_batch;
  tcfg.lr = ctx.budget.precode_lr;
  tcfg.threads = ctx.threads;
  model->train_joint(ensemble, tcfg, ctx.seed("precode-train"));
  if (!path.empty()) model->params().save(path);
  return model;
}

const Estimator& CekmSet::by_policy(const std::string& policy) const {
  if (policy == "cekm-pv") return *pv;
  if (policy == "cekm-ls") return *ls;
  if (policy == "mixed") return *mixed;
  if (policy == "true-channel") return *truth;
  throw std::invalid_argument("unknown estimator policy: " + policy);
}

namespace {

std::vector<cekm::CdmSample> mixed_cdm_dataset(const Context& ctx) {
  int per_sub = std::max(8, ctx.budget.est_train_samples / 20);
  return cekm::build_mixed_dataset(per_sub, ctx.seed("cekm-mixed"));
}

}  // namespace

Cdms get_cdms(const Context& ctx) {
  const Budget& b = ctx.budget;
  std::string base = "cdm_s" + std::to_string(ctx.master_seed) + "_c" +
                     std::to_string(b.cdm_steps) + "_n" +
                     std::to_string(b.est_train_samples);
  std::string pv_path = cache_path(ctx, base + "_pv");
  std::string ls_path = cache_path(ctx, base + "_ls");
  Cdms out;
  if (cache_exists(pv_path) && cache_exists(ls_path)) {
    ctx.log("cdm: loading cached weights");
    out.pv = std::make_shared<cekm::Cdm>(cekm::Condition::Kind::kPv,
                                         nn::ParamStore::load(pv_path));
    out.ls = std::make_shared<cekm::Cdm>(cekm::Condition::Kind::kLs,
                                         nn::ParamStore::load(ls_path));
    return out;
  }
  std::vector<cekm::CdmSample> mixed = mixed_cdm_dataset(ctx);
  cekm::Cdm::TrainCfg cfg;
  cfg.steps = b.cdm_steps;
  cfg.batch = b.cdm_batch;
  cfg.threads = ctx.threads;
  ctx.log("cdm: training PV-conditioned diffusion model");
  out.pv = std::make_shared<cekm::Cdm>(cekm::Condition::Kind::kPv,
                                       ctx.seed("cdm-pv-init"));
  out.pv->train(mixed, cfg, ctx.seed("cdm-pv-train"));
  ctx.log("cdm: training LS-conditioned diffusion model");
  out.ls = std::make_shared<cekm::Cdm>(cekm::Condition::Kind::kLs,
                                       ctx.seed("cdm-ls-init"));
  out.ls->train(mixed, cfg, ctx.seed("cdm-ls-train"));
  if (!pv_path.empty()) {
    out.pv->params().save(pv_path);
    out.ls->params().save(ls_path);
  }
  return out;
}

CekmSet get_cekm(const Context& ctx, const EvalScenario& scenario) {
  CekmSet set;
  const Budget& b = ctx.budget;
  std::string base = "cekm_s" + std::to_string(ctx.master_seed) + "_e" +
                     std::to_string(b.est_epochs) + "_n" +
                     std::to_string(b.est_train_samples) + "_c" +
                     std::to_string(b.cdm_steps) + "_g" +
                     std::to_string(b.synth_samples) + "_r" +
                     std::to_string(scenario.region.id) + "_v" +
                     std::to_string(static_cast<int>(scenario.v_lo_kmh)) + "_d" +
                     std::to_string(static_cast<int>(scenario.ds_min_ns));
  std::string pv_path = cache_path(ctx, base + "_pv");
  std::string ls_path = cache_path(ctx, base + "_ls");
  std::string mixed_path = cache_path(ctx, base + "_mixed");
  std::string true_path = cache_path(ctx, base + "_true");
  if (cache_exists(pv_path) && cache_exists(ls_path) && cache_exists(mixed_path) &&
      cache_exists(true_path)) {
    ctx.log("cekm: loading cached estimators");
    set.pv = std::make_shared<Estimator>(nn::ParamStore::load(pv_path));
    set.ls = std::make_shared<Estimator>(nn::ParamStore::load(ls_path));
    set.mixed = std::make_shared<Estimator>(nn::ParamStore::load(mixed_path));
    set.truth = std::make_shared<Estimator>(nn::ParamStore::load(true_path));
    return set;
  }

  Estimator::TrainCfg est_cfg;
  est_cfg.epochs = b.est_epochs;
  est_cfg.lr = b.est_lr;
  est_cfg.threads = ctx.threads;

  ctx.log("cekm: training mixed fallback estimator");
  set.mixed = std::make_shared<Estimator>(ctx.seed("est-mixed-init"));
  {
    std::vector<cekm::CdmSample> mixed = mixed_cdm_dataset(ctx);
    std::vector<ChannelTensor> data;
    data.reserve(mixed.size());
    for (const auto& m : mixed) data.push_back(m.sample.h);
    set.mixed->train(data, est_cfg, ctx.seed("est-mixed-train"));
  }

  ctx.log("cekm: training matched-real estimator");
  set.truth = std::make_shared<Estimator>(ctx.seed("est-true-init"));
  {
    std::vector<ChannelTensor> data(static_cast<size_t>(b.est_train_samples));
    nn::parallel_for(b.est_train_samples, ctx.threads, [&](int i) {
      data[static_cast<size_t>(i)] = scenario.draw_channel(
          ctx.seed("cekm-true-chan", static_cast<uint64_t>(i)), channel::Link::kL);
    });
    set.truth->train(data, est_cfg, ctx.seed("est-true-train"));
  }

  Cdms cdms = get_cdms(ctx);
  double v_mid = 0.5 * (scenario.v_lo_kmh + scenario.v_hi_kmh);

  ctx.log("cekm: synthesizing PV dataset");
  cekm::Condition pv_cond =
      cekm::Condition::pv(scenario.center_x, scenario.center_y, v_mid);
  std::vector<ChannelTensor> pv_synth =
      cdms.pv->synthesize(pv_cond, b.synth_samples, ctx.seed("pv-synth"), ctx.threads);
  ctx.log("cekm: training PV estimator");
  set.pv = std::make_shared<Estimator>(ctx.seed("est-pv-init"));
  set.pv->train(pv_synth, est_cfg, ctx.seed("est-pv-train"));

  ctx.log("cekm: synthesizing LS dataset");
  cekm::Condition ls_cond = cekm::make_ls_condition(
      [&](int j) {
        return scenario.draw_channel(ctx.seed("ls-observe", static_cast<uint64_t>(j)),
                                     channel::Link::kL);
      },
      cekm::kDefaultLsSnrDb, ctx.seed("ls-cond"));
  std::vector<ChannelTensor> ls_synth =
      cdms.ls->synthesize(ls_cond, b.synth_samples, ctx.seed("ls-synth"), ctx.threads);
  ctx.log("cekm: training LS estimator");
  set.ls = std::make_shared<Estimator>(ctx.seed("est-ls-init"));
  set.ls->train(ls_synth, est_cfg, ctx.seed("est-ls-train"));

  if (!pv_path.empty()) {
    set.pv->params().save(pv_path);
    set.ls->params().save(ls_path);
    set.mixed->params().save(mixed_path);
    set.truth->params().save(true_path);
  }
  return set;
}

// ---- pipeline ----

namespace {

struct ReceivedFeatures {
  std::vector<ofdm::cd> f_se, f_co;
  std::vector<ofdm::cd> jscc;  // jscc variant only
};

// Applies the channel to all data frames with one pooled noise variance and
// returns the received frames.
std::vector<CFrame> apply_frames(const std::vector<CFrame>& tx,
                                 const std::vector<ChannelTensor>& hs,
                                 double snr_db, uint64_t seed) {
  std::vector<CFrame> rx;
  rx.reserve(tx.size());
  double power = 0.0;
  int64_t count = 0;
  for (size_t f = 0; f < tx.size(); ++f) {
    CFrame y = ofdm::apply_channel(tx[f], hs[f],
                                   std::numeric_limits<double>::infinity(), 0);
    power += y.mean_power() * static_cast<double>(y.x.size());
    count += static_cast<int64_t>(y.x.size());
    rx.push_back(std::move(y));
  }
  double sigma2 = ofdm::noise_variance(power / static_cast<double>(count), snr_db);
  for (size_t f = 0; f < rx.size(); ++f)
    ofdm::add_noise(rx[f], sigma2, derive_seed(seed, "frame-noise", f));
  return rx;
}

}  // namespace

LinkOutcome run_link(const std::string& variant, double snr_db,
                     const Scene& scene, const EvalScenario& scenario,
                     const PipelineArtifacts& art, uint64_t seed,
                     int recon_steps) {
  const int L = channel::Link::kL;
  const bool is_jscc = variant == "jscc-baseline";
  const int data_frames =
      is_jscc ? static_cast<int>(
                    (jscc::kSymbols + static_cast<size_t>(channel::Link::kK) * L *
                                          channel::Link::kStreams - 1) /
                    (static_cast<size_t>(channel::Link::kK) * L * channel::Link::kStreams))
              : 1;
  ChannelTensor h_all =
      scenario.draw_channel(derive_seed(seed, "chan"), (1 + data_frames) * L);
  ChannelTensor h_pilot = h_all.slice_symbols(0, L);

  // channel estimation from the pilot frame
  ofdm::PilotLayout layout;
  CFrame y_pilot = ofdm::transmit_pilots(h_pilot, layout, {1.0, 0.0}, snr_db,
                                         derive_seed(seed, "pilot-noise"));
  ofdm::LsGrid ls = ofdm::ls_estimate(y_pilot, layout, {1.0, 0.0});
  ChannelTensor h_est = art.estimator->estimate(ls);
  LinkOutcome out;
  out.nmse_db = cekm::nmse_db(h_pilot, h_est);
  ofdm::SvdTriple svd_est = ofdm::svd_decompose(h_est);

  std::vector<ChannelTensor> h_data;
  for (int f = 0; f < data_frames; ++f)
    h_data.push_back(h_all.slice_symbols((1 + f) * L, L));

  Tensor thumb = semantic::downsample_area(scene.image, semantic::kThumbSize,
                                           semantic::kThumbSize);
  std::vector<int> seg_hat;
  Tensor recon_img;
  if (is_jscc) {
    std::vector<ofdm::cd> f = art.jscc->encode(scene.image);
    std::vector<CFrame> frames = ofdm::map_streams(f, {}, true);
    std::vector<CFrame> tx;
    tx.reserve(frames.size());
    for (const CFrame& fr : frames) tx.push_back(ofdm::precode_with_v(fr, svd_est));
    std::vector<CFrame> rx = apply_frames(tx, h_data, snr_db, seed);
    std::vector<CFrame> zf;
    zf.reserve(rx.size());
    for (const CFrame& r : rx)
      zf.push_back(ofdm::equalize_zf(ofdm::combine(r, svd_est), svd_est));
    std::vector<ofdm::cd> f_hat, unused;
    ofdm::demap_streams(zf, true, f.size(), 0, f_hat, unused);
    recon_img = art.jscc->decode(f_hat);
    seg_hat = semantic::segment_by_color(recon_img);
  } else {
    std::vector<ofdm::cd> f_se = art.codec->encode_se(scene.seg);
    std::vector<ofdm::cd> f_co = art.codec->encode_co(thumb);
    std::vector<ofdm::cd> se_hat, co_hat;
    if (variant == "proposed-adaptive") {
      CFrame tx = art.precode->forward(f_se, f_co, svd_est);
      std::vector<CFrame> rx = apply_frames({tx}, h_data, snr_db, seed);
      auto pair = art.precode->decode(rx[0], svd_est);
      se_hat = std::move(pair.first);
      co_hat = std::move(pair.second);
    } else {
      bool sem_priority = variant == "proposed-semantic";
      if (!sem_priority && variant != "proposed-compress")
        throw std::invalid_argument("unknown variant: " + variant);
      std::vector<CFrame> frames = ofdm::map_streams(f_se, f_co, sem_priority);
      CFrame tx = ofdm::precode_with_v(frames[0], svd_est);
      std::vector<CFrame> rx = apply_frames({tx}, h_data, snr_db, seed);
      CFrame zf = ofdm::equalize_zf(ofdm::combine(rx[0], svd_est), svd_est);
      ofdm::demap_streams({zf}, sem_priority, f_se.size(), f_co.size(), se_hat,
                          co_hat);
    }
    std::vector<int> seg_decoded = art.codec->decode_se(se_hat);
    Tensor thumb_decoded = art.codec->decode_co(co_hat);
    recon_img = art.recon->reconstruct(seg_decoded, thumb_decoded, recon_steps,
                                       derive_seed(seed, "recon"));
    // segmentation-bearing variants score IoU on the decoded map; the
    // compress variant is scored on its reconstruction like the baselines
    seg_hat = variant == "proposed-compress"
                  ? semantic::segment_by_color(recon_img)
                  : seg_decoded;
  }

  out.ssim = metrics::ssim(recon_img, scene.image);
  out.perceptual = metrics::perceptual(recon_img, scene.image, *art.fx);
  out.iou = metrics::iou(seg_hat, scene.seg);
  out.recon_image = std::move(recon_img);
  return out;
}

// ---- CSV runners ----

const char* kChannelBenchHeader = "policy,snr_db,seed,nmse_db";
const char* kE2eHeader = "scenario,snr_db,seed,ssim,perceptual,fid,iou,nmse_db";
const char* kBetaSweepHeader = "beta,snr_db,seed,fid,iou";

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string bench_channel_csv(const Context& ctx, const EvalScenario& scenario,
                              const std::vector<std::string>& policies,
                              const std::vector<double>& snr_list,
                              int n_channels) {
  if (snr_list.empty()) throw std::invalid_argument("bench-channel: empty snr list");
  if (policies.empty()) throw std::invalid_argument("bench-channel: no policies");
  CekmSet set = get_cekm(ctx, scenario);
  ofdm::PilotLayout layout;
  // channels shared across policies and SNRs for paired comparisons
  std::vector<ChannelTensor> test(static_cast<size_t>(n_channels));
  nn::parallel_for(n_channels, ctx.threads, [&](int i) {
    test[static_cast<size_t>(i)] = scenario.draw_channel(
        ctx.seed("bench-chan", static_cast<uint64_t>(i)), channel::Link::kL);
  });
  std::string csv = std::string(kChannelBenchHeader) + "\n";
  for (const std::string& policy : policies) {
    const Estimator& est = set.by_policy(policy);
    for (double snr : snr_list) {
      std::vector<double> nmse(static_cast<size_t>(n_channels));
      nn::parallel_for(n_channels, ctx.threads, [&](int i) {
        CFrame y = ofdm::transmit_pilots(
            test[static_cast<size_t>(i)], layout, {1.0, 0.0}, snr,
            ctx.seed("bench-noise", static_cast<uint64_t>(i),
                     static_cast<uint64_t>(snr * 1000)));
        ofdm::LsGrid ls = ofdm::ls_estimate(y, layout, {1.0, 0.0});
        nmse[static_cast<size_t>(i)] =
            cekm::nmse_db(test[static_cast<size_t>(i)], est.estimate(ls));
      });
      double mean = 0.0;
      for (double v : nmse) mean += v;
      mean /= n_channels;
      csv += policy + "," + fmt(snr) + "," + std::to_string(ctx.master_seed) +
             "," + fmt(mean) + "\n";
    }
  }
  return csv;
}

namespace {

struct CellStats {
  double ssim = 0.0, perceptual = 0.0, iou = 0.0, nmse = 0.0, fid = 0.0;
};

CellStats run_cell(const Context& ctx, const EvalScenario& scenario,
                   const std::string& variant, double snr,
                   const PipelineArtifacts& art, int n_scenes,
                   const metrics::FeatureExtractor& fx) {
  std::vector<LinkOutcome> outs(static_cast<size_t>(n_scenes));
  std::vector<Scene> scenes(static_cast<size_t>(n_scenes));
  nn::parallel_for(n_scenes, ctx.threads, [&](int i) {
    scenes[static_cast<size_t>(i)] =
        semantic::generate_scene(ctx.seed("eval-scene", static_cast<uint64_t>(i)));
    outs[static_cast<size_t>(i)] =
        run_link(variant, snr, scenes[static_cast<size_t>(i)], scenario, art,
                 ctx.seed("eval-link", static_cast<uint64_t>(i),
                          static_cast<uint64_t>(snr * 1000.0) + 7919));
  });
  CellStats st;
  std::vector<Tensor> real, gen;
  for (int i = 0; i < n_scenes; ++i) {
    st.ssim += outs[static_cast<size_t>(i)].ssim;
    st.perceptual += outs[static_cast<size_t>(i)].perceptual;
    st.iou += outs[static_cast<size_t>(i)].iou;
    st.nmse += outs[static_cast<size_t>(i)].nmse_db;
    real.push_back(scenes[static_cast<size_t>(i)].image);
    gen.push_back(outs[static_cast<size_t>(i)].recon_image);
  }
  st.ssim /= n_scenes;
  st.perceptual /= n_scenes;
  st.iou /= n_scenes;
  st.nmse /= n_scenes;
  st.fid = metrics::fid_images(real, gen, fx);
  return st;
}

}  // namespace

std::string bench_e2e_csv(const Context& ctx, const EvalScenario& scenario,
                          const std::vector<std::string>& variants,
                          const std::vector<double>& snr_list, int n_scenes,
                          const std::string& policy, double beta) {
  if (snr_list.empty()) throw std::invalid_argument("bench-e2e: empty snr list");
  if (variants.empty()) throw std::invalid_argument("bench-e2e: no variants");
  metrics::FeatureExtractor fx(2000);
  auto codec = get_codec(ctx);
  auto rec = get_recon(ctx, *codec);
  std::shared_ptr<jscc::JsccCodec> jscc_codec;
  std::shared_ptr<precode::PrecodeModel> pre;
  for (const std::string& v : variants) {
    if (v == "jscc-baseline") jscc_codec = get_jscc(ctx);
    if (v == "proposed-adaptive")
      pre = get_precode(ctx, beta, semantic::kFeatureLen, semantic::kFeatureLen);
  }
  CekmSet cekm_set = get_cekm(ctx, scenario);

  std::string csv = std::string(kE2eHeader) + "\n";
  for (const std::string& variant : variants) {
    for (double snr : snr_list) {
      PipelineArtifacts art;
      art.codec = codec.get();
      art.recon = rec.get();
      art.jscc = jscc_codec.get();
      art.precode = pre.get();
      art.estimator = &cekm_set.by_policy(policy);
      art.fx = &fx;
      CellStats st = run_cell(ctx, scenario, variant, snr, art, n_scenes, fx);
      csv += variant + "," + fmt(snr) + "," + std::to_string(ctx.master_seed) +
             "," + fmt(st.ssim) + "," + fmt(st.perceptual) + "," + fmt(st.fid) +
             "," + fmt(st.iou) + "," + fmt(st.nmse) + "\n";
    }
  }
  return csv;
}

std::string sweep_beta_csv(const Context& ctx, const EvalScenario& scenario,
                           const std::vector<double>& betas, double snr_db,
                           int n_scenes, const std::string& policy) {
  if (betas.empty()) throw std::invalid_argument("sweep-beta: empty beta list");
  metrics::FeatureExtractor fx(2000);
  auto codec = get_codec(ctx);
  auto rec = get_recon(ctx, *codec);
  CekmSet cekm_set = get_cekm(ctx, scenario);
  std::string csv = std::string(kBetaSweepHeader) + "\n";
  for (double beta : betas) {
    auto pre = get_precode(ctx, beta, semantic::kFeatureLen, semantic::kFeatureLen);
    PipelineArtifacts art;
    art.codec = codec.get();
    art.recon = rec.get();
    art.precode = pre.get();
    art.estimator = &cekm_set.by_policy(policy);
    art.fx = &fx;
    CellStats st =
        run_cell(ctx, scenario, "proposed-adaptive", snr_db, art, n_scenes, fx);
    csv += fmt(beta) + "," + fmt(snr_db) + "," + std::to_string(ctx.master_seed) +
           "," + fmt(st.fid) + "," + fmt(st.iou) + "\n";
  }
  return csv;
}

}  // namespace semlink::exp
