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

#include "semlink/cekm.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "semlink/rng.hpp"

namespace semlink::cekm {

using nn::Graph;
using nn::GradMap;
using nn::Tensor;
using nn::Var;

Condition Condition::pv(double x_m, double y_m, double speed_kmh) {
  Condition c;
  c.kind = Kind::kPv;
  // fixed scaling keeps the embedding inputs near unit range
  c.data = Tensor({kPvDim}, {x_m / 200.0, y_m / 200.0, speed_kmh / 200.0});
  return c;
}

Condition Condition::ls(const std::array<ofdm::LsGrid, 3>& samples) {
  Condition c;
  c.kind = Kind::kLs;
  c.data = Tensor::zeros({kLsDim});
  size_t off = 0;
  for (const ofdm::LsGrid& g : samples) {
    for (const auto& v : g.g) {
      c.data.data[off++] = v.real();
      c.data.data[off++] = v.imag();
    }
  }
  if (off != static_cast<size_t>(kLsDim))
    throw std::invalid_argument("Condition::ls: grid size mismatch");
  return c;
}

int velocity_bin(double speed_kmh) {
  if (speed_kmh < 12.0 || speed_kmh > 204.0) return -1;
  int bin = static_cast<int>((speed_kmh - 12.0) / 12.0);
  return std::min(bin, 15);
}

std::vector<SubRegion> sampling_grid() {
  std::vector<SubRegion> grid;
  auto region_of = [](double x, double y) {
    if (x > 0.0) return y > 0.0 ? 1 : 2;
    return y > 0.0 ? 4 : 3;
  };
  for (double x : {-150.0, -50.0, 50.0, 150.0})
    for (double y : {-150.0, -50.0, 50.0, 150.0})
      grid.push_back({x, y, region_of(x, y)});
  for (const RegionSpec& r : channel::table_regions())
    grid.push_back({r.center_x, r.center_y, r.id});
  return grid;
}

std::vector<CdmSample> build_mixed_dataset(int per_subregion, uint64_t seed) {
  auto regions = channel::table_regions();
  auto centers = sampling_grid();
  std::vector<CdmSample> out;
  out.reserve(centers.size() * static_cast<size_t>(per_subregion));
  for (size_t ci = 0; ci < centers.size(); ++ci) {
    const SubRegion& c = centers[ci];
    const RegionSpec& reg = regions[static_cast<size_t>(c.region_id - 1)];
    for (int i = 0; i < per_subregion; ++i) {
      uint64_t s = derive_seed(seed, "mixed", ci, static_cast<uint64_t>(i));
      Rng rng(s);
      UserState u;
      double ang = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
      double rad = 20.0 * std::sqrt(rng.uniform());
      u.x = c.x + rad * std::cos(ang);
      u.y = c.y + rad * std::sin(ang);
      u.speed_kmh = rng.uniform(12.0, 144.0);
      u.heading_rad = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
      CdmSample cs;
      cs.sample.user = u;
      cs.sample.region_id = c.region_id;
      cs.sample.h = channel::generate(reg, u, derive_seed(s, "h"));
      cs.cond_pv = Condition::pv(u.x, u.y, u.speed_kmh).data;
      cs.cond_ls =
          make_ls_condition(
              [&](int j) {
                return channel::generate(reg, u,
                                         derive_seed(s, "sibling",
                                                     static_cast<uint64_t>(j)));
              },
              kDefaultLsSnrDb, derive_seed(s, "lsn"))
              .data;
      out.push_back(std::move(cs));
    }
  }
  return out;
}

// ---- Cdm ----

namespace {

diffusion::ConvDenoiserConfig cdm_net_config(Condition::Kind kind,
                                             uint64_t init_seed) {
  diffusion::ConvDenoiserConfig cfg;
  cfg.ch = 2 * Link::kNr * Link::kNt;
  cfg.h = Link::kK;
  cfg.w = Link::kL;
  cfg.c1 = 20;
  cfg.c2 = 32;
  cfg.cond_dim = kind == Condition::Kind::kPv ? kPvDim : kLsDim;
  cfg.emb_hidden = 64;
  cfg.init_seed = init_seed;
  return cfg;
}

}  // namespace

Cdm::Cdm(Condition::Kind kind, uint64_t init_seed)
    : kind_(kind),
      sched_(diffusion::NoiseSchedule::cosine(100)),
      net_(std::make_unique<diffusion::ConvDenoiser>(
          cdm_net_config(kind, init_seed))) {}

Cdm::Cdm(Condition::Kind kind, nn::ParamStore weights)
    : kind_(kind),
      trained_(true),
      sched_(diffusion::NoiseSchedule::cosine(100)),
      net_(std::make_unique<diffusion::ConvDenoiser>(cdm_net_config(kind, 0),
                                                     std::move(weights))) {}

double Cdm::train(const std::vector<CdmSample>& mixed, const TrainCfg& cfg,
                  uint64_t seed) {
  if (mixed.empty()) throw std::invalid_argument("Cdm::train: empty dataset");
  double loss = 0.0;
  for (int step = 0; step < cfg.steps; ++step) {
    Rng pick(derive_seed(seed, "batch", static_cast<uint64_t>(step)));
    std::vector<Tensor> x0s, conds;
    for (int b = 0; b < cfg.batch; ++b) {
      const CdmSample& s =
          mixed[static_cast<size_t>(pick.uniform_int(0, static_cast<int>(mixed.size()) - 1))];
      x0s.push_back(channel::to_real(s.sample.h));
      conds.push_back(kind_ == Condition::Kind::kPv ? s.cond_pv : s.cond_ls);
    }
    double u = static_cast<double>(step) / std::max(1, cfg.steps - 1);
    diffusion::TrainOpts opts;
    opts.lr = cfg.lr * std::pow(cfg.lr_final / cfg.lr, u);
    opts.threads = cfg.threads;
    loss = diffusion::train_step(*net_, x0s, conds, sched_,
                                 derive_seed(seed, "step", static_cast<uint64_t>(step)),
                                 opts);
  }
  trained_ = true;
  return loss;
}

std::vector<ChannelTensor> Cdm::synthesize(const Condition& cond, int n,
                                           uint64_t seed, int threads,
                                           int steps) const {
  if (!trained_)
    throw std::runtime_error("Cdm::synthesize: model has not been trained");
  if (cond.kind != kind_)
    throw std::invalid_argument("Cdm::synthesize: condition kind mismatch");
  std::vector<ChannelTensor> out(static_cast<size_t>(n));
  nn::parallel_for(n, threads, [&](int i) {
    Tensor x = diffusion::sample(*net_, &cond.data, sched_, steps,
                                 derive_seed(seed, "synth", static_cast<uint64_t>(i)),
                                 nullptr, -4.0, 4.0);
    ChannelTensor h = channel::from_real(x, Link::kNr, Link::kNt);
    double p = h.mean_power();
    if (p > 1e-12) {
      double scale = 1.0 / std::sqrt(p);
      for (auto& v : h.h) v *= scale;
    }
    out[static_cast<size_t>(i)] = std::move(h);
  });
  return out;
}

// ---- Estimator ----

Estimator::Estimator(uint64_t init_seed) {
  Rng rng(init_seed);
  const int ch = 2 * Link::kNr * Link::kNt;  // 16
  ps_.add("stem.w", nn::init_he_conv(16, 3 * ch, 3, rng));
  ps_.add("stem.b", Tensor::zeros({16}));
  for (int b = 1; b <= 3; ++b) {
    std::string p = "res" + std::to_string(b);
    ps_.add(p + ".c1.w", nn::init_he_conv(16, 16, 3, rng));
    ps_.add(p + ".c1.b", Tensor::zeros({16}));
    ps_.add(p + ".c2.w", nn::init_he_conv(16, 16, 3, rng));
    ps_.add(p + ".c2.b", Tensor::zeros({16}));
  }
  ps_.add("out.w", Tensor::zeros({ch, 16, 3, 3}));
  ps_.add("out.b", Tensor::zeros({ch}));
  // direct linear blend of the three interpolation views; zero-init so the
  // untrained estimator reproduces the bilinear expansion
  ps_.add("blend.w", Tensor::zeros({ch, 3 * ch, 3, 3}));
  ps_.add("blend.b", Tensor::zeros({ch}));
}

Estimator::Estimator(nn::ParamStore weights) : ps_(std::move(weights)) {}

namespace {

// Bilinear expansion of the LS observations onto the full grid. Antenna t
// owns subcarriers t + i*Nt; symbols interpolate between the pilot symbols
// {0,4,9,13} with edge clamping.
Tensor expand_ls_bilinear(const Tensor& ls_real) {
  const int ch = ls_real.dim(0);
  const int Kp = ls_real.dim(1), Lp = ls_real.dim(2);
  const ofdm::PilotLayout layout;
  Tensor out = Tensor::zeros({ch, Link::kK, Link::kL});
  for (int c = 0; c < ch; ++c) {
    int t = (c / 2) % Link::kNt;  // channel order: (r, t) pairs, re/im
    for (int k = 0; k < Link::kK; ++k) {
      double fi = static_cast<double>(k - t) / Link::kNt;
      int i0 = std::clamp(static_cast<int>(std::floor(fi)), 0, Kp - 1);
      int i1 = std::min(i0 + 1, Kp - 1);
      double wk = std::clamp(fi - i0, 0.0, 1.0);
      for (int l = 0; l < Link::kL; ++l) {
        int lp0 = 0, lp1 = 1;
        double wl = 0.0;
        if (l <= layout.symbol_indices[1]) {
          lp0 = 0; lp1 = 1;
          wl = static_cast<double>(l) / (layout.symbol_indices[1] - layout.symbol_indices[0]);
        } else if (l <= layout.symbol_indices[2]) {
          lp0 = 1; lp1 = 2;
          wl = static_cast<double>(l - layout.symbol_indices[1]) /
               (layout.symbol_indices[2] - layout.symbol_indices[1]);
        } else {
          lp0 = 2; lp1 = 3;
          wl = static_cast<double>(l - layout.symbol_indices[2]) /
               (layout.symbol_indices[3] - layout.symbol_indices[2]);
        }
        auto v = [&](int i, int lp) { return ls_real.at3(c, i, lp); };
        double v0 = v(i0, lp0) * (1.0 - wk) + v(i1, lp0) * wk;
        double v1 = v(i0, lp1) * (1.0 - wk) + v(i1, lp1) * wk;
        out.at3(c, k, l) = v0 * (1.0 - wl) + v1 * wl;
      }
    }
  }
  return out;
}

// Averages the pilot observations over the Lp pilot symbols; correct when
// the channel barely moves within the frame.
Tensor time_average_ls(const Tensor& ls_real) {
  Tensor out = ls_real;
  const int ch = ls_real.dim(0), Kp = ls_real.dim(1), Lp = ls_real.dim(2);
  for (int c = 0; c < ch; ++c)
    for (int i = 0; i < Kp; ++i) {
      double m = 0.0;
      for (int lp = 0; lp < Lp; ++lp) m += ls_real.at3(c, i, lp);
      m /= Lp;
      for (int lp = 0; lp < Lp; ++lp) out.at3(c, i, lp) = m;
    }
  return out;
}

// Smooths across neighbouring pilot subcarriers; correct for small delay
// spreads.
Tensor freq_smooth_ls(const Tensor& ls_real) {
  Tensor out = ls_real;
  const int ch = ls_real.dim(0), Kp = ls_real.dim(1), Lp = ls_real.dim(2);
  for (int c = 0; c < ch; ++c)
    for (int i = 0; i < Kp; ++i) {
      int i0 = std::max(0, i - 1), i1 = std::min(Kp - 1, i + 1);
      for (int lp = 0; lp < Lp; ++lp)
        out.at3(c, i, lp) = (ls_real.at3(c, i0, lp) + ls_real.at3(c, i, lp) +
                             ls_real.at3(c, i1, lp)) / 3.0;
    }
  return out;
}

// Input featurization: the bilinear expansion plus a time-averaged and a
// frequency-smoothed variant, stacked along channels. The net blends them
// per scenario; the raw expansion also forms the residual base.
std::pair<Tensor, Tensor> estimator_features(const Tensor& ls_real) {
  Tensor base = expand_ls_bilinear(ls_real);
  Tensor tavg = expand_ls_bilinear(time_average_ls(ls_real));
  Tensor fsm = expand_ls_bilinear(freq_smooth_ls(ls_real));
  const int ch = base.dim(0);
  Tensor stacked = Tensor::zeros({3 * ch, Link::kK, Link::kL});
  const size_t plane = static_cast<size_t>(Link::kK) * Link::kL;
  std::copy(base.data.begin(), base.data.end(), stacked.data.begin());
  std::copy(tavg.data.begin(), tavg.data.end(),
            stacked.data.begin() + static_cast<long>(ch * plane));
  std::copy(fsm.data.begin(), fsm.data.end(),
            stacked.data.begin() + static_cast<long>(2 * ch * plane));
  return {std::move(stacked), std::move(base)};
}

Var estimator_graph(Graph& g, nn::Binding& p, const Tensor& ls_real) {
  auto [stacked, base] = estimator_features(ls_real);
  Var x = g.leaf(std::move(stacked));
  Var h = nn::relu(nn::conv2d(x, p("stem.w"), p("stem.b"), 1, 1));
  for (int b = 1; b <= 3; ++b) {
    std::string pre = "res" + std::to_string(b);
    Var y = nn::relu(nn::conv2d(h, p(pre + ".c1.w"), p(pre + ".c1.b"), 1, 1));
    y = nn::conv2d(y, p(pre + ".c2.w"), p(pre + ".c2.b"), 1, 1);
    h = nn::relu(nn::add(y, h));
  }
  Var blend = nn::conv2d(x, p("blend.w"), p("blend.b"), 1, 1);
  Var refine = nn::conv2d(h, p("out.w"), p("out.b"), 1, 1);
  return nn::add(nn::add(blend, refine), g.leaf(std::move(base)));
}

}  // namespace

Tensor Estimator::estimate_real(const Tensor& ls_real) const {
  const int ch = 2 * Link::kNr * Link::kNt;
  if (ls_real.rank() != 3 || ls_real.dim(0) != ch ||
      ls_real.dim(1) != ofdm::PilotLayout::kKp ||
      ls_real.dim(2) != ofdm::PilotLayout::kLp)
    throw std::invalid_argument("Estimator: expected [" + std::to_string(ch) +
                                "][18][4] input, got " + ls_real.shape_str());
  Graph g;
  nn::ParamStore& ps = const_cast<nn::ParamStore&>(ps_);
  nn::Binding p(g, ps, false);
  return estimator_graph(g, p, ls_real).val();
}

ChannelTensor Estimator::estimate(const ofdm::LsGrid& ls) const {
  return channel::from_real(estimate_real(ofdm::ls_to_real(ls)), Link::kNr,
                            Link::kNt);
}

double Estimator::train(const std::vector<ChannelTensor>& truth,
                        const TrainCfg& cfg, uint64_t seed) {
  if (truth.empty()) throw std::invalid_argument("Estimator::train: empty dataset");
  ofdm::PilotLayout layout;
  double first_loss = -1.0, last_loss = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<size_t> order(truth.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(seed, "shuffle", static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<int>(i) - 1))]);
    double epoch_loss = 0.0;
    int nb = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(cfg.batch)) {
      int bsz = static_cast<int>(std::min<size_t>(
          static_cast<size_t>(cfg.batch), order.size() - start));
      GradMap grads;
      double l = nn::batch_gradients(
          bsz, cfg.threads,
          [&](int i, Graph& g, GradMap& out) {
            const ChannelTensor& h = truth[order[start + static_cast<size_t>(i)]];
            uint64_t ns = derive_seed(seed, "noise", static_cast<uint64_t>(epoch),
                                      order[start + static_cast<size_t>(i)]);
            ofdm::CFrame y = ofdm::transmit_pilots(h, layout, {1.0, 0.0},
                                                   cfg.ls_snr_db, ns);
            Tensor ls = ofdm::ls_to_real(ofdm::ls_estimate(y, layout, {1.0, 0.0}));
            nn::Binding p(g, ps_, true);
            Var pred = estimator_graph(g, p, ls);
            Var loss = nn::mse(pred, g.leaf(channel::to_real(h)));
            g.backward(loss);
            p.collect(out);
            return loss.val()[0];
          },
          grads);
      if (!ps_.adam_step(grads, {.lr = cfg.lr}))
        throw std::runtime_error("Estimator::train: non-finite gradients");
      epoch_loss += l;
      ++nb;
    }
    epoch_loss /= std::max(1, nb);
    if (first_loss < 0.0) first_loss = epoch_loss;
    last_loss = epoch_loss;
  }
  if (last_loss > first_loss && cfg.epochs > 1)
    throw std::runtime_error("Estimator::train: diverged (loss rose from " +
                             std::to_string(first_loss) + " to " +
                             std::to_string(last_loss) + ")");
  return last_loss;
}

double nmse_db(const ChannelTensor& truth, const ChannelTensor& est) {
  if (truth.K != est.K || truth.L != est.L || truth.Nr != est.Nr ||
      truth.Nt != est.Nt)
    throw std::invalid_argument("nmse_db: shape mismatch");
  double err = 0.0, pow = 0.0;
  for (size_t i = 0; i < truth.h.size(); ++i) {
    err += std::norm(truth.h[i] - est.h[i]);
    pow += std::norm(truth.h[i]);
  }
  if (pow <= 0.0) throw std::invalid_argument("nmse_db: zero-power truth");
  double ratio = err / pow;
  if (ratio < 1e-10) return -100.0;
  return 10.0 * std::log10(ratio);
}

// ---- KnowledgeMap ----

KnowledgeMap::KnowledgeMap(std::vector<RegionSpec> regions,
                           std::shared_ptr<Estimator> fallback)
    : regions_(std::move(regions)), fallback_(std::move(fallback)) {
  if (!fallback_) throw std::invalid_argument("KnowledgeMap: fallback required");
}

void KnowledgeMap::add_entry(EstimatorEntry entry) {
  if (find(entry.region_id, entry.vel_bin) != nullptr)
    throw std::invalid_argument("KnowledgeMap: duplicate key");
  entries_.push_back(std::move(entry));
}

const EstimatorEntry* KnowledgeMap::find(int region_id, int vel_bin) const {
  for (const EstimatorEntry& e : entries_)
    if (e.region_id == region_id && e.vel_bin == vel_bin) return &e;
  return nullptr;
}

const Estimator& KnowledgeMap::select(const UserState& user) const {
  // nearest region center within its radius; ties break to the lowest id
  const RegionSpec* best = nullptr;
  double best_d = 0.0;
  for (const RegionSpec& r : regions_) {
    double dx = user.x - r.center_x, dy = user.y - r.center_y;
    double d = std::sqrt(dx * dx + dy * dy);
    if (d > r.radius) continue;
    if (best == nullptr || d < best_d - 1e-12 ||
        (std::fabs(d - best_d) <= 1e-12 && r.id < best->id)) {
      best = &r;
      best_d = d;
    }
  }
  if (best == nullptr) return *fallback_;
  int bin = velocity_bin(user.speed_kmh);
  if (bin < 0) return *fallback_;
  const EstimatorEntry* e = find(best->id, bin);
  return e != nullptr ? *e->net : *fallback_;
}

void KnowledgeMap::save(const std::string& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json idx;
  idx["version"] = 1;
  idx["fallback"] = "fallback.slnn";
  idx["regions"] = nlohmann::json::array();
  for (const RegionSpec& r : regions_) {
    idx["regions"].push_back({{"id", r.id},
                              {"cx", r.center_x},
                              {"cy", r.center_y},
                              {"radius", r.radius},
                              {"los", r.los},
                              {"clusters", r.cluster_count},
                              {"ds_min_ns", r.ds_min_ns},
                              {"ds_max_ns", r.ds_max_ns}});
  }
  idx["entries"] = nlohmann::json::array();
  for (size_t i = 0; i < entries_.size(); ++i) {
    std::string file = "entry_" + std::to_string(entries_[i].region_id) + "_" +
                       std::to_string(entries_[i].vel_bin) + ".slnn";
    idx["entries"].push_back({{"region_id", entries_[i].region_id},
                              {"vel_bin", entries_[i].vel_bin},
                              {"provenance", entries_[i].provenance},
                              {"file", file}});
    entries_[i].net->params().save(dir + "/" + file);
  }
  fallback_->params().save(dir + "/fallback.slnn");
  std::ofstream out(dir + "/index.json");
  out << idx.dump(2) << "\n";
}

KnowledgeMap KnowledgeMap::load(const std::string& dir) {
  std::ifstream in(dir + "/index.json");
  if (!in) throw std::runtime_error("KnowledgeMap: missing index in " + dir);
  nlohmann::json idx;
  in >> idx;
  std::vector<RegionSpec> regions;
  for (const auto& r : idx.at("regions")) {
    RegionSpec spec;
    spec.id = r.at("id").get<int>();
    spec.center_x = r.at("cx").get<double>();
    spec.center_y = r.at("cy").get<double>();
    spec.radius = r.at("radius").get<double>();
    spec.los = r.at("los").get<bool>();
    spec.cluster_count = r.at("clusters").get<int>();
    spec.ds_min_ns = r.at("ds_min_ns").get<double>();
    spec.ds_max_ns = r.at("ds_max_ns").get<double>();
    regions.push_back(spec);
  }
  auto fallback = std::make_shared<Estimator>(
      nn::ParamStore::load(dir + "/" + idx.at("fallback").get<std::string>()));
  KnowledgeMap map(std::move(regions), std::move(fallback));
  for (const auto& e : idx.at("entries")) {
    EstimatorEntry entry;
    entry.region_id = e.at("region_id").get<int>();
    entry.vel_bin = e.at("vel_bin").get<int>();
    entry.provenance = e.at("provenance").get<std::string>();
    entry.net = std::make_shared<Estimator>(
        nn::ParamStore::load(dir + "/" + e.at("file").get<std::string>()));
    map.add_entry(std::move(entry));
  }
  return map;
}

}  // namespace semlink::cekm
