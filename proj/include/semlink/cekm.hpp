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

#ifndef SEMLINK_CEKM_HPP
#define SEMLINK_CEKM_HPP

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "semlink/channel.hpp"
#include "semlink/diffusion.hpp"
#include "semlink/ofdm.hpp"

namespace semlink::cekm {

using channel::ChannelSample;
using channel::ChannelTensor;
using channel::Link;
using channel::RegionSpec;
using channel::UserState;

constexpr int kPvDim = 3;
// 2 * 3 * Nt * Nr * Kp * Lp for the fixed link geometry
constexpr int kLsDim = 2 * 3 * Link::kNt * Link::kNr * ofdm::PilotLayout::kKp *
                       ofdm::PilotLayout::kLp;
constexpr int kPaperSamplesPerScenario = 5120;
constexpr double kDefaultLsSnrDb = 10.0;

// Conditioning input for channel synthesis: coarse position/velocity or a
// fine-grained set of three LS pilot grids.
struct Condition {
  enum class Kind { kPv, kLs };
  Kind kind = Kind::kPv;
  nn::Tensor data;  // [3] scaled PV or [kLsDim] interleaved re/im

  static Condition pv(double x_m, double y_m, double speed_kmh);
  static Condition ls(const std::array<ofdm::LsGrid, 3>& samples);
  int dim() const { return static_cast<int>(data.numel()); }
};

// Velocity bins of 12 km/h width spanning 12-204 km/h; -1 outside.
int velocity_bin(double speed_kmh);

// 20 sampling sub-regions: the 4x4 grid of (+-50, +-150) crossings plus the
// four region centers, each mapped to its enclosing quadrant scenario.
struct SubRegion {
  double x = 0.0, y = 0.0;
  int region_id = 0;
};
std::vector<SubRegion> sampling_grid();

// One CDM training record: channel, its user state, and both condition
// renderings (LS from three sibling draws at kDefaultLsSnrDb).
struct CdmSample {
  ChannelSample sample;
  nn::Tensor cond_pv;
  nn::Tensor cond_ls;
};

// Mixed multi-scenario dataset over the sampling grid, speeds uniform in
// 12-144 km/h.
std::vector<CdmSample> build_mixed_dataset(int per_subregion, uint64_t seed);

// Conditional diffusion model over channel grids [2*Nr*Nt][K][L].
class Cdm {
 public:
  explicit Cdm(Condition::Kind kind, uint64_t init_seed = 101);
  Cdm(Condition::Kind kind, nn::ParamStore weights);

  struct TrainCfg {
    int steps = 1200;
    int batch = 8;
    double lr = 1e-3;
    double lr_final = 2e-4;
    int threads = 1;
  };
  // Returns the final-step loss.
  double train(const std::vector<CdmSample>& mixed, const TrainCfg& cfg,
               uint64_t seed);

  // n conditional draws, renormalized to unit mean power. Rejects an
  // untrained model.
  std::vector<ChannelTensor> synthesize(const Condition& cond, int n,
                                        uint64_t seed, int threads = 1,
                                        int steps = 10) const;

  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }
  Condition::Kind kind() const { return kind_; }
  nn::ParamStore& params() { return net_->params(); }
  const diffusion::NoiseSchedule& schedule() const { return sched_; }

 private:
  Condition::Kind kind_;
  bool trained_ = false;
  diffusion::NoiseSchedule sched_;
  std::unique_ptr<diffusion::ConvDenoiser> net_;
};

// Residual conv estimator mapping LS pilot grids [2NrNt][Kp][Lp] to the
// full grid [2NrNt][K][L]. The pilot grid is first expanded to the full
// resource grid by bilinear interpolation along subcarriers and symbols;
// a stem conv, three residual blocks and one zero-initialized output conv
// then refine it, so an untrained estimator reproduces plain interpolation
// and training learns the scenario-specific correction.
class Estimator {
 public:
  explicit Estimator(uint64_t init_seed = 2024);
  explicit Estimator(nn::ParamStore weights);

  nn::Tensor estimate_real(const nn::Tensor& ls_real) const;
  ChannelTensor estimate(const ofdm::LsGrid& ls) const;

  struct TrainCfg {
    int epochs = 12;
    int batch = 16;
    double lr = 1e-3;
    double ls_snr_db = kDefaultLsSnrDb;
    int threads = 1;
  };
  // Pilot observations are rendered from each dataset channel at
  // cfg.ls_snr_db with fresh noise per epoch. Throws on an empty dataset or
  // on divergence (final loss above the initial loss).
  double train(const std::vector<ChannelTensor>& truth, const TrainCfg& cfg,
               uint64_t seed);

  nn::ParamStore& params() { return ps_; }
  const nn::ParamStore& params() const { return ps_; }

 private:
  nn::ParamStore ps_;
};

double nmse_db(const ChannelTensor& truth, const ChannelTensor& est);

struct EstimatorEntry {
  int region_id = 0;
  int vel_bin = 0;
  std::string provenance;  // condition used for its training set
  std::shared_ptr<Estimator> net;
};

// Keyed store of scenario-specific estimators plus a mixed-data fallback.
class KnowledgeMap {
 public:
  KnowledgeMap(std::vector<RegionSpec> regions, std::shared_ptr<Estimator> fallback);

  void add_entry(EstimatorEntry entry);  // unique (region, bin) keys
  const Estimator& select(const UserState& user) const;
  const EstimatorEntry* find(int region_id, int vel_bin) const;
  const Estimator& fallback() const { return *fallback_; }
  const std::vector<EstimatorEntry>& entries() const { return entries_; }
  const std::vector<RegionSpec>& regions() const { return regions_; }

  void save(const std::string& dir) const;
  static KnowledgeMap load(const std::string& dir);

 private:
  std::vector<RegionSpec> regions_;
  std::vector<EstimatorEntry> entries_;
  std::shared_ptr<Estimator> fallback_;
};

// LS condition rendered from three independent draws of a channel source.
template <typename Gen>
Condition make_ls_condition(Gen&& draw_channel, double snr_db, uint64_t seed) {
  ofdm::PilotLayout layout;
  std::array<ofdm::LsGrid, 3> grids;
  for (int i = 0; i < 3; ++i) {
    ChannelTensor h = draw_channel(i);
    ofdm::CFrame y = ofdm::transmit_pilots(
        h, layout, {1.0, 0.0}, snr_db,
        derive_seed(seed, "ls-cond-noise", static_cast<uint64_t>(i)));
    grids[static_cast<size_t>(i)] = ofdm::ls_estimate(y, layout, {1.0, 0.0});
  }
  return Condition::ls(grids);
}

}  // namespace semlink::cekm

#endif
