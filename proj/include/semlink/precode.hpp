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

#ifndef SEMLINK_PRECODE_HPP
#define SEMLINK_PRECODE_HPP

#include <complex>
#include <utility>
#include <vector>

#include "semlink/channel.hpp"
#include "semlink/nn.hpp"
#include "semlink/ofdm.hpp"

namespace semlink::precode {

using cd = std::complex<double>;
using channel::ChannelTensor;
using channel::Link;

struct PrecodeConfig {
  int n_se = 512;  // complex feature lengths; W spans one packed block
  int n_co = 512;
  double beta = 1.0;
  uint64_t init_seed = 7;
};

// Payload placement shared with map_streams(priority = semantic): index i
// goes to stream i / (K*L), symbol (i / K) % L, subcarrier i % K.
struct Placement {
  int k = 0, l = 0, d = 0;
};
Placement payload_slot(size_t index);

// Importance-aware linear precoder: C2R -> W -> power normalization -> R2C
// -> per-RE V, with a single dense decoder f_Pre behind U^H at the
// receiver. W starts at identity (plus sigma = 0.01 noise), the decoder at
// the exact identity.
class PrecodeModel {
 public:
  explicit PrecodeModel(const PrecodeConfig& cfg);
  PrecodeModel(const PrecodeConfig& cfg, nn::ParamStore weights);

  const PrecodeConfig& config() const { return cfg_; }
  int payload_symbols() const { return cfg_.n_se + cfg_.n_co; }

  // Transmit-ready frame [K][L][Nt]; svd comes from the CSI available at
  // the transmitter.
  ofdm::CFrame forward(const std::vector<cd>& f_se, const std::vector<cd>& f_co,
                       const ofdm::SvdTriple& svd) const;
  // Receiver path: combine with U^H, gather the payload, run f_Pre, split.
  std::pair<std::vector<cd>, std::vector<cd>> decode(
      const ofdm::CFrame& rx, const ofdm::SvdTriple& svd) const;

  struct TrainCfg {
    int steps = 300;
    int batch = 4;
    double lr = 1e-3;
    double snr_lo_db = -10.0;
    double snr_hi_db = 10.0;
    int threads = 1;
  };
  struct TrainStats {
    double loss = 0.0;
    double mse_se = 0.0;
    double mse_co = 0.0;
  };
  // Joint W / f_Pre training over an ensemble of channels through the
  // equivalent post-combining link at uniformly drawn SNRs, with random
  // constellation features and frozen codecs upstream. Returns end-of-run
  // feature MSEs measured on held-out draws.
  TrainStats train_joint(const std::vector<ChannelTensor>& ensemble,
                         const TrainCfg& cfg, uint64_t seed);
  // Held-out feature-MSE evaluation at a fixed SNR.
  TrainStats evaluate(const std::vector<ChannelTensor>& ensemble, double snr_db,
                      int n_draws, uint64_t seed) const;

  nn::ParamStore& params() { return ps_; }
  const nn::ParamStore& params() const { return ps_; }

 private:
  PrecodeConfig cfg_;
  nn::ParamStore ps_;
};

}  // namespace semlink::precode

#endif
