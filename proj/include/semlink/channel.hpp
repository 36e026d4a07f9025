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

#ifndef SEMLINK_CHANNEL_HPP
#define SEMLINK_CHANNEL_HPP

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "semlink/tensor.hpp"

namespace semlink::channel {

using cd = std::complex<double>;

// Fixed link geometry: 4x2 MIMO, 72 subcarriers, 14 OFDM symbols per frame.
// 15 kHz subcarrier spacing and 1/14 ms symbols; carrier 2.655 GHz.
struct Link {
  static constexpr int kK = 72;
  static constexpr int kL = 14;
  static constexpr int kNr = 2;
  static constexpr int kNt = 4;
  static constexpr int kStreams = 2;  // min(Nr, Nt)
  static constexpr double kSubcarrierHz = 15e3;
  static constexpr double kCarrierHz = 2.655e9;
  static constexpr double kSymbolS = 1e-3 / 14.0;
  static constexpr double kLightMs = 299792458.0;
};

struct RegionSpec {
  int id = 0;
  double center_x = 0.0, center_y = 0.0;  // meters
  double radius = 0.0;                    // meters
  bool los = false;
  int cluster_count = 0;
  double ds_min_ns = 0.0, ds_max_ns = 0.0;
};

struct UserState {
  double x = 0.0, y = 0.0;   // meters
  double speed_kmh = 0.0;    // >= 0
  double heading_rad = 0.0;
};

// Complex channel grid over [K][L][Nr][Nt]. L may span several frames of 14
// symbols; Doppler phase is continuous across the whole grid.
struct ChannelTensor {
  int K = 0, L = 0, Nr = 0, Nt = 0;
  std::vector<cd> h;

  static ChannelTensor zeros(int K, int L, int Nr, int Nt) {
    ChannelTensor t;
    t.K = K; t.L = L; t.Nr = Nr; t.Nt = Nt;
    t.h.assign(static_cast<size_t>(K) * L * Nr * Nt, cd(0.0, 0.0));
    return t;
  }
  size_t idx(int k, int l, int r, int t) const {
    return ((static_cast<size_t>(k) * L + l) * Nr + r) * Nt + t;
  }
  cd& at(int k, int l, int r, int t) { return h[idx(k, l, r, t)]; }
  cd at(int k, int l, int r, int t) const { return h[idx(k, l, r, t)]; }
  double mean_power() const;
  bool all_finite() const;
  // Symbol-range slice [l0, l0+len).
  ChannelTensor slice_symbols(int l0, int len) const;
};

// The four fixed scenario regions (quadrant centers, 100 m radius).
std::vector<RegionSpec> table_regions();

// Clustered geometric channel: per-cluster delay/angle/Doppler ray sum with
// an exponential delay profile rescaled so the realized RMS delay spread
// lands uniformly inside the region's range. LOS regions add a deterministic
// dominant path with a 10 dB Rician factor. Per-realization cluster powers
// sum to 1, so the ensemble per-entry power is exactly 1.
ChannelTensor generate(const RegionSpec& region, const UserState& user,
                       uint64_t seed, int symbols = Link::kL);

// Normalized frequency-domain autocorrelation at a subcarrier lag, averaged
// over symbols and antenna pairs.
cd freq_correlation(const ChannelTensor& h, int lag);

// RMS delay spread in ns, recovered from the frequency correlation
// magnitude: per lag, sigma = arccos(|rho|) / (2*pi*lag*df). Lags are used
// while |rho| stays inside a window where the inversion is reliable.
double rms_delay_spread_ns(const ChannelTensor& h);

// Normalized temporal autocorrelation at a symbol lag, real part,
// clamped to [-1, 1].
double temporal_correlation(const ChannelTensor& h, int lag);

// One stored channel draw: tensor plus the user state that produced it.
struct ChannelSample {
  ChannelTensor h;
  UserState user;
  int region_id = 0;
};

// Dataset container, magic "SLCH": f32 interleaved re/im payload plus a
// per-sample user record.
void save_dataset(const std::string& path, const std::vector<ChannelSample>& set);
std::vector<ChannelSample> load_dataset(const std::string& path);

// Real NN view of a channel grid: [2*Nr*Nt][K][L], channel-major
// (re, im) pairs per antenna pair.
nn::Tensor to_real(const ChannelTensor& h);
ChannelTensor from_real(const nn::Tensor& t, int Nr, int Nt);

}  // namespace semlink::channel

#endif
