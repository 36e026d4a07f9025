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

#ifndef SEMLINK_OFDM_HPP
#define SEMLINK_OFDM_HPP

#include <array>
#include <complex>
#include <vector>

#include "semlink/channel.hpp"

namespace semlink::ofdm {

using cd = std::complex<double>;
using channel::ChannelTensor;
using channel::Link;

// Complex resource grid [K][L][C]; C is Nt for transmit-ready frames, Nr for
// received frames and D for stream frames.
struct CFrame {
  int K = 0, L = 0, C = 0;
  std::vector<cd> x;

  static CFrame zeros(int K, int L, int C) {
    CFrame f;
    f.K = K; f.L = L; f.C = C;
    f.x.assign(static_cast<size_t>(K) * L * C, cd(0.0, 0.0));
    return f;
  }
  size_t idx(int k, int l, int c) const {
    return (static_cast<size_t>(k) * L + l) * C + c;
  }
  cd& at(int k, int l, int c) { return x[idx(k, l, c)]; }
  cd at(int k, int l, int c) const { return x[idx(k, l, c)]; }
  double mean_power() const;
};

// 5G NR style pilot pattern: pilot symbols {0,4,9,13} (0-based), subcarriers
// interleaved across transmit antennas so every (symbol, subcarrier) pair has
// exactly one active antenna. Kp = K/Nt = 18 owned subcarriers per antenna,
// Lp = 4 pilot symbols.
struct PilotLayout {
  std::array<int, 4> symbol_indices{0, 4, 9, 13};
  static constexpr int kKp = Link::kK / Link::kNt;
  static constexpr int kLp = 4;
  int owner(int k) const { return k % Link::kNt; }
  // Subcarrier owned by antenna t at pilot row i.
  int subcarrier(int t, int i) const { return t + i * Link::kNt; }
};

// Per-RE SVD H = U diag(S) V^H with descending singular values. Per column
// the first nonzero row of V is made real-positive (U columns co-rotated) so
// the factorization is reproducible.
struct SvdTriple {
  int K = 0, L = 0, Nr = 0, Nt = 0, D = 0;
  std::vector<cd> U;      // [K][L][Nr][Nr], column-major pairs (r, col)
  std::vector<double> S;  // [K][L][D]
  std::vector<cd> V;      // [K][L][Nt][Nt]

  size_t uidx(int k, int l, int r, int c) const {
    return ((static_cast<size_t>(k) * L + l) * Nr + r) * Nr + c;
  }
  size_t vidx(int k, int l, int r, int c) const {
    return ((static_cast<size_t>(k) * L + l) * Nt + r) * Nt + c;
  }
  size_t sidx(int k, int l, int d) const {
    return (static_cast<size_t>(k) * L + l) * D + d;
  }
  double sing(int k, int l, int d) const { return S[sidx(k, l, d)]; }
};

SvdTriple svd_decompose(const ChannelTensor& h);

// Noise variance per receive entry for a target SNR, referenced to the
// average received signal power (falls back to unit reference when the
// signal is identically zero).
double noise_variance(double signal_power, double snr_db);

// streams [K][L][D] -> antenna frame [K][L][Nt] via the first D columns of V.
CFrame precode_with_v(const CFrame& streams, const SvdTriple& svd);
// tx [K][L][Nt] -> rx [K][L][Nr] with complex white Gaussian noise at snr_db.
CFrame apply_channel(const CFrame& tx, const ChannelTensor& h, double snr_db,
                     uint64_t seed);
// In-place complex white Gaussian noise of per-entry variance sigma2.
void add_noise(CFrame& f, double sigma2, uint64_t seed);
// Y = H V X + Z.
CFrame transmit(const CFrame& streams, const ChannelTensor& h,
                const SvdTriple& svd, double snr_db, uint64_t seed);
// U^H Y restricted to the first D rows.
CFrame combine(const CFrame& rx, const SvdTriple& svd);
// Per-stream zero forcing: divide by max(singular value, floor).
CFrame equalize_zf(const CFrame& streams, const SvdTriple& svd,
                   double floor = 1e-3);

// Sparse LS observations at pilot positions, [Kp][Lp][Nr][Nt].
struct LsGrid {
  int Kp = 0, Lp = 0, Nr = 0, Nt = 0;
  std::vector<cd> g;

  static LsGrid zeros(int Kp, int Lp, int Nr, int Nt) {
    LsGrid s;
    s.Kp = Kp; s.Lp = Lp; s.Nr = Nr; s.Nt = Nt;
    s.g.assign(static_cast<size_t>(Kp) * Lp * Nr * Nt, cd(0.0, 0.0));
    return s;
  }
  size_t idx(int i, int lp, int r, int t) const {
    return ((static_cast<size_t>(i) * Lp + lp) * Nr + r) * Nt + t;
  }
  cd& at(int i, int lp, int r, int t) { return g[idx(i, lp, r, t)]; }
  cd at(int i, int lp, int r, int t) const { return g[idx(i, lp, r, t)]; }
};

// Received pilot observations [K][Lp][Nr] for the layout's pilot symbols.
CFrame transmit_pilots(const ChannelTensor& h, const PilotLayout& layout,
                       cd pilot_value, double snr_db, uint64_t seed);
LsGrid ls_estimate(const CFrame& y_pilots, const PilotLayout& layout,
                   cd pilot_value);

// Real NN view of an LS grid: [2*Nr*Nt][Kp][Lp].
nn::Tensor ls_to_real(const LsGrid& g);

// Packs the two feature vectors into stream frames. The prioritized feature
// fills stream 0 (largest singular value) first; packing order inside a
// frame is stream-major, then symbol, then subcarrier. The concatenated
// payload is normalized to unit mean symbol power; the tail is zero padded.
std::vector<CFrame> map_streams(const std::vector<cd>& f_se,
                                const std::vector<cd>& f_co,
                                bool semantic_priority);
// Inverse of map_streams up to the payload normalization factor.
void demap_streams(const std::vector<CFrame>& frames, bool semantic_priority,
                   size_t n_se, size_t n_co, std::vector<cd>& f_se,
                   std::vector<cd>& f_co);

}  // namespace semlink::ofdm

#endif
