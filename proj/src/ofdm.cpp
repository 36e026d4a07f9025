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

#include "semlink/ofdm.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "semlink/rng.hpp"

namespace semlink::ofdm {

double CFrame::mean_power() const {
  double s = 0.0;
  for (const cd& v : x) s += std::norm(v);
  return s / static_cast<double>(x.size());
}

SvdTriple svd_decompose(const ChannelTensor& h) {
  if (!h.all_finite()) throw std::invalid_argument("svd_decompose: non-finite input");
  SvdTriple out;
  out.K = h.K; out.L = h.L; out.Nr = h.Nr; out.Nt = h.Nt;
  out.D = std::min(h.Nr, h.Nt);
  out.U.assign(static_cast<size_t>(h.K) * h.L * h.Nr * h.Nr, cd(0, 0));
  out.V.assign(static_cast<size_t>(h.K) * h.L * h.Nt * h.Nt, cd(0, 0));
  out.S.assign(static_cast<size_t>(h.K) * h.L * out.D, 0.0);

  Eigen::MatrixXcd M(h.Nr, h.Nt);
  for (int k = 0; k < h.K; ++k) {
    for (int l = 0; l < h.L; ++l) {
      for (int r = 0; r < h.Nr; ++r)
        for (int t = 0; t < h.Nt; ++t) M(r, t) = h.at(k, l, r, t);
      Eigen::JacobiSVD<Eigen::MatrixXcd> svd(
          M, Eigen::ComputeFullU | Eigen::ComputeFullV);
      Eigen::MatrixXcd U = svd.matrixU();
      Eigen::MatrixXcd V = svd.matrixV();
      const auto& sv = svd.singularValues();
      // Fix per-column phase: first significantly nonzero row of each V
      // column becomes real-positive; paired U columns co-rotate so
      // U S V^H is unchanged.
      double scale = sv.size() > 0 ? sv(0) : 0.0;
      for (int c = 0; c < h.Nt; ++c) {
        int row = -1;
        for (int r = 0; r < h.Nt; ++r)
          if (std::abs(V(r, c)) > 1e-12 * std::max(1.0, scale)) { row = r; break; }
        if (row < 0) continue;
        cd ph = V(row, c) / std::abs(V(row, c));
        V.col(c) *= std::conj(ph);
        if (c < out.D) U.col(c) *= std::conj(ph);
      }
      for (int c = out.D; c < h.Nr; ++c) {
        int row = -1;
        for (int r = 0; r < h.Nr; ++r)
          if (std::abs(U(r, c)) > 1e-12) { row = r; break; }
        if (row >= 0) U.col(c) *= std::conj(U(row, c) / std::abs(U(row, c)));
      }
      for (int r = 0; r < h.Nr; ++r)
        for (int c = 0; c < h.Nr; ++c) out.U[out.uidx(k, l, r, c)] = U(r, c);
      for (int r = 0; r < h.Nt; ++r)
        for (int c = 0; c < h.Nt; ++c) out.V[out.vidx(k, l, r, c)] = V(r, c);
      for (int d = 0; d < out.D; ++d) out.S[out.sidx(k, l, d)] = sv(d);
    }
  }
  return out;
}

double noise_variance(double signal_power, double snr_db) {
  if (std::isinf(snr_db)) return 0.0;
  double rho = std::pow(10.0, snr_db / 10.0);
  double ref = signal_power > 0.0 ? signal_power : 1.0;
  return ref / rho;
}

CFrame precode_with_v(const CFrame& streams, const SvdTriple& svd) {
  if (streams.K != svd.K || streams.L != svd.L || streams.C != svd.D)
    throw std::invalid_argument("precode_with_v: frame/svd mismatch");
  CFrame out = CFrame::zeros(streams.K, streams.L, svd.Nt);
  for (int k = 0; k < streams.K; ++k)
    for (int l = 0; l < streams.L; ++l)
      for (int t = 0; t < svd.Nt; ++t) {
        cd acc(0, 0);
        for (int d = 0; d < svd.D; ++d)
          acc += svd.V[svd.vidx(k, l, t, d)] * streams.at(k, l, d);
        out.at(k, l, t) = acc;
      }
  return out;
}

CFrame apply_channel(const CFrame& tx, const ChannelTensor& h, double snr_db,
                     uint64_t seed) {
  if (tx.K != h.K || tx.L != h.L || tx.C != h.Nt)
    throw std::invalid_argument("apply_channel: frame/channel mismatch");
  CFrame out = CFrame::zeros(tx.K, tx.L, h.Nr);
  for (int k = 0; k < tx.K; ++k)
    for (int l = 0; l < tx.L; ++l)
      for (int r = 0; r < h.Nr; ++r) {
        cd acc(0, 0);
        for (int t = 0; t < h.Nt; ++t) acc += h.at(k, l, r, t) * tx.at(k, l, t);
        out.at(k, l, r) = acc;
      }
  add_noise(out, noise_variance(out.mean_power(), snr_db), seed);
  return out;
}

void add_noise(CFrame& f, double sigma2, uint64_t seed) {
  if (sigma2 <= 0.0) return;
  Rng rng(seed);
  double s = std::sqrt(sigma2);
  for (cd& v : f.x) v += s * rng.cnormal();
}

CFrame transmit(const CFrame& streams, const ChannelTensor& h,
                const SvdTriple& svd, double snr_db, uint64_t seed) {
  return apply_channel(precode_with_v(streams, svd), h, snr_db, seed);
}

CFrame combine(const CFrame& rx, const SvdTriple& svd) {
  if (rx.K != svd.K || rx.L != svd.L || rx.C != svd.Nr)
    throw std::invalid_argument("combine: frame/svd mismatch");
  CFrame out = CFrame::zeros(rx.K, rx.L, svd.D);
  for (int k = 0; k < rx.K; ++k)
    for (int l = 0; l < rx.L; ++l)
      for (int d = 0; d < svd.D; ++d) {
        cd acc(0, 0);
        for (int r = 0; r < svd.Nr; ++r)
          acc += std::conj(svd.U[svd.uidx(k, l, r, d)]) * rx.at(k, l, r);
        out.at(k, l, d) = acc;
      }
  return out;
}

CFrame equalize_zf(const CFrame& streams, const SvdTriple& svd, double floor) {
  if (streams.K != svd.K || streams.L != svd.L || streams.C != svd.D)
    throw std::invalid_argument("equalize_zf: frame/svd mismatch");
  CFrame out = streams;
  for (int k = 0; k < streams.K; ++k)
    for (int l = 0; l < streams.L; ++l)
      for (int d = 0; d < svd.D; ++d)
        out.at(k, l, d) /= std::max(svd.sing(k, l, d), floor);
  return out;
}

CFrame transmit_pilots(const ChannelTensor& h, const PilotLayout& layout,
                       cd pilot_value, double snr_db, uint64_t seed) {
  if (pilot_value == cd(0.0, 0.0))
    throw std::invalid_argument("transmit_pilots: zero pilot value");
  CFrame out = CFrame::zeros(h.K, PilotLayout::kLp, h.Nr);
  double signal = 0.0;
  for (int lp = 0; lp < PilotLayout::kLp; ++lp) {
    int l = layout.symbol_indices[static_cast<size_t>(lp)];
    if (l >= h.L) throw std::invalid_argument("transmit_pilots: short channel");
    for (int k = 0; k < h.K; ++k) {
      int a = layout.owner(k);
      for (int r = 0; r < h.Nr; ++r) {
        cd y = h.at(k, l, r, a) * pilot_value;
        out.at(k, lp, r) = y;
        signal += std::norm(y);
      }
    }
  }
  signal /= static_cast<double>(out.x.size());
  double sigma2 = noise_variance(signal, snr_db);
  if (sigma2 > 0.0) {
    Rng rng(seed);
    double s = std::sqrt(sigma2);
    for (cd& v : out.x) v += s * rng.cnormal();
  }
  return out;
}

LsGrid ls_estimate(const CFrame& y_pilots, const PilotLayout& layout,
                   cd pilot_value) {
  if (pilot_value == cd(0.0, 0.0))
    throw std::invalid_argument("ls_estimate: zero pilot value");
  if (y_pilots.L != PilotLayout::kLp)
    throw std::invalid_argument("ls_estimate: expected pilot-symbol frame");
  LsGrid out = LsGrid::zeros(PilotLayout::kKp, PilotLayout::kLp, y_pilots.C,
                             Link::kNt);
  for (int t = 0; t < Link::kNt; ++t)
    for (int i = 0; i < PilotLayout::kKp; ++i) {
      int k = layout.subcarrier(t, i);
      for (int lp = 0; lp < PilotLayout::kLp; ++lp)
        for (int r = 0; r < y_pilots.C; ++r)
          out.at(i, lp, r, t) = y_pilots.at(k, lp, r) / pilot_value;
    }
  return out;
}

nn::Tensor ls_to_real(const LsGrid& g) {
  const int A = g.Nr * g.Nt;
  nn::Tensor t = nn::Tensor::zeros({2 * A, g.Kp, g.Lp});
  for (int i = 0; i < g.Kp; ++i)
    for (int lp = 0; lp < g.Lp; ++lp)
      for (int r = 0; r < g.Nr; ++r)
        for (int tt = 0; tt < g.Nt; ++tt) {
          cd v = g.at(i, lp, r, tt);
          int a = r * g.Nt + tt;
          t.at3(2 * a, i, lp) = v.real();
          t.at3(2 * a + 1, i, lp) = v.imag();
        }
  return t;
}

std::vector<CFrame> map_streams(const std::vector<cd>& f_se,
                                const std::vector<cd>& f_co,
                                bool semantic_priority) {
  const int K = Link::kK, L = Link::kL, D = Link::kStreams;
  const size_t per_frame = static_cast<size_t>(K) * L * D;
  std::vector<cd> payload;
  payload.reserve(f_se.size() + f_co.size());
  const std::vector<cd>& first = semantic_priority ? f_se : f_co;
  const std::vector<cd>& second = semantic_priority ? f_co : f_se;
  payload.insert(payload.end(), first.begin(), first.end());
  payload.insert(payload.end(), second.begin(), second.end());

  // same accumulation order and division as the power_normalize training op
  double ss = 0.0;
  for (const cd& v : payload) {
    ss += v.real() * v.real();
    ss += v.imag() * v.imag();
  }
  double sigma = payload.empty() || ss <= 0.0
                     ? 1.0
                     : std::sqrt(ss / static_cast<double>(payload.size()));

  size_t n_frames = payload.empty() ? 1 : (payload.size() + per_frame - 1) / per_frame;
  std::vector<CFrame> frames(n_frames, CFrame::zeros(K, L, D));
  for (size_t i = 0; i < payload.size(); ++i) {
    size_t f = i / per_frame;
    size_t p = i % per_frame;
    int d = static_cast<int>(p / (static_cast<size_t>(K) * L));
    int l = static_cast<int>((p / K) % L);
    int k = static_cast<int>(p % K);
    frames[f].at(k, l, d) = cd(payload[i].real() / sigma, payload[i].imag() / sigma);
  }
  return frames;
}

void demap_streams(const std::vector<CFrame>& frames, bool semantic_priority,
                   size_t n_se, size_t n_co, std::vector<cd>& f_se,
                   std::vector<cd>& f_co) {
  const int K = Link::kK, L = Link::kL, D = Link::kStreams;
  const size_t per_frame = static_cast<size_t>(K) * L * D;
  size_t total = n_se + n_co;
  std::vector<cd> payload(total);
  for (size_t i = 0; i < total; ++i) {
    size_t f = i / per_frame;
    size_t p = i % per_frame;
    if (f >= frames.size()) throw std::invalid_argument("demap_streams: short");
    int d = static_cast<int>(p / (static_cast<size_t>(K) * L));
    int l = static_cast<int>((p / K) % L);
    int k = static_cast<int>(p % K);
    payload[i] = frames[f].at(k, l, d);
  }
  size_t n_first = semantic_priority ? n_se : n_co;
  std::vector<cd> a(payload.begin(), payload.begin() + static_cast<long>(n_first));
  std::vector<cd> b(payload.begin() + static_cast<long>(n_first), payload.end());
  if (semantic_priority) {
    f_se = std::move(a);
    f_co = std::move(b);
  } else {
    f_co = std::move(a);
    f_se = std::move(b);
  }
}

}  // namespace semlink::ofdm
