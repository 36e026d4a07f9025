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

#include "semlink/channel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>

#include "semlink/rng.hpp"

namespace semlink::channel {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;
constexpr double kRicianK = 10.0;       // 10 dB LOS factor
constexpr double kAngleSpreadRad = 20.0 * kPi / 180.0;
}  // namespace

double ChannelTensor::mean_power() const {
  double s = 0.0;
  for (const cd& v : h) s += std::norm(v);
  return s / static_cast<double>(h.size());
}

bool ChannelTensor::all_finite() const {
  for (const cd& v : h)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  return true;
}

ChannelTensor ChannelTensor::slice_symbols(int l0, int len) const {
  if (l0 < 0 || l0 + len > L)
    throw std::invalid_argument("slice_symbols: out of range");
  ChannelTensor out = zeros(K, len, Nr, Nt);
  for (int k = 0; k < K; ++k)
    for (int l = 0; l < len; ++l)
      for (int r = 0; r < Nr; ++r)
        for (int t = 0; t < Nt; ++t)
          out.at(k, l, r, t) = at(k, l0 + l, r, t);
  return out;
}

std::vector<RegionSpec> table_regions() {
  return {
      {1, 100.0, 100.0, 100.0, true, 5, 50.0, 100.0},
      {2, 100.0, -100.0, 100.0, false, 20, 400.0, 450.0},
      {3, -100.0, -100.0, 100.0, false, 20, 950.0, 1000.0},
      {4, -100.0, 100.0, 100.0, false, 15, 50.0, 100.0},
  };
}

namespace {

struct Path {
  double power = 0.0;
  double delay_s = 0.0;
  double aoa = 0.0;      // at the base station array
  double aod = 0.0;      // at the user array
  double doppler = 0.0;  // Hz
  double phase = 0.0;
};

double rms_spread(const std::vector<Path>& paths) {
  double p = 0.0, m1 = 0.0, m2 = 0.0;
  for (const Path& c : paths) {
    p += c.power;
    m1 += c.power * c.delay_s;
    m2 += c.power * c.delay_s * c.delay_s;
  }
  m1 /= p;
  m2 /= p;
  double v = m2 - m1 * m1;
  return v > 0.0 ? std::sqrt(v) : 0.0;
}

}  // namespace

ChannelTensor generate(const RegionSpec& region, const UserState& user,
                       uint64_t seed, int symbols) {
  if (region.cluster_count < 1)
    throw std::invalid_argument("generate: cluster_count must be >= 1");
  if (user.speed_kmh < 0.0)
    throw std::invalid_argument("generate: negative speed");
  {
    double dx = user.x - region.center_x, dy = user.y - region.center_y;
    if (std::sqrt(dx * dx + dy * dy) > 2.0 * region.radius)
      std::fprintf(stderr,
                   "semlink: warning: user (%.1f, %.1f) far outside region %d\n",
                   user.x, user.y, region.id);
  }

  Rng rng(seed);
  const double v_mps = user.speed_kmh / 3.6;
  // Arrival bearing of the user as seen from the base station at the origin;
  // departure points back the other way.
  const double bearing_bs = std::atan2(user.y, user.x);
  const double bearing_user = std::atan2(-user.y, -user.x);

  std::vector<Path> paths;
  paths.reserve(static_cast<size_t>(region.cluster_count) + 1);
  double nlos_total = 0.0;
  for (int c = 0; c < region.cluster_count; ++c) {
    Path p;
    double u = rng.uniform();
    double tap = -std::log(1.0 - u);                 // unit-mean exponential
    p.power = std::exp(-tap + 0.7 * rng.normal());   // decaying with shadowing
    p.delay_s = tap;
    p.aoa = bearing_bs + kAngleSpreadRad * rng.normal();
    p.aod = bearing_user + kAngleSpreadRad * rng.normal();
    p.phase = kTwoPi * rng.uniform();
    nlos_total += p.power;
    paths.push_back(p);
  }
  const double nlos_share = region.los ? 1.0 / (1.0 + kRicianK) : 1.0;
  for (Path& p : paths) p.power *= nlos_share / nlos_total;
  if (region.los) {
    Path p;
    p.power = kRicianK / (1.0 + kRicianK);
    p.delay_s = 0.0;
    p.aoa = bearing_bs;
    p.aod = bearing_user;
    p.phase = 0.0;
    paths.push_back(p);
  }

  // Shift so the earliest tap sits at zero, then rescale all delays so the
  // realized RMS spread equals a uniform draw from the region's range.
  double dmin = paths[0].delay_s;
  for (const Path& p : paths) dmin = std::min(dmin, p.delay_s);
  for (Path& p : paths) p.delay_s -= dmin;
  if (region.los) {
    for (Path& p : paths) p.delay_s = std::max(p.delay_s, 0.0);
  }
  double target_ns = rng.uniform(region.ds_min_ns, region.ds_max_ns);
  double current = rms_spread(paths);
  if (current > 1e-15) {
    double scale = target_ns * 1e-9 / current;
    for (Path& p : paths) p.delay_s *= scale;
  } else {
    for (Path& p : paths) p.delay_s = 0.0;
  }

  for (Path& p : paths)
    p.doppler = (v_mps / Link::kLightMs) * Link::kCarrierHz *
                std::cos(user.heading_rad - p.aoa);

  const int K = Link::kK, Nr = Link::kNr, Nt = Link::kNt;
  ChannelTensor out = ChannelTensor::zeros(K, symbols, Nr, Nt);
  std::vector<cd> fk(static_cast<size_t>(K)), dl(static_cast<size_t>(symbols));
  std::vector<cd> ant(static_cast<size_t>(Nr) * Nt);
  for (const Path& p : paths) {
    const double amp = std::sqrt(p.power);
    for (int k = 0; k < K; ++k) {
      double ph = -kTwoPi * (k * Link::kSubcarrierHz) * p.delay_s;
      fk[static_cast<size_t>(k)] = cd(std::cos(ph), std::sin(ph));
    }
    for (int l = 0; l < symbols; ++l) {
      double ph = kTwoPi * p.doppler * l * Link::kSymbolS + p.phase;
      dl[static_cast<size_t>(l)] = cd(std::cos(ph), std::sin(ph));
    }
    // half-wavelength ULAs at both ends
    for (int r = 0; r < Nr; ++r) {
      cd ar = std::polar(1.0, kPi * r * std::sin(p.aoa));
      for (int t = 0; t < Nt; ++t) {
        cd at = std::polar(1.0, kPi * t * std::sin(p.aod));
        ant[static_cast<size_t>(r) * Nt + t] = amp * ar * std::conj(at);
      }
    }
    for (int k = 0; k < K; ++k)
      for (int l = 0; l < symbols; ++l) {
        cd g = fk[static_cast<size_t>(k)] * dl[static_cast<size_t>(l)];
        cd* dst = out.h.data() + out.idx(k, l, 0, 0);
        for (int a = 0; a < Nr * Nt; ++a) dst[a] += g * ant[static_cast<size_t>(a)];
      }
  }
  return out;
}

cd freq_correlation(const ChannelTensor& h, int lag) {
  if (lag < 0 || lag >= h.K) throw std::invalid_argument("freq_correlation: lag");
  cd acc(0.0, 0.0);
  double power = 0.0;
  const int A = h.Nr * h.Nt;
  for (int k = 0; k < h.K; ++k)
    for (int l = 0; l < h.L; ++l) {
      const cd* row = h.h.data() + h.idx(k, l, 0, 0);
      for (int a = 0; a < A; ++a) power += std::norm(row[a]);
    }
  power /= static_cast<double>(h.K) * h.L * A;
  if (power <= 0.0) return cd(0.0, 0.0);
  for (int k = 0; k + lag < h.K; ++k)
    for (int l = 0; l < h.L; ++l) {
      const cd* a0 = h.h.data() + h.idx(k, l, 0, 0);
      const cd* a1 = h.h.data() + h.idx(k + lag, l, 0, 0);
      for (int a = 0; a < A; ++a) acc += std::conj(a0[a]) * a1[a];
    }
  double count = static_cast<double>(h.K - lag) * h.L * A;
  return acc / (count * power);
}

double rms_delay_spread_ns(const ChannelTensor& h) {
  // arccos(|rho|) equals 2*pi*lag*df*sigma exactly for a symmetric two-tap
  // profile and to first order for any profile; lags outside the window are
  // either uninformative (|rho| ~ 1) or deep in decorrelation.
  constexpr double kHi = 0.9995;
  constexpr double kLo = 0.90;
  double acc = 0.0;
  int used = 0;
  for (int lag = 1; lag < h.K; ++lag) {
    double r = std::abs(freq_correlation(h, lag));
    if (r < kLo) break;
    if (r > kHi) continue;
    acc += std::acos(std::min(1.0, r)) /
           (kTwoPi * lag * Link::kSubcarrierHz);
    ++used;
  }
  if (used == 0) {
    double r = std::abs(freq_correlation(h, 1));
    return std::acos(std::clamp(r, 0.0, 1.0)) /
           (kTwoPi * Link::kSubcarrierHz) * 1e9;
  }
  return acc / used * 1e9;
}

double temporal_correlation(const ChannelTensor& h, int lag) {
  if (lag < 0 || lag >= h.L)
    throw std::invalid_argument("temporal_correlation: lag must be < L");
  if (lag == 0) return 1.0;
  cd acc(0.0, 0.0);
  double power = 0.0;
  const int A = h.Nr * h.Nt;
  for (int k = 0; k < h.K; ++k)
    for (int l = 0; l < h.L; ++l) {
      const cd* row = h.h.data() + h.idx(k, l, 0, 0);
      for (int a = 0; a < A; ++a) power += std::norm(row[a]);
    }
  power /= static_cast<double>(h.K) * h.L * A;
  if (power <= 0.0) return 0.0;
  for (int k = 0; k < h.K; ++k)
    for (int l = 0; l + lag < h.L; ++l) {
      const cd* a0 = h.h.data() + h.idx(k, l, 0, 0);
      const cd* a1 = h.h.data() + h.idx(k, l + lag, 0, 0);
      for (int a = 0; a < A; ++a) acc += std::conj(a0[a]) * a1[a];
    }
  double count = static_cast<double>(h.K) * (h.L - lag) * A;
  return std::clamp(acc.real() / (count * power), -1.0, 1.0);
}

namespace {

void put_u32(std::FILE* f, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  std::fwrite(b, 1, 4, f);
}

uint32_t get_u32(std::FILE* f) {
  unsigned char b[4];
  if (std::fread(b, 1, 4, f) != 4) throw std::runtime_error("SLCH: truncated");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

void put_f32(std::FILE* f, float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(f, u);
}

float get_f32(std::FILE* f) {
  uint32_t u = get_u32(f);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

}  // namespace

void save_dataset(const std::string& path, const std::vector<ChannelSample>& set) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("SLCH: cannot open " + path);
  std::fwrite("SLCH", 1, 4, f);
  put_u32(f, 1);  // version
  put_u32(f, set.empty() ? 0 : static_cast<uint32_t>(set[0].region_id));
  put_u32(f, static_cast<uint32_t>(set.size()));
  int K = set.empty() ? Link::kK : set[0].h.K;
  int L = set.empty() ? Link::kL : set[0].h.L;
  int Nr = set.empty() ? Link::kNr : set[0].h.Nr;
  int Nt = set.empty() ? Link::kNt : set[0].h.Nt;
  put_u32(f, static_cast<uint32_t>(K));
  put_u32(f, static_cast<uint32_t>(L));
  put_u32(f, static_cast<uint32_t>(Nr));
  put_u32(f, static_cast<uint32_t>(Nt));
  for (const ChannelSample& s : set) {
    for (const cd& v : s.h.h) {
      put_f32(f, static_cast<float>(v.real()));
      put_f32(f, static_cast<float>(v.imag()));
    }
    put_f32(f, static_cast<float>(s.user.x));
    put_f32(f, static_cast<float>(s.user.y));
    put_f32(f, static_cast<float>(s.user.speed_kmh));
    put_f32(f, static_cast<float>(s.user.heading_rad));
    put_u32(f, static_cast<uint32_t>(s.region_id));
  }
  std::fclose(f);
}

std::vector<ChannelSample> load_dataset(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("SLCH: cannot open " + path);
  char magic[4];
  if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, "SLCH", 4) != 0) {
    std::fclose(f);
    throw std::runtime_error("SLCH: bad magic in " + path);
  }
  if (get_u32(f) != 1) {
    std::fclose(f);
    throw std::runtime_error("SLCH: unsupported version");
  }
  (void)get_u32(f);  // leading region id, informational
  uint32_t count = get_u32(f);
  int K = static_cast<int>(get_u32(f));
  int L = static_cast<int>(get_u32(f));
  int Nr = static_cast<int>(get_u32(f));
  int Nt = static_cast<int>(get_u32(f));
  std::vector<ChannelSample> set;
  set.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    ChannelSample s;
    s.h = ChannelTensor::zeros(K, L, Nr, Nt);
    for (cd& v : s.h.h) {
      float re = get_f32(f);
      float im = get_f32(f);
      v = cd(re, im);
    }
    s.user.x = get_f32(f);
    s.user.y = get_f32(f);
    s.user.speed_kmh = get_f32(f);
    s.user.heading_rad = get_f32(f);
    s.region_id = static_cast<int>(get_u32(f));
    set.push_back(std::move(s));
  }
  std::fclose(f);
  return set;
}

nn::Tensor to_real(const ChannelTensor& h) {
  const int A = h.Nr * h.Nt;
  nn::Tensor t = nn::Tensor::zeros({2 * A, h.K, h.L});
  for (int k = 0; k < h.K; ++k)
    for (int l = 0; l < h.L; ++l) {
      const cd* row = h.h.data() + h.idx(k, l, 0, 0);
      for (int a = 0; a < A; ++a) {
        t.at3(2 * a, k, l) = row[a].real();
        t.at3(2 * a + 1, k, l) = row[a].imag();
      }
    }
  return t;
}

ChannelTensor from_real(const nn::Tensor& t, int Nr, int Nt) {
  const int A = Nr * Nt;
  if (t.rank() != 3 || t.dim(0) != 2 * A)
    throw std::invalid_argument("from_real: expected [2*Nr*Nt][K][L]");
  ChannelTensor h = ChannelTensor::zeros(t.dim(1), t.dim(2), Nr, Nt);
  for (int k = 0; k < h.K; ++k)
    for (int l = 0; l < h.L; ++l) {
      cd* row = h.h.data() + h.idx(k, l, 0, 0);
      for (int a = 0; a < A; ++a)
        row[a] = cd(t.at3(2 * a, k, l), t.at3(2 * a + 1, k, l));
    }
  return h;
}

}  // namespace semlink::channel
