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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <limits>

#include "semlink/channel.hpp"
#include "semlink/ofdm.hpp"
#include "semlink/rng.hpp"

using namespace semlink;
using namespace semlink::ofdm;
using channel::ChannelTensor;
using channel::Link;

namespace {

ChannelTensor random_channel(uint64_t seed) {
  return channel::generate(channel::table_regions()[1],
                           channel::UserState{100.0, -100.0, 60.0, 0.7}, seed);
}

CFrame random_streams(uint64_t seed) {
  Rng rng(seed);
  CFrame f = CFrame::zeros(Link::kK, Link::kL, Link::kStreams);
  for (cd& v : f.x) v = rng.cnormal();
  return f;
}

double frob_err_recon(const ChannelTensor& h, const SvdTriple& svd) {
  // || U S V^H - H ||_F over all REs
  double err = 0.0;
  for (int k = 0; k < h.K; ++k)
    for (int l = 0; l < h.L; ++l)
      for (int r = 0; r < h.Nr; ++r)
        for (int t = 0; t < h.Nt; ++t) {
          cd acc(0, 0);
          for (int d = 0; d < svd.D; ++d)
            acc += svd.U[svd.uidx(k, l, r, d)] * svd.sing(k, l, d) *
                   std::conj(svd.V[svd.vidx(k, l, t, d)]);
          err += std::norm(acc - h.at(k, l, r, t));
        }
  return std::sqrt(err);
}

double unitarity_err(const SvdTriple& svd) {
  double worst = 0.0;
  for (int k = 0; k < svd.K; k += 5)
    for (int l = 0; l < svd.L; ++l) {
      for (int c1 = 0; c1 < svd.Nr; ++c1)
        for (int c2 = 0; c2 < svd.Nr; ++c2) {
          cd acc(0, 0);
          for (int r = 0; r < svd.Nr; ++r)
            acc += std::conj(svd.U[svd.uidx(k, l, r, c1)]) *
                   svd.U[svd.uidx(k, l, r, c2)];
          worst = std::max(worst, std::abs(acc - (c1 == c2 ? cd(1, 0) : cd(0, 0))));
        }
      for (int c1 = 0; c1 < svd.Nt; ++c1)
        for (int c2 = 0; c2 < svd.Nt; ++c2) {
          cd acc(0, 0);
          for (int r = 0; r < svd.Nt; ++r)
            acc += std::conj(svd.V[svd.vidx(k, l, r, c1)]) *
                   svd.V[svd.vidx(k, l, r, c2)];
          worst = std::max(worst, std::abs(acc - (c1 == c2 ? cd(1, 0) : cd(0, 0))));
        }
    }
  return worst;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

TEST_CASE("svd of identity-like and diagonal channels") {
  ChannelTensor h = ChannelTensor::zeros(2, 2, 2, 4);
  for (int k = 0; k < 2; ++k)
    for (int l = 0; l < 2; ++l)
      for (int r = 0; r < 2; ++r) h.at(k, l, r, r) = cd(1.0, 0.0);
  SvdTriple svd = svd_decompose(h);
  CHECK(svd.sing(0, 0, 0) == doctest::Approx(1.0));
  CHECK(svd.sing(0, 0, 1) == doctest::Approx(1.0));
  // rows scaled by (3, 1)
  ChannelTensor h2 = h;
  for (int k = 0; k < 2; ++k)
    for (int l = 0; l < 2; ++l)
      for (int t = 0; t < 4; ++t) h2.at(k, l, 0, t) *= 3.0;
  SvdTriple svd2 = svd_decompose(h2);
  CHECK(svd2.sing(1, 1, 0) == doctest::Approx(3.0));
  CHECK(svd2.sing(1, 1, 1) == doctest::Approx(1.0));
}

TEST_CASE("svd reconstruction, unitarity and phase determinism") {
  for (uint64_t seed = 1; seed <= 4; ++seed) {
    ChannelTensor h = random_channel(seed);
    SvdTriple svd = svd_decompose(h);
    CHECK(frob_err_recon(h, svd) < 1e-10);
    CHECK(unitarity_err(svd) < 1e-10);
    // descending singular values
    for (int k = 0; k < h.K; k += 9)
      CHECK(svd.sing(k, 3, 0) >= svd.sing(k, 3, 1));
    // repeated decomposition identical
    SvdTriple again = svd_decompose(h);
    CHECK(svd.V == again.V);
    CHECK(svd.U == again.U);
  }
  ChannelTensor bad = ChannelTensor::zeros(1, 1, 2, 4);
  bad.at(0, 0, 0, 0) = cd(std::nan(""), 0.0);
  CHECK_THROWS_AS(svd_decompose(bad), std::invalid_argument);
}

TEST_CASE("noiseless transmit equals H V X; combine inverts identity channel") {
  ChannelTensor h = random_channel(42);
  SvdTriple svd = svd_decompose(h);
  CFrame x = random_streams(7);
  CFrame y = transmit(x, h, svd, kInf, 0);
  // manual H V x at a few REs
  for (int k = 0; k < h.K; k += 13)
    for (int l = 0; l < h.L; l += 5)
      for (int r = 0; r < h.Nr; ++r) {
        cd acc(0, 0);
        for (int t = 0; t < h.Nt; ++t) {
          cd vx(0, 0);
          for (int d = 0; d < svd.D; ++d)
            vx += svd.V[svd.vidx(k, l, t, d)] * x.at(k, l, d);
          acc += h.at(k, l, r, t) * vx;
        }
        CHECK(std::abs(acc - y.at(k, l, r)) < 1e-12);
      }
  // noiseless combine: X_hat = Lambda X
  CFrame xh = combine(y, svd);
  for (int k = 0; k < h.K; k += 11)
    for (int l = 0; l < h.L; l += 3)
      for (int d = 0; d < svd.D; ++d)
        CHECK(std::abs(xh.at(k, l, d) - svd.sing(k, l, d) * x.at(k, l, d)) < 1e-10);
  // zero-forcing recovers X
  CFrame zf = equalize_zf(xh, svd);
  for (int k = 0; k < h.K; k += 17)
    CHECK(std::abs(zf.at(k, 2, 1) - x.at(k, 2, 1)) < 1e-9);
}

TEST_CASE("X = 0 gives pure noise at the configured variance") {
  ChannelTensor h = random_channel(9);
  SvdTriple svd = svd_decompose(h);
  CFrame x = CFrame::zeros(Link::kK, Link::kL, Link::kStreams);
  double snr_db = 10.0;
  double want = noise_variance(0.0, snr_db);  // unit reference when silent
  double acc = 0.0;
  int64_t cnt = 0;
  for (int rep = 0; rep < 60; ++rep) {
    CFrame y = transmit(x, h, svd, snr_db, derive_seed(1, "noise", rep));
    for (const cd& v : y.x) acc += std::norm(v);
    cnt += static_cast<int64_t>(y.x.size());
  }
  double measured = acc / static_cast<double>(cnt);  // ~1.2e5 draws
  CHECK(measured == doctest::Approx(want).epsilon(0.03));
}

TEST_CASE("per-stream post-combining noise variance is equal across streams") {
  ChannelTensor h = random_channel(10);
  SvdTriple svd = svd_decompose(h);
  CFrame x = CFrame::zeros(Link::kK, Link::kL, Link::kStreams);
  double s0 = 0.0, s1 = 0.0;
  int64_t cnt = 0;
  for (int rep = 0; rep < 80; ++rep) {
    CFrame y = transmit(x, h, svd, 0.0, derive_seed(2, "whiten", rep));
    CFrame c = combine(y, svd);
    for (int k = 0; k < c.K; ++k)
      for (int l = 0; l < c.L; ++l) {
        s0 += std::norm(c.at(k, l, 0));
        s1 += std::norm(c.at(k, l, 1));
        ++cnt;
      }
  }
  CHECK(s0 / cnt == doctest::Approx(s1 / cnt).epsilon(0.03));
}

TEST_CASE("empirical per-stream SNR ordering is non-increasing") {
  double snr_db = 6.0;
  double err0 = 0.0, err1 = 0.0, sig0 = 0.0, sig1 = 0.0;
  for (int rep = 0; rep < 30; ++rep) {
    ChannelTensor h = random_channel(derive_seed(3, "ord", rep));
    SvdTriple svd = svd_decompose(h);
    CFrame x = random_streams(derive_seed(4, "ordx", rep));
    CFrame y = transmit(x, h, svd, snr_db, derive_seed(5, "ordn", rep));
    CFrame c = combine(y, svd);
    for (int k = 0; k < h.K; ++k)
      for (int l = 0; l < h.L; ++l) {
        sig0 += std::norm(svd.sing(k, l, 0) * x.at(k, l, 0));
        sig1 += std::norm(svd.sing(k, l, 1) * x.at(k, l, 1));
        err0 += std::norm(c.at(k, l, 0) - svd.sing(k, l, 0) * x.at(k, l, 0));
        err1 += std::norm(c.at(k, l, 1) - svd.sing(k, l, 1) * x.at(k, l, 1));
      }
  }
  CHECK(sig0 / err0 > sig1 / err1);
}

TEST_CASE("pilot layout: one active antenna per (symbol, subcarrier)") {
  PilotLayout layout;
  CHECK(PilotLayout::kKp == 18);
  CHECK(PilotLayout::kLp == 4);
  CHECK(layout.symbol_indices == std::array<int, 4>{0, 4, 9, 13});
  std::vector<int> seen(Link::kK, 0);
  for (int t = 0; t < Link::kNt; ++t)
    for (int i = 0; i < PilotLayout::kKp; ++i) {
      int k = layout.subcarrier(t, i);
      CHECK(layout.owner(k) == t);
      seen[static_cast<size_t>(k)] += 1;
    }
  for (int k = 0; k < Link::kK; ++k) CHECK(seen[static_cast<size_t>(k)] == 1);
}

TEST_CASE("noiseless LS recovers the channel at pilot REs") {
  ChannelTensor h = random_channel(77);
  PilotLayout layout;
  cd pilot(1.0, 0.0);
  CFrame y = transmit_pilots(h, layout, pilot, kInf, 0);
  LsGrid ls = ls_estimate(y, layout, pilot);
  for (int t = 0; t < Link::kNt; ++t)
    for (int i = 0; i < PilotLayout::kKp; i += 3)
      for (int lp = 0; lp < PilotLayout::kLp; ++lp)
        for (int r = 0; r < Link::kNr; ++r) {
          int k = layout.subcarrier(t, i);
          int l = layout.symbol_indices[static_cast<size_t>(lp)];
          CHECK(std::abs(ls.at(i, lp, r, t) - h.at(k, l, r, t)) < 1e-12);
        }
  CHECK_THROWS_AS(ls_estimate(y, layout, cd(0.0, 0.0)), std::invalid_argument);
}

TEST_CASE("LS NMSE equals 1/SNR on orthogonal pilots") {
  PilotLayout layout;
  cd pilot(1.0, 0.0);
  for (double snr_db : {0.0, 10.0}) {
    double rho = std::pow(10.0, snr_db / 10.0);
    double err = 0.0, pow = 0.0;
    const int n = 400;  // the acceptance suite runs the full 1e4-draw version
    for (int rep = 0; rep < n; ++rep) {
      ChannelTensor h = random_channel(derive_seed(6, "ls", rep));
      CFrame y = transmit_pilots(h, layout, pilot, snr_db,
                                 derive_seed(7, "lsn", rep));
      LsGrid ls = ls_estimate(y, layout, pilot);
      for (int t = 0; t < Link::kNt; ++t)
        for (int i = 0; i < PilotLayout::kKp; ++i)
          for (int lp = 0; lp < PilotLayout::kLp; ++lp)
            for (int r = 0; r < Link::kNr; ++r) {
              int k = layout.subcarrier(t, i);
              int l = layout.symbol_indices[static_cast<size_t>(lp)];
              err += std::norm(ls.at(i, lp, r, t) - h.at(k, l, r, t));
              pow += std::norm(h.at(k, l, r, t));
            }
    }
    CHECK(err / pow == doctest::Approx(1.0 / rho).epsilon(0.05));
  }
}

TEST_CASE("zero channel: LS output is scaled noise") {
  ChannelTensor h = ChannelTensor::zeros(Link::kK, Link::kL, Link::kNr, Link::kNt);
  PilotLayout layout;
  cd pilot(2.0, 0.0);
  double snr_db = 3.0;
  double sigma2 = noise_variance(0.0, snr_db);
  double acc = 0.0;
  int64_t cnt = 0;
  for (int rep = 0; rep < 300; ++rep) {
    CFrame y = transmit_pilots(h, layout, pilot, snr_db, derive_seed(8, "z", rep));
    LsGrid ls = ls_estimate(y, layout, pilot);
    for (const cd& v : ls.g) acc += std::norm(v);
    cnt += static_cast<int64_t>(ls.g.size());
  }
  CHECK(acc / cnt == doctest::Approx(sigma2 / std::norm(pilot)).epsilon(0.05));
}

TEST_CASE("map_streams: priority placement, frame count, round-trip") {
  Rng rng(15);
  auto mk = [&rng](size_t n) {
    std::vector<cd> v(n);
    for (cd& c : v) c = rng.cnormal();
    return v;
  };
  const size_t n_se = 512, n_co = 512;
  std::vector<cd> f_se = mk(n_se), f_co = mk(n_co);

  std::vector<CFrame> fr = map_streams(f_se, f_co, true);
  CHECK(fr.size() == 1);  // 1024 symbols fit one 2016-RE frame
  // the prioritized feature occupies stream 0 until exhausted
  double scale = std::abs(fr[0].at(0, 0, 0) / f_se[0]);
  size_t i = 0;
  for (int l = 0; l < Link::kL && i < n_se; ++l)
    for (int k = 0; k < Link::kK && i < n_se; ++k, ++i) {
      // packing order inside stream 0: symbol-major, subcarrier fastest
      size_t pos = static_cast<size_t>(l) * Link::kK + k;
      CHECK(std::abs(fr[0].at(k, l, 0) - f_se[pos] * scale) < 1e-12);
    }
  // payload normalization: unit mean power over the 1024 payload symbols
  double p = 0.0;
  for (const cd& v : fr[0].x) p += std::norm(v);
  CHECK(p / 1024.0 == doctest::Approx(1.0).epsilon(1e-9));

  // compress priority puts f_co first
  std::vector<CFrame> fr2 = map_streams(f_se, f_co, false);
  double scale2 = std::abs(fr2[0].at(0, 0, 0) / f_co[0]);
  CHECK(std::abs(fr2[0].at(0, 0, 0) - f_co[0] * scale2) < 1e-12);

  // round-trip identity (up to the common normalization factor)
  std::vector<cd> se_back, co_back;
  demap_streams(fr, true, n_se, n_co, se_back, co_back);
  for (size_t j = 0; j < n_se; j += 37)
    CHECK(std::abs(se_back[j] / scale - f_se[j]) < 1e-9);
  for (size_t j = 0; j < n_co; j += 41)
    CHECK(std::abs(co_back[j] / scale - f_co[j]) < 1e-9);

  // 8192 symbols pack into ceil(8192 / 2016) = 5 frames
  std::vector<cd> big_se = mk(4096), big_co = mk(4096);
  CHECK(map_streams(big_se, big_co, true).size() == 5);
}
