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
#include <cstdio>

#include "semlink/channel.hpp"
#include "semlink/rng.hpp"

using namespace semlink;
using namespace semlink::channel;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("zero speed, single path: constant over symbols and rank one") {
  RegionSpec reg{1, 0.0, 0.0, 100.0, false, 1, 50.0, 100.0};
  UserState u{30.0, 40.0, 0.0, 0.0};
  ChannelTensor h = generate(reg, u, 99);
  REQUIRE(h.all_finite());
  // constant across l
  for (int k = 0; k < h.K; k += 7)
    for (int l = 1; l < h.L; ++l)
      for (int r = 0; r < h.Nr; ++r)
        for (int t = 0; t < h.Nt; ++t) {
          CHECK(h.at(k, l, r, t).real() == doctest::Approx(h.at(k, 0, r, t).real()));
          CHECK(h.at(k, l, r, t).imag() == doctest::Approx(h.at(k, 0, r, t).imag()));
        }
  // rank one per RE: all 2x2 minors vanish
  for (int k = 0; k < h.K; k += 11) {
    for (int r1 = 0; r1 < h.Nr; ++r1)
      for (int r2 = r1 + 1; r2 < h.Nr; ++r2)
        for (int t1 = 0; t1 < h.Nt; ++t1)
          for (int t2 = t1 + 1; t2 < h.Nt; ++t2) {
            cd det = h.at(k, 0, r1, t1) * h.at(k, 0, r2, t2) -
                     h.at(k, 0, r1, t2) * h.at(k, 0, r2, t1);
            CHECK(std::abs(det) < 1e-12);
          }
  }
}

TEST_CASE("determinism and seed sensitivity") {
  RegionSpec reg = table_regions()[0];
  UserState u{100.0, 100.0, 60.0, 1.0};
  ChannelTensor a = generate(reg, u, 1234);
  ChannelTensor b = generate(reg, u, 1234);
  ChannelTensor c = generate(reg, u, 1235);
  CHECK(a.h == b.h);
  bool differs = false;
  for (size_t i = 0; i < a.h.size(); ++i)
    if (a.h[i] != c.h[i]) { differs = true; break; }
  CHECK(differs);
}

TEST_CASE("cluster_count zero rejected") {
  RegionSpec reg{1, 0.0, 0.0, 100.0, false, 0, 50.0, 100.0};
  CHECK_THROWS_AS(generate(reg, UserState{}, 1), std::invalid_argument);
}

TEST_CASE("region 1 ensemble RMS delay spread stays in range") {
  RegionSpec reg = table_regions()[0];
  UserState u{110.0, 90.0, 60.0, 0.4};
  double acc = 0.0;
  const int n = 1000;
  for (int s = 0; s < n; ++s)
    acc += rms_delay_spread_ns(generate(reg, u, derive_seed(5, "ds1", s)));
  double est = acc / n;
  CHECK(est > 45.0);   // 50 - 10%
  CHECK(est < 110.0);  // 100 + 10%
}

TEST_CASE("region 3 ensemble RMS delay spread stays in range") {
  RegionSpec reg = table_regions()[2];
  UserState u{-100.0, -100.0, 30.0, 2.0};
  double acc = 0.0;
  const int n = 400;
  for (int s = 0; s < n; ++s)
    acc += rms_delay_spread_ns(generate(reg, u, derive_seed(6, "ds3", s)));
  double est = acc / n;
  CHECK(est > 855.0);   // 950 - 10%
  CHECK(est < 1100.0);  // 1000 + 10%
}

TEST_CASE("rms_delay_spread exact cases") {
  // single path -> 0
  {
    RegionSpec reg{1, 0.0, 0.0, 100.0, false, 1, 50.0, 100.0};
    ChannelTensor h = generate(reg, UserState{10.0, 10.0, 0.0, 0.0}, 7);
    CHECK(rms_delay_spread_ns(h) == doctest::Approx(0.0).epsilon(1e-9));
  }
  // symmetric two-tap at delays 0 and 2*tau with antenna-orthogonal
  // steering -> exactly tau
  {
    const double tau = 4.63e-6;
    ChannelTensor h = ChannelTensor::zeros(Link::kK, Link::kL, Link::kNr, Link::kNt);
    for (int k = 0; k < h.K; ++k) {
      cd ramp = std::polar(1.0, -2.0 * kPi * (k * Link::kSubcarrierHz) * (2.0 * tau));
      for (int l = 0; l < h.L; ++l)
        for (int r = 0; r < h.Nr; ++r)
          for (int t = 0; t < h.Nt; ++t) {
            cd a1 = std::polar(1.0, 0.0);             // broadside, sin = 0
            cd a2 = std::polar(1.0, kPi * r);         // endfire, sin = 1
            h.at(k, l, r, t) =
                std::sqrt(0.5) * a1 + std::sqrt(0.5) * a2 * ramp;
          }
    }
    CHECK(rms_delay_spread_ns(h) == doctest::Approx(tau * 1e9).epsilon(1e-9));
  }
}

TEST_CASE("temporal correlation basics and monotone decay with speed") {
  RegionSpec reg = table_regions()[1];
  // speed 0: unity at all lags
  {
    ChannelTensor h = generate(reg, UserState{100.0, -100.0, 0.0, 0.0}, 21);
    for (int lag = 0; lag < h.L; lag += 3)
      CHECK(temporal_correlation(h, lag) == doctest::Approx(1.0).epsilon(1e-12));
  }
  {
    ChannelTensor h = generate(reg, UserState{100.0, -100.0, 120.0, 0.0}, 22);
    CHECK(temporal_correlation(h, 0) == 1.0);
    CHECK_THROWS_AS(temporal_correlation(h, h.L), std::invalid_argument);
  }
  // Monte-Carlo over 200 seeds: correlation at fixed lag decreases as the
  // speed sweeps 12 -> 144 km/h
  const int n = 200;
  double prev = 2.0;
  for (double v : {12.0, 56.0, 100.0, 144.0}) {
    double acc = 0.0;
    for (int s = 0; s < n; ++s) {
      UserState u{100.0, -100.0, v, 0.3};
      acc += temporal_correlation(generate(reg, u, derive_seed(77, "tc", s)), 4);
    }
    double corr = acc / n;
    CHECK(corr < prev);
    CHECK(corr >= -1.0);
    CHECK(corr <= 1.0);
    prev = corr;
  }
}

TEST_CASE("ensemble power normalization") {
  RegionSpec reg = table_regions()[3];
  UserState u{-100.0, 100.0, 45.0, 0.0};
  double acc = 0.0;
  const int n = 1000;
  for (int s = 0; s < n; ++s)
    acc += generate(reg, u, derive_seed(11, "pw", s)).mean_power();
  double mean = acc / n;
  CHECK(mean > 0.97);
  CHECK(mean < 1.03);
}

TEST_CASE("frequency selectivity ordering: region 3 below region 1") {
  const int n = 200;
  double c1 = 0.0, c3 = 0.0;
  for (int s = 0; s < n; ++s) {
    c1 += std::abs(freq_correlation(
        generate(table_regions()[0], UserState{100.0, 100.0, 30.0, 0.0},
                 derive_seed(3, "fs1", s)), 8));
    c3 += std::abs(freq_correlation(
        generate(table_regions()[2], UserState{-100.0, -100.0, 30.0, 0.0},
                 derive_seed(3, "fs3", s)), 8));
  }
  CHECK(c3 / n < c1 / n);
}

TEST_CASE("NLOS real-part kurtosis is near Gaussian") {
  const int n = 100;
  double m2 = 0.0, m4 = 0.0;
  int64_t cnt = 0;
  for (int s = 0; s < n; ++s) {
    ChannelTensor h = generate(table_regions()[1],
                               UserState{100.0, -100.0, 50.0, 1.1},
                               derive_seed(8, "ku", s));
    for (const cd& v : h.h) {
      double x = v.real();
      m2 += x * x;
      m4 += x * x * x * x;
      ++cnt;
    }
  }
  m2 /= static_cast<double>(cnt);
  m4 /= static_cast<double>(cnt);
  double kurt = m4 / (m2 * m2);
  CHECK(kurt > 2.7);
  CHECK(kurt < 3.3);
}

TEST_CASE("dataset container round-trip") {
  std::vector<ChannelSample> set;
  for (int s = 0; s < 3; ++s) {
    ChannelSample cs;
    cs.user = UserState{100.0 + s, 100.0 - s, 30.0 + s, 0.25 * s};
    cs.h = generate(table_regions()[0], cs.user, derive_seed(2, "io", s));
    cs.region_id = 1;
    set.push_back(std::move(cs));
  }
  std::string path = "/tmp/semlink_test_channels.bin";
  save_dataset(path, set);
  auto back = load_dataset(path);
  REQUIRE(back.size() == set.size());
  for (size_t i = 0; i < set.size(); ++i) {
    CHECK(back[i].region_id == set[i].region_id);
    CHECK(back[i].user.speed_kmh == doctest::Approx(set[i].user.speed_kmh));
    // payload stored as f32
    for (size_t j = 0; j < set[i].h.h.size(); j += 97) {
      CHECK(back[i].h.h[j].real() ==
            doctest::Approx(set[i].h.h[j].real()).epsilon(1e-6));
      CHECK(back[i].h.h[j].imag() ==
            doctest::Approx(set[i].h.h[j].imag()).epsilon(1e-6));
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("real tensor view round-trip") {
  ChannelTensor h = generate(table_regions()[1],
                             UserState{100.0, -100.0, 80.0, 0.0}, 404);
  nn::Tensor t = to_real(h);
  CHECK(t.shape == std::vector<int>{2 * h.Nr * h.Nt, h.K, h.L});
  ChannelTensor back = from_real(t, h.Nr, h.Nt);
  for (size_t i = 0; i < h.h.size(); ++i) {
    CHECK(back.h[i].real() == h.h[i].real());
    CHECK(back.h[i].imag() == h.h[i].imag());
  }
}
