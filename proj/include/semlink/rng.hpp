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

#ifndef SEMLINK_RNG_HPP
#define SEMLINK_RNG_HPP

#include <complex>
#include <cstdint>
#include <string_view>

namespace semlink {

// Every run owns a single master seed. All sub-streams derive their seed as
// derive_seed(master, tag, a, b) where tag names the consumer (e.g. "channel",
// "noise") and a/b are loop indices. Re-running with the same master seed and
// tags reproduces every stream exactly.
uint64_t hash_tag(std::string_view tag);
uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t a = 0,
                     uint64_t b = 0);

// splitmix64 generator with local distribution code so that streams are
// bit-identical across platforms and standard-library versions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64();
  double uniform();                      // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  int uniform_int(int lo, int hi);       // inclusive both ends
  double normal();                       // N(0, 1)
  std::complex<double> cnormal();        // CN(0, 1), unit complex variance

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace semlink

#endif
