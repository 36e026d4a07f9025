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

#ifndef SEMLINK_JSCC_HPP
#define SEMLINK_JSCC_HPP

#include <complex>
#include <vector>

#include "semlink/channel.hpp"
#include "semlink/nn.hpp"

namespace semlink::jscc {

using cd = std::complex<double>;
using channel::ChannelTensor;

// Image payload of the CNN joint source-channel baseline: four times the
// semantic budget.
constexpr int kSymbols = 4096;

// Conventional conv autoencoder trained end-to-end through the equivalent
// SVD subchannels at a fixed design SNR, with the same straight-through
// 16-QAM quantizer as the semantic codecs.
class JsccCodec {
 public:
  explicit JsccCodec(uint64_t init_seed);
  explicit JsccCodec(nn::ParamStore weights);

  std::vector<cd> encode(const nn::Tensor& image) const;   // [3][64][64]
  nn::Tensor decode(const std::vector<cd>& f) const;       // clamped [0,1]

  struct TrainCfg {
    int steps = 1500;
    int batch = 8;
    double lr = 1e-3;
    double lr_final = 2e-4;
    double snr_db = 10.0;  // fixed design SNR
    int threads = 1;
  };
  double train(const std::vector<nn::Tensor>& images,
               const std::vector<ChannelTensor>& ensemble, const TrainCfg& cfg,
               uint64_t seed);

  nn::ParamStore& params() { return ps_; }
  const nn::ParamStore& params() const { return ps_; }

 private:
  nn::ParamStore ps_;
};

}  // namespace semlink::jscc

#endif
