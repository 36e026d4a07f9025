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

#ifndef SEMLINK_SEMANTIC_HPP
#define SEMLINK_SEMANTIC_HPP

#include <array>
#include <complex>
#include <string>
#include <vector>

#include "semlink/nn.hpp"

namespace semlink::semantic {

using cd = std::complex<double>;

constexpr int kClasses = 4;     // background + three object classes
constexpr int kImageSize = 64;  // [3][64][64]
constexpr int kSegSize = 16;    // class map [16][16]
constexpr int kThumbSize = 8;   // compressed image [3][8][8]
constexpr int kFeatureLen = 512;  // complex symbols per feature stream

struct SceneObject {
  int shape = 0;  // 0 circle, 1 rectangle, 2 triangle
  int cls = 0;    // 1..3, shape-aligned
  double x = 0.0, y = 0.0, size = 0.0;
};

// Synthetic scene: 2-5 colored geometric objects over a textured background
// with an exact 16x16 segmentation map derived from the raster.
struct Scene {
  nn::Tensor image;          // [3][64][64], values in [0,1]
  std::vector<int> seg;      // 16*16 row-major class ids in [0,4)
  std::vector<SceneObject> objects;
};

Scene generate_scene(uint64_t seed);

// Canonical per-class colors used by the generator (index 0 = background).
std::array<std::array<double, 3>, kClasses> class_colors();

// Nearest-canonical-color block segmentation of any [3][64][64] image;
// stands in for a trained segmentation model on generator imagery.
std::vector<int> segment_by_color(const nn::Tensor& image);

// Area-average resampling; identity when already at the target resolution.
nn::Tensor downsample_area(const nn::Tensor& img, int ho, int wo);

// ---- symbol-level helpers ----
// Pairing (v[2i], v[2i+1]) -> v[2i] + j v[2i+1].
std::vector<cd> r2c(const std::vector<double>& v);
std::vector<double> c2r(const std::vector<cd>& v);
// Non-graph quantizer with the same table as the training-time op.
std::vector<double> quantize(const std::vector<double>& v);
// The 16 canonical constellation points.
std::vector<cd> constellation();
// Mean symbol energy of the constellation, computed in exact integer
// arithmetic before the common normalization (equals 1).
double constellation_mean_energy();

// The two convolutional encoder/decoder pairs with a straight-through
// quantizer between encoder and channel. Decoders accept noisy complex
// features.
class Codec {
 public:
  explicit Codec(uint64_t init_seed);
  explicit Codec(nn::ParamStore weights);

  std::vector<cd> encode_se(const std::vector<int>& seg) const;
  std::vector<cd> encode_co(const nn::Tensor& thumb) const;  // [3][8][8]
  nn::Tensor decode_se_logits(const std::vector<cd>& f) const;  // [4][16][16]
  std::vector<int> decode_se(const std::vector<cd>& f) const;
  nn::Tensor decode_co(const std::vector<cd>& f) const;  // [3][8][8] in [0,1]

  struct TrainStats {
    double ce = 0.0;
    double mse = 0.0;
  };
  // Noiseless end-to-end autoencoder training through the straight-through
  // quantizer; cross entropy for the segmentation pair, MSE for the
  // compressed pair.
  TrainStats train(const std::vector<Scene>& scenes, int epochs, double lr,
                   uint64_t seed, int threads);

  nn::ParamStore& params() { return ps_; }
  const nn::ParamStore& params() const { return ps_; }

 private:
  nn::ParamStore ps_;
};

// One-hot [4][16][16] view of a class map (shared by codec and recon
// conditioning).
nn::Tensor seg_one_hot(const std::vector<int>& seg);

}  // namespace semlink::semantic

#endif
