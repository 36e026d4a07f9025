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

#ifndef SEMLINK_METRICS_HPP
#define SEMLINK_METRICS_HPP

#include <vector>

#include "semlink/nn.hpp"

namespace semlink::metrics {

// Frozen seed-generated 3-layer conv stack standing in for a pretrained
// backbone. Absolute perceptual/FID values are therefore not comparable
// across extractors; orderings and trends are.
class FeatureExtractor {
 public:
  static constexpr int kFeatureDim = 16;
  explicit FeatureExtractor(uint64_t seed = 2000);
  // the three layer activations for an image [3][H][W]
  std::vector<nn::Tensor> layer_maps(const nn::Tensor& image) const;
  // final layer, spatially pooled: kFeatureDim values
  std::vector<double> features(const nn::Tensor& image) const;

 private:
  nn::ParamStore ps_;
};

// Mean SSIM over 8x8 sliding windows (stride 1) and channels;
// c1 = 0.01^2, c2 = 0.03^2 on a [0,1] value range.
double ssim(const nn::Tensor& a, const nn::Tensor& b);

// Sum over layers of per-layer mean squared feature difference.
double perceptual(const nn::Tensor& a, const nn::Tensor& b,
                  const FeatureExtractor& fx);

// Frechet distance between Gaussian fits of two feature sets. Covariances
// get a 1e-6 ridge; the matrix square root uses the symmetric form
// (Sr^1/2 Sg Sr^1/2)^1/2 via eigendecomposition.
double fid(const std::vector<std::vector<double>>& feats_real,
           const std::vector<std::vector<double>>& feats_gen);
double fid_images(const std::vector<nn::Tensor>& real,
                  const std::vector<nn::Tensor>& gen,
                  const FeatureExtractor& fx);

// Pixel-count-weighted IoU over the classes present in truth.
double iou(const std::vector<int>& pred, const std::vector<int>& truth);

// Square root of a symmetric PSD matrix (row-major d x d).
std::vector<double> psd_sqrt(const std::vector<double>& m, int d);

}  // namespace semlink::metrics

#endif
