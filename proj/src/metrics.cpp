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

#include "semlink/metrics.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "semlink/autodiff.hpp"
#include "semlink/rng.hpp"

namespace semlink::metrics {

using nn::Tensor;

FeatureExtractor::FeatureExtractor(uint64_t seed) {
  Rng rng(seed);
  ps_.add("c1.w", nn::init_he_conv(8, 3, 5, rng));
  ps_.add("c1.b", Tensor::zeros({8}));
  ps_.add("c2.w", nn::init_he_conv(16, 8, 5, rng));
  ps_.add("c2.b", Tensor::zeros({16}));
  ps_.add("c3.w", nn::init_he_conv(kFeatureDim, 16, 5, rng));
  ps_.add("c3.b", Tensor::zeros({kFeatureDim}));
}

std::vector<Tensor> FeatureExtractor::layer_maps(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw std::invalid_argument("FeatureExtractor: expected [3][H][W]");
  nn::Graph g;
  // frozen weights; evaluation only
  nn::ParamStore& ps = const_cast<nn::ParamStore&>(ps_);
  nn::Binding p(g, ps, false);
  nn::Var x = g.leaf(image);
  nn::Var l1 = nn::relu(nn::conv2d(x, p("c1.w"), p("c1.b"), 2, 2));
  nn::Var l2 = nn::relu(nn::conv2d(l1, p("c2.w"), p("c2.b"), 2, 2));
  nn::Var l3 = nn::relu(nn::conv2d(l2, p("c3.w"), p("c3.b"), 2, 2));
  return {l1.val(), l2.val(), l3.val()};
}

std::vector<double> FeatureExtractor::features(const Tensor& image) const {
  Tensor l3 = layer_maps(image).back();
  const int C = l3.dim(0), HW = l3.dim(1) * l3.dim(2);
  std::vector<double> out(static_cast<size_t>(C), 0.0);
  for (int c = 0; c < C; ++c) {
    double s = 0.0;
    for (int p = 0; p < HW; ++p) s += l3.data[static_cast<size_t>(c) * HW + p];
    out[static_cast<size_t>(c)] = s / HW;
  }
  return out;
}

double ssim(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("ssim: shape mismatch " + a.shape_str() +
                                " vs " + b.shape_str());
  if (a.rank() != 3) throw std::invalid_argument("ssim: expected [C][H][W]");
  constexpr int kWin = 8;
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const int C = a.dim(0), H = a.dim(1), W = a.dim(2);
  if (H < kWin || W < kWin) throw std::invalid_argument("ssim: image too small");
  const double n = kWin * kWin;
  const double cov_norm = n / (n - 1.0);
  double acc = 0.0;
  int64_t windows = 0;
  for (int c = 0; c < C; ++c) {
    for (int y = 0; y + kWin <= H; ++y) {
      for (int x = 0; x + kWin <= W; ++x) {
        double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        for (int i = 0; i < kWin; ++i)
          for (int j = 0; j < kWin; ++j) {
            double va = a.at3(c, y + i, x + j);
            double vb = b.at3(c, y + i, x + j);
            sx += va;
            sy += vb;
            sxx += va * va;
            syy += vb * vb;
            sxy += va * vb;
          }
        double mx = sx / n, my = sy / n;
        double vx = cov_norm * (sxx / n - mx * mx);
        double vy = cov_norm * (syy / n - my * my);
        double cxy = cov_norm * (sxy / n - mx * my);
        acc += ((2 * mx * my + c1) * (2 * cxy + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++windows;
      }
    }
  }
  return acc / static_cast<double>(windows);
}

double perceptual(const Tensor& a, const Tensor& b, const FeatureExtractor& fx) {
  if (!a.same_shape(b)) throw std::invalid_argument("perceptual: shape mismatch");
  std::vector<Tensor> fa = fx.layer_maps(a);
  std::vector<Tensor> fb = fx.layer_maps(b);
  double total = 0.0;
  for (size_t j = 0; j < fa.size(); ++j) {
    double s = 0.0;
    for (size_t i = 0; i < fa[j].data.size(); ++i) {
      double d = fa[j].data[i] - fb[j].data[i];
      s += d * d;
    }
    // layer weight: inverse feature count, so layers contribute comparably
    total += s / static_cast<double>(fa[j].numel());
  }
  return total;
}

namespace {

void mean_cov(const std::vector<std::vector<double>>& feats, int d,
              Eigen::VectorXd& mu, Eigen::MatrixXd& sigma) {
  const int n = static_cast<int>(feats.size());
  mu = Eigen::VectorXd::Zero(d);
  for (const auto& f : feats)
    for (int i = 0; i < d; ++i) mu(i) += f[static_cast<size_t>(i)];
  mu /= static_cast<double>(n);
  sigma = Eigen::MatrixXd::Zero(d, d);
  for (const auto& f : feats) {
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v(i) = f[static_cast<size_t>(i)] - mu(i);
    sigma += v * v.transpose();
  }
  sigma /= static_cast<double>(n > 1 ? n - 1 : 1);
  sigma += 1e-6 * Eigen::MatrixXd::Identity(d, d);
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Eigen::VectorXd ev = es.eigenvalues();
  for (int i = 0; i < ev.size(); ++i) ev(i) = ev(i) > 0.0 ? std::sqrt(ev(i)) : 0.0;
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double fid(const std::vector<std::vector<double>>& feats_real,
           const std::vector<std::vector<double>>& feats_gen) {
  if (feats_real.empty() || feats_gen.empty())
    throw std::invalid_argument("fid: empty feature set");
  const int d = static_cast<int>(feats_real[0].size());
  Eigen::VectorXd mu_r, mu_g;
  Eigen::MatrixXd s_r, s_g;
  mean_cov(feats_real, d, mu_r, s_r);
  mean_cov(feats_gen, d, mu_g, s_g);
  Eigen::MatrixXd r_half = sqrt_psd(s_r);
  Eigen::MatrixXd cross = sqrt_psd(r_half * s_g * r_half);
  double val = (mu_r - mu_g).squaredNorm() +
               (s_r + s_g - 2.0 * cross).trace();
  return val > 0.0 ? val : 0.0;
}

double fid_images(const std::vector<Tensor>& real, const std::vector<Tensor>& gen,
                  const FeatureExtractor& fx) {
  std::vector<std::vector<double>> fr, fg;
  fr.reserve(real.size());
  fg.reserve(gen.size());
  for (const Tensor& t : real) fr.push_back(fx.features(t));
  for (const Tensor& t : gen) fg.push_back(fx.features(t));
  return fid(fr, fg);
}

double iou(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size())
    throw std::invalid_argument("iou: shape mismatch");
  if (truth.empty()) throw std::invalid_argument("iou: empty maps");
  int max_class = 0;
  for (int c : truth) max_class = std::max(max_class, c);
  for (int c : pred) max_class = std::max(max_class, c);
  std::vector<int64_t> inter(static_cast<size_t>(max_class) + 1, 0);
  std::vector<int64_t> pred_cnt(static_cast<size_t>(max_class) + 1, 0);
  std::vector<int64_t> truth_cnt(static_cast<size_t>(max_class) + 1, 0);
  for (size_t i = 0; i < truth.size(); ++i) {
    if (pred[i] < 0 || truth[i] < 0) throw std::invalid_argument("iou: negative class");
    truth_cnt[static_cast<size_t>(truth[i])] += 1;
    pred_cnt[static_cast<size_t>(pred[i])] += 1;
    if (pred[i] == truth[i]) inter[static_cast<size_t>(truth[i])] += 1;
  }
  double acc = 0.0;
  for (int c = 0; c <= max_class; ++c) {
    int64_t tc = truth_cnt[static_cast<size_t>(c)];
    if (tc == 0) continue;  // only classes present in truth carry weight
    int64_t uni = tc + pred_cnt[static_cast<size_t>(c)] - inter[static_cast<size_t>(c)];
    double class_iou = uni > 0 ? static_cast<double>(inter[static_cast<size_t>(c)]) /
                                     static_cast<double>(uni)
                               : 1.0;
    acc += class_iou * static_cast<double>(tc) / static_cast<double>(truth.size());
  }
  return acc;
}

std::vector<double> psd_sqrt(const std::vector<double>& m, int d) {
  Eigen::MatrixXd e(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) e(i, j) = m[static_cast<size_t>(i) * d + j];
  Eigen::MatrixXd r = sqrt_psd(e);
  std::vector<double> out(static_cast<size_t>(d) * d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) out[static_cast<size_t>(i) * d + j] = r(i, j);
  return out;
}

}  // namespace semlink::metrics
