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

#include "semlink/semantic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "semlink/rng.hpp"

namespace semlink::semantic {

using nn::Graph;
using nn::GradMap;
using nn::Tensor;
using nn::Var;

std::array<std::array<double, 3>, kClasses> class_colors() {
  return {{{0.50, 0.48, 0.45},     // background
           {0.85, 0.20, 0.20},     // circles
           {0.20, 0.75, 0.25},     // rectangles
           {0.20, 0.30, 0.85}}};   // triangles
}

namespace {

bool inside_object(const SceneObject& o, double px, double py) {
  double dx = px - o.x, dy = py - o.y;
  switch (o.shape) {
    case 0:
      return dx * dx + dy * dy <= o.size * o.size;
    case 1:
      return std::fabs(dx) <= o.size && std::fabs(dy) <= o.size * 0.75;
    default: {
      // upward triangle: vertices (x, y-s), (x-s, y+s), (x+s, y+s)
      if (dy < -o.size || dy > o.size) return false;
      double half_width = (dy + o.size) * 0.5;
      return std::fabs(dx) <= half_width;
    }
  }
}

}  // namespace

Scene generate_scene(uint64_t seed) {
  Rng rng(seed);
  Scene s;
  s.image = Tensor::zeros({3, kImageSize, kImageSize});
  auto colors = class_colors();

  // textured background: per-channel base level plus smooth value noise
  const int gn = 8;
  std::vector<double> grid(3 * gn * gn);
  for (double& v : grid) v = rng.normal();
  double base[3];
  for (int c = 0; c < 3; ++c) base[c] = colors[0][static_cast<size_t>(c)] + rng.uniform(-0.06, 0.06);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < kImageSize; ++y)
      for (int x = 0; x < kImageSize; ++x) {
        double gy = static_cast<double>(y) / kImageSize * (gn - 1);
        double gx = static_cast<double>(x) / kImageSize * (gn - 1);
        int y0 = static_cast<int>(gy), x0 = static_cast<int>(gx);
        int y1 = std::min(y0 + 1, gn - 1), x1 = std::min(x0 + 1, gn - 1);
        double fy = gy - y0, fx = gx - x0;
        auto g = [&](int yy, int xx) {
          return grid[(static_cast<size_t>(c) * gn + yy) * gn + xx];
        };
        double noise = (1 - fy) * ((1 - fx) * g(y0, x0) + fx * g(y0, x1)) +
                       fy * ((1 - fx) * g(y1, x0) + fx * g(y1, x1));
        s.image.at3(c, y, x) = std::clamp(base[c] + 0.08 * noise, 0.0, 1.0);
      }

  // objects, back to front
  int count = rng.uniform_int(2, 5);
  std::vector<int> label(kImageSize * kImageSize, 0);
  for (int i = 0; i < count; ++i) {
    SceneObject o;
    o.shape = rng.uniform_int(0, 2);
    o.cls = o.shape + 1;
    o.x = rng.uniform(10.0, kImageSize - 10.0);
    o.y = rng.uniform(10.0, kImageSize - 10.0);
    o.size = rng.uniform(6.0, 14.0);
    double col[3];
    for (int c = 0; c < 3; ++c)
      col[c] = std::clamp(
          colors[static_cast<size_t>(o.cls)][static_cast<size_t>(c)] +
              rng.uniform(-0.12, 0.12),
          0.0, 1.0);
    for (int y = 0; y < kImageSize; ++y)
      for (int x = 0; x < kImageSize; ++x)
        if (inside_object(o, x + 0.5, y + 0.5)) {
          label[static_cast<size_t>(y) * kImageSize + x] = o.cls;
          for (int c = 0; c < 3; ++c) s.image.at3(c, y, x) = col[c];
        }
    s.objects.push_back(o);
  }

  // exact segmentation at 16x16: majority class per 4x4 block, lowest class
  // id on ties
  s.seg.assign(kSegSize * kSegSize, 0);
  const int blk = kImageSize / kSegSize;
  for (int by = 0; by < kSegSize; ++by)
    for (int bx = 0; bx < kSegSize; ++bx) {
      int counts[kClasses] = {0, 0, 0, 0};
      for (int y = 0; y < blk; ++y)
        for (int x = 0; x < blk; ++x)
          counts[label[(static_cast<size_t>(by * blk + y)) * kImageSize +
                       bx * blk + x]] += 1;
      int best = 0;
      for (int c = 1; c < kClasses; ++c)
        if (counts[c] > counts[best]) best = c;
      s.seg[static_cast<size_t>(by) * kSegSize + bx] = best;
    }
  return s;
}

std::vector<int> segment_by_color(const nn::Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != kImageSize ||
      image.dim(2) != kImageSize)
    throw std::invalid_argument("segment_by_color: expected [3][64][64]");
  auto colors = class_colors();
  std::vector<int> seg(kSegSize * kSegSize, 0);
  const int blk = kImageSize / kSegSize;
  for (int by = 0; by < kSegSize; ++by)
    for (int bx = 0; bx < kSegSize; ++bx) {
      double mean[3] = {0, 0, 0};
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < blk; ++y)
          for (int x = 0; x < blk; ++x)
            mean[c] += image.at3(c, by * blk + y, bx * blk + x);
      for (int c = 0; c < 3; ++c) mean[c] /= blk * blk;
      int best = 0;
      double best_d = 1e18;
      for (int cls = 0; cls < kClasses; ++cls) {
        double d = 0.0;
        for (int c = 0; c < 3; ++c) {
          double diff = mean[c] - colors[static_cast<size_t>(cls)][static_cast<size_t>(c)];
          d += diff * diff;
        }
        if (d < best_d) {
          best_d = d;
          best = cls;
        }
      }
      seg[static_cast<size_t>(by) * kSegSize + bx] = best;
    }
  return seg;
}

nn::Tensor downsample_area(const nn::Tensor& img, int ho, int wo) {
  if (img.rank() != 3) throw std::invalid_argument("downsample_area: rank");
  const int C = img.dim(0), H = img.dim(1), W = img.dim(2);
  if (H % ho != 0 || W % wo != 0)
    throw std::invalid_argument("downsample_area: non-integer block");
  const int bh = H / ho, bw = W / wo;
  Tensor out = Tensor::zeros({C, ho, wo});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < ho; ++y)
      for (int x = 0; x < wo; ++x) {
        double s = 0.0;
        for (int i = 0; i < bh; ++i)
          for (int j = 0; j < bw; ++j) s += img.at3(c, y * bh + i, x * bw + j);
        out.at3(c, y, x) = s / (bh * bw);
      }
  return out;
}

std::vector<cd> r2c(const std::vector<double>& v) {
  if (v.size() % 2 != 0) throw std::invalid_argument("r2c: odd length");
  std::vector<cd> out(v.size() / 2);
  for (size_t i = 0; i < out.size(); ++i) out[i] = cd(v[2 * i], v[2 * i + 1]);
  return out;
}

std::vector<double> c2r(const std::vector<cd>& v) {
  std::vector<double> out(v.size() * 2);
  for (size_t i = 0; i < v.size(); ++i) {
    out[2 * i] = v[i].real();
    out[2 * i + 1] = v[i].imag();
  }
  return out;
}

std::vector<double> quantize(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    double s = 1.0 / (1.0 + std::exp(-v[i]));
    int idx = s < 0.25 ? 0 : (s < 0.5 ? 1 : (s < 0.75 ? 2 : 3));
    out[i] = nn::kQamAmp[idx];
  }
  return out;
}

std::vector<cd> constellation() {
  std::vector<cd> pts;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) pts.emplace_back(nn::kQamAmp[a], nn::kQamAmp[b]);
  return pts;
}

double constellation_mean_energy() {
  // amplitudes are {-3,-1,1,3}/sqrt(10); energy in integer arithmetic:
  // sum over 16 points of (a^2 + b^2) = 160, normalization 16 * 10
  int64_t sum = 0;
  const int amps[4] = {-3, -1, 1, 3};
  for (int a : amps)
    for (int b : amps) sum += a * a + b * b;
  return static_cast<double>(sum) / (16.0 * 10.0);
}

nn::Tensor seg_one_hot(const std::vector<int>& seg) {
  if (seg.size() != static_cast<size_t>(kSegSize) * kSegSize)
    throw std::invalid_argument("seg_one_hot: wrong map size");
  Tensor t = Tensor::zeros({kClasses, kSegSize, kSegSize});
  for (int p = 0; p < kSegSize * kSegSize; ++p) {
    int c = seg[static_cast<size_t>(p)];
    if (c < 0 || c >= kClasses) throw std::invalid_argument("seg_one_hot: class");
    t.data[static_cast<size_t>(c) * kSegSize * kSegSize + p] = 1.0;
  }
  return t;
}

// ---- Codec ----

Codec::Codec(uint64_t init_seed) {
  Rng rng(init_seed);
  // segmentation pair: 16x16 map -> 512 symbols -> logits
  ps_.add("se_en.c1.w", nn::init_he_conv(32, kClasses, 5, rng));
  ps_.add("se_en.c1.b", Tensor::zeros({32}));
  ps_.add("se_en.c2.w", nn::init_he_conv(64, 32, 5, rng));
  ps_.add("se_en.c2.b", Tensor::zeros({64}));
  ps_.add("se_en.c3.w", nn::init_he_conv(64, 64, 5, rng));
  ps_.add("se_en.c3.b", Tensor::zeros({64}));
  ps_.add("se_de.c1.w", nn::init_he_conv(64, 64, 5, rng));
  ps_.add("se_de.c1.b", Tensor::zeros({64}));
  ps_.add("se_de.c2.w", nn::init_he_conv(32, 64, 5, rng));
  ps_.add("se_de.c2.b", Tensor::zeros({32}));
  ps_.add("se_de.c3.w", nn::init_he_conv(kClasses, 32, 5, rng));
  ps_.add("se_de.c3.b", Tensor::zeros({kClasses}));
  // compressed pair: [3][8][8] -> 512 symbols -> [3][8][8]
  ps_.add("co_en.c1.w", nn::init_he_conv(16, 3, 5, rng));
  ps_.add("co_en.c1.b", Tensor::zeros({16}));
  ps_.add("co_en.c2.w", nn::init_he_conv(16, 16, 5, rng));
  ps_.add("co_en.c2.b", Tensor::zeros({16}));
  ps_.add("co_en.c3.w", nn::init_he_conv(16, 16, 5, rng));
  ps_.add("co_en.c3.b", Tensor::zeros({16}));
  ps_.add("co_de.c1.w", nn::init_he_conv(16, 16, 5, rng));
  ps_.add("co_de.c1.b", Tensor::zeros({16}));
  ps_.add("co_de.c2.w", nn::init_he_conv(16, 16, 5, rng));
  ps_.add("co_de.c2.b", Tensor::zeros({16}));
  ps_.add("co_de.c3.w", nn::init_he_conv(3, 16, 5, rng));
  ps_.add("co_de.c3.b", Tensor::zeros({3}));
}

Codec::Codec(nn::ParamStore weights) : ps_(std::move(weights)) {}

namespace {

Var se_encode_graph(Graph& g, nn::Binding& p, const Tensor& onehot) {
  Var x = g.leaf(onehot);
  Var h1 = nn::relu(nn::conv2d(x, p("se_en.c1.w"), p("se_en.c1.b"), 2, 2));
  Var h2 = nn::relu(nn::conv2d(h1, p("se_en.c2.w"), p("se_en.c2.b"), 2, 2));
  Var h3 = nn::conv2d(h2, p("se_en.c3.w"), p("se_en.c3.b"), 1, 2);
  return nn::quantize_st(nn::reshape(h3, {2 * kFeatureLen}));
}

Var se_decode_graph(Graph& g, nn::Binding& p, Var feat) {
  Var x = nn::reshape(feat, {64, 4, 4});
  Var h1 = nn::relu(nn::conv2d(x, p("se_de.c1.w"), p("se_de.c1.b"), 1, 2));
  h1 = nn::resize_nearest(h1, 8, 8);
  Var h2 = nn::relu(nn::conv2d(h1, p("se_de.c2.w"), p("se_de.c2.b"), 1, 2));
  h2 = nn::resize_nearest(h2, kSegSize, kSegSize);
  return nn::conv2d(h2, p("se_de.c3.w"), p("se_de.c3.b"), 1, 2);
}

Var co_encode_graph(Graph& g, nn::Binding& p, const Tensor& thumb) {
  Var x = g.leaf(thumb);
  Var h1 = nn::relu(nn::conv2d(x, p("co_en.c1.w"), p("co_en.c1.b"), 1, 2));
  Var h2 = nn::relu(nn::conv2d(h1, p("co_en.c2.w"), p("co_en.c2.b"), 1, 2));
  Var h3 = nn::conv2d(h2, p("co_en.c3.w"), p("co_en.c3.b"), 1, 2);
  return nn::quantize_st(nn::reshape(h3, {2 * kFeatureLen}));
}

Var co_decode_graph(Graph& g, nn::Binding& p, Var feat) {
  Var x = nn::reshape(feat, {16, kThumbSize, kThumbSize});
  Var h1 = nn::relu(nn::conv2d(x, p("co_de.c1.w"), p("co_de.c1.b"), 1, 2));
  Var h2 = nn::relu(nn::conv2d(h1, p("co_de.c2.w"), p("co_de.c2.b"), 1, 2));
  return nn::conv2d(h2, p("co_de.c3.w"), p("co_de.c3.b"), 1, 2);
}

}  // namespace

std::vector<cd> Codec::encode_se(const std::vector<int>& seg) const {
  Graph g;
  nn::ParamStore& ps = const_cast<nn::ParamStore&>(ps_);
  nn::Binding p(g, ps, false);
  Var q = se_encode_graph(g, p, seg_one_hot(seg));
  return r2c(q.val().data);
}

std::vector<cd> Codec::encode_co(const Tensor& thumb) const {
  if (thumb.rank() != 3 || thumb.dim(0) != 3 || thumb.dim(1) != kThumbSize)
    throw std::invalid_argument("encode_co: expected [3][8][8]");
  Graph g;
  nn::ParamStore& ps = const_cast<nn::ParamStore&>(ps_);
  nn::Binding p(g, ps, false);
  Var q = co_encode_graph(g, p, thumb);
  return r2c(q.val().data);
}

nn::Tensor Codec::decode_se_logits(const std::vector<cd>& f) const {
  if (f.size() != kFeatureLen)
    throw std::invalid_argument("decode_se: feature length mismatch");
  Graph g;
  nn::ParamStore& ps = const_cast<nn::ParamStore&>(ps_);
  nn::Binding p(g, ps, false);
  Var feat = g.leaf(Tensor({2 * kFeatureLen}, c2r(f)));
  return se_decode_graph(g, p, feat).val();
}

std::vector<int> Codec::decode_se(const std::vector<cd>& f) const {
  Tensor logits = decode_se_logits(f);
  std::vector<int> seg(kSegSize * kSegSize, 0);
  const int HW = kSegSize * kSegSize;
  for (int p = 0; p < HW; ++p) {
    int best = 0;
    for (int c = 1; c < kClasses; ++c)
      if (logits.data[static_cast<size_t>(c) * HW + p] >
          logits.data[static_cast<size_t>(best) * HW + p])
        best = c;
    seg[static_cast<size_t>(p)] = best;
  }
  return seg;
}

nn::Tensor Codec::decode_co(const std::vector<cd>& f) const {
  if (f.size() != kFeatureLen)
    throw std::invalid_argument("decode_co: feature length mismatch");
  Graph g;
  nn::ParamStore& ps = const_cast<nn::ParamStore&>(ps_);
  nn::Binding p(g, ps, false);
  Var feat = g.leaf(Tensor({2 * kFeatureLen}, c2r(f)));
  Tensor img = co_decode_graph(g, p, feat).val();
  for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
  return img;
}

Codec::TrainStats Codec::train(const std::vector<Scene>& scenes, int epochs,
                               double lr, uint64_t seed, int threads) {
  if (scenes.size() < 1) throw std::invalid_argument("Codec::train: empty dataset");
  const int batch = 16;
  TrainStats last;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    // deterministic shuffle per epoch
    std::vector<size_t> order(scenes.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(seed, "shuffle", static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<int>(i) - 1))]);
    for (size_t start = 0; start + batch <= order.size(); start += batch) {
      GradMap grads;
      nn::batch_gradients(
          batch, threads,
          [&](int i, Graph& g, GradMap& out) {
            const Scene& s = scenes[order[start + static_cast<size_t>(i)]];
            nn::Binding p(g, ps_, true);
            Var q_se = se_encode_graph(g, p, seg_one_hot(s.seg));
            Var logits = se_decode_graph(g, p, q_se);
            auto labels = std::make_shared<std::vector<int>>(s.seg);
            Var ce = nn::softmax_ce(logits, labels);
            Tensor thumb = downsample_area(s.image, kThumbSize, kThumbSize);
            Var q_co = co_encode_graph(g, p, thumb);
            Var rec = co_decode_graph(g, p, q_co);
            Var ms = nn::mse(rec, g.leaf(thumb));
            Var loss = nn::add(ce, ms);
            g.backward(loss);
            p.collect(out);
            return loss.val()[0];
          },
          grads);
      if (!ps_.adam_step(grads, {.lr = lr}))
        throw std::runtime_error("Codec::train: non-finite gradients");
    }
    // epoch-end evaluation on a fixed slice
    double ce = 0.0, ms = 0.0;
    int neval = std::min<int>(64, static_cast<int>(scenes.size()));
    for (int i = 0; i < neval; ++i) {
      const Scene& s = scenes[static_cast<size_t>(i)];
      Graph g;
      nn::Binding p(g, ps_, false);
      Var q_se = se_encode_graph(g, p, seg_one_hot(s.seg));
      Var logits = se_decode_graph(g, p, q_se);
      auto labels = std::make_shared<std::vector<int>>(s.seg);
      ce += nn::softmax_ce(logits, labels).val()[0];
      Tensor thumb = downsample_area(s.image, kThumbSize, kThumbSize);
      Var q_co = co_encode_graph(g, p, thumb);
      ms += nn::mse(co_decode_graph(g, p, q_co), g.leaf(thumb)).val()[0];
    }
    last.ce = ce / neval;
    last.mse = ms / neval;
  }
  return last;
}

}  // namespace semlink::semantic
