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

#include "semlink/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace semlink::nn {

const Tensor& Var::val() const { return g->value(*this); }

Var Graph::leaf(Tensor t, bool needs_grad) {
  Node n;
  n.value = std::move(t);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::make(Tensor value, bool needs_grad,
                std::function<void(Graph&, int)> backward) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Graph::grad(Var v) {
  Node& n = node(v.id);
  if (!n.grad_alloc) {
    zero_scratch_ = Tensor::zeros(n.value.shape);
    return zero_scratch_;
  }
  return n.grad;
}

void Graph::accumulate(int id, const Tensor& g) {
  Node& n = node(id);
  if (!n.needs_grad) return;
  if (!n.grad_alloc) {
    n.grad = Tensor::zeros(n.value.shape);
    n.grad_alloc = true;
  }
  const size_t m = n.grad.data.size();
  for (size_t i = 0; i < m; ++i) n.grad.data[i] += g.data[i];
}

double* Graph::grad_buffer(int id) {
  Node& n = node(id);
  if (!n.needs_grad) return nullptr;
  if (!n.grad_alloc) {
    n.grad = Tensor::zeros(n.value.shape);
    n.grad_alloc = true;
  }
  return n.grad.data.data();
}

void Graph::backward(Var loss) {
  Node& ln = node(loss.id);
  if (ln.value.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  if (!ln.needs_grad) return;  // nothing trainable upstream
  ln.grad = Tensor::full(ln.value.shape, 1.0);
  ln.grad_alloc = true;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = node(id);
    if (n.grad_alloc && n.backward && n.needs_grad) n.backward(*this, id);
  }
}

namespace {

inline void check_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.shape_str() + " vs " + b.shape_str());
}

inline bool ng(Var v) { return v.g->node(v.id).needs_grad; }

}  // namespace

Var add(Var a, Var b) {
  check_same(a.val(), b.val(), "add");
  Graph& g = *a.g;
  Tensor out = a.val();
  const Tensor& bv = b.val();
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
  int ai = a.id, bi = b.id;
  return g.make(std::move(out), ng(a) || ng(b), [ai, bi](Graph& gr, int self) {
    const Tensor& go = gr.node(self).grad;
    gr.accumulate(ai, go);
    gr.accumulate(bi, go);
  });
}

Var sub(Var a, Var b) {
  check_same(a.val(), b.val(), "sub");
  Graph& g = *a.g;
  Tensor out = a.val();
  const Tensor& bv = b.val();
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv.data[i];
  int ai = a.id, bi = b.id;
  return g.make(std::move(out), ng(a) || ng(b), [ai, bi](Graph& gr, int self) {
    const Tensor& go = gr.node(self).grad;
    gr.accumulate(ai, go);
    if (double* gb = gr.grad_buffer(bi)) {
      for (size_t i = 0; i < go.data.size(); ++i) gb[i] -= go.data[i];
    }
  });
}

Var mul(Var a, Var b) {
  check_same(a.val(), b.val(), "mul");
  Graph& g = *a.g;
  Tensor out = a.val();
  const Tensor& bv = b.val();
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
  int ai = a.id, bi = b.id;
  return g.make(std::move(out), ng(a) || ng(b), [ai, bi](Graph& gr, int self) {
    const Tensor& go = gr.node(self).grad;
    const Tensor& av = gr.node(ai).value;
    const Tensor& bv2 = gr.node(bi).value;
    if (double* ga = gr.grad_buffer(ai))
      for (size_t i = 0; i < go.data.size(); ++i)
        ga[i] += go.data[i] * bv2.data[i];
    if (double* gb = gr.grad_buffer(bi))
      for (size_t i = 0; i < go.data.size(); ++i)
        gb[i] += go.data[i] * av.data[i];
  });
}

Var scale(Var a, double c) {
  Graph& g = *a.g;
  Tensor out = a.val();
  for (double& v : out.data) v *= c;
  int ai = a.id;
  return g.make(std::move(out), ng(a), [ai, c](Graph& gr, int self) {
    const Tensor& go = gr.node(self).grad;
    if (double* ga = gr.grad_buffer(ai))
      for (size_t i = 0; i < go.data.size(); ++i) ga[i] += c * go.data[i];
  });
}

Var add_scalar(Var a, double c) {
  Graph& g = *a.g;
  Tensor out = a.val();
  for (double& v : out.data) v += c;
  int ai = a.id;
  return g.make(std::move(out), ng(a), [ai](Graph& gr, int self) {
    gr.accumulate(ai, gr.node(self).grad);
  });
}

Var relu(Var a) {
  Graph& g = *a.g;
  Tensor out = a.val();
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  int ai = a.id;
  return g.make(std::move(out), ng(a), [ai](Graph& gr, int self) {
    const Tensor& go = gr.node(self).grad;
    const Tensor& av = gr.node(ai).value;
    if (double* ga = gr.grad_buffer(ai))
      for (size_t i = 0; i < go.data.size(); ++i)
        if (av.data[i] > 0.0) ga[i] += go.data[i];
  });
}

Var sigmoid(Var a) {
  Graph& g = *a.g;
  Tensor out = a.val();
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  int ai = a.id;
  Var r = g.make(std::move(out), ng(a), {});
  int ri = r.id;
  g.node(ri).backward = [ai, ri](Graph& gr, int self) {
    const Tensor& go = gr.node(self).grad;
    const Tensor& y = gr.node(ri).value;
    if (double* ga = gr.grad_buffer(ai))
      for (size_t i = 0; i < go.data.size(); ++i)
        ga[i] += go.data[i] * y.data[i] * (1.0 - y.data[i]);
  };
  return r;
}

Var reshape(Var a, std::vector<int> shape) {
  if (Tensor::numel_of(shape) != a.val().numel())
    throw std::invalid_argument("reshape: numel mismatch");
  Graph& g = *a.g;
  Tensor out(std::move(shape), a.val().data);
  int ai = a.id;
  return g.make(std::move(out), ng(a), [ai](Graph& gr, int self) {
    const Tensor& go = gr.node(self).grad;
    if (double* ga = gr.grad_buffer(ai))
      for (size_t i = 0; i < go.data.size(); ++i) ga[i] += go.data[i];
  });
}

Var concat0(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat0: empty");
  Graph& g = *parts[0].g;
  int total = 0;
  for (const Var& p : parts) total += static_cast<int>(p.val().numel());
  Tensor out = Tensor::zeros({total});
  int off = 0;
  bool needs = false;
  std::vector<std::pair<int, int>> spans;  // (id, offset)
  for (const Var& p : parts) {
    const Tensor& pv = p.val();
    std::memcpy(out.data.data() + off, pv.data.data(),
                sizeof(double) * pv.data.size());
    spans.emplace_back(p.id, off);
    off += static_cast<int>(pv.numel());
    needs = needs || ng(p);
  }
  return g.make(std::move(out), needs, [spans](Graph& gr, int self) {
    const Tensor& go = gr.node(self).grad;
    for (auto [id, o] : spans) {
      if (double* gp = gr.grad_buffer(id)) {
        int64_t n = gr.node(id).value.numel();
        for (int64_t i = 0; i < n; ++i) gp[i] += go.data[static_cast<size_t>(o + i)];
      }
    }
  });
}

Var slice0(Var a, int start, int len) {
  const Tensor& av = a.val();
  if (start < 0 || start + len > av.numel())
    throw std::invalid_argument("slice0: out of range");
  Graph& g = *a.g;
  Tensor out = Tensor::zeros({len});
  std::memcpy(out.data.data(), av.data.data() + start, sizeof(double) * len);
  int ai = a.id;
  return g.make(std::move(out), ng(a), [ai, start, len](Graph& gr, int self) {
    const Tensor& go = gr.node(self).grad;
    if (double* ga = gr.grad_buffer(ai))
      for (int i = 0; i < len; ++i) ga[start + i] += go.data[static_cast<size_t>(i)];
  });
}

Var pad_tail(Var a, int new_len) {
  const Tensor& av = a.val();
  int n = static_cast<int>(av.numel());
  if (new_len < n) throw std::invalid_argument("pad_tail: shrinking");
  Graph& g = *a.g;
  Tensor out = Tensor::zeros({new_len});
  std::memcpy(out.data.data(), av.data.data(), sizeof(double) * n);
  int ai = a.id;
  return g.make(std::move(out), ng(a), [ai, n](Graph& gr, int self) {
    const Tensor& go = gr.node(self).grad;
    if (double* ga = gr.grad_buffer(ai))
      for (int i = 0; i < n; ++i) ga[i] += go.data[static_cast<size_t>(i)];
  });
}

Var sum(Var a) {
  Graph& g = *a.g;
  double s = 0.0;
  for (double v : a.val().data) s += v;
  int ai = a.id;
  return g.make(Tensor::scalar(s), ng(a), [ai](Graph& gr, int self) {
    double go = gr.node(self).grad.data[0];
    if (double* ga = gr.grad_buffer(ai)) {
      int64_t n = gr.node(ai).value.numel();
      for (int64_t i = 0; i < n; ++i) ga[i] += go;
    }
  });
}

Var mean_all(Var a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.val().numel()));
}

Var dense(Var x, Var w, Var b) {
  const Tensor& xv = x.val();
  const Tensor& wv = w.val();
  if (wv.rank() != 2) throw std::invalid_argument("dense: weight must be rank 2");
  const int m = wv.dim(0), n = wv.dim(1);
  const bool batched = xv.rank() == 2;
  const int B = batched ? xv.dim(0) : 1;
  const int xn = batched ? xv.dim(1) : static_cast<int>(xv.numel());
  if (xn != n)
    throw std::invalid_argument("dense: inner extents disagree, weight " +
                                wv.shape_str() + " input " + xv.shape_str());
  if (b.valid() && b.val().numel() != m)
    throw std::invalid_argument("dense: bias length mismatch");

  Tensor out = batched ? Tensor::zeros({B, m}) : Tensor::zeros({m});
  // out[r,:] = W * x[r,:]
  gemm_nt(B, m, n, xv.data.data(), wv.data.data(), out.data.data(), false);
  if (b.valid()) {
    const Tensor& bv = b.val();
    for (int r = 0; r < B; ++r)
      for (int i = 0; i < m; ++i) out.data[static_cast<size_t>(r) * m + i] += bv.data[i];
  }
  Graph& g = *x.g;
  int xi = x.id, wi = w.id, bi = b.valid() ? b.id : -1;
  bool needs = ng(x) || ng(w) || (b.valid() && ng(b));
  return g.make(std::move(out), needs, [xi, wi, bi, B, m, n](Graph& gr, int self) {
    const Tensor& go = gr.node(self).grad;
    const Tensor& xv2 = gr.node(xi).value;
    const Tensor& wv2 = gr.node(wi).value;
    if (double* gx = gr.grad_buffer(xi))
      // gx[r,:] += W^T go[r,:]
      gemm_nn(B, n, m, go.data.data(), wv2.data.data(), gx, true);
    if (double* gw = gr.grad_buffer(wi))
      // gw += go^T x  (sum over batch rows)
      gemm_tn(m, n, B, go.data.data(), xv2.data.data(), gw, true);
    if (bi >= 0) {
      if (double* gb = gr.grad_buffer(bi))
        for (int r = 0; r < B; ++r)
          for (int i = 0; i < m; ++i) gb[i] += go.data[static_cast<size_t>(r) * m + i];
    }
  });
}

namespace {

void im2col(const double* in, int C, int H, int W, int kh, int kw, int stride,
            int pad, int Ho, int Wo, double* col) {
  // col is [C*kh*kw][Ho*Wo]
  const int P = Ho * Wo;
  for (int c = 0; c < C; ++c) {
    for (int r = 0; r < kh; ++r) {
      for (int s = 0; s < kw; ++s) {
        double* dst = col + (static_cast<size_t>(c) * kh * kw + r * kw + s) * P;
        for (int y = 0; y < Ho; ++y) {
          int iy = y * stride + r - pad;
          if (iy < 0 || iy >= H) {
            std::memset(dst + static_cast<size_t>(y) * Wo, 0, sizeof(double) * Wo);
            continue;
          }
          const double* src = in + (static_cast<size_t>(c) * H + iy) * W;
          for (int xo = 0; xo < Wo; ++xo) {
            int ix = xo * stride + s - pad;
            dst[static_cast<size_t>(y) * Wo + xo] =
                (ix >= 0 && ix < W) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_acc(const double* col, int C, int H, int W, int kh, int kw,
                int stride, int pad, int Ho, int Wo, double* out) {
  const int P = Ho * Wo;
  for (int c = 0; c < C; ++c) {
    for (int r = 0; r < kh; ++r) {
      for (int s = 0; s < kw; ++s) {
        const double* src = col + (static_cast<size_t>(c) * kh * kw + r * kw + s) * P;
        for (int y = 0; y < Ho; ++y) {
          int iy = y * stride + r - pad;
          if (iy < 0 || iy >= H) continue;
          double* dst = out + (static_cast<size_t>(c) * H + iy) * W;
          for (int xo = 0; xo < Wo; ++xo) {
            int ix = xo * stride + s - pad;
            if (ix >= 0 && ix < W) dst[ix] += src[static_cast<size_t>(y) * Wo + xo];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Var x, Var w, Var b, int stride, int pad) {
  const Tensor& xv = x.val();
  const Tensor& wv = w.val();
  if (wv.rank() != 4) throw std::invalid_argument("conv2d: weight must be rank 4");
  const bool batched = xv.rank() == 4;
  if (!batched && xv.rank() != 3)
    throw std::invalid_argument("conv2d: input must be [C,H,W] or [N,C,H,W]");
  const int N = batched ? xv.dim(0) : 1;
  const int C = batched ? xv.dim(1) : xv.dim(0);
  const int H = batched ? xv.dim(2) : xv.dim(1);
  const int W = batched ? xv.dim(3) : xv.dim(2);
  const int F = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  if (kh != kw) throw std::invalid_argument("conv2d: kernel must be square");
  if (wv.dim(1) != C)
    throw std::invalid_argument("conv2d: channel mismatch, input " +
                                xv.shape_str() + " weight " + wv.shape_str());
  if (b.valid() && b.val().numel() != F)
    throw std::invalid_argument("conv2d: bias length mismatch");
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: empty output");
  const int CK = C * kh * kw;
  const int P = Ho * Wo;

  auto cols = std::make_shared<std::vector<double>>(
      static_cast<size_t>(N) * CK * P);
  Tensor out = batched ? Tensor::zeros({N, F, Ho, Wo})
                       : Tensor::zeros({F, Ho, Wo});
  for (int nth = 0; nth < N; ++nth) {
    double* col = cols->data() + static_cast<size_t>(nth) * CK * P;
    im2col(xv.data.data() + static_cast<size_t>(nth) * C * H * W, C, H, W, kh,
           kw, stride, pad, Ho, Wo, col);
    double* o = out.data.data() + static_cast<size_t>(nth) * F * P;
    gemm_nn(F, P, CK, wv.data.data(), col, o, false);
    if (b.valid()) {
      const Tensor& bv = b.val();
      for (int f = 0; f < F; ++f) {
        double bvv = bv.data[f];
        for (int p = 0; p < P; ++p) o[static_cast<size_t>(f) * P + p] += bvv;
      }
    }
  }

  Graph& g = *x.g;
  int xi = x.id, wi = w.id, bi = b.valid() ? b.id : -1;
  bool needs = ng(x) || ng(w) || (b.valid() && ng(b));
  return g.make(
      std::move(out), needs,
      [xi, wi, bi, cols, N, C, H, W, F, kh, kw, stride, pad, Ho, Wo, CK,
       P](Graph& gr, int self) {
        const Tensor& go = gr.node(self).grad;
        const Tensor& wv2 = gr.node(wi).value;
        double* gw = gr.grad_buffer(wi);
        double* gx = gr.grad_buffer(xi);
        double* gb = bi >= 0 ? gr.grad_buffer(bi) : nullptr;
        std::vector<double> dcol;
        if (gx) dcol.resize(static_cast<size_t>(CK) * P);
        for (int nth = 0; nth < N; ++nth) {
          const double* gout = go.data.data() + static_cast<size_t>(nth) * F * P;
          const double* col = cols->data() + static_cast<size_t>(nth) * CK * P;
          if (gw) gemm_nt(F, CK, P, gout, col, gw, true);
          if (gx) {
            gemm_tn(CK, P, F, wv2.data.data(), gout, dcol.data(), false);
            col2im_acc(dcol.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                       gx + static_cast<size_t>(nth) * C * H * W);
          }
          if (gb)
            for (int f = 0; f < F; ++f) {
              double s = 0.0;
              for (int p = 0; p < P; ++p) s += gout[static_cast<size_t>(f) * P + p];
              gb[f] += s;
            }
        }
      });
}

Var add_channel_bias(Var x, Var b) {
  const Tensor& xv = x.val();
  const Tensor& bv = b.val();
  if (xv.rank() != 3 || bv.numel() != xv.dim(0))
    throw std::invalid_argument("add_channel_bias: shape mismatch");
  Graph& g = *x.g;
  Tensor out = xv;
  const int C = xv.dim(0), HW = xv.dim(1) * xv.dim(2);
  for (int c = 0; c < C; ++c) {
    double bvv = bv.data[c];
    for (int p = 0; p < HW; ++p) out.data[static_cast<size_t>(c) * HW + p] += bvv;
  }
  int xi = x.id, bi = b.id;
  return g.make(std::move(out), ng(x) || ng(b), [xi, bi, C, HW](Graph& gr, int self) {
    const Tensor& go = gr.node(self).grad;
    gr.accumulate(xi, go);
    if (double* gb = gr.grad_buffer(bi))
      for (int c = 0; c < C; ++c) {
        double s = 0.0;
        for (int p = 0; p < HW; ++p) s += go.data[static_cast<size_t>(c) * HW + p];
        gb[c] += s;
      }
  });
}

Var resize_nearest(Var x, int ho, int wo) {
  const Tensor& xv = x.val();
  if (xv.rank() != 3) throw std::invalid_argument("resize_nearest: need [C,H,W]");
  const int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  Graph& g = *x.g;
  Tensor out = Tensor::zeros({C, ho, wo});
  auto idx = std::make_shared<std::vector<int>>(static_cast<size_t>(ho) * wo);
  for (int y = 0; y < ho; ++y) {
    int sy = static_cast<int>((static_cast<int64_t>(y) * H) / ho);
    for (int xo = 0; xo < wo; ++xo) {
      int sx = static_cast<int>((static_cast<int64_t>(xo) * W) / wo);
      (*idx)[static_cast<size_t>(y) * wo + xo] = sy * W + sx;
    }
  }
  for (int c = 0; c < C; ++c) {
    const double* src = xv.data.data() + static_cast<size_t>(c) * H * W;
    double* dst = out.data.data() + static_cast<size_t>(c) * ho * wo;
    for (int p = 0; p < ho * wo; ++p) dst[p] = src[(*idx)[static_cast<size_t>(p)]];
  }
  int xi = x.id;
  return g.make(std::move(out), ng(x), [xi, idx, C, H, W, ho, wo](Graph& gr, int self) {
    const Tensor& go = gr.node(self).grad;
    if (double* gx = gr.grad_buffer(xi))
      for (int c = 0; c < C; ++c) {
        const double* gsrc = go.data.data() + static_cast<size_t>(c) * ho * wo;
        double* gdst = gx + static_cast<size_t>(c) * H * W;
        for (int p = 0; p < ho * wo; ++p) gdst[(*idx)[static_cast<size_t>(p)]] += gsrc[p];
      }
  });
}

Var mse(Var a, Var b) {
  check_same(a.val(), b.val(), "mse");
  Graph& g = *a.g;
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  const int64_t n = av.numel();
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double d = av.data[static_cast<size_t>(i)] - bv.data[static_cast<size_t>(i)];
    s += d * d;
  }
  int ai = a.id, bi = b.id;
  return g.make(Tensor::scalar(s / static_cast<double>(n)), ng(a) || ng(b),
                [ai, bi, n](Graph& gr, int self) {
                  double go = gr.node(self).grad.data[0];
                  const Tensor& av2 = gr.node(ai).value;
                  const Tensor& bv2 = gr.node(bi).value;
                  double c = 2.0 * go / static_cast<double>(n);
                  if (double* ga = gr.grad_buffer(ai))
                    for (int64_t i = 0; i < n; ++i)
                      ga[i] += c * (av2.data[static_cast<size_t>(i)] -
                                    bv2.data[static_cast<size_t>(i)]);
                  if (double* gb = gr.grad_buffer(bi))
                    for (int64_t i = 0; i < n; ++i)
                      gb[i] -= c * (av2.data[static_cast<size_t>(i)] -
                                    bv2.data[static_cast<size_t>(i)]);
                });
}

Var softmax_ce(Var logits, std::shared_ptr<const std::vector<int>> labels) {
  const Tensor& lv = logits.val();
  if (lv.rank() != 3) throw std::invalid_argument("softmax_ce: need [C,H,W]");
  const int C = lv.dim(0);
  const int HW = lv.dim(1) * lv.dim(2);
  if (static_cast<int>(labels->size()) != HW)
    throw std::invalid_argument("softmax_ce: label count mismatch");
  for (int lab : *labels)
    if (lab < 0 || lab >= C)
      throw std::invalid_argument("softmax_ce: label out of range [0," +
                                  std::to_string(C) + ")");
  // probs saved for backward
  auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(C) * HW);
  double loss = 0.0;
  for (int p = 0; p < HW; ++p) {
    double mx = -1e300;
    for (int c = 0; c < C; ++c)
      mx = std::max(mx, lv.data[static_cast<size_t>(c) * HW + p]);
    double z = 0.0;
    for (int c = 0; c < C; ++c)
      z += std::exp(lv.data[static_cast<size_t>(c) * HW + p] - mx);
    double logz = std::log(z) + mx;
    for (int c = 0; c < C; ++c)
      (*probs)[static_cast<size_t>(c) * HW + p] =
          std::exp(lv.data[static_cast<size_t>(c) * HW + p] - logz);
    loss += logz - lv.data[static_cast<size_t>((*labels)[static_cast<size_t>(p)]) * HW + p];
  }
  Graph& g = *logits.g;
  int li = logits.id;
  return g.make(Tensor::scalar(loss / HW), ng(logits),
                [li, labels, probs, C, HW](Graph& gr, int self) {
                  double go = gr.node(self).grad.data[0] / HW;
                  if (double* gl = gr.grad_buffer(li)) {
                    for (int p = 0; p < HW; ++p) {
                      for (int c = 0; c < C; ++c)
                        gl[static_cast<size_t>(c) * HW + p] +=
                            go * (*probs)[static_cast<size_t>(c) * HW + p];
                      gl[static_cast<size_t>((*labels)[static_cast<size_t>(p)]) * HW + p] -= go;
                    }
                  }
                });
}

namespace {
const double kInvSqrt10 = 0.31622776601683793319988935444327;
}
const double kQamAmp[4] = {-3.0 * kInvSqrt10, -kInvSqrt10, kInvSqrt10,
                           3.0 * kInvSqrt10};

Var quantize_st(Var x) {
  Graph& g = *x.g;
  Tensor out = x.val();
  for (double& v : out.data) {
    double s = 1.0 / (1.0 + std::exp(-v));
    int idx = s < 0.25 ? 0 : (s < 0.5 ? 1 : (s < 0.75 ? 2 : 3));
    v = kQamAmp[idx];
  }
  int xi = x.id;
  // straight-through: gradient passes unchanged
  return g.make(std::move(out), ng(x), [xi](Graph& gr, int self) {
    gr.accumulate(xi, gr.node(self).grad);
  });
}

Var power_normalize(Var x) {
  const Tensor& xv = x.val();
  const int64_t n = xv.numel();
  if (n % 2 != 0) throw std::invalid_argument("power_normalize: odd length");
  const double n_complex = static_cast<double>(n / 2);
  double ss = 0.0;
  for (double v : xv.data) ss += v * v;
  double sigma = std::sqrt(ss / n_complex);
  if (sigma < 1e-30) sigma = 1e-30;
  Graph& g = *x.g;
  Tensor out = xv;
  for (double& v : out.data) v /= sigma;
  int xi = x.id;
  return g.make(std::move(out), ng(x), [xi, sigma, n_complex, n](Graph& gr, int self) {
    const Tensor& go = gr.node(self).grad;
    const Tensor& xv2 = gr.node(xi).value;
    if (double* gx = gr.grad_buffer(xi)) {
      // y_i = x_i / sigma, sigma = sqrt(sum x^2 / n_complex)
      // dL/dx_j = g_j/sigma - x_j * <g, x> / (n_complex * sigma^3)
      double dot = 0.0;
      for (int64_t i = 0; i < n; ++i)
        dot += go.data[static_cast<size_t>(i)] * xv2.data[static_cast<size_t>(i)];
      double c = dot / (n_complex * sigma * sigma * sigma);
      for (int64_t i = 0; i < n; ++i)
        gx[i] += go.data[static_cast<size_t>(i)] / sigma -
                 xv2.data[static_cast<size_t>(i)] * c;
    }
  });
}

Var complex_block_apply(
    Var x, std::shared_ptr<const std::vector<std::complex<double>>> mats,
    int n_blocks, int in_dim, int out_dim) {
  const Tensor& xv = x.val();
  if (xv.numel() != static_cast<int64_t>(n_blocks) * in_dim * 2)
    throw std::invalid_argument("complex_block_apply: input length mismatch");
  if (static_cast<int64_t>(mats->size()) !=
      static_cast<int64_t>(n_blocks) * out_dim * in_dim)
    throw std::invalid_argument("complex_block_apply: matrix count mismatch");
  Graph& g = *x.g;
  Tensor out = Tensor::zeros({n_blocks * out_dim * 2});
  for (int b = 0; b < n_blocks; ++b) {
    const std::complex<double>* M = mats->data() + static_cast<size_t>(b) * out_dim * in_dim;
    const double* xb = xv.data.data() + static_cast<size_t>(b) * in_dim * 2;
    double* yb = out.data.data() + static_cast<size_t>(b) * out_dim * 2;
    for (int o = 0; o < out_dim; ++o) {
      std::complex<double> acc(0.0, 0.0);
      for (int i = 0; i < in_dim; ++i)
        acc += M[static_cast<size_t>(o) * in_dim + i] *
               std::complex<double>(xb[2 * i], xb[2 * i + 1]);
      yb[2 * o] = acc.real();
      yb[2 * o + 1] = acc.imag();
    }
  }
  int xi = x.id;
  return g.make(std::move(out), ng(x),
                [xi, mats, n_blocks, in_dim, out_dim](Graph& gr, int self) {
                  const Tensor& go = gr.node(self).grad;
                  if (double* gx = gr.grad_buffer(xi)) {
                    for (int b = 0; b < n_blocks; ++b) {
                      const std::complex<double>* M =
                          mats->data() + static_cast<size_t>(b) * out_dim * in_dim;
                      const double* gy = go.data.data() + static_cast<size_t>(b) * out_dim * 2;
                      double* gxb = gx + static_cast<size_t>(b) * in_dim * 2;
                      for (int i = 0; i < in_dim; ++i) {
                        std::complex<double> acc(0.0, 0.0);
                        for (int o = 0; o < out_dim; ++o)
                          acc += std::conj(M[static_cast<size_t>(o) * in_dim + i]) *
                                 std::complex<double>(gy[2 * o], gy[2 * o + 1]);
                        gxb[2 * i] += acc.real();
                        gxb[2 * i + 1] += acc.imag();
                      }
                    }
                  }
                });
}

Tensor finite_difference(const std::function<double(const Tensor&)>& f,
                         const Tensor& x, double h) {
  Tensor g = Tensor::zeros(x.shape);
  Tensor xp = x;
  for (size_t i = 0; i < x.data.size(); ++i) {
    double orig = xp.data[i];
    xp.data[i] = orig + h;
    double fp = f(xp);
    xp.data[i] = orig - h;
    double fm = f(xp);
    xp.data[i] = orig;
    g.data[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace semlink::nn
