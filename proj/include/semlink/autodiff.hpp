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

#ifndef SEMLINK_AUTODIFF_HPP
#define SEMLINK_AUTODIFF_HPP

#include <complex>
#include <functional>
#include <memory>
#include <vector>

#include "semlink/tensor.hpp"

namespace semlink::nn {

class Graph;

// Handle into a Graph node. Cheap to copy; owns nothing.
struct Var {
  Graph* g = nullptr;
  int id = -1;
  bool valid() const { return g != nullptr && id >= 0; }
  const Tensor& val() const;
};

// Reverse-mode tape. Nodes are appended in topological order, so backward is
// a single reverse sweep over creation order. Graphs are single-sample and
// short-lived; batching loops samples and merges the per-sample gradients.
class Graph {
 public:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    bool grad_alloc = false;
    std::function<void(Graph&, int)> backward;
  };

  Var leaf(Tensor t, bool needs_grad = false);
  Var make(Tensor value, bool needs_grad,
           std::function<void(Graph&, int)> backward);

  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  int size() const { return static_cast<int>(nodes_.size()); }

  const Tensor& value(Var v) const { return node(v.id).value; }
  // Gradient of the last backward() target w.r.t. v; zeros if unreached.
  const Tensor& grad(Var v);

  // Scalar loss only. Accumulates into leaf grads.
  void backward(Var loss);

  // Adds g into the grad buffer of node id (no-op when the node does not
  // require gradients).
  void accumulate(int id, const Tensor& g);
  double* grad_buffer(int id);  // nullptr when grads not required

 private:
  std::vector<Node> nodes_;
  Tensor zero_scratch_;
};

// ---- elementwise / structural ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);          // Hadamard
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var relu(Var a);
Var sigmoid(Var a);
Var reshape(Var a, std::vector<int> shape);
Var concat0(const std::vector<Var>& parts);    // rank-1 concat
Var slice0(Var a, int start, int len);         // rank-1 slice
Var pad_tail(Var a, int new_len);              // rank-1 zero pad
Var sum(Var a);
Var mean_all(Var a);

// ---- dense / conv ----
// x: [n] or [B,n]; w: [m,n]; b: [m] or invalid Var for no bias.
Var dense(Var x, Var w, Var b);
// x: [C,H,W] or [N,C,H,W]; w: [F,C,kh,kw]; b: [F] or invalid.
// kernel must be square; symmetric zero padding.
Var conv2d(Var x, Var w, Var b, int stride, int pad);
// Broadcast add of per-channel bias b[C] onto x[C,H,W].
Var add_channel_bias(Var x, Var b);
// Nearest-neighbour resize of x[C,H,W] to [C,Ho,Wo].
Var resize_nearest(Var x, int ho, int wo);

// ---- losses ----
Var mse(Var a, Var b);  // mean over elements of (a-b)^2
// logits: [C,H,W]; labels: row-major H*W class indices in [0,C).
Var softmax_ce(Var logits, std::shared_ptr<const std::vector<int>> labels);

// ---- link-layer specials ----
// 16-QAM per-axis quantizer: sigmoid then hard decision onto
// {-3,-1,1,3}/sqrt(10). Backward is the straight-through identity.
Var quantize_st(Var x);
extern const double kQamAmp[4];  // canonical emitted amplitudes

// Normalizes interleaved (re,im) data to unit mean complex-symbol power:
// y = x / sqrt(sum(x^2) / (numel/2)). Gradient flows through the scale.
Var power_normalize(Var x);

// Per-block constant complex matrix application. x holds n_blocks
// interleaved complex vectors of length in_dim; mats holds n_blocks
// row-major out_dim x in_dim complex matrices. Backward applies the
// conjugate transpose.
Var complex_block_apply(
    Var x, std::shared_ptr<const std::vector<std::complex<double>>> mats,
    int n_blocks, int in_dim, int out_dim);

// Central finite-difference gradient of f w.r.t. x, h = 1e-5.
Tensor finite_difference(const std::function<double(const Tensor&)>& f,
                         const Tensor& x, double h = 1e-5);

}  // namespace semlink::nn

#endif
