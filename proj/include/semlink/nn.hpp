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

#ifndef SEMLINK_NN_HPP
#define SEMLINK_NN_HPP

#include <functional>
#include <map>
#include <string>

#include "semlink/autodiff.hpp"
#include "semlink/rng.hpp"
#include "semlink/tensor.hpp"

namespace semlink::nn {

using GradMap = std::map<std::string, Tensor>;

struct AdamOpts {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Named trainable parameters plus per-parameter Adam state. Single writer
// during training; reads are safe to share.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor init);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) > 0; }
  const std::map<std::string, Tensor>& all() const { return params_; }
  int64_t total_params() const;

  // Standard Adam. Rejects the whole step (returns false, no state touched)
  // when any gradient entry is non-finite.
  bool adam_step(const GradMap& grads, const AdamOpts& opts);
  int64_t step_count(const std::string& name) const;

  void save(const std::string& path) const;
  static ParamStore load(const std::string& path);

  uint64_t content_hash() const;

 private:
  struct AdamState {
    Tensor m, v;
    int64_t step = 0;
  };
  std::map<std::string, Tensor> params_;
  std::map<std::string, AdamState> adam_;
};

// Per-graph binding of store parameters to leaf nodes.
class Binding {
 public:
  Binding(Graph& g, ParamStore& ps, bool trainable)
      : g_(&g), ps_(&ps), trainable_(trainable) {}
  Var operator()(const std::string& name);
  // Adds bound-leaf gradients into out (creates entries as needed).
  void collect(GradMap& out) const;

 private:
  Graph* g_;
  ParamStore* ps_;
  bool trainable_;
  std::map<std::string, int> ids_;
};

void grad_map_add(GradMap& into, const GradMap& from);
void grad_map_scale(GradMap& m, double c);

// ---- initializers ----
Tensor init_normal(std::vector<int> shape, double stddev, Rng& rng);
Tensor init_he_conv(int f, int c, int k, Rng& rng);      // [F,C,k,k]
Tensor init_he_dense(int m, int n, Rng& rng);            // [m,n]
Tensor init_identity(int n, double noise_std, Rng& rng); // [n,n]

// Runs fn(i) for i in [0,n) on up to `threads` workers. Each index must be
// independent; callers own result slots per index so output order never
// depends on scheduling.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

// Mean loss over a batch. build(i, graph, grads) runs one sample: forward,
// backward, collect. Per-sample gradient maps are merged in index order, so
// the result is identical for every thread count.
double batch_gradients(int n, int threads,
                       const std::function<double(int, Graph&, GradMap&)>& build,
                       GradMap& out);

}  // namespace semlink::nn

#endif
