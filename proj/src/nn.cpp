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

#include "semlink/nn.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <thread>
#include <vector>

namespace semlink::nn {

Tensor& ParamStore::add(const std::string& name, Tensor init) {
  auto [it, inserted] = params_.emplace(name, std::move(init));
  if (!inserted) throw std::invalid_argument("ParamStore: duplicate " + name);
  AdamState st;
  st.m = Tensor::zeros(it->second.shape);
  st.v = Tensor::zeros(it->second.shape);
  adam_.emplace(name, std::move(st));
  return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end())
    throw std::invalid_argument("ParamStore: unknown parameter " + name);
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end())
    throw std::invalid_argument("ParamStore: unknown parameter " + name);
  return it->second;
}

int64_t ParamStore::total_params() const {
  int64_t n = 0;
  for (const auto& [k, v] : params_) n += v.numel();
  return n;
}

bool ParamStore::adam_step(const GradMap& grads, const AdamOpts& o) {
  for (const auto& [name, g] : grads) {
    const Tensor& p = get(name);
    if (!p.same_shape(g))
      throw std::invalid_argument("adam_step: gradient shape mismatch for " +
                                  name + " " + p.shape_str() + " vs " +
                                  g.shape_str());
    if (!g.all_finite()) return false;
  }
  for (const auto& [name, g] : grads) {
    Tensor& p = params_.at(name);
    AdamState& st = adam_.at(name);
    st.step += 1;
    double b1t = 1.0 - std::pow(o.beta1, static_cast<double>(st.step));
    double b2t = 1.0 - std::pow(o.beta2, static_cast<double>(st.step));
    for (size_t i = 0; i < p.data.size(); ++i) {
      double gi = g.data[i];
      st.m.data[i] = o.beta1 * st.m.data[i] + (1.0 - o.beta1) * gi;
      st.v.data[i] = o.beta2 * st.v.data[i] + (1.0 - o.beta2) * gi * gi;
      double mhat = st.m.data[i] / b1t;
      double vhat = st.v.data[i] / b2t;
      p.data[i] -= o.lr * mhat / (std::sqrt(vhat) + o.eps);
    }
  }
  return true;
}

int64_t ParamStore::step_count(const std::string& name) const {
  auto it = adam_.find(name);
  return it == adam_.end() ? 0 : it->second.step;
}

namespace {

void put_u32(std::FILE* f, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  std::fwrite(b, 1, 4, f);
}

void put_u64(std::FILE* f, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  std::fwrite(b, 1, 8, f);
}

uint32_t get_u32(std::FILE* f) {
  unsigned char b[4];
  if (std::fread(b, 1, 4, f) != 4) throw std::runtime_error("weights: truncated");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::FILE* f) {
  unsigned char b[8];
  if (std::fread(b, 1, 8, f) != 8) throw std::runtime_error("weights: truncated");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

// Container layout (little endian): magic "SLNN", version u32, count u32,
// then per entry: name length u32, name bytes, rank u32, extents u64 each,
// f64 payload.
void ParamStore::save(const std::string& path) const {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("weights: cannot open " + path);
  std::fwrite("SLNN", 1, 4, f);
  put_u32(f, 1);
  put_u32(f, static_cast<uint32_t>(params_.size()));
  for (const auto& [name, t] : params_) {
    put_u32(f, static_cast<uint32_t>(name.size()));
    std::fwrite(name.data(), 1, name.size(), f);
    put_u32(f, static_cast<uint32_t>(t.shape.size()));
    for (int e : t.shape) put_u64(f, static_cast<uint64_t>(e));
    static_assert(sizeof(double) == 8);
    std::fwrite(t.data.data(), 8, t.data.size(), f);
  }
  std::fclose(f);
}

ParamStore ParamStore::load(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("weights: cannot open " + path);
  char magic[4];
  if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, "SLNN", 4) != 0) {
    std::fclose(f);
    throw std::runtime_error("weights: bad magic in " + path);
  }
  uint32_t version = get_u32(f);
  if (version != 1) {
    std::fclose(f);
    throw std::runtime_error("weights: unsupported version");
  }
  uint32_t count = get_u32(f);
  ParamStore ps;
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t nl = get_u32(f);
    std::string name(nl, '\0');
    if (std::fread(name.data(), 1, nl, f) != nl)
      throw std::runtime_error("weights: truncated");
    uint32_t rank = get_u32(f);
    std::vector<int> shape(rank);
    for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int>(get_u64(f));
    Tensor t = Tensor::zeros(shape);
    if (std::fread(t.data.data(), 8, t.data.size(), f) != t.data.size())
      throw std::runtime_error("weights: truncated payload");
    ps.add(name, std::move(t));
  }
  std::fclose(f);
  return ps;
}

uint64_t ParamStore::content_hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [name, t] : params_) {
    mix(name.data(), name.size());
    mix(t.data.data(), t.data.size() * 8);
  }
  return h;
}

Var Binding::operator()(const std::string& name) {
  auto it = ids_.find(name);
  if (it != ids_.end()) return {g_, it->second};
  Var v = g_->leaf(ps_->get(name), trainable_);
  ids_.emplace(name, v.id);
  return v;
}

void Binding::collect(GradMap& out) const {
  for (const auto& [name, id] : ids_) {
    const Graph::Node& n = g_->node(id);
    if (!n.grad_alloc) continue;
    auto it = out.find(name);
    if (it == out.end()) {
      out.emplace(name, n.grad);
    } else {
      for (size_t i = 0; i < n.grad.data.size(); ++i)
        it->second.data[i] += n.grad.data[i];
    }
  }
}

void grad_map_add(GradMap& into, const GradMap& from) {
  for (const auto& [name, g] : from) {
    auto it = into.find(name);
    if (it == into.end())
      into.emplace(name, g);
    else
      for (size_t i = 0; i < g.data.size(); ++i) it->second.data[i] += g.data[i];
  }
}

void grad_map_scale(GradMap& m, double c) {
  for (auto& [name, g] : m)
    for (double& v : g.data) v *= c;
}

Tensor init_normal(std::vector<int> shape, double stddev, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = stddev * rng.normal();
  return t;
}

Tensor init_he_conv(int f, int c, int k, Rng& rng) {
  double std = std::sqrt(2.0 / (static_cast<double>(c) * k * k));
  return init_normal({f, c, k, k}, std, rng);
}

Tensor init_he_dense(int m, int n, Rng& rng) {
  double std = std::sqrt(2.0 / static_cast<double>(n));
  return init_normal({m, n}, std, rng);
}

Tensor init_identity(int n, double noise_std, Rng& rng) {
  Tensor t = Tensor::zeros({n, n});
  for (int i = 0; i < n; ++i) t.data[static_cast<size_t>(i) * n + i] = 1.0;
  if (noise_std > 0.0)
    for (double& v : t.data) v += noise_std * rng.normal();
  return t;
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&next, n, &fn] {
      for (;;) {
        int i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

double batch_gradients(int n, int threads,
                       const std::function<double(int, Graph&, GradMap&)>& build,
                       GradMap& out) {
  std::vector<GradMap> locals(static_cast<size_t>(n));
  std::vector<double> losses(static_cast<size_t>(n), 0.0);
  parallel_for(n, threads, [&](int i) {
    Graph g;
    losses[static_cast<size_t>(i)] =
        build(i, g, locals[static_cast<size_t>(i)]);
  });
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    grad_map_add(out, locals[static_cast<size_t>(i)]);
    total += losses[static_cast<size_t>(i)];
  }
  grad_map_scale(out, 1.0 / static_cast<double>(n));
  return total / static_cast<double>(n);
}

}  // namespace semlink::nn
