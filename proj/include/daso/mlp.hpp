#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "daso/math.hpp"
#include "daso/rng.hpp"

namespace daso {

/// Fully connected net with ReLU on hidden layers and a linear output layer,
/// so outputs can take negative values. `dims` lists the widths including
/// input and output, e.g. {d, 2d, 2d, 2d, d} for the default three hidden
/// layers.
template <typename Real>
struct MappingNet {
  std::vector<int> dims;
  std::vector<Table<Real>> weights;        // weights[l]: dims[l+1] x dims[l]
  std::vector<std::vector<Real>> biases;   // biases[l]: dims[l+1]

  int input_dim() const { return dims.front(); }
  int output_dim() const { return dims.back(); }
  int num_layers() const { return static_cast<int>(weights.size()); }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (int l = 0; l < num_layers(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }
};

template <typename Real>
inline MappingNet<Real> make_mapping_net(const std::vector<int>& dims) {
  if (dims.size() < 2) throw std::invalid_argument("mapping net needs input and output widths");
  for (int w : dims) {
    if (w <= 0) throw std::invalid_argument("mapping net widths must be positive");
  }
  MappingNet<Real> net;
  net.dims = dims;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    net.weights.emplace_back(dims[l + 1], dims[l]);
    net.biases.emplace_back(dims[l + 1], Real(0));
  }
  return net;
}

/// Fan-balanced uniform init for the weights, zero biases.
template <typename Real>
inline void init_mapping_net(MappingNet<Real>& net, Rng& rng) {
  for (int l = 0; l < net.num_layers(); ++l) {
    auto& w = net.weights[l];
    const double scale = std::sqrt(6.0 / (w.cols + w.rows));
    for (Real& x : w.data) x = static_cast<Real>(rng.uniform(-scale, scale));
    for (Real& b : net.biases[l]) b = Real(0);
  }
}

/// Activations cached by a forward pass, consumed by mlp_backward.
template <typename Real>
struct MlpCache {
  std::vector<std::vector<Real>> act;  // act[0] = input, act[L] = output
  std::vector<std::vector<Real>> pre;  // pre-activation per layer
};

template <typename Real>
inline void mlp_forward_cached(const MappingNet<Real>& net, std::span<const Real> x,
                               MlpCache<Real>& cache) {
  const int L = net.num_layers();
  cache.act.resize(L + 1);
  cache.pre.resize(L);
  cache.act[0].assign(x.begin(), x.end());
  for (int l = 0; l < L; ++l) {
    const auto& w = net.weights[l];
    const auto& prev = cache.act[l];
    auto& z = cache.pre[l];
    z.resize(w.rows);
    for (int r = 0; r < w.rows; ++r) {
      z[r] = net.biases[l][r] +
             static_cast<Real>(dot<Real>(w.row(r), {prev.data(), prev.size()}));
    }
    auto& a = cache.act[l + 1];
    a.resize(w.rows);
    if (l + 1 == L) {
      a = z;  // linear output layer
    } else {
      for (int r = 0; r < w.rows; ++r) a[r] = z[r] > Real(0) ? z[r] : Real(0);
    }
  }
}

template <typename Real>
inline std::vector<Real> mlp_forward(const MappingNet<Real>& net, std::span<const Real> x) {
  MlpCache<Real> cache;
  mlp_forward_cached(net, x, cache);
  return cache.act.back();
}

/// Gradient buffers shaped like a MappingNet.
template <typename Real>
struct MlpGrads {
  std::vector<Table<Real>> w;
  std::vector<std::vector<Real>> b;

  void init_like(const MappingNet<Real>& net) {
    w.clear();
    b.clear();
    for (int l = 0; l < net.num_layers(); ++l) {
      w.emplace_back(net.weights[l].rows, net.weights[l].cols);
      b.emplace_back(net.weights[l].rows, Real(0));
    }
  }
  void clear() {
    for (auto& t : w) t.fill(Real(0));
    for (auto& v : b) v.assign(v.size(), Real(0));
  }
  void scale(Real s) {
    for (auto& t : w)
      for (Real& x : t.data) x *= s;
    for (auto& v : b)
      for (Real& x : v) x *= s;
  }
};

/// Backpropagates `dy` through a cached forward pass. Accumulates into
/// `grads` (which must be init_like'd) and writes the input gradient to
/// `dx` when non-empty. ReLU subgradient at 0 is taken as 0.
template <typename Real>
inline void mlp_backward(const MappingNet<Real>& net, const MlpCache<Real>& cache,
                         std::span<const Real> dy, MlpGrads<Real>& grads, std::span<Real> dx) {
  const int L = net.num_layers();
  std::vector<Real> delta(dy.begin(), dy.end());
  std::vector<Real> prev_delta;
  for (int l = L - 1; l >= 0; --l) {
    const auto& w = net.weights[l];
    const auto& a_in = cache.act[l];
    for (int r = 0; r < w.rows; ++r) {
      grads.b[l][r] += delta[r];
      axpy<Real>(delta[r], {a_in.data(), a_in.size()}, grads.w[l].row(r));
    }
    prev_delta.assign(w.cols, Real(0));
    for (int r = 0; r < w.rows; ++r) {
      axpy<Real>(delta[r], w.row(r), {prev_delta.data(), prev_delta.size()});
    }
    if (l > 0) {
      const auto& z = cache.pre[l - 1];
      for (int c = 0; c < w.cols; ++c) {
        prev_delta[c] = z[c] > Real(0) ? prev_delta[c] : Real(0);
      }
    }
    delta.swap(prev_delta);
  }
  if (!dx.empty()) {
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = delta[i];
  }
}

}  // namespace daso
