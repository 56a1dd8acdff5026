#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "daso/grads.hpp"
#include "daso/math.hpp"
#include "daso/params.hpp"

namespace daso {

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training hyperparameters. These travel with checkpoints.
struct HyperParams {
  double learning_rate = 0.001;
  double rho = 0.9;    // RMSprop decay
  double eps = 1e-8;   // RMSprop stabilizer
  int batch_size = 64;
  double lambda = 100.0;       // cycle-reconstruction weight
  int samples_per_user = 5;    // generator draws per user per step
  int steps_per_epoch = 0;     // 0 = ceil(train pairs / batch)
  int epochs = 20;
  std::uint64_t seed = 42;
};

/// RMSprop mean-square accumulators, one buffer per parameter group. The
/// shapes mirror ModelParams exactly, so the same model container is reused.
template <typename Real>
struct OptimState {
  HyperParams hp;
  ModelParams<Real> sq;
};

template <typename Real>
inline std::vector<int> hidden_widths_of(const MappingNet<Real>& net) {
  return {net.dims.begin() + 1, net.dims.end() - 1};
}

template <typename Real>
inline OptimState<Real> make_optim_state(const ModelParams<Real>& params, const HyperParams& hp) {
  OptimState<Real> st;
  st.hp = hp;
  st.sq = make_model<Real>(params.num_users, params.num_items, params.dim,
                           hidden_widths_of(params.map_si));
  return st;
}

/// s <- rho*s + (1-rho)*g^2;  theta <- theta - lr * g / (sqrt(s) + eps).
/// Applied elementwise over the given buffers; a zero gradient entry leaves
/// the parameter unchanged and decays its accumulator.
template <typename Real>
inline void rmsprop_step(std::span<Real> theta, std::span<const Real> grad, std::span<Real> sq,
                         const HyperParams& hp, std::string_view group) {
  if (theta.size() != grad.size() || theta.size() != sq.size()) {
    throw std::invalid_argument("rmsprop_step: shape mismatch for group " + std::string(group));
  }
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = static_cast<double>(grad[i]);
    if (!std::isfinite(g)) {
      throw NumericError("non-finite gradient in group " + std::string(group));
    }
    const double s = hp.rho * static_cast<double>(sq[i]) + (1.0 - hp.rho) * g * g;
    sq[i] = static_cast<Real>(s);
    theta[i] = static_cast<Real>(static_cast<double>(theta[i]) -
                                 hp.learning_rate * g / (std::sqrt(s) + hp.eps));
  }
}

/// Row-sparse application: only rows present in `grads` are stepped. Rows
/// untouched by the batch keep both parameters and accumulators.
template <typename Real>
inline void rmsprop_step_rows(Table<Real>& theta, const RowGrads<Real>& grads, Table<Real>& sq,
                              const HyperParams& hp, std::string_view group) {
  for (std::size_t k = 0; k < grads.rows.size(); ++k) {
    const int r = grads.rows[k];
    rmsprop_step<Real>(theta.row(r), {grads.grads[k].data(), grads.grads[k].size()}, sq.row(r),
                       hp, group);
  }
}

template <typename Real>
inline void rmsprop_step_entries(std::vector<Real>& theta, const ScalarGrads<Real>& grads,
                                 std::vector<Real>& sq, const HyperParams& hp,
                                 std::string_view group) {
  for (std::size_t k = 0; k < grads.idx.size(); ++k) {
    const int i = grads.idx[k];
    rmsprop_step<Real>({&theta[i], 1}, {&grads.g[k], 1}, {&sq[i], 1}, hp, group);
  }
}

template <typename Real>
inline void rmsprop_step_net(MappingNet<Real>& net, const MlpGrads<Real>& grads,
                             MappingNet<Real>& sq, const HyperParams& hp,
                             std::string_view group) {
  for (int l = 0; l < net.num_layers(); ++l) {
    rmsprop_step<Real>({net.weights[l].data.data(), net.weights[l].data.size()},
                       {grads.w[l].data.data(), grads.w[l].data.size()},
                       {sq.weights[l].data.data(), sq.weights[l].data.size()}, hp, group);
    rmsprop_step<Real>({net.biases[l].data(), net.biases[l].size()},
                       {grads.b[l].data(), grads.b[l].size()},
                       {sq.biases[l].data(), sq.biases[l].size()}, hp, group);
  }
}

}  // namespace daso
