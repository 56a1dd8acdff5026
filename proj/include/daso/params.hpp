#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "daso/math.hpp"
#include "daso/mlp.hpp"
#include "daso/rng.hpp"

namespace daso {

/// All trainable state. Generator and discriminator keep separate user/item
/// representations per domain; the two mapping nets carry user information
/// across domains.
template <typename Real>
struct ModelParams {
  int num_users = 0;
  int num_items = 0;
  int dim = 0;

  Table<Real> p_item;  // generator user reps, item domain   (N x d)
  Table<Real> q_item;  // generator item reps                (M x d)
  Table<Real> x_item;  // discriminator user reps, item domain (N x d)
  Table<Real> y_item;  // discriminator item reps            (M x d)
  Table<Real> p_soc;   // generator user reps, social domain (N x d)
  Table<Real> x_soc;   // discriminator user reps, social domain (N x d)

  std::vector<Real> a_item;  // discriminator item bias (M)
  std::vector<Real> b_item;  // generator item bias (M)
  std::vector<Real> a_soc;   // discriminator social bias (N)
  std::vector<Real> b_soc;   // generator social bias (N)

  MappingNet<Real> map_si;  // social -> item
  MappingNet<Real> map_is;  // item -> social

  std::size_t param_count() const {
    return p_item.size() + q_item.size() + x_item.size() + y_item.size() + p_soc.size() +
           x_soc.size() + a_item.size() + b_item.size() + a_soc.size() + b_soc.size() +
           map_si.param_count() + map_is.param_count();
  }
};

inline std::vector<int> mapping_dims(int d, const std::vector<int>& hidden) {
  std::vector<int> dims;
  dims.push_back(d);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(d);
  return dims;
}

inline std::vector<int> default_hidden_widths(int d) { return {2 * d, 2 * d, 2 * d}; }

/// Zero-shaped model, no random content. Useful for gradient buffers and
/// optimizer accumulators, which mirror the parameter shapes exactly.
template <typename Real>
inline ModelParams<Real> make_model(int num_users, int num_items, int d,
                                    const std::vector<int>& hidden) {
  if (num_users <= 0 || num_items <= 0 || d <= 0) {
    throw std::invalid_argument("model dimensions must be positive");
  }
  ModelParams<Real> m;
  m.num_users = num_users;
  m.num_items = num_items;
  m.dim = d;
  m.p_item = Table<Real>(num_users, d);
  m.q_item = Table<Real>(num_items, d);
  m.x_item = Table<Real>(num_users, d);
  m.y_item = Table<Real>(num_items, d);
  m.p_soc = Table<Real>(num_users, d);
  m.x_soc = Table<Real>(num_users, d);
  m.a_item.assign(num_items, Real(0));
  m.b_item.assign(num_items, Real(0));
  m.a_soc.assign(num_users, Real(0));
  m.b_soc.assign(num_users, Real(0));
  m.map_si = make_mapping_net<Real>(mapping_dims(d, hidden));
  m.map_is = make_mapping_net<Real>(mapping_dims(d, hidden));
  return m;
}

/// Embedding entries ~ U(-0.05, 0.05); mapping weights fan-balanced uniform;
/// all biases zero. Deterministic per seed.
template <typename Real>
inline ModelParams<Real> init_model(int num_users, int num_items, int d,
                                    const std::vector<int>& hidden, std::uint64_t seed) {
  ModelParams<Real> m = make_model<Real>(num_users, num_items, d, hidden);
  Rng rng(seed);
  const double s = 0.05;
  for (Table<Real>* t : {&m.p_item, &m.q_item, &m.x_item, &m.y_item, &m.p_soc, &m.x_soc}) {
    for (Real& x : t->data) x = static_cast<Real>(rng.uniform(-s, s));
  }
  init_mapping_net(m.map_si, rng);
  init_mapping_net(m.map_is, rng);
  return m;
}

template <typename Real>
inline ModelParams<Real> init_model(int num_users, int num_items, int d, std::uint64_t seed) {
  return init_model<Real>(num_users, num_items, d, default_hidden_widths(d), seed);
}

}  // namespace daso
