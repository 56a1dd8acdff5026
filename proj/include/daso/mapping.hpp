#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "daso/grads.hpp"
#include "daso/mlp.hpp"
#include "daso/params.hpp"

namespace daso {

enum class MapDirection { SocialToItem, ItemToSocial };

/// A user representation carried across domains by one of the mapping nets.
template <typename Real>
struct MappedRep {
  std::vector<Real> values;
  MapDirection direction;
};

template <typename Real>
inline MappedRep<Real> map_s_to_i(std::span<const Real> p_soc_row, const MappingNet<Real>& net) {
  if (!all_finite(p_soc_row)) throw std::invalid_argument("map_s_to_i: non-finite input");
  return {mlp_forward(net, p_soc_row), MapDirection::SocialToItem};
}

template <typename Real>
inline MappedRep<Real> map_i_to_s(std::span<const Real> p_item_row, const MappingNet<Real>& net) {
  if (!all_finite(p_item_row)) throw std::invalid_argument("map_i_to_s: non-finite input");
  return {mlp_forward(net, p_item_row), MapDirection::ItemToSocial};
}

template <typename Real>
struct CycleGrads {
  RowGrads<Real> p_item;
  RowGrads<Real> p_soc;
  MlpGrads<Real> map_si;
  MlpGrads<Real> map_is;

  void init(const ModelParams<Real>& m) {
    p_item = RowGrads<Real>(m.dim);
    p_soc = RowGrads<Real>(m.dim);
    map_si.init_like(m.map_si);
    map_is.init_like(m.map_is);
  }
};

/// Cycle reconstruction loss over a user batch:
///   sum_i ( || map_si(map_is(p_i^I)) - p_i^I ||_2
///         + || map_is(map_si(p_i^S)) - p_i^S ||_2 )
/// with unsquared Euclidean norms. When `grads` is non-null, accumulates the
/// gradient of the sum for both nets and both embedding rows; a zero-norm
/// residual contributes zero gradient (subgradient at the kink).
template <typename Real>
inline double cycle_loss(std::span<const int> users, const ModelParams<Real>& params,
                         CycleGrads<Real>* grads) {
  if (users.empty()) throw std::invalid_argument("cycle_loss: empty batch");
  const int d = params.dim;
  double loss = 0.0;
  MlpCache<Real> inner_cache, outer_cache;
  std::vector<Real> unit(d), d_mid(d), d_in(d);

  // One reconstruction term: embed -> inner net -> outer net -> compare.
  auto one_term = [&](std::span<const Real> emb, const MappingNet<Real>& inner,
                      const MappingNet<Real>& outer, MlpGrads<Real>* g_inner,
                      MlpGrads<Real>* g_outer, std::span<Real> d_emb) {
    mlp_forward_cached(inner, emb, inner_cache);
    const auto& mid = inner_cache.act.back();
    mlp_forward_cached(outer, {mid.data(), mid.size()}, outer_cache);
    const auto& rec = outer_cache.act.back();

    double norm_sq = 0.0;
    for (int k = 0; k < d; ++k) {
      const double r = static_cast<double>(rec[k]) - static_cast<double>(emb[k]);
      unit[k] = static_cast<Real>(r);
      norm_sq += r * r;
    }
    const double norm = std::sqrt(norm_sq);
    loss += norm;
    if (!g_inner || norm == 0.0) return;

    for (int k = 0; k < d; ++k) unit[k] = static_cast<Real>(unit[k] / norm);
    mlp_backward<Real>(outer, outer_cache, {unit.data(), unit.size()}, *g_outer,
                       {d_mid.data(), d_mid.size()});
    mlp_backward<Real>(inner, inner_cache, {d_mid.data(), d_mid.size()}, *g_inner,
                       {d_in.data(), d_in.size()});
    for (int k = 0; k < d; ++k) d_emb[k] += d_in[k] - unit[k];
  };

  for (int u : users) {
    one_term(params.p_item.row(u), params.map_is, params.map_si,
             grads ? &grads->map_is : nullptr, grads ? &grads->map_si : nullptr,
             grads ? grads->p_item.acc(u) : std::span<Real>{});
    one_term(params.p_soc.row(u), params.map_si, params.map_is,
             grads ? &grads->map_si : nullptr, grads ? &grads->map_is : nullptr,
             grads ? grads->p_soc.acc(u) : std::span<Real>{});
  }
  return loss;
}

}  // namespace daso
