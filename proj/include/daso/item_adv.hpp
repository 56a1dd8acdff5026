#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "daso/grads.hpp"
#include "daso/mapping.hpp"
#include "daso/math.hpp"
#include "daso/params.hpp"
#include "daso/rng.hpp"

namespace daso {

/// One user-item pair in a discriminator batch. `generated` entries carry
/// the generator log-probability they were drawn with.
template <typename Real>
struct ItemSample {
  int user = 0;
  int item = 0;
  bool generated = false;
  Real logp = Real(0);
};

/// Raw discriminator score f^I = x_u . y_v + a_v.
template <typename Real>
inline double disc_score_item(int u, int v, const ModelParams<Real>& params) {
  return dot<Real>(params.x_item.row(u), params.y_item.row(v)) +
         static_cast<double>(params.a_item[v]);
}

/// sigma(f^I): probability the discriminator assigns to (u, v) being real.
template <typename Real>
inline double disc_prob_item(int u, int v, const ModelParams<Real>& params) {
  return sigmoid(disc_score_item(u, v, params));
}

/// Generator scores g_j = p_si . q_j + b_j for every item, softmaxed in
/// place. `p_si` is the transferred social representation of the user.
template <typename Real>
inline void gen_item_probs(const ModelParams<Real>& params, std::span<const Real> p_si,
                           std::span<Real> probs) {
  const int m = params.num_items;
  for (int j = 0; j < m; ++j) {
    probs[j] = static_cast<Real>(dot<Real>(p_si, params.q_item.row(j)) +
                                 static_cast<double>(params.b_item[j]));
  }
  softmax_inplace(probs);
}

/// G^I(. | u): softmax over all items of p_u^{SI} . q_j + b_j.
template <typename Real>
inline std::vector<Real> gen_dist_item(int u, const ModelParams<Real>& params) {
  const MappedRep<Real> rep = map_s_to_i<Real>(params.p_soc.row(u), params.map_si);
  std::vector<Real> probs(params.num_items);
  gen_item_probs<Real>(params, {rep.values.data(), rep.values.size()},
                       {probs.data(), probs.size()});
  return probs;
}

/// n i.i.d. draws from G^I(. | u), with their log-probabilities.
template <typename Real>
inline std::vector<ItemSample<Real>> sample_items(int u, int n, const ModelParams<Real>& params,
                                                  Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_items: n must be >= 1");
  const std::vector<Real> probs = gen_dist_item(u, params);
  std::vector<ItemSample<Real>> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) {
    const int v = sample_categorical<Real>({probs.data(), probs.size()}, rng);
    const Real logp = static_cast<Real>(
        std::min(0.0, std::log(static_cast<double>(probs[v]))));
    out.push_back({u, v, true, logp});
  }
  return out;
}

template <typename Real>
struct DiscItemGrads {
  RowGrads<Real> x;      // discriminator user rows
  RowGrads<Real> y;      // discriminator item rows
  ScalarGrads<Real> a;   // discriminator item bias entries

  void init(const ModelParams<Real>& m) {
    x = RowGrads<Real>(m.dim);
    y = RowGrads<Real>(m.dim);
    a = {};
  }
};

/// Discriminator objective on a batch, as a minimized negation of the
/// log-likelihood:  sum_real -log sigma(f) + sum_fake -log(1 - sigma(f)).
/// Gradients cover only discriminator parameters (x^I, y^I, a).
template <typename Real>
inline double disc_loss_item(std::span<const std::pair<int, int>> real,
                             std::span<const std::pair<int, int>> fake,
                             const ModelParams<Real>& params, DiscItemGrads<Real>* grads) {
  if (real.empty() || fake.empty()) {
    throw std::invalid_argument("disc_loss_item: batches must be nonempty");
  }
  double loss = 0.0;
  auto accumulate = [&](std::span<const std::pair<int, int>> pairs, bool is_real) {
    for (auto [u, v] : pairs) {
      const double f = disc_score_item(u, v, params);
      loss += is_real ? softplus(-f) : softplus(f);
      if (!grads) continue;
      // d loss / d f: real pairs pull sigma(f) toward 1, fakes toward 0.
      const double dldf = is_real ? -sigmoid(-f) : sigmoid(f);
      axpy<Real>(static_cast<Real>(dldf), params.y_item.row(v), grads->x.acc(u));
      axpy<Real>(static_cast<Real>(dldf), params.x_item.row(u), grads->y.acc(v));
      grads->a.acc(v) += static_cast<Real>(dldf);
    }
  };
  accumulate(real, true);
  accumulate(fake, false);
  return loss;
}

template <typename Real>
struct GenItemGrads {
  RowGrads<Real> p_soc;     // source rows of the mapped representation
  MlpGrads<Real> map_si;
  Table<Real> q_item;       // dense: the softmax couples every item
  std::vector<Real> b_item;

  void init(const ModelParams<Real>& m) {
    p_soc = RowGrads<Real>(m.dim);
    map_si.init_like(m.map_si);
    q_item = Table<Real>(m.num_items, m.dim);
    b_item.assign(m.num_items, Real(0));
  }
};

/// REINFORCE estimator for the item generator. For each user, draws n items
/// from G^I and accumulates grad log G^I(v|u) * reward(u, v) with reward
/// log(1 + exp(f^I)). Returns the mean reward over all draws. Gradients are
/// of the negated objective (so a descent step improves the generator) and
/// are averaged over the user batch; discriminator parameters are constants.
template <typename Real>
inline double gen_policy_grad_item(std::span<const int> users, int n,
                                   const ModelParams<Real>& params, Rng& rng,
                                   GenItemGrads<Real>& grads,
                                   const PolicyGradOptions& opt = {}) {
  if (n < 1) throw std::invalid_argument("gen_policy_grad_item: n must be >= 1");
  const int m = params.num_items;
  const int d = params.dim;
  const Real wu = static_cast<Real>(1.0 / static_cast<double>(users.size()));
  std::vector<Real> probs(m), p_si(d), dp_si(d), qbar(d), sampled_q(d), dx(d);
  MlpCache<Real> cache;
  double reward_sum = 0.0;

  for (int u : users) {
    mlp_forward_cached<Real>(params.map_si, params.p_soc.row(u), cache);
    const auto& rep = cache.act.back();
    for (int k = 0; k < d; ++k) p_si[k] = rep[k];
    gen_item_probs<Real>(params, {p_si.data(), p_si.size()}, {probs.data(), probs.size()});

    // Group the draws by item: per sampled item keep the reward sum and the
    // draw count. Working with grouped sums keeps the dense and sampled
    // halves of the score-function gradient bit-consistent, so a degenerate
    // distribution (M = 1) or an all-zero reward yields exactly zero.
    struct Drawn {
      int item;
      double reward_sum;
      int count;
    };
    std::vector<Drawn> drawn;
    double total_reward = 0.0;
    for (int k = 0; k < n; ++k) {
      const int v = sample_categorical<Real>({probs.data(), probs.size()}, rng);
      const double r = softplus(disc_score_item(u, v, params));
      total_reward += r;
      bool found = false;
      for (auto& dwn : drawn) {
        if (dwn.item == v) {
          dwn.reward_sum += r;
          ++dwn.count;
          found = true;
          break;
        }
      }
      if (!found) drawn.push_back({v, r, 1});
    }
    const double mean_reward = total_reward / n;
    reward_sum += mean_reward;
    // With the optional baseline the dense term vanishes and each sampled
    // item's coefficient is shifted by base * count / n.
    const double base = opt.reward_baseline ? mean_reward : 0.0;
    const double dense_coeff = mean_reward - base;

    // Dense half: d(-J)/dq_j += wu * dense_coeff * G_j * p_si (same for b),
    // plus qbar = sum_j G_j q_j for the mapped-representation gradient.
    std::fill(qbar.begin(), qbar.end(), Real(0));
    for (int j = 0; j < m; ++j) {
      const Real gj = probs[j];
      axpy<Real>(gj, params.q_item.row(j), {qbar.data(), qbar.size()});
      if (dense_coeff != 0.0) {
        axpy<Real>(static_cast<Real>(wu * dense_coeff * gj), {p_si.data(), p_si.size()},
                   grads.q_item.row(j));
        grads.b_item[j] += static_cast<Real>(wu * dense_coeff * gj);
      }
    }
    // Sampled half: subtract each drawn item's (reward mass - baseline share).
    std::fill(sampled_q.begin(), sampled_q.end(), Real(0));
    for (const auto& dwn : drawn) {
      const double adj =
          dwn.reward_sum / n - base * (static_cast<double>(dwn.count) / n);
      axpy<Real>(static_cast<Real>(-wu * adj), {p_si.data(), p_si.size()},
                 grads.q_item.row(dwn.item));
      grads.b_item[dwn.item] -= static_cast<Real>(wu * adj);
      axpy<Real>(static_cast<Real>(adj), params.q_item.row(dwn.item),
                 {sampled_q.data(), sampled_q.size()});
    }
    for (int k = 0; k < d; ++k) {
      dp_si[k] = static_cast<Real>(wu * (dense_coeff * qbar[k] - sampled_q[k]));
    }
    mlp_backward<Real>(params.map_si, cache, {dp_si.data(), dp_si.size()}, grads.map_si,
                       {dx.data(), dx.size()});
    axpy<Real>(Real(1), {dx.data(), dx.size()}, grads.p_soc.acc(u));
  }
  return reward_sum / static_cast<double>(users.size());
}

}  // namespace daso
