#pragma once

#include <cmath>
#include <limits>
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

template <typename Real>
struct SocialSample {
  int user = 0;       // conditioning user u_i
  int other = 0;      // candidate user u_k, never equal to `user`
  bool generated = false;
  Real logp = Real(0);
};

/// f^S = x_i . x_k + a_k over discriminator social representations.
template <typename Real>
inline double disc_score_social(int ui, int uk, const ModelParams<Real>& params) {
  return dot<Real>(params.x_soc.row(ui), params.x_soc.row(uk)) +
         static_cast<double>(params.a_soc[uk]);
}

template <typename Real>
inline double disc_prob_social(int ui, int uk, const ModelParams<Real>& params) {
  if (ui == uk) throw std::invalid_argument("disc_prob_social: pair (i, i) is not valid");
  return sigmoid(disc_score_social(ui, uk, params));
}

/// Generator scores over candidates k != i, softmaxed with the self entry
/// pinned to exactly zero mass.
template <typename Real>
inline void gen_social_probs(const ModelParams<Real>& params, int ui,
                             std::span<const Real> p_is, std::span<Real> probs) {
  const int n = params.num_users;
  for (int k = 0; k < n; ++k) {
    probs[k] = (k == ui) ? -std::numeric_limits<Real>::infinity()
                         : static_cast<Real>(dot<Real>(p_is, params.p_soc.row(k)) +
                                             static_cast<double>(params.b_soc[k]));
  }
  softmax_inplace(probs);
}

/// G^S(. | u_i): softmax over all other users of p_i^{IS} . p_k^S + b_k.
/// Returned as an N-vector whose entry u_i is exactly zero.
template <typename Real>
inline std::vector<Real> gen_dist_social(int ui, const ModelParams<Real>& params) {
  if (params.num_users < 2) {
    throw std::invalid_argument("gen_dist_social: needs at least two users");
  }
  const MappedRep<Real> rep = map_i_to_s<Real>(params.p_item.row(ui), params.map_is);
  std::vector<Real> probs(params.num_users);
  gen_social_probs<Real>(params, ui, {rep.values.data(), rep.values.size()},
                         {probs.data(), probs.size()});
  return probs;
}

template <typename Real>
inline std::vector<SocialSample<Real>> sample_users(int ui, int n,
                                                    const ModelParams<Real>& params, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_users: n must be >= 1");
  const std::vector<Real> probs = gen_dist_social(ui, params);
  std::vector<SocialSample<Real>> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) {
    const int v = sample_categorical<Real>({probs.data(), probs.size()}, rng);
    const Real logp = static_cast<Real>(
        std::min(0.0, std::log(static_cast<double>(probs[v]))));
    out.push_back({ui, v, true, logp});
  }
  return out;
}

template <typename Real>
struct DiscSocialGrads {
  RowGrads<Real> x;      // discriminator social rows (both pair members)
  ScalarGrads<Real> a;

  void init(const ModelParams<Real>& m) {
    x = RowGrads<Real>(m.dim);
    a = {};
  }
};

/// Mirror of disc_loss_item over user-user pairs. Both rows of each pair
/// receive gradient since the score is symmetric in the representations.
template <typename Real>
inline double disc_loss_social(std::span<const std::pair<int, int>> real,
                               std::span<const std::pair<int, int>> fake,
                               const ModelParams<Real>& params, DiscSocialGrads<Real>* grads) {
  if (real.empty() || fake.empty()) {
    throw std::invalid_argument("disc_loss_social: batches must be nonempty");
  }
  double loss = 0.0;
  auto accumulate = [&](std::span<const std::pair<int, int>> pairs, bool is_real) {
    for (auto [i, k] : pairs) {
      if (i == k) throw std::invalid_argument("disc_loss_social: pair (i, i) is not valid");
      const double f = disc_score_social(i, k, params);
      loss += is_real ? softplus(-f) : softplus(f);
      if (!grads) continue;
      const double dldf = is_real ? -sigmoid(-f) : sigmoid(f);
      axpy<Real>(static_cast<Real>(dldf), params.x_soc.row(k), grads->x.acc(i));
      axpy<Real>(static_cast<Real>(dldf), params.x_soc.row(i), grads->x.acc(k));
      grads->a.acc(k) += static_cast<Real>(dldf);
    }
  };
  accumulate(real, true);
  accumulate(fake, false);
  return loss;
}

template <typename Real>
struct GenSocialGrads {
  RowGrads<Real> p_item;   // source rows of the mapped representation
  MlpGrads<Real> map_is;
  Table<Real> p_soc;       // dense: every candidate row appears in the softmax
  std::vector<Real> b_soc;

  void init(const ModelParams<Real>& m) {
    p_item = RowGrads<Real>(m.dim);
    map_is.init_like(m.map_is);
    p_soc = Table<Real>(m.num_users, m.dim);
    b_soc.assign(m.num_users, Real(0));
  }
};

/// REINFORCE estimator for the social generator, the structural mirror of
/// gen_policy_grad_item with reward log(1 + exp(f^S)).
template <typename Real>
inline double gen_policy_grad_social(std::span<const int> users, int n,
                                     const ModelParams<Real>& params, Rng& rng,
                                     GenSocialGrads<Real>& grads,
                                     const PolicyGradOptions& opt = {}) {
  if (n < 1) throw std::invalid_argument("gen_policy_grad_social: n must be >= 1");
  if (params.num_users < 2) {
    throw std::invalid_argument("gen_policy_grad_social: needs at least two users");
  }
  const int nu = params.num_users;
  const int d = params.dim;
  const Real wu = static_cast<Real>(1.0 / static_cast<double>(users.size()));
  std::vector<Real> probs(nu), p_is(d), dp_is(d), pbar(d), sampled_p(d), dx(d);
  MlpCache<Real> cache;
  double reward_sum = 0.0;

  for (int ui : users) {
    mlp_forward_cached<Real>(params.map_is, params.p_item.row(ui), cache);
    const auto& rep = cache.act.back();
    for (int k = 0; k < d; ++k) p_is[k] = rep[k];
    gen_social_probs<Real>(params, ui, {p_is.data(), p_is.size()}, {probs.data(), probs.size()});

    struct Drawn {
      int user;
      double reward_sum;
      int count;
    };
    std::vector<Drawn> drawn;
    double total_reward = 0.0;
    for (int k = 0; k < n; ++k) {
      const int v = sample_categorical<Real>({probs.data(), probs.size()}, rng);
      const double r = softplus(disc_score_social(ui, v, params));
      total_reward += r;
      bool found = false;
      for (auto& dwn : drawn) {
        if (dwn.user == v) {
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
    const double base = opt.reward_baseline ? mean_reward : 0.0;
    const double dense_coeff = mean_reward - base;

    std::fill(pbar.begin(), pbar.end(), Real(0));
    for (int k = 0; k < nu; ++k) {
      const Real gk = probs[k];
      if (gk == Real(0)) continue;
      axpy<Real>(gk, params.p_soc.row(k), {pbar.data(), pbar.size()});
      if (dense_coeff != 0.0) {
        axpy<Real>(static_cast<Real>(wu * dense_coeff * gk), {p_is.data(), p_is.size()},
                   grads.p_soc.row(k));
        grads.b_soc[k] += static_cast<Real>(wu * dense_coeff * gk);
      }
    }
    std::fill(sampled_p.begin(), sampled_p.end(), Real(0));
    for (const auto& dwn : drawn) {
      const double adj =
          dwn.reward_sum / n - base * (static_cast<double>(dwn.count) / n);
      axpy<Real>(static_cast<Real>(-wu * adj), {p_is.data(), p_is.size()},
                 grads.p_soc.row(dwn.user));
      grads.b_soc[dwn.user] -= static_cast<Real>(wu * adj);
      axpy<Real>(static_cast<Real>(adj), params.p_soc.row(dwn.user),
                 {sampled_p.data(), sampled_p.size()});
    }
    for (int k = 0; k < d; ++k) {
      dp_is[k] = static_cast<Real>(wu * (dense_coeff * pbar[k] - sampled_p[k]));
    }
    mlp_backward<Real>(params.map_is, cache, {dp_is.data(), dp_is.size()}, grads.map_is,
                       {dx.data(), dx.size()});
    axpy<Real>(Real(1), {dx.data(), dx.size()}, grads.p_item.acc(ui));
  }
  return reward_sum / static_cast<double>(users.size());
}

}  // namespace daso
