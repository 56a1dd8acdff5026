#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "daso/checkpoint.hpp"
#include "daso/config.hpp"
#include "daso/dataset.hpp"
#include "daso/eval.hpp"
#include "daso/grads.hpp"
#include "daso/math.hpp"
#include "daso/optim.hpp"
#include "daso/rng.hpp"

namespace daso {

/// Plain matrix-factorization ranker trained with sigmoid cross entropy on
/// uniformly sampled negatives: the static negative-sampling regime the
/// adversarial model is compared against.
template <typename Real>
struct BaselineParams {
  int num_users = 0;
  int num_items = 0;
  int dim = 0;
  Table<Real> user;
  Table<Real> item;
  std::vector<Real> bias;
};

template <typename Real>
inline BaselineParams<Real> init_baseline(int num_users, int num_items, int d,
                                          std::uint64_t seed) {
  if (num_users <= 0 || num_items <= 0 || d <= 0) {
    throw std::invalid_argument("baseline dimensions must be positive");
  }
  BaselineParams<Real> m;
  m.num_users = num_users;
  m.num_items = num_items;
  m.dim = d;
  m.user = Table<Real>(num_users, d);
  m.item = Table<Real>(num_items, d);
  m.bias.assign(num_items, Real(0));
  Rng rng(seed);
  for (Real& x : m.user.data) x = static_cast<Real>(rng.uniform(-0.05, 0.05));
  for (Real& x : m.item.data) x = static_cast<Real>(rng.uniform(-0.05, 0.05));
  return m;
}

template <typename Real>
inline double baseline_score(const BaselineParams<Real>& m, int u, int v) {
  return dot<Real>(m.user.row(u), m.item.row(v)) + static_cast<double>(m.bias[v]);
}

template <typename Real>
inline ScoreFn baseline_scorer(const BaselineParams<Real>& m) {
  return [&m](int u, std::span<double> scores) {
    for (int j = 0; j < m.num_items; ++j) scores[j] = baseline_score(m, u, j);
  };
}

struct BaselineEpoch {
  int epoch = 0;
  double loss = 0.0;  // mean per-example sigmoid cross entropy
  double val_precision = 0.0;
  bool has_val = false;
};

/// One epoch: a pass over the shuffled positives, each paired with one fresh
/// uniform negative, RMSprop per mini-batch. Returns the mean loss.
template <typename Real>
inline double baseline_epoch(BaselineParams<Real>& m, BaselineParams<Real>& sq,
                             const HyperParams& hp, Rng& rng,
                             std::vector<std::pair<int, int>>& order) {
  rng.shuffle(order);
  RowGrads<Real> gu(m.dim), gi(m.dim);
  ScalarGrads<Real> gb;
  double total = 0.0;
  std::size_t done = 0;
  while (done < order.size()) {
    const std::size_t end =
        std::min(order.size(), done + static_cast<std::size_t>(hp.batch_size));
    gu = RowGrads<Real>(m.dim);
    gi = RowGrads<Real>(m.dim);
    gb = {};
    auto accumulate = [&](int u, int item, bool is_pos) {
      const double f = baseline_score(m, u, item);
      total += is_pos ? softplus(-f) : softplus(f);
      const double dldf = is_pos ? -sigmoid(-f) : sigmoid(f);
      axpy<Real>(static_cast<Real>(dldf), m.item.row(item), gu.acc(u));
      axpy<Real>(static_cast<Real>(dldf), m.user.row(u), gi.acc(item));
      gb.acc(item) += static_cast<Real>(dldf);
    };
    for (std::size_t i = done; i < end; ++i) {
      const auto [u, v] = order[i];
      const int neg = static_cast<int>(rng.uniform_index(m.num_items));
      accumulate(u, v, true);
      accumulate(u, neg, false);
    }
    rmsprop_step_rows(m.user, gu, sq.user, hp, "baseline_user");
    rmsprop_step_rows(m.item, gi, sq.item, hp, "baseline_item");
    rmsprop_step_entries(m.bias, gb, sq.bias, hp, "baseline_bias");
    done = end;
  }
  return total / static_cast<double>(2 * order.size());
}

/// Trains for cfg.hp.epochs epochs at the shared defaults.
template <typename Real>
inline BaselineParams<Real> train_baseline(const InteractionSet& train, const TrainConfig& cfg,
                                           std::uint64_t seed) {
  if (train.pairs.empty()) throw std::invalid_argument("train_baseline: empty train split");
  BaselineParams<Real> m = init_baseline<Real>(train.num_users, train.num_items, cfg.dim, seed);
  BaselineParams<Real> sq = init_baseline<Real>(train.num_users, train.num_items, cfg.dim, 0);
  sq.user.fill(Real(0));
  sq.item.fill(Real(0));
  Rng rng(seed ^ 0x6a09e667f3bcc909ULL);
  std::vector<std::pair<int, int>> order = train.pairs;
  for (int e = 0; e < cfg.hp.epochs; ++e) {
    baseline_epoch(m, sq, cfg.hp, rng, order);
  }
  return m;
}

template <typename Real>
struct BaselineFitResult {
  BaselineParams<Real> params;
  std::vector<BaselineEpoch> history;
};

/// Baseline counterpart of fit(): same epoch budget, validation cadence and
/// early stopping as the main model.
template <typename Real>
inline BaselineFitResult<Real> fit_baseline(const TrainConfig& cfg, const DatasetSplit& data) {
  if (data.train.pairs.empty()) throw std::invalid_argument("fit_baseline: empty train split");
  BaselineFitResult<Real> out;
  out.params =
      init_baseline<Real>(data.train.num_users, data.train.num_items, cfg.dim, cfg.hp.seed);
  BaselineParams<Real> sq =
      init_baseline<Real>(data.train.num_users, data.train.num_items, cfg.dim, 0);
  sq.user.fill(Real(0));
  sq.item.fill(Real(0));
  Rng rng(cfg.hp.seed ^ 0x6a09e667f3bcc909ULL);
  std::vector<std::pair<int, int>> order = data.train.pairs;

  double best_val = -1.0;
  int since_best = 0;
  for (int e = 0; e < cfg.hp.epochs; ++e) {
    BaselineEpoch rec;
    rec.epoch = e;
    rec.loss = baseline_epoch(out.params, sq, cfg.hp, rng, order);
    if (cfg.eval_every > 0 && (e + 1) % cfg.eval_every == 0 && !data.validation.pairs.empty()) {
      const int ks[1] = {cfg.eval_k};
      rec.val_precision =
          evaluate_ranking(baseline_scorer(out.params), data.validation, data.train, ks)
              .precision[0];
      rec.has_val = true;
    }
    out.history.push_back(rec);
    if (rec.has_val && cfg.patience > 0) {
      if (rec.val_precision > best_val) {
        best_val = rec.val_precision;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
  }
  return out;
}

/// Identical metric path as the main model: only the scorer differs.
template <typename Real>
inline MetricReport evaluate_baseline(const BaselineParams<Real>& params,
                                      const InteractionSet& test, const InteractionSet& train,
                                      std::span<const int> ks, int threads = 0) {
  return evaluate_ranking(baseline_scorer(params), test, train, ks, threads);
}

namespace ckpt {
constexpr char kBaselineMagic[4] = {'D', 'A', 'S', 'B'};
}

template <typename Real>
inline void save_baseline_checkpoint(const BaselineParams<Real>& m, const std::string& path) {
  ckpt::Writer w(path);
  w.bytes(ckpt::kBaselineMagic, 4);
  w.u32(ckpt::kVersion);
  w.u32(static_cast<std::uint32_t>(m.num_users));
  w.u32(static_cast<std::uint32_t>(m.num_items));
  w.u32(static_cast<std::uint32_t>(m.dim));
  ckpt::write_floats(w, m.user.data);
  ckpt::write_floats(w, m.item.data);
  ckpt::write_floats(w, m.bias);
  w.finish(path);
}

template <typename Real>
inline BaselineParams<Real> load_baseline_checkpoint(const std::string& path) {
  ckpt::Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, ckpt::kBaselineMagic, 4) != 0) {
    throw CheckpointError(CheckpointError::Kind::BadMagic, "bad baseline magic: " + path);
  }
  const std::uint32_t version = r.u32();
  if (version != ckpt::kVersion) {
    throw CheckpointError(CheckpointError::Kind::BadVersion,
                          "unsupported baseline checkpoint version " + std::to_string(version));
  }
  const int n = static_cast<int>(r.u32());
  const int m = static_cast<int>(r.u32());
  const int d = static_cast<int>(r.u32());
  BaselineParams<Real> out = init_baseline<Real>(n, m, d, 0);
  ckpt::read_floats(r, out.user.data);
  ckpt::read_floats(r, out.item.data);
  ckpt::read_floats(r, out.bias);
  if (!r.at_end()) {
    throw CheckpointError(CheckpointError::Kind::Truncated,
                          "baseline checkpoint has trailing bytes: " + path);
  }
  return out;
}

}  // namespace daso
