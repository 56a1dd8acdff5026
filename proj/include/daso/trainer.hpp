#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "daso/config.hpp"
#include "daso/dataset.hpp"
#include "daso/eval.hpp"
#include "daso/item_adv.hpp"
#include "daso/mapping.hpp"
#include "daso/optim.hpp"
#include "daso/params.hpp"
#include "daso/social_adv.hpp"

namespace daso {

struct EpochRecord {
  int epoch = 0;
  double disc_loss_item = 0.0;    // mean per-pair discriminator loss, item game
  double disc_loss_social = 0.0;  // mean per-pair discriminator loss, social game
  double cycle_loss = 0.0;        // mean per-user cycle reconstruction loss
  double val_precision = 0.0;
  bool has_val = false;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

namespace trainer_detail {

/// Endless shuffled batches over a fixed population; reshuffles in place
/// whenever the cursor runs off the end.
template <typename T>
class BatchCursor {
 public:
  BatchCursor() = default;
  BatchCursor(std::vector<T> items, Rng* rng) : items_(std::move(items)), rng_(rng) {}

  void fill(int count, std::vector<T>& out) {
    out.clear();
    for (int i = 0; i < count; ++i) {
      if (pos_ >= items_.size()) {
        rng_->shuffle(items_);
        pos_ = 0;
      }
      out.push_back(items_[pos_++]);
    }
  }
  bool valid() const { return !items_.empty(); }

 private:
  std::vector<T> items_;
  std::size_t pos_ = 0;
  Rng* rng_ = nullptr;
};

}  // namespace trainer_detail

/// Runs the alternating schedule: item discriminator, item generator, social
/// discriminator, social generator, cycle reconstruction. Each phase updates
/// only its own parameter groups; everything else is held fixed for that
/// step.
template <typename Real>
class Trainer {
 public:
  Trainer(const DatasetSplit& data, const SocialGraph& social, ModelParams<Real>& params,
          OptimState<Real>& optim, const TrainConfig& cfg)
      : data_(data), social_(social), params_(params), optim_(optim), cfg_(cfg),
        rng_(cfg.hp.seed ^ 0xd1b54a32d192ed03ULL) {
    if (data_.train.pairs.empty()) throw std::invalid_argument("trainer: empty train split");
    train_index_ = build_user_index(data_.train);
    std::vector<int> all_users(params_.num_users);
    for (int u = 0; u < params_.num_users; ++u) all_users[u] = u;
    pair_cursor_ = {data_.train.pairs, &rng_};
    edge_cursor_ = {social_.edges, &rng_};
    gen_item_users_ = {all_users, &rng_};
    gen_social_users_ = {all_users, &rng_};
    cycle_users_ = {all_users, &rng_};
    disc_item_grads_.init(params_);
    disc_social_grads_.init(params_);
    gen_item_grads_.init(params_);
    gen_social_grads_.init(params_);
    cycle_grads_.init(params_);
  }

  int steps_per_epoch() const {
    if (cfg_.hp.steps_per_epoch > 0) return cfg_.hp.steps_per_epoch;
    const std::size_t b = static_cast<std::size_t>(cfg_.hp.batch_size);
    return static_cast<int>((data_.train.pairs.size() + b - 1) / b);
  }

  /// One epoch: steps_per_epoch rounds of the alternating schedule. Within a
  /// round each model takes its k batches while the others stay fixed; the
  /// discriminators therefore track the generators batch by batch rather
  /// than across a whole stale phase.
  EpochRecord train_epoch() {
    const int steps = steps_per_epoch();
    EpochRecord rec;
    rec.epoch = epoch_++;
    double d_item = 0.0, d_soc = 0.0, cyc = 0.0;
    int cyc_rounds = 0;
    for (int s = 0; s < steps; ++s) {
      d_item += run_disc_item_steps(cfg_.k_disc);
      run_gen_item_steps(cfg_.k_gen);
      d_soc += run_disc_social_steps(cfg_.k_disc);
      run_gen_social_steps(cfg_.k_gen);
      if (cfg_.hp.lambda != 0.0) {
        cyc += run_cycle_steps(1);
        ++cyc_rounds;
      }
    }
    rec.disc_loss_item = cfg_.k_disc > 0 ? d_item / steps : 0.0;
    rec.disc_loss_social = cfg_.k_disc > 0 ? d_soc / steps : 0.0;
    rec.cycle_loss = cyc_rounds > 0 ? cyc / cyc_rounds : 0.0;
    return rec;
  }

  /// Item discriminator phase; returns the mean per-pair loss over the
  /// phase's batches (ln 2 at an uninformed start).
  double run_disc_item_steps(int steps) {
    if (steps <= 0) return 0.0;
    double total = 0.0;
    std::size_t pairs_seen = 0;
    std::vector<std::pair<int, int>> real, fake;
    for (int s = 0; s < steps; ++s) {
      pair_cursor_.fill(cfg_.hp.batch_size, real);
      make_item_fakes(real, fake);
      disc_item_grads_.init(params_);
      total += disc_loss_item<Real>(real, fake, params_, &disc_item_grads_);
      pairs_seen += real.size() + fake.size();
      rmsprop_step_rows(params_.x_item, disc_item_grads_.x, optim_.sq.x_item, optim_.hp, "x_item");
      rmsprop_step_rows(params_.y_item, disc_item_grads_.y, optim_.sq.y_item, optim_.hp, "y_item");
      rmsprop_step_entries(params_.a_item, disc_item_grads_.a, optim_.sq.a_item, optim_.hp,
                           "a_item");
    }
    return total / static_cast<double>(pairs_seen);
  }

  double run_gen_item_steps(int steps) {
    if (steps <= 0) return 0.0;
    double reward = 0.0;
    std::vector<int> users;
    PolicyGradOptions opt{cfg_.reward_baseline};
    for (int s = 0; s < steps; ++s) {
      gen_item_users_.fill(cfg_.hp.batch_size, users);
      clear_gen_item_grads();
      reward += gen_policy_grad_item<Real>(users, cfg_.hp.samples_per_user, params_, rng_,
                                           gen_item_grads_, opt);
      rmsprop_step<Real>(span_of(params_.q_item), span_of(gen_item_grads_.q_item),
                         span_of(optim_.sq.q_item), optim_.hp, "q_item");
      rmsprop_step<Real>(params_.b_item, gen_item_grads_.b_item, optim_.sq.b_item, optim_.hp,
                         "b_item");
      rmsprop_step_net(params_.map_si, gen_item_grads_.map_si, optim_.sq.map_si, optim_.hp,
                       "map_si");
      rmsprop_step_rows(params_.p_soc, gen_item_grads_.p_soc, optim_.sq.p_soc, optim_.hp,
                        "p_soc");
    }
    return reward / steps;
  }

  double run_disc_social_steps(int steps) {
    if (steps <= 0 || !edge_cursor_.valid()) return 0.0;
    double total = 0.0;
    std::size_t pairs_seen = 0;
    std::vector<std::pair<int, int>> real, fake;
    for (int s = 0; s < steps; ++s) {
      edge_cursor_.fill(cfg_.hp.batch_size, real);
      make_social_fakes(real, fake);
      disc_social_grads_.init(params_);
      total += disc_loss_social<Real>(real, fake, params_, &disc_social_grads_);
      pairs_seen += real.size() + fake.size();
      rmsprop_step_rows(params_.x_soc, disc_social_grads_.x, optim_.sq.x_soc, optim_.hp, "x_soc");
      rmsprop_step_entries(params_.a_soc, disc_social_grads_.a, optim_.sq.a_soc, optim_.hp,
                           "a_soc");
    }
    return total / static_cast<double>(pairs_seen);
  }

  double run_gen_social_steps(int steps) {
    if (steps <= 0 || params_.num_users < 2) return 0.0;
    double reward = 0.0;
    std::vector<int> users;
    PolicyGradOptions opt{cfg_.reward_baseline};
    for (int s = 0; s < steps; ++s) {
      gen_social_users_.fill(cfg_.hp.batch_size, users);
      clear_gen_social_grads();
      reward += gen_policy_grad_social<Real>(users, cfg_.hp.samples_per_user, params_, rng_,
                                             gen_social_grads_, opt);
      rmsprop_step<Real>(span_of(params_.p_soc), span_of(gen_social_grads_.p_soc),
                         span_of(optim_.sq.p_soc), optim_.hp, "p_soc");
      rmsprop_step<Real>(params_.b_soc, gen_social_grads_.b_soc, optim_.sq.b_soc, optim_.hp,
                         "b_soc");
      rmsprop_step_net(params_.map_is, gen_social_grads_.map_is, optim_.sq.map_is, optim_.hp,
                       "map_is");
      rmsprop_step_rows(params_.p_item, gen_social_grads_.p_item, optim_.sq.p_item, optim_.hp,
                        "p_item");
    }
    return reward / steps;
  }

  double run_cycle_steps(int steps) {
    if (steps <= 0) return 0.0;
    double total = 0.0;
    std::size_t users_seen = 0;
    std::vector<int> users;
    for (int s = 0; s < steps; ++s) {
      cycle_users_.fill(cfg_.hp.batch_size, users);
      cycle_grads_.init(params_);
      total += cycle_loss<Real>(users, params_, &cycle_grads_);
      users_seen += users.size();
      const Real lam = static_cast<Real>(cfg_.hp.lambda);
      cycle_grads_.map_si.scale(lam);
      cycle_grads_.map_is.scale(lam);
      rmsprop_step_net(params_.map_si, cycle_grads_.map_si, optim_.sq.map_si, optim_.hp,
                       "map_si");
      rmsprop_step_net(params_.map_is, cycle_grads_.map_is, optim_.sq.map_is, optim_.hp,
                       "map_is");
      if (!cfg_.freeze_cycle_embeddings) {
        cycle_grads_.p_item.scale(lam);
        cycle_grads_.p_soc.scale(lam);
        rmsprop_step_rows(params_.p_item, cycle_grads_.p_item, optim_.sq.p_item, optim_.hp,
                          "p_item");
        rmsprop_step_rows(params_.p_soc, cycle_grads_.p_soc, optim_.sq.p_soc, optim_.hp,
                          "p_soc");
      }
    }
    return total / static_cast<double>(users_seen);
  }

 private:
  static std::span<Real> span_of(Table<Real>& t) { return {t.data.data(), t.data.size()}; }
  static std::span<const Real> span_of(const Table<Real>& t) {
    return {t.data.data(), t.data.size()};
  }

  void make_item_fakes(const std::vector<std::pair<int, int>>& real,
                       std::vector<std::pair<int, int>>& fake) {
    fake.clear();
    std::vector<Real> probs(params_.num_items);
    MlpCache<Real> cache;
    for (auto [u, v] : real) {
      mlp_forward_cached<Real>(params_.map_si, params_.p_soc.row(u), cache);
      const auto& rep = cache.act.back();
      gen_item_probs<Real>(params_, {rep.data(), rep.size()}, {probs.data(), probs.size()});
      int draw = sample_categorical<Real>({probs.data(), probs.size()}, rng_);
      if (cfg_.exclude_observed_fakes) {
        for (int tries = 0; tries < 50 && train_index_.contains(u, draw); ++tries) {
          draw = sample_categorical<Real>({probs.data(), probs.size()}, rng_);
        }
      }
      fake.emplace_back(u, draw);
    }
  }

  void make_social_fakes(const std::vector<std::pair<int, int>>& real,
                         std::vector<std::pair<int, int>>& fake) {
    fake.clear();
    std::vector<Real> probs(params_.num_users);
    MlpCache<Real> cache;
    for (auto [i, k] : real) {
      mlp_forward_cached<Real>(params_.map_is, params_.p_item.row(i), cache);
      const auto& rep = cache.act.back();
      gen_social_probs<Real>(params_, i, {rep.data(), rep.size()}, {probs.data(), probs.size()});
      fake.emplace_back(i, sample_categorical<Real>({probs.data(), probs.size()}, rng_));
    }
  }

  void clear_gen_item_grads() {
    gen_item_grads_.p_soc = RowGrads<Real>(params_.dim);
    gen_item_grads_.map_si.clear();
    gen_item_grads_.q_item.fill(Real(0));
    gen_item_grads_.b_item.assign(gen_item_grads_.b_item.size(), Real(0));
  }
  void clear_gen_social_grads() {
    gen_social_grads_.p_item = RowGrads<Real>(params_.dim);
    gen_social_grads_.map_is.clear();
    gen_social_grads_.p_soc.fill(Real(0));
    gen_social_grads_.b_soc.assign(gen_social_grads_.b_soc.size(), Real(0));
  }

  const DatasetSplit& data_;
  const SocialGraph& social_;
  ModelParams<Real>& params_;
  OptimState<Real>& optim_;
  TrainConfig cfg_;
  Rng rng_;
  UserIndex train_index_;
  int epoch_ = 0;

  trainer_detail::BatchCursor<std::pair<int, int>> pair_cursor_;
  trainer_detail::BatchCursor<std::pair<int, int>> edge_cursor_;
  trainer_detail::BatchCursor<int> gen_item_users_;
  trainer_detail::BatchCursor<int> gen_social_users_;
  trainer_detail::BatchCursor<int> cycle_users_;

  DiscItemGrads<Real> disc_item_grads_;
  DiscSocialGrads<Real> disc_social_grads_;
  GenItemGrads<Real> gen_item_grads_;
  GenSocialGrads<Real> gen_social_grads_;
  CycleGrads<Real> cycle_grads_;
};

template <typename Real>
struct FitResult {
  ModelParams<Real> params;
  OptimState<Real> optim;
  TrainHistory history;
};

/// Initializes a model and trains it for cfg.hp.epochs epochs (or until the
/// validation precision stops improving for `patience` rounds). Inference
/// afterwards uses the generator representations.
template <typename Real>
inline FitResult<Real> fit(const TrainConfig& cfg, const DatasetSplit& data,
                           const SocialGraph& social) {
  FitResult<Real> out;
  out.params = init_model<Real>(data.train.num_users, data.train.num_items, cfg.dim,
                                cfg.hidden_or_default(), cfg.hp.seed);
  out.optim = make_optim_state(out.params, cfg.hp);
  Trainer<Real> trainer(data, social, out.params, out.optim, cfg);

  double best_val = -1.0;
  int since_best = 0;
  for (int e = 0; e < cfg.hp.epochs; ++e) {
    EpochRecord rec = trainer.train_epoch();
    if (cfg.eval_every > 0 && (e + 1) % cfg.eval_every == 0 &&
        !data.validation.pairs.empty()) {
      const int ks[1] = {cfg.eval_k};
      rec.val_precision = evaluate<Real>(out.params, data.validation, data.train, ks)
                              .precision[0];
      rec.has_val = true;
    }
    out.history.epochs.push_back(rec);
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

}  // namespace daso
