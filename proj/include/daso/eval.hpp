#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "daso/dataset.hpp"
#include "daso/mapping.hpp"
#include "daso/math.hpp"
#include "daso/params.hpp"

namespace daso {

/// Items for one user ordered by descending score, ties broken toward the
/// lower item index. `truncated` marks lists cut short because fewer than K
/// candidates remained after exclusion.
struct RankedList {
  int user = 0;
  std::vector<int> items;
  std::vector<double> scores;
  bool truncated = false;
};

struct MetricReport {
  std::vector<int> ks;
  std::vector<double> precision;  // parallel to ks
  std::vector<double> ndcg;       // parallel to ks
  int users_evaluated = 0;
};

/// Computes scores for every item given a user: the pluggable ranking model.
using ScoreFn = std::function<void(int user, std::span<double> scores)>;

/// Generator ranking scores for the main model: p_u^{SI} . q_j + b_j.
template <typename Real>
inline ScoreFn generator_scorer(const ModelParams<Real>& params) {
  return [&params](int u, std::span<double> scores) {
    const std::vector<Real> rep = mlp_forward<Real>(params.map_si, params.p_soc.row(u));
    for (int j = 0; j < params.num_items; ++j) {
      scores[j] = dot<Real>({rep.data(), rep.size()}, params.q_item.row(j)) +
                  static_cast<double>(params.b_item[j]);
    }
  };
}

/// Top-K from a dense score vector with an exclusion list (sorted indices).
inline RankedList rank_topk(int user, std::span<const double> scores, int k,
                            std::span<const int> exclude) {
  if (k < 1) throw std::invalid_argument("rank_topk: K must be >= 1");
  RankedList out;
  out.user = user;
  std::vector<int> candidates;
  candidates.reserve(scores.size());
  for (int j = 0; j < static_cast<int>(scores.size()); ++j) {
    if (!std::binary_search(exclude.begin(), exclude.end(), j)) candidates.push_back(j);
  }
  const int take = std::min<int>(k, static_cast<int>(candidates.size()));
  auto better = [&scores](int a, int b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
  };
  std::partial_sort(candidates.begin(), candidates.begin() + take, candidates.end(), better);
  out.items.assign(candidates.begin(), candidates.begin() + take);
  out.scores.reserve(take);
  for (int j : out.items) out.scores.push_back(scores[j]);
  out.truncated = take < k;
  return out;
}

/// Top-K recommendations for one user from the trained generator
/// representations, with (typically) the user's training items excluded.
template <typename Real>
inline RankedList recommend_topk(const ModelParams<Real>& params, int u, int k,
                                 std::span<const int> exclude) {
  std::vector<double> scores(params.num_items);
  generator_scorer(params)(u, {scores.data(), scores.size()});
  return rank_topk(u, {scores.data(), scores.size()}, k, exclude);
}

/// |top-K intersect relevant| / K. `relevant` must be sorted.
inline double precision_at_k(const RankedList& ranked, std::span<const int> relevant, int k) {
  const int take = std::min<int>(k, static_cast<int>(ranked.items.size()));
  int hits = 0;
  for (int r = 0; r < take; ++r) {
    if (std::binary_search(relevant.begin(), relevant.end(), ranked.items[r])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(k);
}

/// Binary-relevance NDCG with 1/log2(rank+1) discounts; the ideal DCG is
/// truncated at min(|relevant|, K) so a perfect ranking scores exactly 1.
inline double ndcg_at_k(const RankedList& ranked, std::span<const int> relevant, int k) {
  const int take = std::min<int>(k, static_cast<int>(ranked.items.size()));
  double dcg = 0.0;
  for (int r = 0; r < take; ++r) {
    if (std::binary_search(relevant.begin(), relevant.end(), ranked.items[r])) {
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
  }
  const int ideal = std::min<int>(k, static_cast<int>(relevant.size()));
  double idcg = 0.0;
  for (int r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return idcg > 0.0 ? dcg / idcg : 0.0;
}

inline int eval_threads() {
  unsigned n = std::thread::hardware_concurrency();
  if (n == 0) n = 1;
  if (const char* cap = std::getenv("DASO_THREADS")) {
    const long v = std::strtol(cap, nullptr, 10);
    if (v >= 1 && static_cast<unsigned>(v) < n) n = static_cast<unsigned>(v);
  }
  return static_cast<int>(n);
}

/// Precision@K and NDCG@K averaged over users with at least one test item.
/// Per-user work fans out over threads; the final reduction runs in user
/// order so the report does not depend on the thread count.
inline MetricReport evaluate_ranking(const ScoreFn& score_all, const InteractionSet& test,
                                     const InteractionSet& train, std::span<const int> ks,
                                     int threads = 0) {
  if (test.num_items != train.num_items || test.num_users != train.num_users) {
    throw std::invalid_argument("evaluate: train/test dimension mismatch");
  }
  if (ks.empty()) throw std::invalid_argument("evaluate: no K values");
  const int max_k = *std::max_element(ks.begin(), ks.end());

  const UserIndex test_idx = build_user_index(test);
  const UserIndex train_idx = build_user_index(train);
  std::vector<int> users;
  for (int u = 0; u < test.num_users; ++u) {
    if (!test_idx.of(u).empty()) users.push_back(u);
  }
  if (users.empty()) throw std::runtime_error("evaluate: no users with test interactions");

  const int nk = static_cast<int>(ks.size());
  std::vector<double> per_user(users.size() * nk * 2);
  const int t = threads > 0 ? threads : eval_threads();
  const int nthreads = std::max(1, std::min<int>(t, static_cast<int>(users.size())));

  auto worker = [&](std::size_t lo, std::size_t hi) {
    std::vector<double> scores(test.num_items);
    for (std::size_t i = lo; i < hi; ++i) {
      const int u = users[i];
      score_all(u, {scores.data(), scores.size()});
      const RankedList ranked =
          rank_topk(u, {scores.data(), scores.size()}, max_k, train_idx.of(u));
      const auto relevant = test_idx.of(u);
      for (int j = 0; j < nk; ++j) {
        per_user[(i * nk + j) * 2 + 0] = precision_at_k(ranked, relevant, ks[j]);
        per_user[(i * nk + j) * 2 + 1] = ndcg_at_k(ranked, relevant, ks[j]);
      }
    }
  };
  if (nthreads == 1) {
    worker(0, users.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (users.size() + nthreads - 1) / nthreads;
    for (int w = 0; w < nthreads; ++w) {
      const std::size_t lo = w * chunk;
      const std::size_t hi = std::min(users.size(), lo + chunk);
      if (lo < hi) pool.emplace_back(worker, lo, hi);
    }
    for (auto& th : pool) th.join();
  }

  MetricReport report;
  report.ks.assign(ks.begin(), ks.end());
  report.precision.assign(nk, 0.0);
  report.ndcg.assign(nk, 0.0);
  report.users_evaluated = static_cast<int>(users.size());
  for (std::size_t i = 0; i < users.size(); ++i) {
    for (int j = 0; j < nk; ++j) {
      report.precision[j] += per_user[(i * nk + j) * 2 + 0];
      report.ndcg[j] += per_user[(i * nk + j) * 2 + 1];
    }
  }
  for (int j = 0; j < nk; ++j) {
    report.precision[j] /= report.users_evaluated;
    report.ndcg[j] /= report.users_evaluated;
  }
  return report;
}

/// Metrics for the main model's generator representations.
template <typename Real>
inline MetricReport evaluate(const ModelParams<Real>& params, const InteractionSet& test,
                             const InteractionSet& train, std::span<const int> ks,
                             int threads = 0) {
  return evaluate_ranking(generator_scorer(params), test, train, ks, threads);
}

inline std::string format_report_text(const MetricReport& r) {
  char buf[128];
  std::ostringstream os;
  os << "     K  Precision@K      NDCG@K\n";
  for (std::size_t j = 0; j < r.ks.size(); ++j) {
    std::snprintf(buf, sizeof(buf), "%6d  %11.6f  %10.6f\n", r.ks[j], r.precision[j], r.ndcg[j]);
    os << buf;
  }
  os << "users evaluated: " << r.users_evaluated << "\n";
  return os.str();
}

/// One machine-readable line per (metric, K), fixed field order.
inline std::vector<std::string> format_report_records(const MetricReport& r) {
  std::vector<std::string> lines;
  char buf[128];
  for (std::size_t j = 0; j < r.ks.size(); ++j) {
    std::snprintf(buf, sizeof(buf), "metric=precision k=%d value=%.8f users=%d", r.ks[j],
                  r.precision[j], r.users_evaluated);
    lines.emplace_back(buf);
  }
  for (std::size_t j = 0; j < r.ks.size(); ++j) {
    std::snprintf(buf, sizeof(buf), "metric=ndcg k=%d value=%.8f users=%d", r.ks[j], r.ndcg[j],
                  r.users_evaluated);
    lines.emplace_back(buf);
  }
  return lines;
}

}  // namespace daso
