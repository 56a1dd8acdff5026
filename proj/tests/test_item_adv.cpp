#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "daso/item_adv.hpp"
#include "daso/optim.hpp"
#include "test_util.hpp"

using namespace daso;
using daso_test::central_diff;
using daso_test::grad_close;

namespace {

template <typename Real>
ModelParams<Real> random_params(int n, int m, int d, std::uint64_t seed, double emb_scale = 1.0) {
  auto params = make_model<Real>(n, m, d, {2 * d, 2 * d, 2 * d});
  Rng rng(seed);
  for (Table<Real>* t : {&params.p_item, &params.q_item, &params.x_item, &params.y_item,
                         &params.p_soc, &params.x_soc}) {
    for (Real& v : t->data) v = static_cast<Real>(rng.uniform(-emb_scale, emb_scale));
  }
  for (auto* b : {&params.a_item, &params.b_item, &params.a_soc, &params.b_soc}) {
    for (Real& v : *b) v = static_cast<Real>(rng.uniform(-0.5, 0.5));
  }
  init_mapping_net(params.map_si, rng);
  init_mapping_net(params.map_is, rng);
  return params;
}

}  // namespace

TEST_CASE("discriminator item score: hand values and bilinearity") {
  auto params = make_model<double>(2, 2, 2, {4});
  REQUIRE(disc_score_item(0, 0, params) == 0.0);

  params.x_item.row(0)[0] = 1.0;
  params.x_item.row(0)[1] = 2.0;
  params.y_item.row(1)[0] = 3.0;
  params.y_item.row(1)[1] = 4.0;
  params.a_item[1] = 0.5;
  REQUIRE(disc_score_item(0, 1, params) == Catch::Approx(11.5).epsilon(1e-14));

  // doubling x doubles (f - a)
  params.x_item.row(0)[0] *= 2.0;
  params.x_item.row(0)[1] *= 2.0;
  REQUIRE(disc_score_item(0, 1, params) - 0.5 == Catch::Approx(22.0).epsilon(1e-14));
}

TEST_CASE("discriminator item probability: sigmoid with overflow safety") {
  auto params = make_model<double>(1, 3, 1, {2});
  REQUIRE(disc_prob_item(0, 0, params) == 0.5);

  params.a_item[1] = 1000.0;
  params.a_item[2] = -1000.0;
  REQUIRE(disc_prob_item(0, 1, params) == 1.0);
  REQUIRE(disc_prob_item(0, 2, params) >= 0.0);
  REQUIRE(disc_prob_item(0, 2, params) < 1e-300);

  params.a_item[0] = 2.0;
  REQUIRE(disc_prob_item(0, 0, params) ==
          Catch::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-12));
  REQUIRE(disc_prob_item(0, 0, params) == Catch::Approx(0.880797).epsilon(1e-5));
}

TEST_CASE("generator item distribution: uniform, closed form, shift invariant") {
  SECTION("equal scores give 1/M") {
    auto params = make_model<double>(1, 4, 2, {4});
    const auto dist = gen_dist_item(0, params);
    for (double p : dist) REQUIRE(p == Catch::Approx(0.25).epsilon(1e-12));
  }

  SECTION("scores (0, ln 2) over two items give (1/3, 2/3)") {
    auto two = make_model<double>(1, 2, 2, {4});
    two.b_item[1] = std::log(2.0);
    const auto dist = gen_dist_item(0, two);
    REQUIRE(dist[0] == Catch::Approx(1.0 / 3.0).epsilon(1e-12));
    REQUIRE(dist[1] == Catch::Approx(2.0 / 3.0).epsilon(1e-12));
  }

  SECTION("adding a constant to every score leaves the distribution unchanged") {
    auto p2 = random_params<double>(3, 6, 4, 11);
    const auto before = gen_dist_item(1, p2);
    for (auto& b : p2.b_item) b += 7.25;
    const auto after = gen_dist_item(1, p2);
    for (int j = 0; j < 6; ++j) REQUIRE(after[j] == Catch::Approx(before[j]).epsilon(1e-10));
  }
}

TEST_CASE("generator item distribution normalizes for random parameters") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto params = random_params<float>(4, 50, 8, 1000 + seed);
    for (int u = 0; u < 4; ++u) {
      const auto dist = gen_dist_item(u, params);
      double sum = 0.0;
      for (float p : dist) {
        REQUIRE(p >= 0.0f);
        sum += p;
      }
      REQUIRE(std::abs(sum - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("item sampling: near point mass, frequencies, determinism") {
  SECTION("a dominant score is drawn every time") {
    auto params = make_model<double>(1, 5, 1, {2});
    params.b_item[3] = 50.0;
    Rng rng(1);
    for (const auto& s : sample_items(0, 200, params, rng)) {
      REQUIRE(s.item == 3);
      REQUIRE(s.generated);
      REQUIRE(s.logp <= 0.0);
    }
  }

  SECTION("uniform over M = 5: empirical frequencies within 3 sigma of 0.2") {
    auto params = make_model<double>(1, 5, 1, {2});
    Rng rng(22);
    const int n = 100000;
    std::vector<int> counts(5, 0);
    for (const auto& s : sample_items(0, n, params, rng)) ++counts[s.item];
    const double sigma = std::sqrt(0.2 * 0.8 / n);
    for (int j = 0; j < 5; ++j) {
      REQUIRE(std::abs(counts[j] / static_cast<double>(n) - 0.2) <= 3.0 * sigma);
    }
  }

  SECTION("same rng seed gives the same sample sequence") {
    const auto params = random_params<double>(2, 12, 3, 5);
    Rng r1(99), r2(99);
    const auto a = sample_items(1, 40, params, r1);
    const auto b = sample_items(1, 40, params, r2);
    for (int k = 0; k < 40; ++k) {
      REQUIRE(a[k].item == b[k].item);
      REQUIRE(a[k].logp == b[k].logp);
    }
  }
}

TEST_CASE("discriminator item loss: ln 2 start, saturation, finite differences") {
  SECTION("all scores zero gives (|real| + |fake|) ln 2") {
    auto params = make_model<double>(3, 3, 2, {4});
    const std::vector<std::pair<int, int>> real = {{0, 0}, {1, 1}, {2, 2}};
    const std::vector<std::pair<int, int>> fake = {{0, 1}, {1, 2}};
    const double loss = disc_loss_item<double>(real, fake, params, nullptr);
    REQUIRE(loss == Catch::Approx(5.0 * std::log(2.0)).epsilon(1e-12));
  }

  SECTION("perfect separation drives the loss to ~0") {
    auto params = make_model<double>(2, 2, 2, {4});
    params.a_item[0] = 40.0;   // real item
    params.a_item[1] = -40.0;  // fake item
    const std::vector<std::pair<int, int>> real = {{0, 0}, {1, 0}};
    const std::vector<std::pair<int, int>> fake = {{0, 1}, {1, 1}};
    REQUIRE(disc_loss_item<double>(real, fake, params, nullptr) < 1e-15);
  }

  SECTION("analytic gradients match central finite differences") {
    Rng rng(314);
    for (int trial = 0; trial < 8; ++trial) {
      auto params = random_params<double>(4, 5, 2 + static_cast<int>(rng.uniform_index(7)),
                                          rng.next_bits());
      std::vector<std::pair<int, int>> real, fake;
      const int batch = 1 + static_cast<int>(rng.uniform_index(4));
      for (int i = 0; i < batch; ++i) {
        real.push_back(
            {static_cast<int>(rng.uniform_index(4)), static_cast<int>(rng.uniform_index(5))});
        fake.push_back(
            {static_cast<int>(rng.uniform_index(4)), static_cast<int>(rng.uniform_index(5))});
      }
      DiscItemGrads<double> grads;
      grads.init(params);
      disc_loss_item<double>(real, fake, params, &grads);
      auto eval = [&] { return disc_loss_item<double>(real, fake, params, nullptr); };

      for (std::size_t r = 0; r < grads.x.rows.size(); ++r) {
        for (int k = 0; k < params.dim; ++k) {
          const double fd = central_diff(eval, &params.x_item.row(grads.x.rows[r])[k]);
          REQUIRE(grad_close(grads.x.grads[r][k], fd));
        }
      }
      for (std::size_t r = 0; r < grads.y.rows.size(); ++r) {
        for (int k = 0; k < params.dim; ++k) {
          const double fd = central_diff(eval, &params.y_item.row(grads.y.rows[r])[k]);
          REQUIRE(grad_close(grads.y.grads[r][k], fd));
        }
      }
      for (std::size_t r = 0; r < grads.a.idx.size(); ++r) {
        const double fd = central_diff(eval, &params.a_item[grads.a.idx[r]]);
        REQUIRE(grad_close(grads.a.g[r], fd));
      }
    }
  }

  SECTION("empty batches are rejected") {
    auto params = make_model<double>(2, 2, 2, {4});
    const std::vector<std::pair<int, int>> some = {{0, 0}};
    REQUIRE_THROWS_AS(disc_loss_item<double>({}, some, params, nullptr), std::invalid_argument);
    REQUIRE_THROWS_AS(disc_loss_item<double>(some, {}, params, nullptr), std::invalid_argument);
  }
}

TEST_CASE("one discriminator step decreases the loss (descent at lr = 1e-4)") {
  auto params = random_params<double>(6, 8, 4, 99);
  HyperParams hp;
  hp.learning_rate = 1e-4;
  auto optim = make_optim_state(params, hp);
  std::vector<std::pair<int, int>> real, fake;
  Rng rng(5);
  for (int i = 0; i < 8; ++i) {
    real.push_back(
        {static_cast<int>(rng.uniform_index(6)), static_cast<int>(rng.uniform_index(8))});
    fake.push_back(
        {static_cast<int>(rng.uniform_index(6)), static_cast<int>(rng.uniform_index(8))});
  }
  DiscItemGrads<double> grads;
  grads.init(params);
  const double before = disc_loss_item<double>(real, fake, params, &grads);
  rmsprop_step_rows(params.x_item, grads.x, optim.sq.x_item, hp, "x_item");
  rmsprop_step_rows(params.y_item, grads.y, optim.sq.y_item, hp, "y_item");
  rmsprop_step_entries(params.a_item, grads.a, optim.sq.a_item, hp, "a_item");
  const double after = disc_loss_item<double>(real, fake, params, nullptr);
  REQUIRE(after < before);
}

TEST_CASE("reward log(1 + exp(f)) is positive and monotone") {
  double prev = 0.0;
  bool first = true;
  for (double f : {-700.0, -30.0, -1.0, 0.0, 0.5, 3.0, 50.0, 800.0}) {
    const double r = softplus(f);
    REQUIRE(r >= 0.0);
    if (f > -600.0) REQUIRE(r > 0.0);
    if (!first) REQUIRE(r > prev);
    prev = r;
    first = false;
  }
}

TEST_CASE("softmax log-gradient identity: sum_j G_j grad log G_j = 0") {
  const auto params = random_params<double>(2, 7, 3, 1234);
  const auto dist = gen_dist_item(0, params);
  for (int coord_item = 0; coord_item < 7; ++coord_item) {
    double sum_b = 0.0;
    for (int j = 0; j < 7; ++j) {
      const double indicator = coord_item == j ? 1.0 : 0.0;
      sum_b += dist[j] * (indicator - dist[coord_item]);
    }
    REQUIRE(std::abs(sum_b) <= 1e-12);
  }
}

TEST_CASE("policy gradient: zero reward gives exactly zero gradients") {
  auto params = random_params<double>(3, 6, 4, 777);
  for (auto& a : params.a_item) a = -800.0;  // softplus underflows to exactly 0
  for (auto& x : params.x_item.data) x = 0.0;
  for (auto& y : params.y_item.data) y = 0.0;
  GenItemGrads<double> grads;
  grads.init(params);
  Rng rng(3);
  const std::vector<int> users = {0, 2};
  const double reward = gen_policy_grad_item<double>(users, 5, params, rng, grads);
  REQUIRE(reward == 0.0);
  for (double v : grads.q_item.data) REQUIRE(v == 0.0);
  for (double v : grads.b_item) REQUIRE(v == 0.0);
  for (const auto& t : grads.map_si.w) {
    for (double v : t.data) REQUIRE(v == 0.0);
  }
  for (const auto& g : grads.p_soc.grads) {
    for (double v : g) REQUIRE(v == 0.0);
  }
}

TEST_CASE("policy gradient: M = 1 degenerate distribution gives exactly zero") {
  auto params = random_params<double>(2, 1, 3, 555);
  GenItemGrads<double> grads;
  grads.init(params);
  Rng rng(8);
  const std::vector<int> users = {0, 1};
  gen_policy_grad_item<double>(users, 4, params, rng, grads);
  for (double v : grads.q_item.data) REQUIRE(v == 0.0);
  for (double v : grads.b_item) REQUIRE(v == 0.0);
  for (const auto& t : grads.map_si.w) {
    for (double v : t.data) REQUIRE(v == 0.0);
  }
}

TEST_CASE("REINFORCE estimator is unbiased against the exact expectation") {
  // Exact gradient = sum_j G(j|u) grad log G(j|u) r(j), enumerated over all
  // items; the sampled estimator must agree within 3 standard errors per
  // coordinate.
  const int m = 10, d = 4;
  const auto params = random_params<double>(3, m, d, 20240);
  const int u = 1;

  MlpCache<double> cache;
  mlp_forward_cached<double>(params.map_si, params.p_soc.row(u), cache);
  const std::vector<double> p_si = cache.act.back();
  std::vector<double> probs(m);
  gen_item_probs<double>(params, {p_si.data(), p_si.size()}, {probs.data(), probs.size()});

  std::vector<double> rewards(m);
  for (int j = 0; j < m; ++j) rewards[j] = softplus(disc_score_item(u, j, params));
  std::vector<double> qbar(d, 0.0);
  for (int j = 0; j < m; ++j) {
    for (int k = 0; k < d; ++k) qbar[k] += probs[j] * params.q_item.row(j)[k];
  }

  // coordinates: q (m*d), b (m), dp_si (d) -- the map-net/p_soc gradients
  // are a fixed linear image of dp_si, so checking dp_si covers the chain.
  const int coords = m * d + m + d;
  auto per_sample = [&](int v, std::vector<double>& g) {
    g.assign(coords, 0.0);
    for (int j = 0; j < m; ++j) {
      const double coef = ((j == v ? 1.0 : 0.0) - probs[j]) * rewards[v];
      for (int k = 0; k < d; ++k) g[j * d + k] = coef * p_si[k];
      g[m * d + j] = coef;
    }
    for (int k = 0; k < d; ++k) {
      g[m * d + m + k] = rewards[v] * (params.q_item.row(v)[k] - qbar[k]);
    }
  };

  std::vector<double> exact(coords, 0.0), g(coords);
  for (int v = 0; v < m; ++v) {
    per_sample(v, g);
    for (int c = 0; c < coords; ++c) exact[c] += probs[v] * g[c];
  }

  const int n = 40000;
  std::vector<double> sum(coords, 0.0), sumsq(coords, 0.0);
  Rng rng(424242);
  for (int k = 0; k < n; ++k) {
    const int v = sample_categorical<double>({probs.data(), probs.size()}, rng);
    per_sample(v, g);
    for (int c = 0; c < coords; ++c) {
      sum[c] += g[c];
      sumsq[c] += g[c] * g[c];
    }
  }
  for (int c = 0; c < coords; ++c) {
    const double mean = sum[c] / n;
    const double var = std::max(0.0, sumsq[c] / n - mean * mean);
    const double se = std::sqrt(var / n);
    REQUIRE(std::abs(mean - exact[c]) <= 3.0 * se + 1e-12);
  }
}

TEST_CASE("gen_policy_grad_item computes the REINFORCE formula draw for draw") {
  // Re-derive the estimate from the same draws with straightforward loops
  // and compare against the production accumulation.
  const int m = 6, d = 3, n = 7;
  const auto params = random_params<double>(4, m, d, 99991);
  const std::vector<int> users = {2, 0};

  GenItemGrads<double> grads;
  grads.init(params);
  Rng rng(1717);
  gen_policy_grad_item<double>(users, n, params, rng, grads);

  Table<double> want_q(m, d);
  std::vector<double> want_b(m, 0.0);
  MlpGrads<double> want_map;
  want_map.init_like(params.map_si);
  RowGrads<double> want_psoc(d);
  Rng rng2(1717);  // identical draw sequence
  MlpCache<double> cache;
  for (int u : users) {
    mlp_forward_cached<double>(params.map_si, params.p_soc.row(u), cache);
    const std::vector<double> p_si = cache.act.back();
    std::vector<double> probs(m);
    gen_item_probs<double>(params, {p_si.data(), p_si.size()}, {probs.data(), probs.size()});
    std::vector<double> dp_si(d, 0.0);
    for (int k = 0; k < n; ++k) {
      const int v = sample_categorical<double>({probs.data(), probs.size()}, rng2);
      const double r = softplus(disc_score_item(u, v, params));
      // d(-J)/dtheta += -(1 / (n |U|)) * r * dlog G(v|u)/dtheta
      for (int j = 0; j < m; ++j) {
        const double coef = -r * ((j == v ? 1.0 : 0.0) - probs[j]) / (n * 2.0);
        for (int kk = 0; kk < d; ++kk) want_q.row(j)[kk] += coef * p_si[kk];
        want_b[j] += coef;
      }
      for (int kk = 0; kk < d; ++kk) {
        double qbar_k = 0.0;
        for (int j = 0; j < m; ++j) qbar_k += probs[j] * params.q_item.row(j)[kk];
        dp_si[kk] += -r * (params.q_item.row(v)[kk] - qbar_k) / (n * 2.0);
      }
    }
    std::vector<double> dx(d);
    mlp_backward<double>(params.map_si, cache, {dp_si.data(), dp_si.size()}, want_map,
                         {dx.data(), dx.size()});
    axpy<double>(1.0, {dx.data(), dx.size()}, want_psoc.acc(u));
  }

  for (int j = 0; j < m; ++j) {
    for (int k = 0; k < d; ++k) {
      REQUIRE(grads.q_item.row(j)[k] == Catch::Approx(want_q.row(j)[k]).margin(1e-12));
    }
    REQUIRE(grads.b_item[j] == Catch::Approx(want_b[j]).margin(1e-12));
  }
  for (int l = 0; l < params.map_si.num_layers(); ++l) {
    for (std::size_t i = 0; i < want_map.w[l].data.size(); ++i) {
      REQUIRE(grads.map_si.w[l].data[i] == Catch::Approx(want_map.w[l].data[i]).margin(1e-12));
    }
  }
  for (int u : users) {
    const auto got = grads.p_soc.find(u);
    const auto want = want_psoc.find(u);
    for (int k = 0; k < d; ++k) REQUIRE(got[k] == Catch::Approx(want[k]).margin(1e-12));
  }
}
