#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "daso/optim.hpp"
#include "daso/social_adv.hpp"
#include "test_util.hpp"

using namespace daso;
using daso_test::central_diff;
using daso_test::grad_close;

namespace {

template <typename Real>
ModelParams<Real> random_params(int n, int m, int d, std::uint64_t seed) {
  auto params = make_model<Real>(n, m, d, {2 * d, 2 * d, 2 * d});
  Rng rng(seed);
  for (Table<Real>* t : {&params.p_item, &params.q_item, &params.x_item, &params.y_item,
                         &params.p_soc, &params.x_soc}) {
    for (Real& v : t->data) v = static_cast<Real>(rng.uniform(-1.0, 1.0));
  }
  for (auto* b : {&params.a_item, &params.b_item, &params.a_soc, &params.b_soc}) {
    for (Real& v : *b) v = static_cast<Real>(rng.uniform(-0.5, 0.5));
  }
  init_mapping_net(params.map_si, rng);
  init_mapping_net(params.map_is, rng);
  return params;
}

}  // namespace

TEST_CASE("social discriminator probability: zero reps, orthogonal, hand value") {
  auto params = make_model<double>(3, 2, 2, {4});
  REQUIRE(disc_prob_social(0, 1, params) == 0.5);

  params.x_soc.row(0)[0] = 1.0;  // (1, 0)
  params.x_soc.row(1)[1] = 1.0;  // (0, 1)
  REQUIRE(disc_prob_social(0, 1, params) == 0.5);

  params.x_soc.row(0)[1] = 1.0;  // (1, 1)
  params.x_soc.row(2)[0] = 1.0;
  params.x_soc.row(2)[1] = 1.0;  // (1, 1): f = 2
  REQUIRE(disc_prob_social(0, 2, params) == Catch::Approx(0.880797).epsilon(1e-5));

  REQUIRE_THROWS_AS(disc_prob_social(1, 1, params), std::invalid_argument);
}

TEST_CASE("social generator distribution excludes the conditioning user") {
  SECTION("equal scores over N = 4 give 1/3 to each other user") {
    auto params = make_model<double>(4, 2, 2, {4});
    const auto dist = gen_dist_social(1, params);
    REQUIRE(dist[1] == 0.0);
    for (int k : {0, 2, 3}) REQUIRE(dist[k] == Catch::Approx(1.0 / 3.0).epsilon(1e-12));
  }

  SECTION("self mass is exactly zero for random parameters, sums to 1") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto params = random_params<float>(30, 3, 6, 500 + seed);
      const int ui = static_cast<int>(seed % 30);
      const auto dist = gen_dist_social(ui, params);
      REQUIRE(dist[ui] == 0.0f);
      double sum = 0.0;
      for (float p : dist) {
        REQUIRE(p >= 0.0f);
        sum += p;
      }
      REQUIRE(std::abs(sum - 1.0) <= 1e-6);
    }
  }

  SECTION("scores (0, ln 3) over the two candidates give (0.25, 0.75)") {
    auto params = make_model<double>(3, 2, 2, {4});
    params.b_soc[2] = std::log(3.0);
    const auto dist = gen_dist_social(0, params);
    REQUIRE(dist[0] == 0.0);
    REQUIRE(dist[1] == Catch::Approx(0.25).epsilon(1e-12));
    REQUIRE(dist[2] == Catch::Approx(0.75).epsilon(1e-12));
  }

  SECTION("a single user cannot condition a distribution") {
    auto params = make_model<double>(1, 2, 2, {4});
    REQUIRE_THROWS_AS(gen_dist_social(0, params), std::invalid_argument);
  }
}

TEST_CASE("social sampling mirrors item sampling") {
  SECTION("dominant candidate always drawn, never the self user") {
    auto params = make_model<double>(6, 2, 1, {2});
    params.b_soc[4] = 50.0;
    Rng rng(4);
    for (const auto& s : sample_users(2, 100, params, rng)) {
      REQUIRE(s.user == 2);
      REQUIRE(s.other == 4);
      REQUIRE(s.logp <= 0.0);
    }
    // even conditioned on the dominant user itself, the self entry is out
    for (const auto& s : sample_users(4, 100, params, rng)) REQUIRE(s.other != 4);
  }

  SECTION("uniform frequencies within 3 sigma") {
    auto params = make_model<double>(5, 2, 1, {2});
    Rng rng(77);
    const int n = 100000;
    std::vector<int> counts(5, 0);
    for (const auto& s : sample_users(0, n, params, rng)) ++counts[s.other];
    REQUIRE(counts[0] == 0);
    const double sigma = std::sqrt(0.25 * 0.75 / n);
    for (int k = 1; k < 5; ++k) {
      REQUIRE(std::abs(counts[k] / static_cast<double>(n) - 0.25) <= 3.0 * sigma);
    }
  }

  SECTION("determinism per seed") {
    const auto params = random_params<double>(9, 2, 3, 6);
    Rng r1(123), r2(123);
    const auto a = sample_users(3, 25, params, r1);
    const auto b = sample_users(3, 25, params, r2);
    for (int k = 0; k < 25; ++k) REQUIRE(a[k].other == b[k].other);
  }
}

TEST_CASE("social discriminator loss: ln 2 start, separation, finite differences") {
  SECTION("all scores zero") {
    auto params = make_model<double>(4, 2, 2, {4});
    const std::vector<std::pair<int, int>> real = {{0, 1}, {2, 3}};
    const std::vector<std::pair<int, int>> fake = {{0, 2}};
    REQUIRE(disc_loss_social<double>(real, fake, params, nullptr) ==
            Catch::Approx(3.0 * std::log(2.0)).epsilon(1e-12));
  }

  SECTION("perfect separation") {
    auto params = make_model<double>(4, 2, 2, {4});
    params.a_soc[1] = 40.0;
    params.a_soc[2] = -40.0;
    const std::vector<std::pair<int, int>> real = {{0, 1}, {3, 1}};
    const std::vector<std::pair<int, int>> fake = {{0, 2}, {3, 2}};
    REQUIRE(disc_loss_social<double>(real, fake, params, nullptr) < 1e-15);
  }

  SECTION("self-pairs are rejected") {
    auto params = make_model<double>(3, 2, 2, {4});
    const std::vector<std::pair<int, int>> real = {{1, 1}};
    const std::vector<std::pair<int, int>> fake = {{0, 1}};
    REQUIRE_THROWS_AS(disc_loss_social<double>(real, fake, params, nullptr),
                      std::invalid_argument);
  }

  SECTION("analytic gradients match central finite differences") {
    Rng rng(2222);
    for (int trial = 0; trial < 8; ++trial) {
      const int nu = 6;
      auto params = random_params<double>(nu, 3, 2 + static_cast<int>(rng.uniform_index(7)),
                                          rng.next_bits());
      std::vector<std::pair<int, int>> real, fake;
      const int batch = 1 + static_cast<int>(rng.uniform_index(4));
      for (int i = 0; i < batch; ++i) {
        const int a = static_cast<int>(rng.uniform_index(nu));
        const int b = (a + 1 + static_cast<int>(rng.uniform_index(nu - 1))) % nu;
        const int c = static_cast<int>(rng.uniform_index(nu));
        const int e = (c + 1 + static_cast<int>(rng.uniform_index(nu - 1))) % nu;
        real.push_back({a, b});
        fake.push_back({c, e});
      }
      DiscSocialGrads<double> grads;
      grads.init(params);
      disc_loss_social<double>(real, fake, params, &grads);
      auto eval = [&] { return disc_loss_social<double>(real, fake, params, nullptr); };

      for (std::size_t r = 0; r < grads.x.rows.size(); ++r) {
        for (int k = 0; k < params.dim; ++k) {
          const double fd = central_diff(eval, &params.x_soc.row(grads.x.rows[r])[k]);
          REQUIRE(grad_close(grads.x.grads[r][k], fd));
        }
      }
      for (std::size_t r = 0; r < grads.a.idx.size(); ++r) {
        const double fd = central_diff(eval, &params.a_soc[grads.a.idx[r]]);
        REQUIRE(grad_close(grads.a.g[r], fd));
      }
    }
  }
}

TEST_CASE("social policy gradient: zero rewards and N = 2 give exactly zero") {
  SECTION("zero reward") {
    auto params = random_params<double>(5, 2, 3, 31);
    for (auto& a : params.a_soc) a = -800.0;
    for (auto& x : params.x_soc.data) x = 0.0;
    GenSocialGrads<double> grads;
    grads.init(params);
    Rng rng(2);
    const std::vector<int> users = {1, 4};
    const double reward = gen_policy_grad_social<double>(users, 6, params, rng, grads);
    REQUIRE(reward == 0.0);
    for (double v : grads.p_soc.data) REQUIRE(v == 0.0);
    for (double v : grads.b_soc) REQUIRE(v == 0.0);
    for (const auto& t : grads.map_is.w) {
      for (double v : t.data) REQUIRE(v == 0.0);
    }
  }

  SECTION("N = 2: single-candidate distribution is degenerate") {
    auto params = random_params<double>(2, 2, 3, 32);
    GenSocialGrads<double> grads;
    grads.init(params);
    Rng rng(5);
    const std::vector<int> users = {0, 1};
    gen_policy_grad_social<double>(users, 4, params, rng, grads);
    for (double v : grads.p_soc.data) REQUIRE(v == 0.0);
    for (double v : grads.b_soc) REQUIRE(v == 0.0);
    for (const auto& t : grads.map_is.w) {
      for (double v : t.data) REQUIRE(v == 0.0);
    }
  }
}

TEST_CASE("social REINFORCE estimator is unbiased against the exact expectation") {
  const int nu = 8, d = 4;
  const auto params = random_params<double>(nu, 3, d, 6060);
  const int ui = 2;

  MlpCache<double> cache;
  mlp_forward_cached<double>(params.map_is, params.p_item.row(ui), cache);
  const std::vector<double> p_is = cache.act.back();
  std::vector<double> probs(nu);
  gen_social_probs<double>(params, ui, {p_is.data(), p_is.size()}, {probs.data(), probs.size()});
  REQUIRE(probs[ui] == 0.0);

  std::vector<double> rewards(nu, 0.0);
  for (int k = 0; k < nu; ++k) {
    if (k != ui) rewards[k] = softplus(disc_score_social(ui, k, params));
  }
  std::vector<double> pbar(d, 0.0);
  for (int k = 0; k < nu; ++k) {
    for (int kk = 0; kk < d; ++kk) pbar[kk] += probs[k] * params.p_soc.row(k)[kk];
  }

  const int coords = nu * d + nu + d;
  auto per_sample = [&](int v, std::vector<double>& g) {
    g.assign(coords, 0.0);
    for (int k = 0; k < nu; ++k) {
      if (k == ui) continue;  // zero-mass candidate gets no gradient
      const double coef = ((k == v ? 1.0 : 0.0) - probs[k]) * rewards[v];
      for (int kk = 0; kk < d; ++kk) g[k * d + kk] = coef * p_is[kk];
      g[nu * d + k] = coef;
    }
    for (int kk = 0; kk < d; ++kk) {
      g[nu * d + nu + kk] = rewards[v] * (params.p_soc.row(v)[kk] - pbar[kk]);
    }
  };

  std::vector<double> exact(coords, 0.0), g(coords);
  for (int v = 0; v < nu; ++v) {
    if (v == ui) continue;
    per_sample(v, g);
    for (int c = 0; c < coords; ++c) exact[c] += probs[v] * g[c];
  }

  const int n = 40000;
  std::vector<double> sum(coords, 0.0), sumsq(coords, 0.0);
  Rng rng(515151);
  for (int k = 0; k < n; ++k) {
    const int v = sample_categorical<double>({probs.data(), probs.size()}, rng);
    REQUIRE(v != ui);
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

TEST_CASE("gen_policy_grad_social computes the REINFORCE formula draw for draw") {
  const int nu = 5, d = 3, n = 6;
  const auto params = random_params<double>(nu, 4, d, 44444);
  const std::vector<int> users = {3, 1};

  GenSocialGrads<double> grads;
  grads.init(params);
  Rng rng(909);
  gen_policy_grad_social<double>(users, n, params, rng, grads);

  Table<double> want_p(nu, d);
  std::vector<double> want_b(nu, 0.0);
  Rng rng2(909);
  MlpCache<double> cache;
  for (int ui : users) {
    mlp_forward_cached<double>(params.map_is, params.p_item.row(ui), cache);
    const std::vector<double> p_is = cache.act.back();
    std::vector<double> probs(nu);
    gen_social_probs<double>(params, ui, {p_is.data(), p_is.size()},
                             {probs.data(), probs.size()});
    for (int k = 0; k < n; ++k) {
      const int v = sample_categorical<double>({probs.data(), probs.size()}, rng2);
      const double r = softplus(disc_score_social(ui, v, params));
      for (int j = 0; j < nu; ++j) {
        if (j == ui) continue;
        const double coef = -r * ((j == v ? 1.0 : 0.0) - probs[j]) / (n * 2.0);
        for (int kk = 0; kk < d; ++kk) want_p.row(j)[kk] += coef * p_is[kk];
        want_b[j] += coef;
      }
    }
  }
  for (int j = 0; j < nu; ++j) {
    for (int k = 0; k < d; ++k) {
      REQUIRE(grads.p_soc.row(j)[k] == Catch::Approx(want_p.row(j)[k]).margin(1e-12));
    }
    REQUIRE(grads.b_soc[j] == Catch::Approx(want_b[j]).margin(1e-12));
  }
}
