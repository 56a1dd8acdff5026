#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "daso/optim.hpp"

using namespace daso;

TEST_CASE("zero gradient leaves parameters fixed and decays the accumulator") {
  HyperParams hp;
  hp.learning_rate = 0.01;
  std::vector<double> theta = {1.5, -2.0};
  std::vector<double> grad = {0.0, 0.0};
  std::vector<double> sq = {0.4, 0.9};
  rmsprop_step<double>(theta, grad, sq, hp, "g");
  REQUIRE(theta == std::vector<double>{1.5, -2.0});
  REQUIRE(sq[0] == Catch::Approx(0.9 * 0.4).epsilon(1e-12));
  REQUIRE(sq[1] == Catch::Approx(0.9 * 0.9).epsilon(1e-12));
}

TEST_CASE("first step from a cold accumulator matches the hand computation") {
  HyperParams hp;
  hp.learning_rate = 0.01;
  hp.rho = 0.9;
  hp.eps = 1e-8;
  std::vector<double> theta = {0.25};
  std::vector<double> grad = {1.0};
  std::vector<double> sq = {0.0};
  rmsprop_step<double>(theta, grad, sq, hp, "g");
  // s = 0.1, step = 0.01 / (sqrt(0.1) + 1e-8)
  const double expected_step = 0.01 * 1.0 / (std::sqrt(0.1) + 1e-8);
  REQUIRE(expected_step == Catch::Approx(0.031622776).epsilon(1e-6));
  REQUIRE(theta[0] == Catch::Approx(0.25 - expected_step).epsilon(1e-12));
  REQUIRE(sq[0] == Catch::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("a constant gradient stream drives the step magnitude to lr * sign(g)") {
  HyperParams hp;
  hp.learning_rate = 0.01;
  std::vector<double> theta = {5.0};
  std::vector<double> grad = {-2.5};
  std::vector<double> sq = {0.0};
  double last_step = 0.0;
  for (int i = 0; i < 300; ++i) {
    const double before = theta[0];
    rmsprop_step<double>(theta, grad, sq, hp, "g");
    last_step = theta[0] - before;
  }
  // fixed point: s -> g^2, step -> lr * g / |g| = -lr (ascending theta)
  REQUIRE(std::abs(last_step - hp.learning_rate) <= 1e-8);
}

TEST_CASE("non-finite gradients raise an error naming the group") {
  HyperParams hp;
  std::vector<double> theta = {1.0};
  std::vector<double> grad = {std::nan("")};
  std::vector<double> sq = {0.0};
  try {
    rmsprop_step<double>(theta, grad, sq, hp, "q_item");
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    REQUIRE(std::string(e.what()).find("q_item") != std::string::npos);
  }
}

TEST_CASE("row-sparse application touches only the listed rows") {
  HyperParams hp;
  hp.learning_rate = 0.1;
  Table<double> theta(3, 2);
  theta.fill(1.0);
  Table<double> sq(3, 2);
  sq.fill(0.5);
  RowGrads<double> grads(2);
  auto g = grads.acc(1);
  g[0] = 1.0;
  g[1] = -1.0;
  rmsprop_step_rows(theta, grads, sq, hp, "t");
  REQUIRE(theta.row(0)[0] == 1.0);
  REQUIRE(theta.row(2)[1] == 1.0);
  REQUIRE(sq.row(0)[0] == 0.5);  // untouched rows keep their accumulator
  REQUIRE(theta.row(1)[0] < 1.0);
  REQUIRE(theta.row(1)[1] > 1.0);

  ScalarGrads<double> sg;
  sg.acc(2) = 1.0;
  std::vector<double> bias = {0.0, 0.0, 0.0};
  std::vector<double> bsq = {0.0, 0.0, 0.0};
  rmsprop_step_entries(bias, sg, bsq, hp, "b");
  REQUIRE(bias[0] == 0.0);
  REQUIRE(bias[1] == 0.0);
  REQUIRE(bias[2] != 0.0);
}

TEST_CASE("accumulator shapes mirror the model") {
  const auto params = init_model<float>(6, 9, 4, 3);
  HyperParams hp;
  const auto st = make_optim_state(params, hp);
  REQUIRE(st.sq.p_item.rows == 6);
  REQUIRE(st.sq.q_item.rows == 9);
  REQUIRE(st.sq.param_count() == params.param_count());
  // freshly created accumulators are zero (nonnegative invariant holds)
  for (float v : st.sq.q_item.data) REQUIRE(v == 0.0f);
}
