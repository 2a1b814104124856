#include <doctest.h>

#include <random>

#include "cacc/errors.hpp"
#include "cacc/model.hpp"
#include "oracles.hpp"

using namespace cacc;

TEST_CASE("continuous matrices match the vehicle equations") {
  PlatoonConfig c;
  c.h = 0.7;
  c.tau = 0.2;
  c.kp = 0.3;
  c.kd = 0.9;
  const ContinuousModel m = build_continuous(c);
  CHECK(oracle::max_abs(m.Ac - oracle::ref_Ac(c.h, c.tau, c.kp, c.kd)) == 0.0);
  CHECK(oracle::max_abs(m.Bc - oracle::ref_Bc(c.h, c.kp, c.kd)) == 0.0);
  CHECK(m.Gc(3) == doctest::Approx(1 / c.h));
  const ContinuousExtended e = build_continuous_extended(c);
  CHECK(oracle::max_abs(e.Ace - oracle::ref_Ace(c.h, c.tau, c.kp, c.kd)) == 0.0);
  CHECK(e.Bce1(5) == doctest::Approx(1 / c.tau));
  CHECK(e.Bce2(3) == doctest::Approx(1 / c.h));
}

TEST_CASE("discretization agrees with the power-series oracle") {
  std::mt19937_64 g(42);
  for (int t = 0; t < 100; ++t) {
    const PlatoonConfig c = t == 0 ? PlatoonConfig{} : oracle::random_config(g);
    const DiscreteModel d = discretize(build_continuous(c), c.Ts);
    auto [A, S] = oracle::taylor_zoh(oracle::ref_Ac(c.h, c.tau, c.kp, c.kd), c.Ts);
    CHECK(oracle::max_abs(d.A - A) < 1e-10);
    CHECK(oracle::max_abs(d.B - S * oracle::ref_Bc(c.h, c.kp, c.kd)) < 1e-10);
    VectorXd Gc = VectorXd::Zero(4);
    Gc(3) = 1 / c.h;
    CHECK(oracle::max_abs(d.G - S * Gc) < 1e-10);

    const ExtendedModel e = build_extended(c);
    auto [Ae, Se] = oracle::taylor_zoh(oracle::ref_Ace(c.h, c.tau, c.kp, c.kd), c.Ts);
    VectorXd b1 = VectorXd::Zero(6), b2 = VectorXd::Zero(6);
    b1(5) = 1 / c.tau;
    b2(3) = 1 / c.h;
    CHECK(oracle::max_abs(e.Ae - Ae) < 1e-10);
    CHECK(oracle::max_abs(e.Be1 - Se * b1) < 1e-10);
    CHECK(oracle::max_abs(e.Be2 - Se * b2) < 1e-10);
    CHECK(oracle::max_abs(e.Be - e.Be1 - e.Be2) < 1e-12);
  }
}

TEST_CASE("matrix exponential matches the series on a block matrix") {
  std::mt19937_64 g(7);
  std::normal_distribution<double> N;
  MatrixXd M(5, 5);
  for (int i = 0; i < 25; ++i) M(i / 5, i % 5) = 0.4 * N(g);
  MatrixXd U = MatrixXd::Zero(5, 2);
  auto [A, W] = zoh(M, U, 1.0);
  CHECK(oracle::max_abs(A - oracle::taylor_expm(M)) < 1e-12);
  CHECK(oracle::max_abs(W) == 0.0);
}

TEST_CASE("semigroup property of the sampled model") {
  std::mt19937_64 g(3);
  for (int t = 0; t < 50; ++t) {
    const PlatoonConfig c = oracle::random_config(g);
    const ContinuousModel m = build_continuous(c);
    const DiscreteModel d1 = discretize(m, c.Ts);
    const DiscreteModel d2 = discretize(m, 2 * c.Ts);
    CHECK(oracle::max_abs(d2.A - d1.A * d1.A) < 1e-10);
    CHECK(oracle::max_abs(d2.B - (d1.A * d1.B + d1.B)) < 1e-10);
    CHECK(oracle::max_abs(d2.G - (d1.A * d1.G + d1.G)) < 1e-10);
  }
}

TEST_CASE("extended output map sees the predecessor input two steps later") {
  std::mt19937_64 g(5);
  for (int t = 0; t < 100; ++t) {
    const PlatoonConfig c = oracle::random_config(g);
    const ExtendedModel e = build_extended(c);
    CHECK((e.Ce * e.Ae * e.Be1).norm() > 1e-8);
    // exact sampling leaves a small direct term, of order Ts^2 / tau
    const VectorXd cb = e.Ce * e.Be1;
    CHECK(cb.norm() <= c.Ts * c.Ts / c.tau);
  }
}

TEST_CASE("platoon config validation names the field") {
  PlatoonConfig c;
  c.h = 0.0;
  try {
    c.validate();
    FAIL("expected a ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.field() == "h");
  }
  c = PlatoonConfig{};
  c.kd = c.kp * c.tau * 0.5;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = PlatoonConfig{};
  c.wbar2 = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = PlatoonConfig{};
  c.u_min = 4;
  CHECK_THROWS_AS(build_continuous(c), ValidationError);
}

TEST_CASE("lead model integrates eps0 into u and a") {
  PlatoonConfig c;
  const DiscreteModel d = build_lead_model(c);
  VectorXd x = VectorXd::Zero(4);
  for (int k = 0; k < 2000; ++k) x = d.A * x + d.B.col(0) * 1.0;
  CHECK(x(3) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(x(2) == doctest::Approx(1.0).epsilon(1e-9));
}
