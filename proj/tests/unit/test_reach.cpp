#include <doctest.h>

#include <cmath>
#include <random>

#include "cacc/errors.hpp"
#include "cacc/reach.hpp"
#include "cacc/sim.hpp"
#include "oracles.hpp"

using namespace cacc;

TEST_CASE("projection of the 3x3 hand case") {
  MatrixXd P(3, 3);
  P << 2, 0, 1,
       0, 2, 0,
       1, 0, 2;
  MatrixXd want(2, 2);
  want << 1.5, 0,
          0, 2;
  CHECK(oracle::max_abs(project(P, 2) - want) < 1e-10);
  CHECK(project(P, 1)(0, 0) == doctest::Approx(1.5));
  CHECK_THROWS_AS(project(P, 0), ValidationError);
  CHECK_THROWS_AS(project(P, 4), ValidationError);
}

TEST_CASE("projection keeps the support function of the ellipsoid") {
  // max_{x'Px<=1} c'x = sqrt(c'P^-1 c) for c supported on the kept coordinates
  std::mt19937_64 g(11);
  std::normal_distribution<double> N;
  for (int t = 0; t < 20; ++t) {
    MatrixXd R(6, 6);
    for (int i = 0; i < 36; ++i) R(i / 6, i % 6) = N(g);
    const MatrixXd P = R * R.transpose() + MatrixXd::Identity(6, 6);
    const MatrixXd Q = project(P, 4);
    VectorXd c = VectorXd::Zero(6);
    for (int i = 0; i < 4; ++i) c(i) = N(g);
    const double full = std::sqrt(c.dot(P.inverse() * c));
    const VectorXd c4 = c.head(4);
    const double proj = std::sqrt(c4.dot(Q.inverse() * c4));
    CHECK(proj == doctest::Approx(full).epsilon(1e-10));
    CHECK(oracle::max_abs(project(Q, 2) - project(P, 2)) < 1e-9);
  }
}

TEST_CASE("monitor ellipse projection") {
  MonitorDesign m;
  m.Pi = VectorXd::LinSpaced(5, 1.0, 5.0).asDiagonal();
  const MatrixXd E = project_monitor_ellipse(m, 3, 1);
  CHECK(E(0, 0) == doctest::Approx(4.0));
  CHECK(E(1, 1) == doctest::Approx(2.0));
  CHECK(E(0, 1) == doctest::Approx(0.0));
  CHECK_THROWS_AS(project_monitor_ellipse(m, 2, 2), ValidationError);

  std::mt19937_64 g(2);
  std::normal_distribution<double> N;
  MatrixXd R(5, 5);
  for (int i = 0; i < 25; ++i) R(i / 5, i % 5) = N(g);
  m.Pi = R * R.transpose() + MatrixXd::Identity(5, 5);
  const MatrixXd E01 = project_monitor_ellipse(m, 0, 1);
  const MatrixXd E10 = project_monitor_ellipse(m, 1, 0);
  CHECK(E01(0, 0) == doctest::Approx(E10(1, 1)).epsilon(1e-12));
  // projecting twice equals the direct one-dimensional projection
  const double direct = 1.0 / m.Pi.inverse()(0, 0);
  CHECK(project(E01, 1)(0, 0) == doctest::Approx(direct).epsilon(1e-10));
}

TEST_CASE("circle to line distances") {
  CriticalSet cs;
  VectorXd c(2);
  c << 1, 0;
  cs.halfspaces.push_back({c, 3.0, "x"});
  c << 0.6, 0.8;
  cs.halfspaces.push_back({c, 2.0, "diag"});
  const MatrixXd I = MatrixXd::Identity(2, 2);
  for (double r : {0.5, 1.0, 2.5, 4.0}) {
    const auto g = distance_to_critical(I, r * r, cs, DistanceConvention::geometric);
    CHECK(g[0] == doctest::Approx(3.0 - r));
    CHECK(g[1] == doctest::Approx(2.0 - r));
    const auto p = distance_to_critical(I, r * r, cs, DistanceConvention::printed);
    CHECK(p[0] == doctest::Approx(3.0 - 1.0 / r));
    CHECK(p[1] == doctest::Approx(2.0 - 1.0 / r));
  }
  // unit circle: both conventions give the Euclidean distance
  const auto u = distance_to_critical(I, 1.0, cs, DistanceConvention::printed);
  CHECK(u[0] == doctest::Approx(2.0));
  CHECK(u[1] == doctest::Approx(1.0));
  // ellipse x^2/4 + y^2 <= 1 against x > 3
  MatrixXd E(2, 2);
  E << 0.25, 0, 0, 1;
  CHECK(distance_to_critical(E, 1.0, cs)[0] == doctest::Approx(1.0));
  // degenerate ellipsoid at the origin
  const auto z = distance_to_critical(I, 0.0, cs);
  CHECK(z[0] == doctest::Approx(3.0));
  CHECK(z[1] == doctest::Approx(2.0));
  // non-unit normal scales by c'c
  CriticalSet s2;
  VectorXd c2(2);
  c2 << 2, 0;
  s2.halfspaces.push_back({c2, 6.0, "scaled"});
  CHECK(distance_to_critical(I, 1.0, s2)[0] == doctest::Approx((6.0 - 2.0) / 4.0));
}

TEST_CASE("critical set validation") {
  CriticalSet cs;
  CHECK_THROWS_AS(cs.validate(), ValidationError);
  cs.halfspaces.push_back({VectorXd::Zero(4), 1.0, "zero"});
  CHECK_THROWS_AS(cs.validate(), ValidationError);
  cs.halfspaces[0].c = VectorXd::Ones(4);
  cs.halfspaces[0].b = -1;
  CHECK_THROWS_AS(cs.validate(), ValidationError);
  const CriticalSet co = collision_and_overspeed(PlatoonConfig{});
  REQUIRE(co.halfspaces.size() == 2);
  CHECK(co.halfspaces[0].c(1) == doctest::Approx(-0.5));
  CHECK(co.halfspaces[0].b == 3.0);
  CHECK(co.halfspaces[1].b == 35.0);
}

TEST_CASE("alpha schedule recursion and limit") {
  ReachShape s;
  s.a = 0.9;
  s.P_zeta = MatrixXd::Identity(10, 10) * 0.5;
  VectorXd z = VectorXd::Zero(10);
  z(1) = 2.0;
  const auto al = alpha_schedule(s, z, 400);
  CHECK(al[0] == doctest::Approx(2.0));
  for (size_t k = 1; k < al.size(); ++k) CHECK(al[k] == doctest::Approx(s.a * al[k - 1] + (5.0 - s.a)));
  CHECK(al.back() == doctest::Approx(alpha_limit(s.a)).epsilon(1e-9));
  CHECK(alpha_limit(0.9) == doctest::Approx(41.0));
  CHECK(alpha_schedule(s, VectorXd::Zero(10), 1)[0] == 0.0);
  CHECK_THROWS_AS(alpha_schedule(s, z, 0), ValidationError);
  CHECK_THROWS_AS(alpha_schedule(s, VectorXd::Zero(4), 3), ValidationError);
}

TEST_CASE("risk verdict bookkeeping") {
  ReachShape s;
  s.a = 0.5;
  s.P_zeta = MatrixXd::Identity(10, 10);
  s.P_x = MatrixXd::Identity(4, 4);
  CriticalSet cs;
  VectorXd c = VectorXd::Zero(4);
  c(0) = 1;
  cs.halfspaces.push_back({c, 10.0, "far"});
  const RiskReport safe = assess_risk(s, VectorXd::Zero(10), cs, 20, DistanceConvention::geometric);
  CHECK(safe.verdict == Verdict::risk_free);
  CHECK(!safe.first_violation_k);
  CHECK(safe.alpha_inf == doctest::Approx(9.0));
  cs.halfspaces[0].b = 2.5;  // sqrt(alpha) crosses 2.5 once alpha > 6.25
  const RiskReport risky = assess_risk(s, VectorXd::Zero(10), cs, 20, DistanceConvention::geometric);
  CHECK(risky.verdict == Verdict::at_risk);
  REQUIRE(risky.first_violation_k);
  const auto al = risky.alpha;
  int first = 0;
  for (size_t k = 0; k < al.size() && !first; ++k)
    if (std::sqrt(al[k]) > 2.5) first = static_cast<int>(k) + 1;
  CHECK(*risky.first_violation_k == first);
}

// Rewritten closed loop against a direct simulation of plant and error dynamics.
TEST_CASE("substituted attack reproduces the closed loop") {
  std::mt19937_64 g(99);
  std::normal_distribution<double> N;
  for (int t = 0; t < 20; ++t) {
    const PlatoonConfig c = t == 0 ? PlatoonConfig{} : oracle::random_config(g);
    const ExtendedModel em = build_extended(c);
    const DiscreteModel dm = discretize(build_continuous(c), c.Ts);
    EstimatorDesign est;
    est.L = MatrixXd::Zero(6, 5);
    for (int i = 0; i < 30; ++i) est.L(i / 5, i % 5) = 0.1 * N(g);
    const ClosedLoopModel cl = build_closed_loop(dm, em, est);
    const MatrixXd Abar = (MatrixXd::Identity(6, 6) - est.L * em.Ce) * em.Ae;
    const MatrixXd CA = em.Ce * em.Ae;

    VectorXd x(4), e(6);
    for (int i = 0; i < 4; ++i) x(i) = N(g);
    for (int i = 0; i < 6; ++i) e(i) = N(g);
    VectorXd zeta(10);
    zeta << x, e;
    auto randv = [&](int n) {
      VectorXd v(n);
      for (int i = 0; i < n; ++i) v(i) = N(g);
      return v;
    };
    VectorXd we1 = randv(5);
    double worst = 0;
    for (int k = 0; k < 60; ++k) {
      const VectorXd wt = randv(3);
      const double wu = N(g);
      const double delta = 2.0 * N(g);
      const VectorXd we2 = randv(5);
      const VectorXd x1 = dm.A * x + dm.B * wt + dm.G * delta;
      const VectorXd e1 = Abar * e - em.Be1 * (wu + delta) - est.L * we1;
      const VectorXd r2 = CA * e1 + we2;
      VectorXd wu_v(1);
      wu_v << wu;
      zeta = cl.Acal * zeta + cl.B1 * wt + cl.B2 * wu_v + cl.B3 * we1 + cl.B4 * we2 + cl.B5 * r2;
      x = x1;
      e = e1;
      we1 = we2;
      VectorXd ref(10);
      ref << x, e;
      worst = std::max(worst, (zeta - ref).norm() / std::max(1.0, ref.norm()));
      zeta = ref;  // compare one-step maps, so unstable random gains cannot amplify rounding
    }
    CHECK(worst < 1e-8);
  }
}
