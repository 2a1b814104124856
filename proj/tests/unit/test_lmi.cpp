#include <doctest.h>

#include <cmath>
#include <random>

#include "cacc/errors.hpp"
#include "cacc/lmi.hpp"

using namespace cacc::lmi;

namespace {

MatrixXd I(int n) { return MatrixXd::Identity(n, n); }

}  // namespace

TEST_CASE("largest eigenvalue as an SDP") {
  std::mt19937_64 g(1);
  std::normal_distribution<double> N;
  for (int t = 0; t < 5; ++t) {
    MatrixXd R(4, 4);
    for (int i = 0; i < 16; ++i) R(i / 4, i % 4) = N(g);
    const MatrixXd A = R + R.transpose();
    Problem p;
    const Expr s = p.add_scalar("t");
    p.add_constraint(scale(s, I(4)) - Expr(A), Sense::psd);
    p.minimize(s);
    const SdpSolution sol = solve(p);
    REQUIRE(sol.status == Status::optimal);
    const double lmax = Eigen::SelfAdjointEigenSolver<MatrixXd>(A).eigenvalues().maxCoeff();
    CHECK(sol.scalar("t") == doctest::Approx(lmax).epsilon(1e-6));
  }
}

TEST_CASE("2x2 block with known optimum") {
  // [[x, 1], [1, x]] >= 0  <=>  x >= 1
  Problem p;
  const Expr x = p.add_scalar("x");
  BlockLMI b({1, 1}, Sense::psd);
  b.set(0, 0, x);
  b.set(1, 0, Expr(MatrixXd::Ones(1, 1)));
  b.set(1, 1, x);
  p.add_constraint(b);
  p.minimize(x);
  const SdpSolution s = solve(p);
  REQUIRE(s.status == Status::optimal);
  CHECK(s.scalar("x") == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("Lyapunov inequality with trace objective") {
  // min tr(P) s.t. A'PA - P + I <= 0 has the Lyapunov solution P = sum A'^k A^k.
  MatrixXd A(2, 2);
  A << 0.5, 0.2,
       0.0, 0.3;
  Problem p;
  const Expr P = p.add_symmetric("P", 2);
  p.add_constraint(MatrixXd(A.transpose()) * P * A - P + Expr(I(2)), Sense::nsd);
  Expr tr(1, 1);
  for (int i = 0; i < 2; ++i) tr += MatrixXd(I(2).row(i)) * P * MatrixXd(I(2).col(i));
  p.minimize(tr);
  const SdpSolution s = solve(p);
  REQUIRE(s.status == Status::optimal);
  MatrixXd X = I(2), Ak = I(2);
  for (int k = 1; k < 200; ++k) {
    Ak = Ak * A;
    X += Ak.transpose() * Ak;
  }
  CHECK((s.values.at("P") - X).norm() < 1e-5);
}

TEST_CASE("log-det objective") {
  // min -logdet X s.t. X <= diag(2, 3)
  Problem p;
  const Expr X = p.add_symmetric("X", 2);
  MatrixXd D(2, 2);
  D << 2, 0,
       0, 3;
  p.add_constraint(Expr(D) - X, Sense::psd);
  p.minimize_neg_logdet("X");
  const SdpSolution s = solve(p);
  REQUIRE(s.status == Status::optimal);
  CHECK((s.values.at("X") - D).norm() < 1e-5);
  CHECK(s.objective_value == doctest::Approx(-std::log(6.0)).epsilon(1e-6));
}

TEST_CASE("log-det with a linear coupling") {
  // min -logdet X + t s.t. X <= t I, 2x2: optimum X = t I with t = 2, objective 2 - 2 log 2
  Problem p;
  const Expr X = p.add_symmetric("X", 2);
  const Expr t = p.add_scalar("t");
  p.add_constraint(scale(t, I(2)) - X, Sense::psd);
  p.minimize(t);
  p.minimize_neg_logdet("X");
  const SdpSolution s = solve(p);
  REQUIRE(s.status == Status::optimal);
  CHECK(s.scalar("t") == doctest::Approx(2.0).epsilon(1e-5));
  CHECK(s.objective_value == doctest::Approx(2.0 - 2.0 * std::log(2.0)).epsilon(1e-5));
}

TEST_CASE("infeasible and unbounded programs are classified") {
  {
    Problem p;
    const Expr x = p.add_scalar("x");
    p.add_lower_bound(x, 1.0);
    p.add_upper_bound(x, 0.0);
    p.minimize(x);
    CHECK(solve(p).status == Status::infeasible);
  }
  {
    Problem p;
    const Expr x = p.add_scalar("x");
    p.add_upper_bound(x, 1.0);
    p.minimize(x);
    CHECK(solve(p).status == Status::unbounded);
  }
  {
    // no strictly feasible X with X <= -I
    Problem p;
    const Expr X = p.add_symmetric("X", 2);
    p.add_constraint(Expr(-I(2)) - X, Sense::psd);
    p.minimize_neg_logdet("X");
    CHECK(solve(p).status == Status::infeasible);
  }
}

TEST_CASE("block LMI assembly mirrors the lower triangle") {
  Problem p;
  const Expr a = p.add_scalar("a");
  BlockLMI b({1, 2}, Sense::nsd);
  b.set(0, 0, a);
  MatrixXd off(2, 1);
  off << 1, 2;
  b.set(1, 0, Expr(off));
  b.set(1, 1, Expr(-I(2)));
  VectorXd x(1);
  x << 3;
  const MatrixXd M = b.assemble().eval(x);
  CHECK(M(0, 1) == 1);
  CHECK(M(0, 2) == 2);
  CHECK(M(2, 0) == 2);
  CHECK(M(0, 0) == 3);
  CHECK((b.as_psd().eval(x) + M).norm() == 0);
  CHECK_THROWS(b.set(0, 1, Expr(off.transpose())));
}

TEST_CASE("grid line search keeps the best point") {
  auto prog = [](double s) {
    Problem p;
    const Expr x = p.add_scalar("x");
    p.add_lower_bound(x, (s - 0.3) * (s - 0.3));
    if (s > 0.8) p.add_upper_bound(x, -1.0);  // infeasible tail
    p.minimize(x);
    return solve(p);
  };
  const LineSearchResult r = line_search_scalar(prog, 0.1, 0.9, 0.1);
  CHECK(r.best == doctest::Approx(0.3));
  CHECK(r.points.size() == 9);
  CHECK(r.points.back().status == Status::infeasible);
  CHECK_THROWS_AS(line_search_scalar(prog, std::vector<double>{0.85, 0.9}), GridInfeasibleError);
  CHECK(make_grid(0.01, 0.99, 0.01).size() == 99);
}
