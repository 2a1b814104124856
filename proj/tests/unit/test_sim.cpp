#include <doctest.h>

#include <cmath>

#include "cacc/attack.hpp"
#include "cacc/errors.hpp"
#include "cacc/rng.hpp"
#include "cacc/runtime.hpp"
#include "cacc/sim.hpp"
#include "cacc/synth.hpp"

using namespace cacc;

namespace {

const SynthesisResult& design() {
  static const SynthesisResult d = [] {
    PlatoonConfig cfg;
    const ExtendedModel em = build_extended(cfg);
    SynthesisResult r;
    r.est = synth_estimator(em, std::vector<double>{0.67});
    r.mon = synth_monitor(em, r.est, cfg.wbar2, cfg.wbar3);
    return r;
  }();
  return d;
}

bool same_logs(const TrajectoryLog& a, const TrajectoryLog& b) {
  if (a.logs.size() != b.logs.size()) return false;
  for (size_t i = 0; i < a.logs.size(); ++i) {
    const auto& x = a.logs[i].steps;
    const auto& y = b.logs[i].steps;
    if (x.size() != y.size()) return false;
    for (size_t k = 0; k < x.size(); ++k)
      if (x[k].xe != y[k].xe || x[k].xhat != y[k].xhat || x[k].r != y[k].r || x[k].delta != y[k].delta) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("counter rng is deterministic and keyed") {
  CounterRng a(derive_key(5, 1, 2)), b(derive_key(5, 1, 2)), c(derive_key(5, 1, 3));
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    CHECK(x != c.next_u64());
  }
  CounterRng u(1);
  double mean = 0;
  for (int i = 0; i < 20000; ++i) {
    const double v = u.uniform();
    CHECK(v > 0.0);
    CHECK(v < 1.0);
    mean += v;
  }
  CHECK(mean / 20000 == doctest::Approx(0.5).epsilon(0.02));
  CounterRng r(3);
  for (int i = 0; i < 1000; ++i) CHECK(r.in_ball(4, 2.0).norm() <= 2.0);
}

TEST_CASE("noise samples respect their bounds and replay") {
  const NoisePolicy p = NoisePolicy::make(NoiseKind::uniform_ball, 1234.8, 1e-4, 0.02, 9);
  for (long k = 1; k < 500; ++k) {
    const NoiseSample s = gen_noise(p, k, 3, 1);
    CHECK(s.omega_tilde.squaredNorm() <= 1234.8 * (1 + 1e-12));
    CHECK(s.omega_u * s.omega_u <= 1e-4 * (1 + 1e-12));
    CHECK(s.omega_e.squaredNorm() <= 0.02 * (1 + 1e-12));
    const NoiseSample t = gen_noise(p, k, 3, 1);
    CHECK(s.omega_e == t.omega_e);
  }
  CHECK_THROWS_AS(NoisePolicy::make(NoiseKind::boundary, 1.0, 0.0, 1.0, 1).validate(), ValidationError);
}

TEST_CASE("lead signal templates") {
  LeadSignal s;
  s.kind = SignalKind::exp_decay;
  s.amplitude = 2.0;
  s.rate = 0.01;
  CHECK(s.at(10) == doctest::Approx(2.0 * std::exp(-0.1)));
  s.kind = SignalKind::step;
  s.before = 1;
  s.value = 3;
  s.step_k = 5;
  CHECK(s.at(4) == 1);
  CHECK(s.at(5) == 3);
  s.kind = SignalKind::piecewise;
  s.pieces = {{1, 0.5}, {10, -1.0}};
  CHECK(s.at(9) == 0.5);
  CHECK(s.at(12) == -1.0);
}

TEST_CASE("noise-free platoon settles") {
  Scenario s = highway_scenario(PlatoonConfig{});
  s.noise_enabled = false;
  s.horizon = 600;
  s.init[0].x << 2.0, 28.0, 0.0, 0.0;
  s.init[0].dv = 2.0;
  const TrajectoryLog log = run_scenario(s, design());
  const auto& last = log.logs[0].steps.back();
  CHECK(std::abs(last.xe[0]) < 1e-3);
  CHECK(std::abs(last.xe[4]) < 1e-3);
  CHECK(log.summary.alarms_total == 0);
}

TEST_CASE("simulation replays bit for bit and ignores the thread count") {
  Scenario s = highway_scenario(PlatoonConfig{});
  s.horizon = 120;
  s.runs = 6;
  s.seed = 77;
  AttackPolicy a;
  a.kind = AttackKind::greedy_direction;
  s.attacks = {a};
  const TrajectoryLog x = run_scenario(s, design());
  const TrajectoryLog y = run_scenario(s, design());
  s.threads = 3;
  const TrajectoryLog z = run_scenario(s, design());
  CHECK(same_logs(x, y));
  CHECK(same_logs(x, z));
  CHECK(x.summary.max_z == z.summary.max_z);
  CHECK(x.summary.attack_alarms == z.summary.attack_alarms);
  s.seed = 78;
  CHECK(!same_logs(x, run_scenario(s, design())));
  CHECK(x.logs.size() * 120 == x.summary.steps);
}

TEST_CASE("logged z is recomputable from r and Pi") {
  Scenario s = highway_scenario(PlatoonConfig{});
  s.horizon = 50;
  const TrajectoryLog log = run_scenario(s, design());
  for (const auto& rec : log.logs[0].steps) {
    Eigen::Map<const Eigen::Matrix<double, 5, 1>> r(rec.r.data());
    CHECK(rec.z == doctest::Approx(r.dot(design().mon.Pi * r)).epsilon(1e-12));
    CHECK(rec.alarm == (rec.z > 1.0));
  }
}

TEST_CASE("stealthy attacker keeps the residual below the threshold") {
  Scenario s = highway_scenario(PlatoonConfig{});
  s.horizon = 200;
  s.runs = 4;
  for (AttackKind k : {AttackKind::random_stealthy, AttackKind::greedy_direction}) {
    AttackPolicy a;
    a.kind = k;
    s.attacks = {a};
    const TrajectoryLog log = run_scenario(s, design());
    CHECK(log.summary.attack_alarms == 0);
    double dmax = 0;
    for (const auto& rec : log.logs[0].steps) dmax = std::max(dmax, std::abs(rec.delta));
    CHECK(dmax > 0.0);
  }
}

TEST_CASE("runtime residual equals the error form") {
  PlatoonConfig cfg;
  const ExtendedModel em = build_extended(cfg);
  VectorXd xe(6), xhat(6), we(5);
  xe << 0.3, 29, 0.1, -0.2, 0.4, 0.05;
  xhat << 0.1, 29.5, 0.0, 0.0, 0.1, 0.0;
  we << 0.01, -0.02, 0.03, 0.0, 0.01;
  const double u_prev = 0.7, delta = 0.2, wu = 0.005;
  const double net = u_prev + delta + wu;
  const VectorXd xn = em.Ae * xe + em.Be1 * u_prev + em.Be2 * net;
  const VectorXd y = em.Ce * xn + we;
  const VectorXd r1 = residual(em, xhat, net, y);
  const VectorXd r2 = residual_from_error(em, xe - xhat, delta + wu, we);
  CHECK((r1 - r2).norm() < 1e-12);
  const VectorXd e1 = xn - estimator_step(design().est, em, xhat, net, y);
  CHECK((e1 - error_step(design().est, em, xe - xhat, delta + wu, we)).norm() < 1e-12);
}

TEST_CASE("scenario validation") {
  Scenario s = highway_scenario(PlatoonConfig{});
  s.horizon = 0;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = highway_scenario(PlatoonConfig{});
  s.init[0].x(1) = 50;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = highway_scenario(PlatoonConfig{});
  AttackPolicy a;
  a.margin = 1.5;
  s.attacks = {a};
  CHECK_THROWS_AS(s.validate(), ValidationError);
}
