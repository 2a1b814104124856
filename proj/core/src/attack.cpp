#include "cacc/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cacc/errors.hpp"

namespace cacc {

NoisePolicy NoisePolicy::make(NoiseKind kind, double wbar1, double wbar2, double wbar3, std::uint64_t seed) {
  NoisePolicy p{kind, wbar1, wbar2, wbar3, seed};
  p.validate();
  return p;
}

void NoisePolicy::validate() const {
  if (!(wbar1 > 0)) throw ValidationError("noise.wbar1", "must be > 0");
  if (!(wbar2 > 0)) throw ValidationError("noise.wbar2", "must be > 0");
  if (!(wbar3 > 0)) throw ValidationError("noise.wbar3", "must be > 0");
}

namespace {

VectorXd draw(CounterRng& g, NoiseKind kind, int n, double bound) {
  const double r = std::sqrt(bound);
  switch (kind) {
    case NoiseKind::uniform_ball:
      return g.in_ball(n, r);
    case NoiseKind::boundary:
      return g.unit_vector(n) * r;
    case NoiseKind::worst_corner: {
      VectorXd v(n);
      for (int i = 0; i < n; ++i) v(i) = (g.next_u64() & 1ULL) ? 1.0 : -1.0;
      return v * (r / std::sqrt(static_cast<double>(n)));
    }
  }
  return VectorXd::Zero(n);
}

}  // namespace

NoiseSample gen_noise(const NoisePolicy& policy, long k, std::uint64_t run, std::uint64_t stream) {
  CounterRng g(derive_key(policy.seed, run, stream, static_cast<std::uint64_t>(k)));
  NoiseSample s;
  s.omega_tilde = draw(g, policy.kind, 3, policy.wbar1);
  s.omega_u = draw(g, policy.kind, 1, policy.wbar2)(0);
  s.omega_e = draw(g, policy.kind, 5, policy.wbar3);
  return s;
}

void AttackPolicy::validate() const {
  if (!(margin > 0 && margin <= 1)) throw ValidationError("attack.margin", "must lie in (0, 1]");
  if (target_direction && target_direction->size() != 4)
    throw ValidationError("attack.target_direction", "expected 4 entries");
  if (target_direction && target_direction->norm() == 0.0)
    throw ValidationError("attack.target_direction", "must be nonzero");
  if (horizon_steps < 1) throw ValidationError("attack.horizon_steps", "must be >= 1");
}

AttackerState AttackerState::create(const AttackPolicy& policy, const MonitorDesign& mon, const EstimatorDesign& est,
                                    const ExtendedModel& em, const DiscreteModel& dm, const PlatoonConfig& cfg,
                                    std::uint64_t run) {
  policy.validate();
  AttackerState s;
  const MatrixXd I6 = MatrixXd::Identity(6, 6);
  s.e = VectorXd::Zero(6);
  s.M = em.Ce * em.Ae;
  s.Abar = (I6 - est.L * em.Ce) * em.Ae;
  s.LbBe1 = (I6 - est.L * em.Ce) * em.Be1;
  s.v0 = em.Ce * em.Be1;
  s.q2 = s.M * s.LbBe1;
  s.v = s.M * em.Be1;
  s.Pi = mon.Pi;
  Eigen::LLT<MatrixXd> llt(mon.Pi);
  if (llt.info() != Eigen::Success) throw ValidationError("Pi", "must be positive definite");
  s.S = llt.matrixU();
  if (policy.noise_model == AttackerNoiseModel::robust) {
    const double lmax = mon.Pi.selfadjointView<Eigen::Lower>().eigenvalues().maxCoeff();
    s.allowance = std::sqrt(lmax * cfg.wbar3) + (s.S * s.v0).norm() * std::sqrt(cfg.wbar2);
  }
  s.radius = std::sqrt(policy.margin) - s.allowance;

  VectorXd c(4);
  if (policy.target_direction)
    c = *policy.target_direction;
  else
    c << -1, -cfg.h, 0, 0;
  VectorXd acc = VectorXd::Zero(4), g = dm.G;
  for (int j = 0; j < policy.horizon_steps; ++j) {
    acc += g;
    g = dm.A * g;
  }
  s.greedy_sign = c.dot(acc) >= 0 ? 1.0 : -1.0;
  s.rng = CounterRng(derive_key(policy.seed, run, 0xa77ac4ULL));
  return s;
}

void AttackerState::observe(const AttackPolicy& policy, const VectorXd& e_true) {
  if (policy.noise_model == AttackerNoiseModel::robust) e = e_true;
}

namespace {

struct Interval {
  double lo, hi;
  bool empty() const { return !(lo <= hi); }
};

// { d : |S (p - q d)| <= R }
Interval quad_interval(const MatrixXd& S, const VectorXd& p, const VectorXd& q, double R) {
  const double inf = std::numeric_limits<double>::infinity();
  if (!(R > 0)) return {inf, -inf};
  const VectorXd sp = S * p, sq = S * q;
  const double a2 = sq.squaredNorm();
  const double a1 = -2.0 * sq.dot(sp);
  const double a0 = sp.squaredNorm() - R * R;
  if (a2 <= 1e-300) return a0 <= 0 ? Interval{-inf, inf} : Interval{inf, -inf};
  const double disc = a1 * a1 - 4.0 * a2 * a0;
  if (disc < 0) return {inf, -inf};
  const double sd = std::sqrt(disc);
  return {(-a1 - sd) / (2.0 * a2), (-a1 + sd) / (2.0 * a2)};
}

}  // namespace

AttackStep gen_stealthy_attack(const AttackPolicy& policy, const MonitorDesign&, const EstimatorDesign&,
                               const ExtendedModel&, AttackerState& st, long) {
  AttackStep out;
  if (policy.kind == AttackKind::none) return out;

  const VectorXd p1 = st.M * st.e;
  const VectorXd p2 = st.M * (st.Abar * st.e);
  const Interval i1 = quad_interval(st.S, p1, st.v0, st.radius);
  const Interval i2 = quad_interval(st.S, p2, st.q2, st.radius);
  const double lo = std::max(i1.lo, i2.lo), hi = std::min(i1.hi, i2.hi);

  double delta;
  if (!(lo <= hi)) {
    const VectorXd s1 = st.S * st.v0, s2 = st.S * st.q2;
    delta = (s1.dot(st.S * p1) + s2.dot(st.S * p2)) / (s1.squaredNorm() + s2.squaredNorm());
    out.flagged = true;
    ++st.flagged;
  } else {
    out.lo = lo;
    out.hi = hi;
    if (policy.kind == AttackKind::greedy_direction) {
      delta = st.greedy_sign > 0 ? hi : lo;
    } else {
      // Target residual uniform in {r : r' Pi r <= margin}, inverted through the pseudo-inverse of Ce Ae Be1.
      const VectorXd u = st.rng.in_ball(5, std::sqrt(policy.margin));
      const VectorXd rbar = st.S.triangularView<Eigen::Upper>().solve(u);
      delta = st.v.dot(p2 - rbar) / st.v.squaredNorm();
      delta = std::clamp(delta, lo, hi);
    }
    if (!std::isfinite(delta)) delta = std::isfinite(lo) ? lo : (std::isfinite(hi) ? hi : 0.0);
  }
  out.delta = delta;
  if (policy.noise_model == AttackerNoiseModel::zero) st.e = st.Abar * st.e - st.LbBe1 * delta;
  return out;
}

}  // namespace cacc
