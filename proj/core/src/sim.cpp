#include "cacc/sim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cacc/errors.hpp"
#include "cacc/parallel.hpp"
#include "cacc/reach.hpp"
#include "cacc/runtime.hpp"

namespace cacc {

double LeadSignal::at(long k) const {
  switch (kind) {
    case SignalKind::constant: return value;
    case SignalKind::step: return k < step_k ? before : value;
    case SignalKind::exp_decay: return amplitude * std::exp(-rate * static_cast<double>(k));
    case SignalKind::piecewise: {
      double v = pieces.empty() ? 0.0 : pieces.front().second;
      for (const auto& [k0, level] : pieces)
        if (k >= k0) v = level;
      return v;
    }
  }
  return 0.0;
}

void Scenario::validate() const {
  cfg.validate();
  if (n_vehicles < 2) throw ValidationError("scenario.n_vehicles", "must be >= 2");
  if (horizon < 1) throw ValidationError("scenario.horizon", "must be >= 1");
  if (runs < 1) throw ValidationError("scenario.runs", "must be >= 1");
  if (burn_in < 0) throw ValidationError("scenario.burn_in", "must be >= 0");
  if (static_cast<int>(init.size()) != n_vehicles - 1)
    throw ValidationError("scenario.init", "need one initial state per follower");
  if (static_cast<int>(attacks.size()) > n_vehicles - 1)
    throw ValidationError("scenario.attacks", "more attack policies than links");
  for (size_t i = 0; i < init.size(); ++i) {
    const auto& f = init[i];
    const std::string field = "scenario.init[" + std::to_string(i) + "]";
    if (f.x.size() != 4 || !f.x.allFinite()) throw ValidationError(field, "x must be 4 finite numbers");
    if (f.x(1) < 0 || f.x(1) > cfg.v_max) throw ValidationError(field, "initial velocity outside [0, v_max]");
    if (f.xhat && (f.xhat->size() != 6 || !f.xhat->allFinite())) throw ValidationError(field, "xhat must be 6 finite numbers");
  }
  if (lead_x0.size() != 4) throw ValidationError("scenario.lead_x0", "expected 4 entries");
  if (noise_enabled) noise.validate();
  for (const auto& a : attacks) a.validate();
  if (lead.kind == SignalKind::piecewise && lead.pieces.empty())
    throw ValidationError("scenario.lead_input", "piecewise signal needs at least one piece");
}

void SimSummary::merge(const SimSummary& o) {
  steps += o.steps;
  residuals_post_burn += o.residuals_post_burn;
  alarms_post_burn += o.alarms_post_burn;
  alarms_total += o.alarms_total;
  max_z = std::max(max_z, o.max_z);
  max_z_post_burn = std::max(max_z_post_burn, o.max_z_post_burn);
  attack_steps += o.attack_steps;
  attack_alarms += o.attack_alarms;
  flagged_steps += o.flagged_steps;
  scatter_post_burn += o.scatter_post_burn;
  scatter_inside += o.scatter_inside;
  zeta_samples += o.zeta_samples;
  zeta_violations += o.zeta_violations;
  x_violations += o.x_violations;
  max_level_zeta = std::max(max_level_zeta, o.max_level_zeta);
  max_level_x = std::max(max_level_x, o.max_level_x);
  max_level_x_initial = std::max(max_level_x_initial, o.max_level_x_initial);
  max_state_norm = std::max(max_state_norm, o.max_state_norm);
  max_state_deviation = std::max(max_state_deviation, o.max_state_deviation);
  min_spacing_error = std::min(min_spacing_error, o.min_spacing_error);
  max_abs_spacing_error = std::max(max_abs_spacing_error, o.max_abs_spacing_error);
  iss_checked += o.iss_checked;
  iss_violations += o.iss_violations;
}

void SimSummary::finalize() {
  alarm_rate_post_burn = residuals_post_burn ? static_cast<double>(alarms_post_burn) / residuals_post_burn : 0.0;
  attack_alarm_rate = attack_steps ? static_cast<double>(attack_alarms) / attack_steps : 0.0;
}

MatrixXd project_monitor_ellipse(const MonitorDesign& mon, int i, int j) {
  const int n = static_cast<int>(mon.Pi.rows());
  if (i < 0 || j < 0 || i >= n || j >= n || i == j) throw ValidationError("dims", "need two distinct valid indices");
  std::vector<int> order = {i, j};
  for (int q = 0; q < n; ++q)
    if (q != i && q != j) order.push_back(q);
  MatrixXd Q(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) Q(a, b) = mon.Pi(order[a], order[b]);
  return project(Q, 2);
}

Scenario highway_scenario(const PlatoonConfig& cfg) {
  Scenario s;
  s.cfg = cfg;
  s.n_vehicles = 2;
  s.horizon = 400;
  s.lead.target = LeadTarget::u;
  s.lead.kind = SignalKind::constant;
  s.lead.value = 0.0;
  FollowerInit f;
  f.x << 0, 30, 0, 0;
  s.init = {f};
  s.noise = NoisePolicy{NoiseKind::uniform_ball, cfg.wbar1, cfg.wbar2, cfg.wbar3, 0};
  return s;
}

namespace {

struct Link {
  VectorXd xe;
  VectorXd xhat;
  std::optional<AttackerState> attacker;
  AttackPolicy policy;
  VectorXd zeta1;
  double z1_level = 0;  // zeta(1)' P zeta(1)
  double ak_pow = 1;    // a^(k-1)
  VectorXd e0;
  double e0_norm = 0;
  double wu_sup = 0, we_sup = 0;
  VectorXd x1;
};

template <class V>
void copy_to(std::array<double, 6>& dst, const V& v) {
  for (int i = 0; i < 6; ++i) dst[i] = v(i);
}

}  // namespace

TrajectoryLog run_scenario(const Scenario& s, const SynthesisResult& design, const ReachShape* shape) {
  s.validate();
  const ExtendedModel em = build_extended(s.cfg);
  const DiscreteModel dm = discretize(build_continuous(s.cfg), s.cfg.Ts);
  const DiscreteModel lead_model = build_lead_model(s.cfg);
  const EstimatorDesign& est = design.est;
  const MonitorDesign& mon = design.mon;
  const int F = s.n_vehicles - 1;
  const MatrixXd ell = project_monitor_ellipse(mon, 0, 1);
  MatrixXd P_x;
  if (shape) P_x = shape->P_x;

  // ISS envelope constants.
  const double lmaxP = est.P_lyap.selfadjointView<Eigen::Lower>().eigenvalues().maxCoeff();
  const double c_iss = std::sqrt(est.mu2 * lmaxP);
  const double lam_iss = std::sqrt(1.0 - est.alpha_decay);

  TrajectoryLog log;
  log.seed = s.seed;
  log.runs = s.runs;
  log.horizon = s.horizon;
  log.followers = F;
  const int keep = s.record_runs < 0 ? s.runs : std::min(s.record_runs, s.runs);
  log.logs.resize(keep);
  std::vector<SimSummary> per_run(s.runs);

  NoisePolicy noise = s.noise;
  noise.seed = s.seed;

  parallel_for(s.runs, s.threads, [&](int run) {
    SimSummary& sum = per_run[run];
    const bool record = run < keep;
    RunLog* rl = record ? &log.logs[run] : nullptr;
    if (rl) {
      rl->run = run;
      rl->steps.reserve(static_cast<size_t>(s.horizon) * F);
    }
    std::vector<Link> links(F);
    for (int i = 0; i < F; ++i) {
      const FollowerInit& f = s.init[i];
      Link& l = links[i];
      l.xe.resize(6);
      l.xe << f.x, f.dv, f.a_prev;
      l.xhat = f.xhat ? *f.xhat : l.xe;
      l.policy = i < static_cast<int>(s.attacks.size()) ? s.attacks[i] : AttackPolicy{};
      if (l.policy.kind != AttackKind::none) {
        AttackPolicy p = l.policy;
        p.seed = p.seed ^ s.seed;
        l.policy = p;
        l.attacker = AttackerState::create(p, mon, est, em, dm, s.cfg, static_cast<std::uint64_t>(run) * 64 + i);
      }
      l.e0 = l.xe - l.xhat;
      l.e0_norm = l.e0.norm();
      l.x1 = l.xe.head(4);
      if (shape) {
        l.zeta1.resize(10);
        l.zeta1 << l.xe.head(4), l.e0;
        l.z1_level = l.zeta1.dot(shape->P_zeta * l.zeta1);
      }
    }
    VectorXd lead = s.lead_x0;
    std::vector<VehicleRuntime> rts;
    rts.reserve(F);
    for (int i = 0; i < F; ++i) rts.emplace_back(est, mon, em, links[i].xhat, 1);

    for (long k = 1; k <= s.horizon; ++k) {
      const double u_lead = s.lead.target == LeadTarget::u ? s.lead.at(k) : lead(3);
      std::vector<double> u_prev(F);
      for (int i = 0; i < F; ++i) u_prev[i] = i == 0 ? u_lead : links[i - 1].xe(3);

      for (int i = 0; i < F; ++i) {
        Link& l = links[i];
        const VectorXd e = l.xe - l.xhat;
        const VectorXd x = l.xe.head(4);

        if (shape) {
          VectorXd zeta(10);
          zeta << x, e;
          const double a = shape->a;
          const double alpha_k = l.ak_pow * l.z1_level + (5.0 - a) * (1.0 - l.ak_pow) / (1.0 - a);
          l.ak_pow *= a;
          const double lz = zeta.dot(shape->P_zeta * zeta);
          const double lx = x.dot(P_x * x);
          const double tol = 1e-9 * std::max(1.0, alpha_k);
          ++sum.zeta_samples;
          if (lz > alpha_k + tol) ++sum.zeta_violations;
          if (lx > alpha_k + tol) ++sum.x_violations;
          if (alpha_k > 0) {
            if (k >= 2) {
              sum.max_level_zeta = std::max(sum.max_level_zeta, lz / alpha_k);
              sum.max_level_x = std::max(sum.max_level_x, lx / alpha_k);
            } else {
              sum.max_level_x_initial = std::max(sum.max_level_x_initial, lx / alpha_k);
            }
          }
        }
        sum.max_state_norm = std::max(sum.max_state_norm, x.norm());
        sum.max_state_deviation = std::max(sum.max_state_deviation, (x - l.x1).norm());
        sum.min_spacing_error = std::min(sum.min_spacing_error, x(0));
        sum.max_abs_spacing_error = std::max(sum.max_abs_spacing_error, std::abs(x(0)));

        double delta = 0;
        bool flagged = false;
        if (l.attacker) {
          l.attacker->observe(l.policy, e);
          const AttackStep as = gen_stealthy_attack(l.policy, mon, est, em, *l.attacker, k);
          delta = as.delta;
          flagged = as.flagged;
          ++sum.attack_steps;
          if (flagged) ++sum.flagged_steps;
        }

        double wu = 0;
        VectorXd we = VectorXd::Zero(5);
        if (s.noise_enabled) {
          const NoiseSample ns = gen_noise(noise, k, static_cast<std::uint64_t>(run), static_cast<std::uint64_t>(i));
          wu = ns.omega_u;
          we = ns.omega_e;
        }
        l.wu_sup = std::max(l.wu_sup, std::abs(wu));
        l.we_sup = std::max(l.we_sup, we.norm());

        const double net_in = u_prev[i] + delta + wu;
        VectorXd xe_next = em.Ae * l.xe + em.Be1 * u_prev[i] + em.Be2 * net_in;
        const VectorXd y_next = em.Ce * xe_next + we;
        const VehicleRuntime::Step st = rts[i].step(net_in, y_next);
        if (!xe_next.allFinite() || !st.xhat.allFinite())
          throw NumericalError("non-finite state in run " + std::to_string(run) + " at k=" + std::to_string(k));

        ++sum.steps;
        const long kr = k + 1;
        if (st.verdict.alarm) {
          ++sum.alarms_total;
          if (l.attacker) ++sum.attack_alarms;
          if (run == 0 && sum.alarm_times_run0.size() < 10000) sum.alarm_times_run0.push_back(kr);
        }
        sum.max_z = std::max(sum.max_z, st.verdict.z);
        if (kr > s.burn_in) {
          ++sum.residuals_post_burn;
          if (st.verdict.alarm) ++sum.alarms_post_burn;
          sum.max_z_post_burn = std::max(sum.max_z_post_burn, st.verdict.z);
          const Eigen::Vector2d r12(st.r(0), st.r(1));
          ++sum.scatter_post_burn;
          if (r12.dot(ell * r12) <= 1.0) ++sum.scatter_inside;
        }
        if (!l.attacker) {
          // ISS envelope for the new error
          const VectorXd e_next = xe_next - st.xhat;
          const double bound = c_iss * std::pow(lam_iss, static_cast<double>(kr - 1)) * l.e0_norm +
                               est.gamma * (l.wu_sup + l.we_sup);
          ++sum.iss_checked;
          if (e_next.norm() > bound * (1.0 + 1e-12)) ++sum.iss_violations;
        }

        if (rl) {
          StepRecord rec;
          rec.k = k;
          rec.vehicle = i + 1;
          copy_to(rec.xe, l.xe);
          copy_to(rec.xhat, l.xhat);
          rec.delta = delta;
          rec.flagged = flagged;
          for (int q = 0; q < 5; ++q) rec.r[q] = st.r(q);
          rec.z = st.verdict.z;
          rec.alarm = st.verdict.alarm;
          rl->steps.push_back(rec);
        }
        l.xe = xe_next;
        l.xhat = st.xhat;
      }
      if (s.lead.target == LeadTarget::eps0) lead = lead_model.A * lead + lead_model.B.col(0) * s.lead.at(k);
    }
  });

  for (const auto& r : per_run) log.summary.merge(r);
  log.summary.alarm_times_run0 = per_run.front().alarm_times_run0;
  log.summary.finalize();
  return log;
}

ContainmentReport empirical_reach(const TrajectoryLog& log, const ReachShape& shape) {
  ContainmentReport rep;
  const int K = log.horizon;
  rep.samples_per_k.assign(K, 0);
  rep.zeta_inside_per_k.assign(K, 0);
  rep.x_inside_per_k.assign(K, 0);
  const double a = shape.a;
  for (const auto& rl : log.logs) {
    std::vector<double> z1(log.followers + 1, -1.0);
    for (const auto& rec : rl.steps) {
      VectorXd zeta(10);
      for (int q = 0; q < 4; ++q) zeta(q) = rec.xe[q];
      for (int q = 0; q < 6; ++q) zeta(4 + q) = rec.xe[q] - rec.xhat[q];
      const double lz = zeta.dot(shape.P_zeta * zeta);
      if (rec.k == 1) z1[rec.vehicle] = lz;
      if (z1[rec.vehicle] < 0) continue;  // no k = 1 record for this vehicle
      const double ak = std::pow(a, static_cast<double>(rec.k - 1));
      const double alpha_k = ak * z1[rec.vehicle] + (5.0 - a) * (1.0 - ak) / (1.0 - a);
      const VectorXd x = zeta.head(4);
      const double lx = x.dot(shape.P_x * x);
      const double tol = 1e-9 * std::max(1.0, alpha_k);
      const long idx = rec.k - 1;
      if (idx < 0 || idx >= K) continue;
      rep.samples_per_k[idx]++;
      if (lz <= alpha_k + tol) rep.zeta_inside_per_k[idx]++;
      if (lx <= alpha_k + tol) rep.x_inside_per_k[idx]++;
      if (alpha_k > 0) {
        if (rec.k >= 2) {
          rep.max_level_zeta = std::max(rep.max_level_zeta, lz / alpha_k);
          rep.max_level_x = std::max(rep.max_level_x, lx / alpha_k);
        } else {
          rep.max_level_x_initial = std::max(rep.max_level_x_initial, lx / alpha_k);
        }
      }
    }
  }
  for (int k = 0; k < K; ++k) {
    if (!rep.samples_per_k[k]) continue;
    rep.min_fraction_zeta = std::min(rep.min_fraction_zeta,
                                     static_cast<double>(rep.zeta_inside_per_k[k]) / rep.samples_per_k[k]);
    rep.min_fraction_x = std::min(rep.min_fraction_x,
                                  static_cast<double>(rep.x_inside_per_k[k]) / rep.samples_per_k[k]);
  }
  return rep;
}

}  // namespace cacc
