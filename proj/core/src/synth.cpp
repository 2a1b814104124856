#include "cacc/synth.hpp"

#include <cmath>
#include <sstream>

#include "cacc/errors.hpp"
#include "cacc/reach.hpp"

namespace cacc {

using lmi::BlockLMI;
using lmi::Expr;
using lmi::Sense;

namespace {

MatrixXd I(int n) { return MatrixXd::Identity(n, n); }

// Lower-triangular T with T T' = sum_k a^-k Acal^k Q Acal'^k, Q the noise covariance proxy.
// In coordinates zeta = T z the invariant ellipsoid is close to a ball.
MatrixXd reach_coordinates(const ClosedLoopModel& cl, const MonitorDesign& mon, const ReachWeights& w, double a) {
  MatrixXd S = w.wbar1 * cl.B1 * cl.B1.transpose() + w.wbar2 * cl.B2 * cl.B2.transpose() +
               w.wbar3 * (cl.B3 * cl.B3.transpose() + cl.B4 * cl.B4.transpose()) +
               cl.B5 * mon.Pi.inverse() * cl.B5.transpose();
  MatrixXd M = cl.Acal / std::sqrt(a);
  for (int i = 0; i < 60 && M.norm() > 1e-18; ++i) {
    S = S + M * S * M.transpose();
    M = M * M;
  }
  S = 0.5 * (S + S.transpose());
  S += 1e-12 * S.trace() / 10.0 * I(10);
  Eigen::LLT<MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) return I(10);
  return llt.matrixL();
}

}  // namespace

lmi::Problem estimator_program(const ExtendedModel& em, double alpha) {
  lmi::Problem p;
  const Expr P = p.add_symmetric("P", 6);
  const Expr Y = p.add_full("Y", 6, 5);
  const Expr mu1 = p.add_scalar("mu1");
  const Expr mu2 = p.add_scalar("mu2");
  const MatrixXd AeT = em.Ae.transpose();

  BlockLMI m({6, 6, 1, 5}, Sense::nsd);
  m.set(0, 0, -P);
  m.set(1, 0, AeT * P - AeT * em.Ce.transpose() * Y.transpose());
  m.set(1, 1, (alpha - 1.0) * P);
  m.set(2, 0, MatrixXd(em.Be1.transpose()) * P);
  m.set(2, 2, -alpha * mu1);
  m.set(3, 0, Y.transpose());
  m.set(3, 3, scale(-alpha * mu1, I(5)));
  p.add_constraint(m, "dissipation");

  BlockLMI g({6, 6}, Sense::psd);
  g.set(0, 0, P);
  g.set(1, 0, Expr(I(6)));
  g.set(1, 1, scale(mu2, I(6)));
  p.add_constraint(g, "gain");

  p.add_lower_bound(mu1, 0.0, "mu1>0");
  p.add_lower_bound(mu2, 0.0, "mu2>0");
  p.minimize(mu1 + mu2);
  return p;
}

EstimatorDesign estimator_from_solution(const ExtendedModel& em, double alpha, const lmi::SdpSolution& s) {
  EstimatorDesign d;
  d.P_lyap = s.values.at("P");
  d.Y = s.values.at("Y");
  d.mu1 = s.scalar("mu1");
  d.mu2 = s.scalar("mu2");
  d.alpha_decay = alpha;
  d.gamma = std::sqrt(d.mu1 * d.mu2);
  d.objective = d.mu1 + d.mu2;
  d.L = d.P_lyap.ldlt().solve(d.Y);
  d.spectral_radius = spectral_radius((I(6) - d.L * em.Ce) * em.Ae);
  if (!(d.spectral_radius < 1.0))
    throw NumericalError("estimator error dynamics not Schur stable (rho = " +
                         std::to_string(d.spectral_radius) + ")");
  return d;
}

EstimatorDesign synth_estimator(const ExtendedModel& em, const std::vector<double>& grid,
                                EstimatorSelect select, const lmi::SolverOptions& opt, int threads,
                                GridReport* report) {
  for (double a : grid)
    if (!(a > 0 && a < 1)) throw ValidationError("alpha_grid", "points must lie in (0, 1)");
  auto program = [&](double alpha) {
    lmi::SdpSolution s = lmi::solve(estimator_program(em, alpha), opt);
    if (s.status == lmi::Status::optimal) estimator_from_solution(em, alpha, s);  // Schur post-check
    return s;
  };
  lmi::SolutionKey key;
  if (select == EstimatorSelect::min_gamma)
    key = [](double, const lmi::SdpSolution& s) { return std::sqrt(s.scalar("mu1") * s.scalar("mu2")); };
  lmi::LineSearchResult r;
  try {
    r = lmi::line_search_scalar(program, grid, key, threads);
  } catch (const lmi::GridInfeasibleError& e) {
    throw InfeasibleError(std::string("estimator synthesis: ") + e.what());
  }
  if (report) {
    report->points = r.points;
    report->chosen = r.best;
  }
  return estimator_from_solution(em, r.best, r.solution);
}

lmi::Problem monitor_program(const ExtendedModel& em, double gamma, double wbar2, double wbar3) {
  if (!(wbar2 > 0) || !(wbar3 > 0))
    throw ValidationError("wbar2/wbar3", "noise bounds must be positive; a zero bound collapses the residual set");
  if (!(gamma > 0) || !std::isfinite(gamma)) throw ValidationError("gamma", "must be positive and finite");
  lmi::Problem p;
  const Expr Pi = p.add_symmetric("Pi", 5);
  const Expr l1 = p.add_scalar("lambda1");
  const Expr l2 = p.add_scalar("lambda2");
  const MatrixXd M = em.Ce * em.Ae;

  BlockLMI b({6, 5, 1}, Sense::psd);
  b.set(0, 0, scale(l1, I(6)) - MatrixXd(M.transpose()) * Pi * M);
  b.set(1, 0, Pi * M);
  b.set(1, 1, scale(l2, I(5)) - Pi);
  b.set(2, 2, Expr(MatrixXd::Ones(1, 1)) - gamma * gamma * (wbar2 + wbar3) * l1 - wbar3 * l2);
  p.add_constraint(b, "s-procedure");
  p.add_lower_bound(l1, 0.0, "lambda1>0");
  p.add_lower_bound(l2, 0.0, "lambda2>0");
  p.minimize_neg_logdet("Pi");
  return p;
}

MonitorDesign synth_monitor(const ExtendedModel& em, const EstimatorDesign& est, double wbar2, double wbar3,
                            const lmi::SolverOptions& opt) {
  const lmi::SdpSolution s = lmi::solve(monitor_program(em, est.gamma, wbar2, wbar3), opt);
  if (s.status == lmi::Status::infeasible) throw InfeasibleError("monitor synthesis infeasible: " + s.message);
  if (s.status != lmi::Status::optimal) throw NumericalError("monitor synthesis failed: " + s.message);
  MonitorDesign m;
  m.Pi = s.values.at("Pi");
  m.lambda1 = s.scalar("lambda1");
  m.lambda2 = s.scalar("lambda2");
  m.f3 = 1.0 - m.lambda1 * est.gamma * est.gamma * (wbar2 + wbar3) - m.lambda2 * wbar3;
  m.objective = s.objective_value;
  return m;
}

lmi::Problem reach_program(const ClosedLoopModel& cl, const MonitorDesign& mon, const ReachWeights& w,
                           double a) {
  lmi::Problem p;
  const Expr P = p.add_symmetric("P", 10);
  std::vector<Expr> ai;
  for (int i = 0; i < 5; ++i) ai.push_back(p.add_scalar("a" + std::to_string(i + 1)));

  MatrixXd Bcal(10, 19);
  Bcal << cl.B1, cl.B2, cl.B3, cl.B4, cl.B5;
  const std::vector<MatrixXd> W = {I(3) / w.wbar1, I(1) / w.wbar2, I(5) / w.wbar3, I(5) / w.wbar3, mon.Pi};

  MatrixXd Wfull = MatrixXd::Zero(19, 19);
  Expr Wa(19, 19);
  int o = 0;
  for (int i = 0; i < 5; ++i) {
    const int k = static_cast<int>(W[i].rows());
    MatrixXd E = MatrixXd::Zero(19, 19);
    E.block(o, o, k, k) = W[i];
    Wfull += E;
    Wa -= scale(ai[i], E);
    o += k;
  }
  Wa += Expr(Wfull);

  BlockLMI m({10, 10, 19}, Sense::psd);
  m.set(0, 0, a * P);
  m.set(1, 0, P * cl.Acal);
  m.set(1, 1, P);
  m.set(2, 1, MatrixXd(Bcal.transpose()) * P);
  m.set(2, 2, Wa);
  p.add_constraint(m, "invariance");

  Expr sum(1, 1);
  for (int i = 0; i < 5; ++i) {
    p.add_lower_bound(ai[i], 0.0, "a" + std::to_string(i + 1) + ">=0");
    p.add_upper_bound(ai[i], 1.0, "a" + std::to_string(i + 1) + "<=1");
    sum += ai[i];
  }
  p.add_lower_bound(sum, a, "sum(ai)>=a");
  p.minimize_neg_logdet("P");
  return p;
}

std::vector<double> reach_grid_extension(double rho2) {
  std::vector<double> g;
  for (double f : {0.75, 0.5, 0.25}) g.push_back(rho2 + (1.0 - rho2) * (1.0 - f));
  return g;
}

ReachShape synth_reach_shape(const ClosedLoopModel& cl, const MonitorDesign& mon, const ReachWeights& w,
                             const std::vector<double>& grid_in, bool extend, const lmi::SolverOptions& opt,
                             int threads, GridReport* report) {
  std::vector<double> grid = grid_in;
  for (double a : grid)
    if (!(a > 0 && a < 1)) throw ValidationError("a_grid", "points must lie in (0, 1)");
  const double rho = spectral_radius(cl.Acal);
  if (!(rho < 1.0)) throw InfeasibleError("closed loop is not Schur stable; no invariant ellipsoid exists");
  const double rho2 = rho * rho;
  bool any_above = false;
  for (double a : grid) any_above = any_above || a > rho2;
  if (!any_above && extend)
    for (double a : reach_grid_extension(rho2)) grid.push_back(a);

  auto program = [&](double a) {
    if (a <= rho2) {
      lmi::SdpSolution s;
      s.status = lmi::Status::infeasible;
      s.message = "a <= rho(Acal)^2";
      return s;
    }
    const MatrixXd T = reach_coordinates(cl, mon, w, a);
    const auto Tl = T.triangularView<Eigen::Lower>();
    ClosedLoopModel c2 = cl;
    c2.Acal = Tl.solve(MatrixXd(cl.Acal * T));
    c2.B1 = Tl.solve(cl.B1);
    c2.B2 = Tl.solve(cl.B2);
    c2.B3 = Tl.solve(cl.B3);
    c2.B4 = Tl.solve(cl.B4);
    c2.B5 = Tl.solve(cl.B5);
    lmi::SdpSolution s = lmi::solve(reach_program(c2, mon, w, a), opt);
    auto it = s.values.find("P");
    if (it != s.values.end()) {
      // P = T^-T Pt T^-1
      const MatrixXd Ti = Tl.solve(I(10));
      MatrixXd P = Ti.transpose() * it->second * Ti;
      it->second = 0.5 * (P + P.transpose());
      s.objective_value += 2.0 * T.diagonal().array().log().sum();
    }
    return s;
  };
  lmi::LineSearchResult r;
  try {
    r = lmi::line_search_scalar(program, grid, {}, threads);
  } catch (const lmi::GridInfeasibleError& e) {
    std::ostringstream os;
    os << "reach-set synthesis: " << e.what() << "; rho(Acal)^2 = " << rho2;
    throw InfeasibleError(os.str());
  }
  if (report) {
    report->points = r.points;
    report->chosen = r.best;
  }
  ReachShape s;
  s.P_zeta = r.solution.values.at("P");
  s.a = r.best;
  s.ai.resize(5);
  for (int i = 0; i < 5; ++i) s.ai(i) = r.solution.scalar("a" + std::to_string(i + 1));
  s.objective = r.solution.objective_value;
  s.P_x = project(s.P_zeta, 4);
  return s;
}

}  // namespace cacc
