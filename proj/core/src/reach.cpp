#include "cacc/reach.hpp"

#include <cmath>

#include "cacc/errors.hpp"

namespace cacc {

ClosedLoopModel build_closed_loop(const DiscreteModel& dm, const ExtendedModel& em, const EstimatorDesign& est) {
  const VectorXd v = em.Ce * em.Ae * em.Be1;
  if (!(v.norm() >= 1e-10)) throw StructuralError("Ce Ae Be1 too small for a stable pseudo-inverse");
  const MatrixXd vdag = v.transpose() / v.squaredNorm();
  const MatrixXd I6 = MatrixXd::Identity(6, 6);
  const MatrixXd CA = em.Ce * em.Ae;
  const MatrixXd Abar = (I6 - est.L * em.Ce) * em.Ae;
  const MatrixXd G = dm.G;  // 4x1
  const MatrixXd Be1 = em.Be1;
  const MatrixXd BvCA = Be1 * vdag * CA;

  ClosedLoopModel cl;
  cl.vdag = vdag;
  cl.Abar = Abar;
  cl.Acal = MatrixXd::Zero(10, 10);
  cl.Acal.topLeftCorner(4, 4) = dm.A;
  cl.Acal.topRightCorner(4, 6) = G * vdag * CA * Abar;
  cl.Acal.bottomRightCorner(6, 6) = (I6 - BvCA) * Abar;

  cl.B1 = MatrixXd::Zero(10, 3);
  cl.B1.topRows(4) = dm.B;
  cl.B2 = MatrixXd::Zero(10, 1);
  cl.B2.topRows(4) = -G;
  cl.B3.resize(10, 5);
  cl.B3.topRows(4) = -G * vdag * CA * est.L;
  cl.B3.bottomRows(6) = (BvCA - I6) * est.L;
  cl.B4.resize(10, 5);
  cl.B4.topRows(4) = G * vdag;
  cl.B4.bottomRows(6) = -Be1 * vdag;
  cl.B5 = -cl.B4;
  return cl;
}

void CriticalSet::validate() const {
  if (halfspaces.empty()) throw ValidationError("critical_set", "needs at least one half-space");
  for (const auto& h : halfspaces) {
    if (h.c.size() == 0 || h.c.norm() == 0.0) throw ValidationError("critical_set", "half-space normal is zero");
    if (!std::isfinite(h.b)) throw ValidationError("critical_set", "offset must be finite");
    if (h.b < 0)
      throw ValidationError("critical_set",
                            "negative offset: the origin itself would be critical and the distance sign is undefined");
  }
}

CriticalSet collision_and_overspeed(const PlatoonConfig& cfg) {
  CriticalSet cs;
  VectorXd c1(4), c2(4);
  c1 << -1, -cfg.h, 0, 0;
  c2 << 0, 1, 0, 0;
  cs.halfspaces.push_back({c1, cfg.s_standstill, "collision"});
  cs.halfspaces.push_back({c2, cfg.v_max, "overspeed"});
  return cs;
}

double alpha_limit(double a) { return (5.0 - a) / (1.0 - a); }

std::vector<double> alpha_schedule(const ReachShape& shape, const VectorXd& zeta1, int K) {
  if (K < 1) throw ValidationError("horizon", "must be >= 1");
  if (zeta1.size() != shape.P_zeta.rows()) throw ValidationError("zeta1", "dimension mismatch");
  const double a = shape.a;
  const double z0 = zeta1.dot(shape.P_zeta * zeta1);
  std::vector<double> out(K);
  double ak = 1.0;  // a^(k-1)
  for (int k = 1; k <= K; ++k) {
    out[k - 1] = ak * z0 + (5.0 - a) * (1.0 - ak) / (1.0 - a);
    ak *= a;
  }
  return out;
}

MatrixXd project(const MatrixXd& P, int keep) {
  const int n = static_cast<int>(P.rows());
  if (keep <= 0 || keep > n) throw ValidationError("keep", "out of range");
  if (keep == n) return P;
  const MatrixXd P1 = P.topLeftCorner(keep, keep);
  const MatrixXd P2 = P.topRightCorner(keep, n - keep);
  const MatrixXd P3 = P.bottomRightCorner(n - keep, n - keep);
  Eigen::LDLT<MatrixXd> ldlt(P3);
  const double dmin = ldlt.vectorD().cwiseAbs().minCoeff();
  const double dmax = ldlt.vectorD().cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || !(dmin > 1e-14 * dmax))
    throw StructuralError("projection: trailing block is singular");
  MatrixXd S = P1 - P2 * ldlt.solve(P2.transpose());
  return 0.5 * (S + S.transpose());
}

std::vector<double> distance_to_critical(const MatrixXd& P_x, double alpha_k, const CriticalSet& crit,
                                         DistanceConvention conv) {
  crit.validate();
  if (!(alpha_k >= 0) || !std::isfinite(alpha_k)) throw ValidationError("alpha_k", "must be finite and >= 0");
  Eigen::LLT<MatrixXd> llt(P_x);
  if (llt.info() != Eigen::Success) throw ValidationError("P_x", "must be positive definite");
  std::vector<double> d;
  for (const auto& h : crit.halfspaces) {
    if (h.c.size() != P_x.rows()) throw ValidationError("critical_set", "normal dimension mismatch");
    const double q = h.c.dot(llt.solve(h.c));
    const double cc = h.c.squaredNorm();
    double reach;
    if (alpha_k == 0.0)
      reach = 0.0;
    else if (conv == DistanceConvention::printed)
      reach = std::sqrt(q / alpha_k);
    else
      reach = std::sqrt(q * alpha_k);
    d.push_back((std::abs(h.b) - reach) / cc);
  }
  return d;
}

const char* to_string(Verdict v) { return v == Verdict::risk_free ? "risk_free" : "at_risk"; }

RiskReport assess_risk(const ReachShape& shape, const VectorXd& zeta1, const CriticalSet& crit, int K,
                       DistanceConvention conv) {
  crit.validate();
  RiskReport r;
  r.alpha = alpha_schedule(shape, zeta1, K);
  r.alpha_inf = alpha_limit(shape.a);
  const size_t J = crit.halfspaces.size();
  r.violations_per_halfspace.assign(J, 0);
  for (const auto& h : crit.halfspaces) r.labels.push_back(h.label);
  auto scan = [&](const std::vector<double>& d, int k) {
    for (size_t j = 0; j < J; ++j)
      if (d[j] < 0) {
        r.violations_per_halfspace[j]++;
        if (!r.first_violation_k) {
          r.first_violation_k = k;
          r.first_violation_halfspace = static_cast<int>(j);
        }
      }
  };
  for (int k = 1; k <= K; ++k) {
    auto d = distance_to_critical(shape.P_x, r.alpha[k - 1], crit, conv);
    double m = d[0];
    for (double v : d) m = std::min(m, v);
    r.d_min.push_back(m);
    scan(d, k);
    r.d.push_back(std::move(d));
  }
  r.d_inf = distance_to_critical(shape.P_x, r.alpha_inf, crit, conv);
  scan(r.d_inf, K + 1);
  r.verdict = r.first_violation_k ? Verdict::at_risk : Verdict::risk_free;
  return r;
}

}  // namespace cacc
