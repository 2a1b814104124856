#include "cacc/model.hpp"

#include <cmath>
#include <string>
#include <unsupported/Eigen/MatrixFunctions>

#include "cacc/errors.hpp"

namespace cacc {

namespace {

void require(bool ok, const char* field, const std::string& msg) {
  if (!ok) throw ValidationError(field, msg);
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

void PlatoonConfig::validate() const {
  const std::pair<const char*, double> all[] = {
      {"h", h},       {"tau", tau},     {"kp", kp},       {"kd", kd},
      {"Ts", Ts},     {"s_standstill", s_standstill},     {"v_max", v_max},
      {"u_min", u_min}, {"u_max", u_max}, {"wbar1", wbar1}, {"wbar2", wbar2},
      {"wbar3", wbar3}};
  for (const auto& [name, v] : all) require(finite(v), name, "must be finite");
  require(h > 0, "h", "must be > 0");
  require(tau > 0, "tau", "must be > 0");
  require(Ts > 0, "Ts", "must be > 0");
  require(kp > 0, "kp", "must be > 0");
  require(kd > 0, "kd", "must be > 0");
  require(kd > kp * tau, "kd", "must exceed kp*tau (string stability)");
  require(wbar1 > 0, "wbar1", "must be > 0");
  require(wbar2 > 0, "wbar2", "must be > 0");
  require(wbar3 > 0, "wbar3", "must be > 0");
  require(u_min < u_max, "u_min", "must be below u_max");
  require(v_max > 0, "v_max", "must be > 0");
  require(s_standstill >= 0, "s_standstill", "must be >= 0");
}

ContinuousModel build_continuous(const PlatoonConfig& cfg) {
  cfg.validate();
  const double h = cfg.h, tau = cfg.tau, kp = cfg.kp, kd = cfg.kd;
  ContinuousModel m;
  m.Ac.resize(4, 4);
  m.Ac << 0, -1, -h, 0,
          0, 0, 1, 0,
          0, 0, -1 / tau, 1 / tau,
          kp / h, -kd / h, -kd, -1 / h;
  m.Bc.resize(4, 3);
  m.Bc << 0, 1, 0,
          0, 0, 0,
          0, 0, 0,
          kp / h, kd / h, 1 / h;
  m.Gc = VectorXd::Zero(4);
  m.Gc(3) = 1 / h;
  return m;
}

ContinuousExtended build_continuous_extended(const PlatoonConfig& cfg) {
  cfg.validate();
  const double h = cfg.h, tau = cfg.tau, kp = cfg.kp, kd = cfg.kd;
  ContinuousExtended m;
  m.Ace.resize(6, 6);
  m.Ace << 0, 0, -h, 0, 1, 0,
           0, 0, 1, 0, 0, 0,
           0, 0, -1 / tau, 1 / tau, 0, 0,
           kp / h, 0, -kd, -1 / h, kd / h, 0,
           0, 0, -1, 0, 0, 1,
           0, 0, 0, 0, 0, -1 / tau;
  m.Bce1 = VectorXd::Zero(6);
  m.Bce1(5) = 1 / tau;
  m.Bce2 = VectorXd::Zero(6);
  m.Bce2(3) = 1 / h;
  m.Ce = MatrixXd::Zero(5, 6);
  m.Ce.leftCols(5).setIdentity();
  return m;
}

std::pair<MatrixXd, MatrixXd> zoh(const MatrixXd& Ac, const MatrixXd& Uc, double Ts) {
  if (!(Ts > 0) || !std::isfinite(Ts)) throw ValidationError("Ts", "must be > 0");
  const Eigen::Index n = Ac.rows(), m = Uc.cols();
  MatrixXd M = MatrixXd::Zero(n + m, n + m);
  M.topLeftCorner(n, n) = Ac * Ts;
  M.topRightCorner(n, m) = Uc * Ts;
  const MatrixXd E = M.exp();
  return {E.topLeftCorner(n, n), E.topRightCorner(n, m)};
}

DiscreteModel discretize(const ContinuousModel& cm, double Ts) {
  MatrixXd U(4, 4);
  U << cm.Bc, cm.Gc;
  auto [A, W] = zoh(cm.Ac, U, Ts);
  DiscreteModel d;
  d.A = A;
  d.B = W.leftCols(3);
  d.G = W.col(3);
  d.Ts = Ts;
  return d;
}

ExtendedModel build_extended(const PlatoonConfig& cfg) {
  const ContinuousExtended c = build_continuous_extended(cfg);
  MatrixXd U(6, 3);
  U << c.Bce1, c.Bce2, c.Bce1 + c.Bce2;
  auto [A, W] = zoh(c.Ace, U, cfg.Ts);
  ExtendedModel e;
  e.Ae = A;
  e.Be1 = W.col(0);
  e.Be2 = W.col(1);
  e.Be = W.col(2);
  e.Ce = c.Ce;
  e.Ts = cfg.Ts;

  const double scale = e.Be1.norm() + e.Be2.norm();
  if ((e.Be - e.Be1 - e.Be2).lpNorm<Eigen::Infinity>() > 1e-12 * scale)
    throw StructuralError("Be differs from Be1 + Be2");
  const VectorXd cb = e.Ce * e.Be1;
  e.cebe1_rel = cb.lpNorm<Eigen::Infinity>() / (e.Ce.norm() * e.Be1.norm());
  const VectorXd v = e.Ce * e.Ae * e.Be1;
  e.ceaebe1_norm = v.norm();
  if (!(v.norm() > 1e-10 * e.Ce.norm() * e.Ae.norm() * e.Be1.norm()))
    throw StructuralError("Ce Ae Be1 is numerically zero");
  return e;
}

DiscreteModel build_lead_model(const PlatoonConfig& cfg) {
  cfg.validate();
  const double h = cfg.h, tau = cfg.tau;
  MatrixXd Ac(4, 4);
  Ac << 0, 0, 0, 0,
        0, 0, 1, 0,
        0, 0, -1 / tau, 1 / tau,
        0, 0, 0, -1 / h;
  MatrixXd U = MatrixXd::Zero(4, 1);
  U(3, 0) = 1 / h;
  auto [A, W] = zoh(Ac, U, cfg.Ts);
  DiscreteModel d;
  d.A = A;
  d.B = W;
  d.G = VectorXd::Zero(4);
  d.Ts = cfg.Ts;
  return d;
}

double spectral_radius(const MatrixXd& A) {
  return A.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace cacc
