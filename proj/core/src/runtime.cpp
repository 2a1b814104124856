#include "cacc/runtime.hpp"

#include <cmath>

#include "cacc/errors.hpp"

namespace cacc {

namespace {

void check_inputs(const VectorXd& xhat, double net_in, const VectorXd& y_next) {
  if (xhat.size() != 6) throw ValidationError("xhat", "expected 6 entries");
  if (y_next.size() != 5) throw ValidationError("y", "expected 5 entries");
  if (!std::isfinite(net_in)) throw ValidationError("net_in", "non-finite value");
  if (!y_next.allFinite()) throw ValidationError("y", "non-finite measurement");
  if (!xhat.allFinite()) throw ValidationError("xhat", "non-finite estimate");
}

}  // namespace

VectorXd residual(const ExtendedModel& em, const VectorXd& xhat, double net_in, const VectorXd& y_next) {
  check_inputs(xhat, net_in, y_next);
  return y_next - em.Ce * (em.Ae * xhat + em.Be * net_in);
}

VectorXd estimator_step(const EstimatorDesign& est, const ExtendedModel& em, const VectorXd& xhat, double net_in,
                        const VectorXd& y_next) {
  const VectorXd r = residual(em, xhat, net_in, y_next);
  return em.Ae * xhat + em.Be * net_in + est.L * r;
}

MonitorVerdict monitor_step(const MonitorDesign& mon, const VectorXd& r, long k) {
  MonitorVerdict v;
  v.z = r.dot(mon.Pi * r);
  v.alarm = v.z > 1.0;
  v.k = k;
  return v;
}

VectorXd error_step(const EstimatorDesign& est, const ExtendedModel& em, const VectorXd& e, double delta_plus_wu,
                    const VectorXd& omega_e_next) {
  const MatrixXd Lbar = MatrixXd::Identity(6, 6) - est.L * em.Ce;
  return Lbar * em.Ae * e - Lbar * em.Be1 * delta_plus_wu - est.L * omega_e_next;
}

VectorXd residual_from_error(const ExtendedModel& em, const VectorXd& e, double delta_plus_wu,
                             const VectorXd& omega_e_next) {
  return em.Ce * em.Ae * e - em.Ce * em.Be1 * delta_plus_wu + omega_e_next;
}

VehicleRuntime::VehicleRuntime(const EstimatorDesign& est, const MonitorDesign& mon, const ExtendedModel& em,
                               VectorXd xhat0, long k0)
    : est_(est), mon_(mon), em_(em), xhat_(std::move(xhat0)), k_(k0) {}

VehicleRuntime::Step VehicleRuntime::step(double net_in, const VectorXd& y_next) {
  Step s;
  s.r = residual(em_, xhat_, net_in, y_next);
  xhat_ = em_.Ae * xhat_ + em_.Be * net_in + est_.L * s.r;
  ++k_;
  s.k = k_;
  s.xhat = xhat_;
  s.verdict = monitor_step(mon_, s.r, k_);
  if (s.verdict.alarm) alarms_.push_back(k_);
  return s;
}

}  // namespace cacc
