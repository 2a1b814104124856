#pragma once

#include <vector>

#include "cacc/designs.hpp"
#include "cacc/model.hpp"

namespace cacc {

struct MonitorVerdict {
  double z = 0;
  bool alarm = false;
  long k = 0;
};

// x_hat(k+1) from x_hat(k), the received signal u_{i-1} + delta + omega_u and y(k+1).
VectorXd estimator_step(const EstimatorDesign& est, const ExtendedModel& em, const VectorXd& xhat, double net_in,
                        const VectorXd& y_next);

// r(k+1) = y(k+1) - Ce (Ae x_hat(k) + Be net_in)
VectorXd residual(const ExtendedModel& em, const VectorXd& xhat, double net_in, const VectorXd& y_next);

MonitorVerdict monitor_step(const MonitorDesign& mon, const VectorXd& r, long k);

// Error recursion e = x_e - x_hat, exact for the discretized plant:
//   e(k+1) = Abar e - (I - L Ce) Be1 (delta + omega_u) - L omega_e(k+1)
//   r(k+1) = Ce Ae e - Ce Be1 (delta + omega_u) + omega_e(k+1)
VectorXd error_step(const EstimatorDesign& est, const ExtendedModel& em, const VectorXd& e, double delta_plus_wu,
                    const VectorXd& omega_e_next);
VectorXd residual_from_error(const ExtendedModel& em, const VectorXd& e, double delta_plus_wu,
                             const VectorXd& omega_e_next);

// One vehicle's estimator + monitor. Sequential; one instance per vehicle.
class VehicleRuntime {
 public:
  VehicleRuntime(const EstimatorDesign& est, const MonitorDesign& mon, const ExtendedModel& em, VectorXd xhat0,
                 long k0 = 1);

  struct Step {
    long k = 0;  // index of the new sample
    VectorXd xhat;
    VectorXd r;
    MonitorVerdict verdict;
  };

  // Consumes the received signal at k and y(k+1); returns the k+1 estimate and residual.
  Step step(double net_in, const VectorXd& y_next);

  const VectorXd& xhat() const { return xhat_; }
  long k() const { return k_; }
  const std::vector<long>& alarm_times() const { return alarms_; }

 private:
  const EstimatorDesign& est_;
  const MonitorDesign& mon_;
  const ExtendedModel& em_;
  VectorXd xhat_;
  long k_;
  std::vector<long> alarms_;
};

}  // namespace cacc
