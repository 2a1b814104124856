#pragma once

#include <Eigen/Dense>

namespace cacc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct PlatoonConfig {
  double h = 0.5;      // time headway [s]
  double tau = 0.1;    // driveline time constant [s]
  double kp = 0.2;
  double kd = 0.7;
  double Ts = 0.1;     // sampling interval [s]
  double s_standstill = 3.0;
  double v_max = 35.0;
  double u_min = -2.5;
  double u_max = 3.0;
  // squared peak bounds on the lumped input, the V2V noise and the sensor noise
  double wbar1 = 1234.8;
  double wbar2 = 1e-4;
  double wbar3 = 0.02;

  // Throws ValidationError naming the first offending field.
  void validate() const;
};

// x = [e, v, a, u]
struct ContinuousModel {
  MatrixXd Ac;  // 4x4
  MatrixXd Bc;  // 4x3
  VectorXd Gc;  // 4
};

struct DiscreteModel {
  MatrixXd A;
  MatrixXd B;
  VectorXd G;
  double Ts = 0.0;
};

// xe = [e, v, a, u, dv, a_prev]
struct ContinuousExtended {
  MatrixXd Ace;   // 6x6
  VectorXd Bce1;  // predecessor input u_{i-1}
  VectorXd Bce2;  // received signal u_{i-1} + delta + omega_u
  MatrixXd Ce;    // 5x6
};

struct ExtendedModel {
  MatrixXd Ae;
  VectorXd Be1;
  VectorXd Be2;
  VectorXd Be;
  MatrixXd Ce;
  double Ts = 0.0;
  // Diagnostics filled by build_extended.
  double cebe1_rel = 0.0;   // |Ce Be1|_inf / (|Ce| |Be1|)
  double ceaebe1_norm = 0.0;
};

ContinuousModel build_continuous(const PlatoonConfig& cfg);
ContinuousExtended build_continuous_extended(const PlatoonConfig& cfg);

// Zero-order-hold discretization of dx = Ac x + Uc w. Returns (exp(Ac Ts), int_0^Ts exp(Ac s) ds Uc)
// via one exponential of the block matrix [[Ac, Uc], [0, 0]] Ts.
std::pair<MatrixXd, MatrixXd> zoh(const MatrixXd& Ac, const MatrixXd& Uc, double Ts);

DiscreteModel discretize(const ContinuousModel& cm, double Ts);
ExtendedModel build_extended(const PlatoonConfig& cfg);

// Lead (virtual reference) vehicle, input eps0. B is 4x1, G is zero.
DiscreteModel build_lead_model(const PlatoonConfig& cfg);

double spectral_radius(const MatrixXd& A);

}  // namespace cacc
