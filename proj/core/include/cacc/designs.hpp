#pragma once

#include <Eigen/Dense>
#include <vector>

namespace cacc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct EstimatorDesign {
  MatrixXd L;       // 6x5
  MatrixXd P_lyap;  // 6x6
  MatrixXd Y;       // 6x5
  double mu1 = 0, mu2 = 0;
  double alpha_decay = 0;  // grid point chosen
  double gamma = 0;        // sqrt(mu1 mu2)
  double spectral_radius = 0;  // of (I - L Ce) Ae
  double objective = 0;        // mu1 + mu2
};

struct MonitorDesign {
  MatrixXd Pi;  // 5x5
  double lambda1 = 0, lambda2 = 0;
  double f3 = 0;
  double objective = 0;  // -logdet(Pi)
};

// Stealthy closed loop in zeta = [x; e], driven by
// (omega_tilde, omega_u, omega_e(k+1), omega_e(k+2), r(k+2)).
struct ClosedLoopModel {
  MatrixXd Acal;  // 10x10
  MatrixXd B1;    // 10x3
  MatrixXd B2;    // 10x1
  MatrixXd B3;    // 10x5
  MatrixXd B4;    // 10x5
  MatrixXd B5;    // 10x5
  MatrixXd vdag;  // 1x5, pseudo-inverse of Ce Ae Be1
  MatrixXd Abar;  // 6x6
};

struct ReachShape {
  MatrixXd P_zeta;  // 10x10
  double a = 0;
  VectorXd ai;      // 5 weights
  MatrixXd P_x;     // 4x4
  double objective = 0;  // -logdet(P_zeta)
};

}  // namespace cacc
