#pragma once

// Reference computations kept apart from the library code they check.

#include <Eigen/Dense>
#include <random>

#include "cacc/model.hpp"

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// exp(M) by its truncated power series.
inline MatrixXd taylor_expm(const MatrixXd& M, int terms = 30) {
  MatrixXd sum = MatrixXd::Identity(M.rows(), M.cols());
  MatrixXd term = sum;
  for (int k = 1; k <= terms; ++k) {
    term = term * M / static_cast<double>(k);
    sum += term;
  }
  return sum;
}

// exp(Ac Ts) and int_0^Ts exp(Ac s) ds, both from the series sum_k Ac^k Ts^(k+1) / (k+1)!.
inline std::pair<MatrixXd, MatrixXd> taylor_zoh(const MatrixXd& Ac, double Ts, int terms = 30) {
  const int n = static_cast<int>(Ac.rows());
  MatrixXd A = MatrixXd::Identity(n, n), S = MatrixXd::Identity(n, n) * Ts;
  MatrixXd pw = MatrixXd::Identity(n, n);
  double f = 1.0;  // Ts^k / k!
  for (int k = 1; k <= terms; ++k) {
    pw = pw * Ac;
    f *= Ts / k;
    A += pw * f;
    S += pw * (f * Ts / (k + 1));
  }
  return {A, S};
}

// Continuous models typed in from the vehicle equations.
inline MatrixXd ref_Ac(double h, double tau, double kp, double kd) {
  MatrixXd A(4, 4);
  A << 0, -1, -h, 0,
       0, 0, 1, 0,
       0, 0, -1 / tau, 1 / tau,
       kp / h, -kd / h, -kd, -1 / h;
  return A;
}

inline MatrixXd ref_Bc(double h, double kp, double kd) {
  MatrixXd B(4, 3);
  B << 0, 1, 0,
       0, 0, 0,
       0, 0, 0,
       kp / h, kd / h, 1 / h;
  return B;
}

inline MatrixXd ref_Ace(double h, double tau, double kp, double kd) {
  MatrixXd A(6, 6);
  A << 0, 0, -h, 0, 1, 0,
       0, 0, 1, 0, 0, 0,
       0, 0, -1 / tau, 1 / tau, 0, 0,
       kp / h, 0, -kd, -1 / h, kd / h, 0,
       0, 0, -1, 0, 0, 1,
       0, 0, 0, 0, 0, -1 / tau;
  return A;
}

// Random configuration satisfying kd > kp tau.
inline cacc::PlatoonConfig random_config(std::mt19937_64& g) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  cacc::PlatoonConfig c;
  c.h = 0.2 + 1.8 * U(g);
  c.tau = 0.05 + 0.45 * U(g);
  c.kp = 0.05 + 0.95 * U(g);
  c.kd = c.kp * c.tau + 0.05 + 1.45 * U(g);
  c.Ts = 0.01 + 0.19 * U(g);
  return c;
}

inline double max_abs(const MatrixXd& M) { return M.cwiseAbs().maxCoeff(); }

}  // namespace oracle
