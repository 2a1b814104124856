#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cacc/designs.hpp"
#include "cacc/model.hpp"

namespace cacc {

ClosedLoopModel build_closed_loop(const DiscreteModel& dm, const ExtendedModel& em, const EstimatorDesign& est);

struct Ellipsoid {
  MatrixXd P;
  double alpha = 1.0;
  bool contains(const VectorXd& x, double rel_tol = 0.0) const {
    return x.dot(P * x) <= alpha * (1.0 + rel_tol);
  }
};

struct Halfspace {
  VectorXd c;  // c'x > b is critical
  double b = 0;
  std::string label;
};

struct CriticalSet {
  std::vector<Halfspace> halfspaces;
  void validate() const;
};

// Collision (spacing below zero) and overspeed half-spaces for state x = [e, v, a, u].
CriticalSet collision_and_overspeed(const PlatoonConfig& cfg);

// Level alpha_k for k = 1..K (index k-1) with N = 5 sources.
std::vector<double> alpha_schedule(const ReachShape& shape, const VectorXd& zeta1, int K);
double alpha_limit(double a);

// Schur complement of the trailing block: P11 - P12 P22^-1 P21, keeping the first `keep` coordinates.
MatrixXd project(const MatrixXd& P, int keep);

// Printed: (|b| - sqrt(c'P^-1 c / alpha)) / c'c.
// Geometric: (|b| - sqrt(alpha c'P^-1 c)) / c'c, whose sign tells whether max_{x'Px<=alpha} c'x exceeds |b|.
// Both agree at alpha = 1. For alpha = 0 the ellipsoid is the origin and both give |b| / c'c.
enum class DistanceConvention { printed, geometric };

std::vector<double> distance_to_critical(const MatrixXd& P_x, double alpha_k, const CriticalSet& crit,
                                         DistanceConvention conv = DistanceConvention::printed);

enum class Verdict { risk_free, at_risk };
const char* to_string(Verdict v);

struct RiskReport {
  std::vector<double> alpha;            // alpha_k, k = 1..K
  std::vector<std::vector<double>> d;   // d[k-1][j]
  std::vector<double> d_min;            // min over j
  double alpha_inf = 0;
  std::vector<double> d_inf;            // at alpha_inf
  Verdict verdict = Verdict::risk_free;
  std::optional<int> first_violation_k; // 1-based; K+1 denotes the asymptotic level
  std::optional<int> first_violation_halfspace;
  std::vector<int> violations_per_halfspace;
  std::vector<std::string> labels;
};

RiskReport assess_risk(const ReachShape& shape, const VectorXd& zeta1, const CriticalSet& crit, int K,
                       DistanceConvention conv = DistanceConvention::printed);

}  // namespace cacc
