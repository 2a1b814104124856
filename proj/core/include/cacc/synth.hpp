#pragma once

#include <vector>

#include "cacc/designs.hpp"
#include "cacc/lmi.hpp"
#include "cacc/model.hpp"

namespace cacc {

enum class EstimatorSelect { min_gamma, min_objective };

struct GridReport {
  std::vector<lmi::GridPoint> points;
  double chosen = 0;
};

// Estimator LMI at a fixed decay parameter alpha (affine in P, Y, mu1, mu2).
lmi::Problem estimator_program(const ExtendedModel& em, double alpha);
// Recovers the design from a solved program. Throws NumericalError if (I - L Ce) Ae is not Schur.
EstimatorDesign estimator_from_solution(const ExtendedModel& em, double alpha, const lmi::SdpSolution& s);

EstimatorDesign synth_estimator(const ExtendedModel& em, const std::vector<double>& grid,
                                EstimatorSelect select = EstimatorSelect::min_gamma,
                                const lmi::SolverOptions& opt = {}, int threads = 1,
                                GridReport* report = nullptr);

lmi::Problem monitor_program(const ExtendedModel& em, double gamma, double wbar2, double wbar3);
MonitorDesign synth_monitor(const ExtendedModel& em, const EstimatorDesign& est, double wbar2, double wbar3,
                            const lmi::SolverOptions& opt = {});

struct ReachWeights {
  double wbar1, wbar2, wbar3;
};

lmi::Problem reach_program(const ClosedLoopModel& cl, const MonitorDesign& mon, const ReachWeights& w,
                           double a);

// Solves the reach-set program over `grid`. Points with a <= rho(Acal)^2 cannot be feasible and are
// skipped. When `extend` is set and no grid point lies above rho(Acal)^2, points in (rho^2, 1) are added.
ReachShape synth_reach_shape(const ClosedLoopModel& cl, const MonitorDesign& mon, const ReachWeights& w,
                             const std::vector<double>& grid, bool extend = true,
                             const lmi::SolverOptions& opt = {}, int threads = 1,
                             GridReport* report = nullptr);

// Points added above rho^2 when the requested grid has none there.
std::vector<double> reach_grid_extension(double rho2);

}  // namespace cacc
