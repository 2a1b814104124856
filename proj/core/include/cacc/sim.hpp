#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "cacc/attack.hpp"
#include "cacc/designs.hpp"
#include "cacc/model.hpp"

namespace cacc {

enum class LeadTarget { u, eps0 };
enum class SignalKind { constant, step, exp_decay, piecewise };

// Sampled lead signal. With target u it prescribes u_0(k) directly; with eps0 it drives the lead model.
struct LeadSignal {
  LeadTarget target = LeadTarget::u;
  SignalKind kind = SignalKind::constant;
  double value = 0;      // constant level, or level after the step
  double before = 0;     // step: level before step_k
  long step_k = 1;
  double amplitude = 0;  // exp_decay: amplitude * exp(-rate * k)
  double rate = 0;
  std::vector<std::pair<long, double>> pieces;  // piecewise: (first k, level), sorted by k

  double at(long k) const;
};

struct FollowerInit {
  VectorXd x = VectorXd::Zero(4);  // [e, v, a, u]
  double dv = 0;                   // v_{i-1} - v_i
  double a_prev = 0;               // a_{i-1}
  std::optional<VectorXd> xhat;    // defaults to the true extended state
};

struct Scenario {
  PlatoonConfig cfg;
  int n_vehicles = 2;
  int horizon = 400;
  LeadSignal lead;
  VectorXd lead_x0 = VectorXd::Zero(4);  // lead model state for target eps0
  std::vector<FollowerInit> init;        // one per follower
  NoisePolicy noise;
  bool noise_enabled = true;
  std::vector<AttackPolicy> attacks;     // one per link; missing entries mean no attack
  int runs = 1;
  std::uint64_t seed = 1;
  int burn_in = 200;
  int threads = 1;
  int record_runs = -1;                  // number of runs whose per-step records are kept; -1 keeps all

  void validate() const;
};

struct SynthesisResult {
  EstimatorDesign est;
  MonitorDesign mon;
  std::optional<ReachShape> reach;
};

struct StepRecord {
  long k = 0;
  int vehicle = 0;                 // follower index, 1-based
  std::array<double, 6> xe{};      // true extended state at k
  std::array<double, 6> xhat{};    // estimate at k
  double delta = 0;                // injected at k
  bool flagged = false;
  std::array<double, 5> r{};       // residual at k+1
  double z = 0;                    // at k+1
  bool alarm = false;
};

struct RunLog {
  int run = 0;
  std::vector<StepRecord> steps;
};

struct SimSummary {
  long steps = 0;
  long residuals_post_burn = 0;
  long alarms_post_burn = 0;
  long alarms_total = 0;
  double alarm_rate_post_burn = 0;
  double max_z = 0;
  double max_z_post_burn = 0;
  long attack_steps = 0;
  long attack_alarms = 0;
  long flagged_steps = 0;
  double attack_alarm_rate = 0;
  long scatter_post_burn = 0;
  long scatter_inside = 0;         // (r1, r2) inside the projected monitor ellipse
  long zeta_samples = 0;
  long zeta_violations = 0;
  long x_violations = 0;
  double max_level_zeta = 0;       // max zeta'P zeta / alpha_k over k >= 2
  double max_level_x = 0;          // max x'P_x x / alpha_k over k >= 2
  double max_level_x_initial = 0;  // same at k = 1
  double max_state_norm = 0;
  double max_state_deviation = 0;  // max |x(k) - x(1)|
  double min_spacing_error = std::numeric_limits<double>::infinity();
  double max_abs_spacing_error = 0;
  long iss_checked = 0;
  long iss_violations = 0;
  std::vector<long> alarm_times_run0;

  void merge(const SimSummary& o);
  void finalize();
};

struct TrajectoryLog {
  std::uint64_t seed = 0;
  int runs = 0;
  int horizon = 0;
  int followers = 0;
  std::vector<RunLog> logs;
  SimSummary summary;
};

// Containment is evaluated online when `shape` is given.
TrajectoryLog run_scenario(const Scenario& s, const SynthesisResult& design, const ReachShape* shape = nullptr);

struct ContainmentReport {
  std::vector<long> samples_per_k;    // index k-1
  std::vector<long> zeta_inside_per_k;
  std::vector<long> x_inside_per_k;
  double min_fraction_zeta = 1;
  double min_fraction_x = 1;
  double max_level_zeta = 0;          // k >= 2
  double max_level_x = 0;             // k >= 2
  double max_level_x_initial = 0;     // k = 1
};

ContainmentReport empirical_reach(const TrajectoryLog& log, const ReachShape& shape);

// Shape of the projection of {r : r' Pi r <= 1} onto coordinates (i, j).
MatrixXd project_monitor_ellipse(const MonitorDesign& mon, int i, int j);

// Bundled scenario from the two-vehicle highway example (constant speed 30 m/s, no lead input).
Scenario highway_scenario(const PlatoonConfig& cfg);

}  // namespace cacc
