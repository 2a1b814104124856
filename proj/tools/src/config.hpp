#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cacc/lmi.hpp"
#include "cacc/model.hpp"
#include "cacc/reach.hpp"
#include "cacc/sim.hpp"
#include "cacc/synth.hpp"

namespace cacc::tool {

using json = nlohmann::json;

struct GridSpec {
  double lo = 0.01;
  double hi = 0.99;
  double step = 0.01;
  std::vector<double> points() const { return lmi::make_grid(lo, hi, step); }
};

struct SynthSettings {
  GridSpec alpha_grid;
  GridSpec a_grid;
  bool extend_a_grid = true;
  EstimatorSelect select = EstimatorSelect::min_gamma;
  lmi::SolverOptions solver;
  int threads = 1;
};

struct AssessSettings {
  int horizon = 1000;
  VectorXd zeta1 = VectorXd::Zero(10);
  DistanceConvention convention = DistanceConvention::printed;
};

struct SimCase {
  std::string name;
  std::vector<AttackPolicy> attacks;
  std::optional<int> runs;
  std::optional<int> horizon;
};

struct SimSettings {
  Scenario base;                // attacks, runs and horizon may be replaced per case
  std::vector<SimCase> cases;
  int trajectory_runs = 2;      // runs written to trajectories.jsonl
  int scatter_runs = 50;        // runs written to residual_scatter.csv and error_norms.csv
};

struct AppConfig {
  std::string name;
  PlatoonConfig platoon;
  SynthSettings synth;
  AssessSettings assess;
  SimSettings sim;
};

// Command line overrides, applied after parsing.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> grid_step;
  std::optional<int> horizon;
  std::optional<int> runs;
  std::optional<double> tol_feas;
  std::optional<double> tol_opt;
};

// Parses and validates. Throws ValidationError naming the offending field (dotted path).
AppConfig parse_config(const json& j);
AppConfig load_config(const std::string& path);
void apply_overrides(AppConfig& c, const Overrides& o);
void validate(const AppConfig& c);

// Canonical form: every field with its effective value.
json to_json(const AppConfig& c);
// Subset that determines the synthesized designs.
json design_inputs(const AppConfig& c);

}  // namespace cacc::tool
