#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "config.hpp"

namespace cacc::tool {

namespace fs = std::filesystem;

std::string sha256_hex(const std::string& data);
std::string design_hash(const AppConfig& c);
std::string config_hash(const AppConfig& c);

json matrix_json(const MatrixXd& m);
MatrixXd json_matrix(const json& j, const std::string& field);

struct SynthOutput {
  SynthesisResult design;
  GridReport estimator_grid;
  GridReport reach_grid;
  double rho_closed_loop = 0;
};

SynthOutput run_synthesis(const AppConfig& c);
RiskReport run_assessment(const AppConfig& c, const ReachShape& shape);
// Scenario for one simulation case with the effective runs, horizon and records.
Scenario case_scenario(const AppConfig& c, const SimCase& k);
TrajectoryLog run_case(const AppConfig& c, const SimCase& k, const SynthesisResult& d);

json designs_json(const SynthOutput& s, const std::string& design_hash);
// Reads designs.json; the caller checks the hash.
SynthesisResult designs_from_json(const json& j);

json risk_json(const RiskReport& r);
std::string dk_csv(const RiskReport& r);
json summary_json(const SimSummary& s);
std::string residual_scatter_csv(const TrajectoryLog& log, const MonitorDesign& mon, int max_runs);
std::string error_norms_csv(const TrajectoryLog& log, int max_runs);
std::string containment_csv(const ContainmentReport& r);
std::string trajectories_jsonl(const TrajectoryLog& log, int max_runs);

// Per-invocation output directory. Never reuses an existing directory.
class RunDir {
 public:
  RunDir(const fs::path& root, const std::string& config_hash);
  const fs::path& path() const { return dir_; }
  // Writes relative to the run directory and records the artifact hash.
  void write(const std::string& rel, const std::string& content);
  const std::vector<json>& artifacts() const { return artifacts_; }

 private:
  fs::path dir_;
  std::vector<json> artifacts_;
};

class StageTimer {
 public:
  void start(const std::string& stage);
  void stop();
  json to_json() const;

 private:
  std::string current_;
  std::chrono::steady_clock::time_point t0_;
  std::vector<std::pair<std::string, double>> done_;
};

struct ArtifactSet {
  fs::path dir;
  SynthesisResult design;
  std::string design_hash;
};

// Loads designs.json from `dir` and refuses it unless its recorded design hash matches `c`
// and, when a manifest is present, its content hash matches the manifest entry.
ArtifactSet load_artifacts(const fs::path& dir, const AppConfig& c);

std::string read_file(const fs::path& p);

}  // namespace cacc::tool
