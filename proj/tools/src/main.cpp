#include <CLI11.hpp>

#include <iostream>
#include <memory>
#include <optional>

#include "cacc/errors.hpp"
#include "pipeline.hpp"

#ifndef CACC_VERSION
#define CACC_VERSION "unknown"
#endif

using namespace cacc;
using namespace cacc::tool;

namespace {

enum Exit { ok = 0, other = 1, validation = 2, infeasible = 3, numerical = 4, artifact = 5 };

struct Options {
  std::string config;
  std::string out = "runs";
  std::string artifacts;
  Overrides ov;
};

void add_common(CLI::App* sc, Options& o, bool needs_artifacts) {
  sc->add_option("--config", o.config, "Scenario/config file (JSON)")->required()->check(CLI::ExistingFile);
  sc->add_option("--out", o.out, "Root directory for per-run output directories")->capture_default_str();
  sc->add_option("--seed", o.ov.seed, "Override the simulation seed");
  sc->add_option("--grid-step", o.ov.grid_step, "Override the step of both synthesis grids");
  sc->add_option("--horizon", o.ov.horizon, "Override assessment and simulation horizons");
  sc->add_option("--runs", o.ov.runs, "Override the Monte-Carlo run count of every case");
  sc->add_option("--tol-feas", o.ov.tol_feas, "Solver feasibility tolerance");
  sc->add_option("--tol-opt", o.ov.tol_opt, "Solver optimality tolerance");
  if (needs_artifacts)
    sc->add_option("--artifacts", o.artifacts, "Run directory holding designs.json from a synth run")
        ->required()
        ->check(CLI::ExistingDirectory);
}

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::validation: return validation;
    case ErrorKind::infeasible: return infeasible;
    case ErrorKind::numerical: return numerical;
    case ErrorKind::io: return artifact;
    case ErrorKind::structural: return other;
  }
  return other;
}

class Pipeline {
 public:
  Pipeline(const std::string& command, const Options& o) : cmd_(command), opt_(o) {
    cfg_ = load_config(o.config);
    apply_overrides(cfg_, o.ov);
    chash_ = config_hash(cfg_);
    dhash_ = design_hash(cfg_);
    if (!o.artifacts.empty()) {
      art_ = load_artifacts(o.artifacts, cfg_);
      design_ = art_->design;
    }
    dir_ = std::make_unique<RunDir>(o.out, chash_);
    dir_->write("config.json", to_json(cfg_).dump(2) + "\n");
  }

  void synth() {
    timer_.start("synth");
    const SynthOutput s = run_synthesis(cfg_);
    timer_.stop();
    design_ = s.design;
    dir_->write("designs.json", designs_json(s, dhash_).dump(2) + "\n");
    const auto& e = s.design.est;
    std::cout << "estimator: alpha " << e.alpha_decay << ", gamma " << e.gamma << ", rho((I-L Ce)Ae) "
              << e.spectral_radius << "\n";
    std::cout << "monitor: -logdet(Pi) " << s.design.mon.objective << "\n";
    if (s.design.reach) std::cout << "reach set: a " << s.design.reach->a << ", -logdet(P) " << s.design.reach->objective << "\n";
  }

  void assess() {
    if (!design_ || !design_->reach) throw Error(ErrorKind::io, "assessment needs a reach-set shape in the designs");
    timer_.start("assess");
    const RiskReport r = run_assessment(cfg_, *design_->reach);
    timer_.stop();
    dir_->write("risk.json", risk_json(r).dump(2) + "\n");
    dir_->write("dk.csv", dk_csv(r));
    std::cout << "verdict: " << to_string(r.verdict);
    if (r.first_violation_k)
      std::cout << " (first violation at k = " << *r.first_violation_k << ", "
                << r.labels.at(*r.first_violation_halfspace) << ")";
    std::cout << "\n";
  }

  void simulate() {
    if (!design_) throw Error(ErrorKind::io, "simulation needs synthesized designs");
    json all = json::object();
    for (const SimCase& k : cfg_.sim.cases) {
      timer_.start("simulate:" + k.name);
      const TrajectoryLog log = run_case(cfg_, k, *design_);
      timer_.stop();
      const std::string base = "sim/" + k.name + "/";
      const json sj = summary_json(log.summary);
      all[k.name] = sj;
      dir_->write(base + "summary.json", sj.dump(2) + "\n");
      dir_->write(base + "residual_scatter.csv", residual_scatter_csv(log, design_->mon, cfg_.sim.scatter_runs));
      dir_->write(base + "error_norms.csv", error_norms_csv(log, cfg_.sim.scatter_runs));
      dir_->write(base + "trajectories.jsonl", trajectories_jsonl(log, cfg_.sim.trajectory_runs));
      if (design_->reach) dir_->write(base + "containment.csv", containment_csv(empirical_reach(log, *design_->reach)));
      std::cout << "case " << k.name << ": runs " << log.runs << ", alarm rate (post burn-in) "
                << log.summary.alarm_rate_post_burn << ", containment violations " << log.summary.zeta_violations
                << "/" << log.summary.zeta_samples << ", max level x " << log.summary.max_level_x << "\n";
    }
    dir_->write("summary.json", json{{"seed", cfg_.sim.base.seed}, {"cases", all}}.dump(2) + "\n");
  }

  void finish(const std::string& status, const std::string& error = {}) {
    json seeds{{"simulation", cfg_.sim.base.seed}};
    json attack_seeds = json::object();
    for (const auto& k : cfg_.sim.cases) {
      json s = json::array();
      for (const auto& a : k.attacks) s.push_back(a.seed);
      attack_seeds[k.name] = s;
    }
    seeds["attacks"] = attack_seeds;
    const auto& so = cfg_.synth.solver;
    json m{{"tool", "cacc"},
           {"version", CACC_VERSION},
           {"command", cmd_},
           {"status", status},
           {"config_path", opt_.config},
           {"config_hash", chash_},
           {"design_hash", dhash_},
           {"tolerances", {{"tol_feas", so.feas_tol}, {"tol_opt", so.opt_tol}, {"max_iter", so.max_iter}}},
           {"seeds", seeds},
           {"timings_s", timer_.to_json()},
           {"artifacts", dir_->artifacts()}};
    if (art_) m["input_artifacts"] = {{"dir", art_->dir.string()}, {"design_hash", art_->design_hash}};
    if (!error.empty()) m["error"] = error;
    const fs::path p = dir_->path() / "manifest.json";
    std::ofstream(p) << m.dump(2) << "\n";
    std::cout << "output: " << dir_->path().string() << "\n";
  }

  bool has_dir() const { return dir_ != nullptr; }

 private:
  std::string cmd_;
  Options opt_;
  AppConfig cfg_;
  std::string chash_, dhash_;
  std::optional<ArtifactSet> art_;
  std::optional<SynthesisResult> design_;
  std::unique_ptr<RunDir> dir_;
  StageTimer timer_;
};

int run(const std::string& cmd, const Options& o) {
  std::unique_ptr<Pipeline> p;
  try {
    p = std::make_unique<Pipeline>(cmd, o);
    if (cmd == "synth" || cmd == "full") p->synth();
    if (cmd == "assess" || cmd == "full") p->assess();
    if (cmd == "simulate" || cmd == "full") p->simulate();
    p->finish("ok");
    return ok;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (p && p->has_dir()) p->finish("failed", e.what());
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (p && p->has_dir()) p->finish("failed", e.what());
    return other;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CACC platoon attack detection and stealthy reachable-set risk assessment"};
  app.set_version_flag("--version", CACC_VERSION);
  app.require_subcommand(1);
  Options o;
  std::string cmd;
  struct Sub {
    const char* name;
    const char* help;
    bool artifacts;
  };
  for (const Sub& s : {Sub{"synth", "Synthesize estimator, monitor and reach-set shape", false},
                       Sub{"assess", "Risk verdict and d_k schedule from synthesized designs", true},
                       Sub{"simulate", "Monte-Carlo simulation of every configured case", true},
                       Sub{"full", "synth, assess and simulate in one run directory", false}}) {
    CLI::App* sc = app.add_subcommand(s.name, s.help);
    add_common(sc, o, s.artifacts);
    sc->callback([&cmd, name = std::string(s.name)] { cmd = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : validation;
  }
  return run(cmd, o);
}
