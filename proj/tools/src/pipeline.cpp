#include "pipeline.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cacc/errors.hpp"

namespace cacc::tool {

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorKind::io, "SHA-256 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

std::string design_hash(const AppConfig& c) { return sha256_hex(design_inputs(c).dump()); }
std::string config_hash(const AppConfig& c) { return sha256_hex(to_json(c).dump()); }

json matrix_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

MatrixXd json_matrix(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) throw Error(ErrorKind::io, field + ": expected a matrix");
  const size_t n = j.size(), m = j[0].size();
  MatrixXd out(n, m);
  for (size_t i = 0; i < n; ++i) {
    if (!j[i].is_array() || j[i].size() != m) throw Error(ErrorKind::io, field + ": ragged matrix");
    for (size_t k = 0; k < m; ++k) {
      if (!j[i][k].is_number()) throw Error(ErrorKind::io, field + ": non-numeric entry");
      out(i, k) = j[i][k].get<double>();
    }
  }
  return out;
}

SynthOutput run_synthesis(const AppConfig& c) {
  const SynthSettings& s = c.synth;
  const ExtendedModel em = build_extended(c.platoon);
  const DiscreteModel dm = discretize(build_continuous(c.platoon), c.platoon.Ts);
  SynthOutput out;
  out.design.est = synth_estimator(em, s.alpha_grid.points(), s.select, s.solver, s.threads, &out.estimator_grid);
  out.design.mon = synth_monitor(em, out.design.est, c.platoon.wbar2, c.platoon.wbar3, s.solver);
  const ClosedLoopModel cl = build_closed_loop(dm, em, out.design.est);
  out.rho_closed_loop = spectral_radius(cl.Acal);
  out.design.reach = synth_reach_shape(cl, out.design.mon, {c.platoon.wbar1, c.platoon.wbar2, c.platoon.wbar3},
                                       s.a_grid.points(), s.extend_a_grid, s.solver, s.threads, &out.reach_grid);
  return out;
}

RiskReport run_assessment(const AppConfig& c, const ReachShape& shape) {
  return assess_risk(shape, c.assess.zeta1, collision_and_overspeed(c.platoon), c.assess.horizon,
                     c.assess.convention);
}

Scenario case_scenario(const AppConfig& c, const SimCase& k) {
  Scenario s = c.sim.base;
  s.cfg = c.platoon;
  s.attacks = k.attacks;
  if (k.runs) s.runs = *k.runs;
  if (k.horizon) s.horizon = *k.horizon;
  s.noise = NoisePolicy::make(s.noise.kind, c.platoon.wbar1, c.platoon.wbar2, c.platoon.wbar3, s.seed);
  s.record_runs = std::max(c.sim.trajectory_runs, c.sim.scatter_runs);
  return s;
}

TrajectoryLog run_case(const AppConfig& c, const SimCase& k, const SynthesisResult& d) {
  const Scenario s = case_scenario(c, k);
  return run_scenario(s, d, d.reach ? &*d.reach : nullptr);
}

namespace {

json grid_json(const GridReport& g) {
  json pts = json::array();
  for (const auto& p : g.points) {
    json e{{"s", p.s}, {"status", lmi::to_string(p.status)}};
    if (p.status == lmi::Status::optimal) e["key"] = p.key;
    pts.push_back(e);
  }
  return {{"chosen", g.chosen}, {"points", pts}};
}

double num(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) throw Error(ErrorKind::io, std::string("designs: missing ") + key);
  return j.at(key).get<double>();
}

}  // namespace

json designs_json(const SynthOutput& s, const std::string& dh) {
  const EstimatorDesign& e = s.design.est;
  const MonitorDesign& m = s.design.mon;
  json j;
  j["design_hash"] = dh;
  j["estimator"] = {{"L", matrix_json(e.L)},
                    {"P", matrix_json(e.P_lyap)},
                    {"Y", matrix_json(e.Y)},
                    {"mu1", e.mu1},
                    {"mu2", e.mu2},
                    {"alpha", e.alpha_decay},
                    {"gamma", e.gamma},
                    {"spectral_radius", e.spectral_radius},
                    {"objective", e.objective},
                    {"grid", grid_json(s.estimator_grid)}};
  j["monitor"] = {{"Pi", matrix_json(m.Pi)},
                  {"lambda1", m.lambda1},
                  {"lambda2", m.lambda2},
                  {"f3", m.f3},
                  {"objective", m.objective}};
  if (s.design.reach) {
    const ReachShape& r = *s.design.reach;
    j["reach"] = {{"P_zeta", matrix_json(r.P_zeta)},
                  {"P_x", matrix_json(r.P_x)},
                  {"a", r.a},
                  {"ai", matrix_json(r.ai.transpose())[0]},
                  {"objective", r.objective},
                  {"rho_closed_loop", s.rho_closed_loop},
                  {"grid", grid_json(s.reach_grid)}};
  }
  return j;
}

SynthesisResult designs_from_json(const json& j) {
  SynthesisResult d;
  if (!j.contains("estimator") || !j.contains("monitor")) throw Error(ErrorKind::io, "designs: missing sections");
  const json& e = j["estimator"];
  d.est.L = json_matrix(e.at("L"), "estimator.L");
  d.est.P_lyap = json_matrix(e.at("P"), "estimator.P");
  d.est.Y = json_matrix(e.at("Y"), "estimator.Y");
  d.est.mu1 = num(e, "mu1");
  d.est.mu2 = num(e, "mu2");
  d.est.alpha_decay = num(e, "alpha");
  d.est.gamma = num(e, "gamma");
  d.est.spectral_radius = num(e, "spectral_radius");
  d.est.objective = num(e, "objective");
  const json& m = j["monitor"];
  d.mon.Pi = json_matrix(m.at("Pi"), "monitor.Pi");
  d.mon.lambda1 = num(m, "lambda1");
  d.mon.lambda2 = num(m, "lambda2");
  d.mon.f3 = num(m, "f3");
  d.mon.objective = num(m, "objective");
  if (d.est.L.rows() != 6 || d.est.L.cols() != 5 || d.mon.Pi.rows() != 5 || d.mon.Pi.cols() != 5)
    throw Error(ErrorKind::io, "designs: unexpected matrix dimensions");
  if (j.contains("reach")) {
    const json& r = j["reach"];
    ReachShape s;
    s.P_zeta = json_matrix(r.at("P_zeta"), "reach.P_zeta");
    s.P_x = json_matrix(r.at("P_x"), "reach.P_x");
    s.a = num(r, "a");
    const MatrixXd ai = json_matrix(json::array({r.at("ai")}), "reach.ai");
    s.ai = ai.row(0).transpose();
    s.objective = num(r, "objective");
    if (s.P_zeta.rows() != 10 || s.P_x.rows() != 4) throw Error(ErrorKind::io, "designs: unexpected reach dimensions");
    d.reach = s;
  }
  return d;
}

json risk_json(const RiskReport& r) {
  json j;
  j["verdict"] = to_string(r.verdict);
  j["horizon"] = r.alpha.size();
  j["labels"] = r.labels;
  j["first_violation_k"] = r.first_violation_k ? json(*r.first_violation_k) : json(nullptr);
  j["first_violation_halfspace"] =
      r.first_violation_halfspace ? json(r.labels.at(*r.first_violation_halfspace)) : json(nullptr);
  j["violations_per_halfspace"] = r.violations_per_halfspace;
  std::vector<double> dmin_j(r.labels.size(), std::numeric_limits<double>::infinity());
  for (const auto& row : r.d)
    for (size_t q = 0; q < row.size(); ++q) dmin_j[q] = std::min(dmin_j[q], row[q]);
  j["min_distance_per_halfspace"] = dmin_j;
  j["alpha_1"] = r.alpha.empty() ? 0.0 : r.alpha.front();
  j["alpha_inf"] = r.alpha_inf;
  j["d_inf"] = r.d_inf;
  return j;
}

std::string dk_csv(const RiskReport& r) {
  std::ostringstream os;
  os << std::setprecision(12) << "k,alpha_k";
  for (size_t q = 0; q < r.labels.size(); ++q) os << ",d" << q + 1 << "_k";
  os << ",d_k\n";
  for (size_t k = 0; k < r.alpha.size(); ++k) {
    os << k + 1 << ',' << r.alpha[k];
    for (double d : r.d[k]) os << ',' << d;
    os << ',' << r.d_min[k] << '\n';
  }
  return os.str();
}

json summary_json(const SimSummary& s) {
  const double frac = s.zeta_samples ? 1.0 - static_cast<double>(s.zeta_violations) / s.zeta_samples : 1.0;
  const double scatter = s.scatter_post_burn ? static_cast<double>(s.scatter_inside) / s.scatter_post_burn : 1.0;
  return {{"steps", s.steps},
          {"residuals_post_burn", s.residuals_post_burn},
          {"alarms_post_burn", s.alarms_post_burn},
          {"alarms_total", s.alarms_total},
          {"alarm_rate_post_burn", s.alarm_rate_post_burn},
          {"max_z", s.max_z},
          {"max_z_post_burn", s.max_z_post_burn},
          {"attack_steps", s.attack_steps},
          {"attack_alarms", s.attack_alarms},
          {"attack_alarm_rate", s.attack_alarm_rate},
          {"flagged_steps", s.flagged_steps},
          {"scatter_post_burn", s.scatter_post_burn},
          {"scatter_inside", s.scatter_inside},
          {"scatter_inside_fraction", scatter},
          {"zeta_samples", s.zeta_samples},
          {"zeta_violations", s.zeta_violations},
          {"x_violations", s.x_violations},
          {"containment_fraction", frac},
          {"max_level_zeta", s.max_level_zeta},
          {"max_level_x", s.max_level_x},
          {"max_level_x_initial", s.max_level_x_initial},
          {"max_state_deviation", s.max_state_deviation},
          {"min_spacing_error", s.min_spacing_error},
          {"max_abs_spacing_error", s.max_abs_spacing_error},
          {"iss_checked", s.iss_checked},
          {"iss_violations", s.iss_violations}};
}

std::string residual_scatter_csv(const TrajectoryLog& log, const MonitorDesign& mon, int max_runs) {
  const MatrixXd ell = project_monitor_ellipse(mon, 0, 1);
  std::ostringstream os;
  os << std::setprecision(10) << "run,vehicle,k,r1,r2,z,inside\n";
  for (const auto& rl : log.logs) {
    if (rl.run >= max_runs) break;
    for (const auto& s : rl.steps) {
      const Eigen::Vector2d r(s.r[0], s.r[1]);
      os << rl.run << ',' << s.vehicle << ',' << s.k + 1 << ',' << s.r[0] << ',' << s.r[1] << ',' << s.z << ','
         << (r.dot(ell * r) <= 1.0 ? 1 : 0) << '\n';
    }
  }
  return os.str();
}

std::string error_norms_csv(const TrajectoryLog& log, int max_runs) {
  std::ostringstream os;
  os << std::setprecision(10) << "run,vehicle,k,e_norm,e_spacing,e_velocity\n";
  for (const auto& rl : log.logs) {
    if (rl.run >= max_runs) break;
    for (const auto& s : rl.steps) {
      double n2 = 0;
      for (int q = 0; q < 6; ++q) n2 += (s.xe[q] - s.xhat[q]) * (s.xe[q] - s.xhat[q]);
      os << rl.run << ',' << s.vehicle << ',' << s.k << ',' << std::sqrt(n2) << ',' << s.xe[0] - s.xhat[0] << ','
         << s.xe[1] - s.xhat[1] << '\n';
    }
  }
  return os.str();
}

std::string containment_csv(const ContainmentReport& r) {
  std::ostringstream os;
  os << "k,samples,zeta_inside,x_inside\n";
  for (size_t k = 0; k < r.samples_per_k.size(); ++k)
    os << k + 1 << ',' << r.samples_per_k[k] << ',' << r.zeta_inside_per_k[k] << ',' << r.x_inside_per_k[k] << '\n';
  return os.str();
}

std::string trajectories_jsonl(const TrajectoryLog& log, int max_runs) {
  std::ostringstream os;
  for (const auto& rl : log.logs) {
    if (rl.run >= max_runs) break;
    for (const auto& s : rl.steps) {
      json j{{"seed", log.seed}, {"run", rl.run},  {"vehicle", s.vehicle}, {"k", s.k},
             {"x", s.xe},        {"xhat", s.xhat}, {"delta", s.delta},     {"flagged", s.flagged},
             {"r", s.r},         {"z", s.z},       {"alarm", s.alarm}};
      os << j.dump() << '\n';
    }
  }
  return os.str();
}

RunDir::RunDir(const fs::path& root, const std::string& config_hash) {
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create output root " + root.string() + ": " + ec.message());
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream base;
  base << config_hash.substr(0, 12) << '-' << std::put_time(&tm, "%Y%m%dT%H%M%S") << std::setw(3)
       << std::setfill('0') << ms << 'Z';
  for (int n = 0;; ++n) {
    fs::path cand = root / (n ? base.str() + "-" + std::to_string(n) : base.str());
    if (fs::create_directory(cand, ec)) {
      dir_ = cand;
      return;
    }
    if (ec) throw Error(ErrorKind::io, "cannot create " + cand.string() + ": " + ec.message());
  }
}

void RunDir::write(const std::string& rel, const std::string& content) {
  const fs::path p = dir_ / rel;
  std::error_code ec;
  fs::create_directories(p.parent_path(), ec);
  if (fs::exists(p)) throw Error(ErrorKind::io, "refusing to overwrite " + p.string());
  std::ofstream out(p, std::ios::binary);
  out << content;
  out.close();
  if (!out) throw Error(ErrorKind::io, "failed to write " + p.string());
  artifacts_.push_back({{"path", rel}, {"sha256", sha256_hex(content)}, {"bytes", content.size()}});
}

void StageTimer::start(const std::string& stage) {
  current_ = stage;
  t0_ = std::chrono::steady_clock::now();
}

void StageTimer::stop() {
  done_.emplace_back(current_, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count());
}

json StageTimer::to_json() const {
  json j = json::object();
  for (const auto& [k, v] : done_) j[k] = v;
  return j;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

ArtifactSet load_artifacts(const fs::path& dir, const AppConfig& c) {
  ArtifactSet a;
  a.dir = dir;
  const fs::path dp = dir / "designs.json";
  const std::string text = read_file(dp);
  const fs::path mp = dir / "manifest.json";
  if (fs::exists(mp)) {
    json man;
    try {
      man = json::parse(read_file(mp));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::io, "unreadable manifest " + mp.string() + ": " + e.what());
    }
    bool listed = false;
    for (const auto& art : man.value("artifacts", json::array())) {
      if (art.value("path", "") != "designs.json") continue;
      listed = true;
      if (art.value("sha256", "") != sha256_hex(text))
        throw Error(ErrorKind::io, "designs.json content does not match its manifest entry");
    }
    if (!listed) throw Error(ErrorKind::io, "manifest in " + dir.string() + " does not list designs.json");
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::io, "unreadable " + dp.string() + ": " + e.what());
  }
  a.design_hash = j.value("design_hash", "");
  const std::string want = design_hash(c);
  if (a.design_hash != want)
    throw Error(ErrorKind::io, "artifacts in " + dir.string() + " were synthesized for a different configuration (design hash " +
                                   a.design_hash.substr(0, 12) + ", config gives " + want.substr(0, 12) + ")");
  try {
    a.design = designs_from_json(j);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::io, std::string("malformed designs.json: ") + e.what());
  }
  return a;
}

}  // namespace cacc::tool
