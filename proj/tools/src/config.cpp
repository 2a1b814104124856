#include "config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "cacc/errors.hpp"

namespace cacc::tool {

namespace {

// Object reader that tracks the dotted path and rejects unknown keys.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError(path_.empty() ? "config" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  const std::string& path() const { return path_; }
  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  const json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  double num(const std::string& key, double def) {
    if (!has(key)) return mark(key, def);
    const json& v = raw(key);
    if (!v.is_number()) throw ValidationError(field(key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ValidationError(field(key), "must be finite");
    return d;
  }

  long integer(const std::string& key, long def) {
    if (!has(key)) return mark(key, def);
    const json& v = raw(key);
    if (!v.is_number_integer()) throw ValidationError(field(key), "expected an integer");
    return v.get<long>();
  }

  std::uint64_t u64(const std::string& key, std::uint64_t def) {
    if (!has(key)) return mark(key, def);
    const json& v = raw(key);
    if (!v.is_number_unsigned()) throw ValidationError(field(key), "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool def) {
    if (!has(key)) return mark(key, def);
    const json& v = raw(key);
    if (!v.is_boolean()) throw ValidationError(field(key), "expected true or false");
    return v.get<bool>();
  }

  std::string str(const std::string& key, const std::string& def) {
    if (!has(key)) return mark(key, def);
    const json& v = raw(key);
    if (!v.is_string()) throw ValidationError(field(key), "expected a string");
    return v.get<std::string>();
  }

  std::optional<VectorXd> vec(const std::string& key, int n) {
    if (!has(key)) {
      used_.insert(key);
      return std::nullopt;
    }
    const json& v = raw(key);
    if (!v.is_array() || static_cast<int>(v.size()) != n)
      throw ValidationError(field(key), "expected an array of " + std::to_string(n) + " numbers");
    VectorXd out(n);
    for (int i = 0; i < n; ++i) {
      if (!v[i].is_number()) throw ValidationError(field(key), "expected an array of numbers");
      out(i) = v[i].get<double>();
      if (!std::isfinite(out(i))) throw ValidationError(field(key), "entries must be finite");
    }
    return out;
  }

  std::optional<Reader> obj(const std::string& key) {
    if (!has(key)) {
      used_.insert(key);
      return std::nullopt;
    }
    return Reader(raw(key), field(key));
  }

  const json* array(const std::string& key) {
    if (!has(key)) {
      used_.insert(key);
      return nullptr;
    }
    const json& v = raw(key);
    if (!v.is_array()) throw ValidationError(field(key), "expected an array");
    return &v;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ValidationError(field(it.key()), "unknown key");
  }

 private:
  template <class T>
  T mark(const std::string& key, T def) {
    used_.insert(key);
    return def;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

template <class E>
E pick(const std::string& field, const std::string& value, std::initializer_list<std::pair<const char*, E>> opts) {
  std::string names;
  for (const auto& [n, e] : opts) {
    if (value == n) return e;
    names += names.empty() ? n : std::string(", ") + n;
  }
  throw ValidationError(field, "unknown value '" + value + "' (expected one of " + names + ")");
}

template <class E>
std::string name_of(E e, std::initializer_list<std::pair<const char*, E>> opts) {
  for (const auto& [n, v] : opts)
    if (v == e) return n;
  return "?";
}

const std::initializer_list<std::pair<const char*, EstimatorSelect>> kSelect = {
    {"min_gamma", EstimatorSelect::min_gamma}, {"min_objective", EstimatorSelect::min_objective}};
const std::initializer_list<std::pair<const char*, DistanceConvention>> kConv = {
    {"printed", DistanceConvention::printed}, {"geometric", DistanceConvention::geometric}};
const std::initializer_list<std::pair<const char*, LeadTarget>> kTarget = {{"u", LeadTarget::u},
                                                                           {"eps0", LeadTarget::eps0}};
const std::initializer_list<std::pair<const char*, SignalKind>> kSignal = {{"constant", SignalKind::constant},
                                                                           {"step", SignalKind::step},
                                                                           {"exp_decay", SignalKind::exp_decay},
                                                                           {"piecewise", SignalKind::piecewise}};
const std::initializer_list<std::pair<const char*, NoiseKind>> kNoise = {{"uniform_ball", NoiseKind::uniform_ball},
                                                                         {"boundary", NoiseKind::boundary},
                                                                         {"worst_corner", NoiseKind::worst_corner}};
const std::initializer_list<std::pair<const char*, AttackKind>> kAttack = {
    {"none", AttackKind::none},
    {"random_stealthy", AttackKind::random_stealthy},
    {"greedy_direction", AttackKind::greedy_direction}};
const std::initializer_list<std::pair<const char*, AttackerNoiseModel>> kAttackerNoise = {
    {"robust", AttackerNoiseModel::robust}, {"zero", AttackerNoiseModel::zero}};

// Re-raises `e` with its field moved under `prefix`, dropping a leading `strip` from the field name.
[[noreturn]] void rethrow_under(const std::string& prefix, const ValidationError& e, const std::string& strip = "") {
  std::string field = e.field();
  if (!strip.empty() && field.rfind(strip, 0) == 0) field = field.substr(strip.size());
  const std::string msg = std::string(e.what()).substr(e.field().size() + 2);
  throw ValidationError(prefix.empty() ? field : prefix + "." + field, msg);
}

GridSpec read_grid(Reader& parent, const std::string& key) {
  GridSpec g;
  if (auto r = parent.obj(key)) {
    g.lo = r->num("lo", g.lo);
    g.hi = r->num("hi", g.hi);
    g.step = r->num("step", g.step);
    r->finish();
  }
  const std::string f = parent.field(key);
  if (!(g.lo > 0 && g.hi < 1 && g.lo <= g.hi)) throw ValidationError(f, "need 0 < lo <= hi < 1");
  if (!(g.step > 0)) throw ValidationError(f + ".step", "must be positive");
  return g;
}

AttackPolicy read_attack(Reader r) {
  AttackPolicy p;
  p.kind = pick(r.field("kind"), r.str("kind", "none"), kAttack);
  p.margin = r.num("margin", p.margin);
  p.noise_model = pick(r.field("noise_model"), r.str("noise_model", "robust"), kAttackerNoise);
  p.seed = r.u64("seed", p.seed);
  p.horizon_steps = static_cast<int>(r.integer("horizon_steps", p.horizon_steps));
  p.target_direction = r.vec("target_direction", 4);
  r.finish();
  try {
    p.validate();
  } catch (const ValidationError& e) {
    rethrow_under(r.path(), e, "attack.");
  }
  return p;
}

std::vector<AttackPolicy> read_attacks(Reader& parent) {
  std::vector<AttackPolicy> out;
  if (const json* a = parent.array("attacks"))
    for (size_t i = 0; i < a->size(); ++i)
      out.push_back(read_attack(Reader((*a)[i], parent.field("attacks") + "[" + std::to_string(i) + "]")));
  return out;
}

json vec_json(const VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json attack_json(const AttackPolicy& p) {
  json j{{"kind", name_of(p.kind, kAttack)},
         {"margin", p.margin},
         {"noise_model", name_of(p.noise_model, kAttackerNoise)},
         {"seed", p.seed},
         {"horizon_steps", p.horizon_steps}};
  if (p.target_direction) j["target_direction"] = vec_json(*p.target_direction);
  return j;
}

json grid_json(const GridSpec& g) { return {{"lo", g.lo}, {"hi", g.hi}, {"step", g.step}}; }

}  // namespace

AppConfig parse_config(const json& j) {
  AppConfig c;
  Reader top(j, "");
  c.name = top.str("name", "unnamed");

  auto pr = top.obj("platoon");
  if (!pr) throw ValidationError("platoon", "section is required");
  PlatoonConfig& p = c.platoon;
  p.h = pr->num("h", p.h);
  p.tau = pr->num("tau", p.tau);
  if (auto k = pr->vec("K", 2)) {
    p.kp = (*k)(0);
    p.kd = (*k)(1);
  }
  p.Ts = pr->num("Ts", p.Ts);
  p.s_standstill = pr->num("standstill", p.s_standstill);
  p.v_max = pr->num("v_max", p.v_max);
  p.u_min = pr->num("u_min", p.u_min);
  p.u_max = pr->num("u_max", p.u_max);
  p.wbar1 = pr->num("wbar1", p.wbar1);
  p.wbar2 = pr->num("wbar2", p.wbar2);
  p.wbar3 = pr->num("wbar3", p.wbar3);
  pr->finish();

  if (auto sr = top.obj("synthesis")) {
    SynthSettings& s = c.synth;
    s.alpha_grid = read_grid(*sr, "alpha_grid");
    s.a_grid = read_grid(*sr, "a_grid");
    s.extend_a_grid = sr->boolean("extend_a_grid", s.extend_a_grid);
    s.select = pick(sr->field("select"), sr->str("select", "min_gamma"), kSelect);
    s.threads = static_cast<int>(sr->integer("threads", s.threads));
    if (auto so = sr->obj("solver")) {
      s.solver.feas_tol = so->num("tol_feas", s.solver.feas_tol);
      s.solver.opt_tol = so->num("tol_opt", s.solver.opt_tol);
      s.solver.max_iter = static_cast<int>(so->integer("max_iter", s.solver.max_iter));
      so->finish();
    }
    sr->finish();
  }

  if (auto ar = top.obj("assessment")) {
    AssessSettings& a = c.assess;
    a.horizon = static_cast<int>(ar->integer("horizon", a.horizon));
    if (auto z = ar->vec("zeta1", 10)) a.zeta1 = *z;
    a.convention = pick(ar->field("distance"), ar->str("distance", "printed"), kConv);
    ar->finish();
  } else {
    c.assess.zeta1(1) = 30.0;
  }

  SimSettings& sim = c.sim;
  Scenario& sc = sim.base;
  sc.cfg = c.platoon;
  sc.init = {FollowerInit{}};
  if (auto sr = top.obj("simulation")) {
    sc.n_vehicles = static_cast<int>(sr->integer("n_vehicles", sc.n_vehicles));
    sc.horizon = static_cast<int>(sr->integer("horizon", sc.horizon));
    sc.runs = static_cast<int>(sr->integer("runs", sc.runs));
    sc.seed = sr->u64("seed", sc.seed);
    sc.burn_in = static_cast<int>(sr->integer("burn_in", sc.burn_in));
    sc.threads = static_cast<int>(sr->integer("threads", sc.threads));
    sim.trajectory_runs = static_cast<int>(sr->integer("trajectory_runs", sim.trajectory_runs));
    sim.scatter_runs = static_cast<int>(sr->integer("scatter_runs", sim.scatter_runs));
    if (auto lr = sr->obj("lead")) {
      LeadSignal& l = sc.lead;
      l.target = pick(lr->field("target"), lr->str("target", "u"), kTarget);
      l.kind = pick(lr->field("kind"), lr->str("kind", "constant"), kSignal);
      l.value = lr->num("value", l.value);
      l.before = lr->num("before", l.before);
      l.step_k = lr->integer("step_k", l.step_k);
      l.amplitude = lr->num("amplitude", l.amplitude);
      l.rate = lr->num("rate", l.rate);
      if (const json* pcs = lr->array("pieces")) {
        for (size_t i = 0; i < pcs->size(); ++i) {
          const json& e = (*pcs)[i];
          if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number())
            throw ValidationError(lr->field("pieces") + "[" + std::to_string(i) + "]", "expected [k, level]");
          l.pieces.emplace_back(e[0].get<long>(), e[1].get<double>());
        }
        for (size_t i = 1; i < l.pieces.size(); ++i)
          if (l.pieces[i].first <= l.pieces[i - 1].first)
            throw ValidationError(lr->field("pieces"), "k must be strictly increasing");
      }
      lr->finish();
    }
    if (auto x0 = sr->vec("lead_x0", 4)) sc.lead_x0 = *x0;
    if (const json* in = sr->array("init")) {
      sc.init.clear();
      for (size_t i = 0; i < in->size(); ++i) {
        Reader fr((*in)[i], sr->field("init") + "[" + std::to_string(i) + "]");
        FollowerInit f;
        if (auto x = fr.vec("x", 4)) f.x = *x;
        f.dv = fr.num("dv", f.dv);
        f.a_prev = fr.num("a_prev", f.a_prev);
        f.xhat = fr.vec("xhat", 6);
        fr.finish();
        sc.init.push_back(f);
      }
    }
    if (auto nr = sr->obj("noise")) {
      sc.noise_enabled = nr->boolean("enabled", sc.noise_enabled);
      sc.noise.kind = pick(nr->field("kind"), nr->str("kind", "uniform_ball"), kNoise);
      nr->finish();
    }
    if (const json* cs = sr->array("cases")) {
      std::set<std::string> names;
      for (size_t i = 0; i < cs->size(); ++i) {
        Reader cr((*cs)[i], sr->field("cases") + "[" + std::to_string(i) + "]");
        SimCase k;
        k.name = cr.str("name", "");
        if (k.name.empty() || k.name.find_first_of("/\\ ") != std::string::npos || k.name == "." || k.name == "..")
          throw ValidationError(cr.field("name"), "must be a non-empty name without spaces or slashes");
        if (!names.insert(k.name).second) throw ValidationError(cr.field("name"), "duplicate case name");
        k.attacks = read_attacks(cr);
        if (cr.has("runs")) k.runs = static_cast<int>(cr.integer("runs", 1));
        else cr.integer("runs", 1);
        if (cr.has("horizon")) k.horizon = static_cast<int>(cr.integer("horizon", 1));
        else cr.integer("horizon", 1);
        cr.finish();
        sim.cases.push_back(k);
      }
    }
    sr->finish();
  }
  if (sim.cases.empty()) sim.cases.push_back(SimCase{"nominal", {}, std::nullopt, std::nullopt});
  top.finish();

  validate(c);
  return c;
}

AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config", std::string("not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

void apply_overrides(AppConfig& c, const Overrides& o) {
  if (o.seed) c.sim.base.seed = *o.seed;
  if (o.grid_step) {
    c.synth.alpha_grid.step = *o.grid_step;
    c.synth.a_grid.step = *o.grid_step;
  }
  if (o.horizon) {
    c.assess.horizon = *o.horizon;
    c.sim.base.horizon = *o.horizon;
    for (auto& k : c.sim.cases) k.horizon.reset();
  }
  if (o.runs) {
    c.sim.base.runs = *o.runs;
    for (auto& k : c.sim.cases) k.runs.reset();
  }
  if (o.tol_feas) c.synth.solver.feas_tol = *o.tol_feas;
  if (o.tol_opt) c.synth.solver.opt_tol = *o.tol_opt;
  validate(c);
}

void validate(const AppConfig& c) {
  try {
    c.platoon.validate();
  } catch (const ValidationError& e) {
    // report under the config key names
    const std::string f = e.field();
    const std::string key = (f == "kp" || f == "kd") ? "K" : f == "s_standstill" ? "standstill" : f;
    rethrow_under("platoon", ValidationError(key, std::string(e.what()).substr(f.size() + 2)));
  }
  const auto& s = c.synth;
  if (!(s.alpha_grid.step > 0)) throw ValidationError("synthesis.alpha_grid.step", "must be positive");
  if (!(s.a_grid.step > 0)) throw ValidationError("synthesis.a_grid.step", "must be positive");
  if (!(s.solver.feas_tol > 0 && s.solver.feas_tol < 1)) throw ValidationError("synthesis.solver.tol_feas", "must lie in (0, 1)");
  if (!(s.solver.opt_tol > 0 && s.solver.opt_tol < 1)) throw ValidationError("synthesis.solver.tol_opt", "must lie in (0, 1)");
  if (s.solver.max_iter < 1) throw ValidationError("synthesis.solver.max_iter", "must be >= 1");
  if (s.threads < 1) throw ValidationError("synthesis.threads", "must be >= 1");
  if (c.assess.horizon < 1) throw ValidationError("assessment.horizon", "must be >= 1");
  if (c.sim.base.threads < 1) throw ValidationError("simulation.threads", "must be >= 1");
  if (c.sim.trajectory_runs < 0) throw ValidationError("simulation.trajectory_runs", "must be >= 0");
  if (c.sim.scatter_runs < 0) throw ValidationError("simulation.scatter_runs", "must be >= 0");
  for (size_t i = 0; i < c.sim.cases.size(); ++i) {
    const SimCase& k = c.sim.cases[i];
    const std::string f = "simulation.cases[" + std::to_string(i) + "]";
    if (k.runs && *k.runs < 1) throw ValidationError(f + ".runs", "must be >= 1");
    if (k.horizon && *k.horizon < 1) throw ValidationError(f + ".horizon", "must be >= 1");
    Scenario sc = c.sim.base;
    sc.cfg = c.platoon;
    sc.attacks = k.attacks;
    sc.noise = NoisePolicy::make(sc.noise.kind, c.platoon.wbar1, c.platoon.wbar2, c.platoon.wbar3, sc.seed);
    try {
      sc.validate();
    } catch (const ValidationError& e) {
      rethrow_under("simulation", e, "scenario.");
    }
  }
}

json to_json(const AppConfig& c) {
  const PlatoonConfig& p = c.platoon;
  json j;
  j["name"] = c.name;
  j["platoon"] = {{"h", p.h},         {"tau", p.tau},     {"K", {p.kp, p.kd}}, {"Ts", p.Ts},
                  {"standstill", p.s_standstill},         {"v_max", p.v_max},  {"u_min", p.u_min},
                  {"u_max", p.u_max}, {"wbar1", p.wbar1}, {"wbar2", p.wbar2},  {"wbar3", p.wbar3}};
  const SynthSettings& s = c.synth;
  j["synthesis"] = {{"alpha_grid", grid_json(s.alpha_grid)},
                    {"a_grid", grid_json(s.a_grid)},
                    {"extend_a_grid", s.extend_a_grid},
                    {"select", name_of(s.select, kSelect)},
                    {"threads", s.threads},
                    {"solver",
                     {{"tol_feas", s.solver.feas_tol}, {"tol_opt", s.solver.opt_tol}, {"max_iter", s.solver.max_iter}}}};
  j["assessment"] = {{"horizon", c.assess.horizon},
                     {"zeta1", vec_json(c.assess.zeta1)},
                     {"distance", name_of(c.assess.convention, kConv)}};
  const Scenario& sc = c.sim.base;
  json lead{{"target", name_of(sc.lead.target, kTarget)}, {"kind", name_of(sc.lead.kind, kSignal)},
            {"value", sc.lead.value}, {"before", sc.lead.before}, {"step_k", sc.lead.step_k},
            {"amplitude", sc.lead.amplitude}, {"rate", sc.lead.rate}};
  json pieces = json::array();
  for (const auto& [k, v] : sc.lead.pieces) pieces.push_back({k, v});
  lead["pieces"] = pieces;
  json init = json::array();
  for (const auto& f : sc.init) {
    json fi{{"x", vec_json(f.x)}, {"dv", f.dv}, {"a_prev", f.a_prev}};
    if (f.xhat) fi["xhat"] = vec_json(*f.xhat);
    init.push_back(fi);
  }
  json cases = json::array();
  for (const auto& k : c.sim.cases) {
    json a = json::array();
    for (const auto& p2 : k.attacks) a.push_back(attack_json(p2));
    json cj{{"name", k.name}, {"attacks", a}};
    if (k.runs) cj["runs"] = *k.runs;
    if (k.horizon) cj["horizon"] = *k.horizon;
    cases.push_back(cj);
  }
  j["simulation"] = {{"n_vehicles", sc.n_vehicles},
                     {"horizon", sc.horizon},
                     {"runs", sc.runs},
                     {"seed", sc.seed},
                     {"burn_in", sc.burn_in},
                     {"threads", sc.threads},
                     {"trajectory_runs", c.sim.trajectory_runs},
                     {"scatter_runs", c.sim.scatter_runs},
                     {"lead", lead},
                     {"lead_x0", vec_json(sc.lead_x0)},
                     {"init", init},
                     {"noise", {{"enabled", sc.noise_enabled}, {"kind", name_of(sc.noise.kind, kNoise)}}},
                     {"cases", cases}};
  return j;
}

json design_inputs(const AppConfig& c) {
  json j = to_json(c);
  json d{{"platoon", j["platoon"]}, {"synthesis", j["synthesis"]}};
  d["synthesis"].erase("threads");  // does not change the result
  return d;
}

}  // namespace cacc::tool
