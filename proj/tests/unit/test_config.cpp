#include <doctest.h>

#include <filesystem>
#include <string>

#include "cacc/errors.hpp"
#include "config.hpp"
#include "pipeline.hpp"

using namespace cacc;
using namespace cacc::tool;

namespace {

std::string config_path(const std::string& name) { return std::string(CACC_CONFIG_DIR) + "/" + name; }

std::string field_of(const json& j) {
  try {
    parse_config(j);
  } catch (const ValidationError& e) {
    return e.field();
  }
  return "";
}

json minimal() { return json{{"platoon", {{"h", 0.5}}}}; }

}  // namespace

TEST_CASE("bundled configs parse") {
  for (const char* n : {"example1.json", "example2-safe.json", "example2-risky.json"}) {
    const AppConfig c = load_config(config_path(n));
    CHECK(c.platoon.h == 0.5);
    CHECK(c.platoon.tau == 0.1);
    CHECK(!c.sim.cases.empty());
  }
  const AppConfig r = load_config(config_path("example2-risky.json"));
  CHECK(r.platoon.kp == 0.9);
  CHECK(r.platoon.kd == 0.1);
}

TEST_CASE("validation errors name the field") {
  json j = minimal();
  j["platoon"]["h"] = -1.0;
  CHECK(field_of(j) == "platoon.h");
  j = minimal();
  j["platoon"]["tau"] = "fast";
  CHECK(field_of(j) == "platoon.tau");
  j = minimal();
  j["platoon"]["colour"] = 1;
  CHECK(field_of(j) == "platoon.colour");
  j = minimal();
  j["platoon"]["K"] = {0.9, 0.01};
  CHECK(field_of(j) == "platoon.K");
  j = minimal();
  j["synthesis"] = {{"alpha_grid", {{"lo", 0.0}, {"hi", 0.5}, {"step", 0.1}}}};
  CHECK(field_of(j) == "synthesis.alpha_grid");
  j = minimal();
  j["simulation"] = {{"cases", {{{"name", "x"}, {"attacks", {{{"kind", "greedy_direction"}, {"margin", 2.0}}}}}}}};
  CHECK(field_of(j) == "simulation.cases[0].attacks[0].margin");
  j = minimal();
  j["simulation"] = {{"init", {{{"x", {0, 40, 0, 0}}}}}};
  CHECK(field_of(j) == "simulation.init[0]");
  j = minimal();
  j["simulation"] = {{"noise", {{"kind", "pink"}}}};
  CHECK(field_of(j) == "simulation.noise.kind");
  CHECK(field_of(json::array()) == "config");
  CHECK(field_of(json::object()) == "platoon");
}

TEST_CASE("canonical form round-trips") {
  const AppConfig c = load_config(config_path("example2-safe.json"));
  const AppConfig d = parse_config(to_json(c));
  CHECK(to_json(c) == to_json(d));
  CHECK(config_hash(c) == config_hash(d));
}

TEST_CASE("design hash follows the synthesis inputs only") {
  AppConfig c = load_config(config_path("example2-safe.json"));
  const std::string h0 = design_hash(c);
  Overrides o;
  o.seed = 12345;
  o.runs = 3;
  apply_overrides(c, o);
  CHECK(design_hash(c) == h0);
  CHECK(c.sim.base.seed == 12345);
  Overrides g;
  g.grid_step = 0.02;
  apply_overrides(c, g);
  CHECK(design_hash(c) != h0);
  const AppConfig r = load_config(config_path("example2-risky.json"));
  CHECK(design_hash(r) != h0);
  Overrides bad;
  bad.tol_feas = -1;
  CHECK_THROWS_AS(apply_overrides(c, bad), ValidationError);
}

TEST_CASE("sha256 known answers") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("matrix json round trip is exact") {
  MatrixXd m(2, 3);
  m << 0.1, -1e-17, 3.0 / 7.0,
       1e300, -0.0, 2.5;
  const MatrixXd back = json_matrix(json::parse(matrix_json(m).dump()), "m");
  CHECK(back == m);
  CHECK_THROWS_AS(json_matrix(json::parse("[[1,2],[3]]"), "m"), Error);
}

TEST_CASE("run directories are never reused") {
  const fs::path root = fs::temp_directory_path() / "cacc-rundir-test";
  fs::remove_all(root);
  RunDir a(root, "0123456789abcdef");
  RunDir b(root, "0123456789abcdef");
  CHECK(a.path() != b.path());
  a.write("x/y.txt", "hello");
  CHECK_THROWS_AS(a.write("x/y.txt", "again"), Error);
  REQUIRE(a.artifacts().size() == 1);
  CHECK(a.artifacts()[0]["sha256"] == sha256_hex("hello"));
  fs::remove_all(root);
}
