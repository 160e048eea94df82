#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lfrg/runner.hpp"

using namespace lfrg;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("lfrg_runner_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> violations_of(const json& j) {
  try {
    parse_config(j);
  } catch (const SchemaError& e) {
    return e.violations();
  }
  return {};
}

bool mentions(const std::vector<std::string>& v, const std::string& key) {
  for (auto& s : v)
    if (s.find(key) != std::string::npos) return true;
  return false;
}

json msr_flow() {
  return json::parse(R"({"command":"flow","model":"msr","dimension":"d4","mu_sq":1,
    "couplings":{"m_sq":0.1,"lambda":0.5,"D":2},"k":[0.1,10]})");
}

}  // namespace

TEST_SUITE("runner") {

TEST_CASE("valid configs parse") {
  auto c = parse_config(msr_flow());
  CHECK(c.command == "flow");
  CHECK(c.couplings.at("D") == 2.0);
  CHECK(c.k[1] == 10.0);
}

TEST_CASE("schema violations are all reported with key paths") {
  auto j = msr_flow();
  j["couplings"]["lambda3"] = 1.0;
  j["foo"] = 1;
  j["k"] = json::array({1.0});
  auto v = violations_of(j);
  CHECK(v.size() >= 3);
  CHECK(mentions(v, "couplings.lambda3"));
  CHECK(mentions(v, "foo"));
  CHECK(mentions(v, "k"));

  auto l = json::parse(R"({"command":"lpa","model":"msr","couplings":{"m_sq":0.1,"lambda":0.2,"D":1},
    "k":[1,2],"grid":{"lo":[-0.5,-0.5],"hi":[0.5,0.5],"points":[3,41]}})");
  CHECK(mentions(violations_of(l), "grid.points"));

  auto d = msr_flow();
  d["model"] = "two_scalar";
  d.erase("dimension");
  CHECK(mentions(violations_of(d), "couplings"));  // D is not a two-scalar coupling

  CHECK_THROWS_AS(parse_config_text("{not json"), SchemaError);
}

TEST_CASE("serialize round trips") {
  auto c = parse_config(msr_flow());
  CHECK(parse_config(serialize(c)) == c);

  auto l = parse_config(json::parse(R"({"command":"lpa","model":"two_scalar","mu_sq":2,
    "couplings":{"m1_sq":0.3,"m2_sq":0.2,"lambda1":0.1,"lambda2":0.2,"lambda3":0.05},"k":[1,1.5],
    "grid":{"lo":[-1,-1],"hi":[1,1],"points":[11,13]},"guards":{"safety":0.1},"checkpoint_every":0.1})"));
  auto back = parse_config(serialize(l));
  CHECK(back == l);
  CHECK(back.grid.n[1] == 13);
  CHECK(back.guards.safety == 0.1);

  auto e = parse_config(json::parse(R"({"command":"expand","model":"dirac",
    "expand":{"operation":"bogoliubov","operands":["psi[f]"],"order":3}})"));
  CHECK(parse_config(serialize(e)) == e);
}

TEST_CASE("monomial parsing") {
  auto a = parse_monomial(Model::TwoScalar, "phi1^2 phi2[f]");
  auto b = make_local_monomial(Model::TwoScalar, {Species::phi1, Species::phi1, Species::phi2}, "f");
  CHECK(equal(a, b));
  CHECK(equal(parse_monomial(Model::TwoScalar, "1[f]"), make_unit(Model::TwoScalar, "f")));
  CHECK_THROWS(parse_monomial(Model::TwoScalar, "psi[f]"));
  CHECK_THROWS(parse_monomial(Model::TwoScalar, "phi1^x[f]"));
}

TEST_CASE("exit code mapping") {
  CHECK(exit_code_for(ErrorCode::SingularLocus) == 3);
  CHECK(exit_code_for(ErrorCode::LogDomain) == 3);
  CHECK(exit_code_for(ErrorCode::StabilityGuard) == 4);
  CHECK(exit_code_for(ErrorCode::SigmaNonPositive) == 4);
  CHECK(exit_code_for(ErrorCode::KRatioExceeded) == 4);
  CHECK(exit_code_for(ErrorCode::StepUnderflow) == 4);
  CHECK(exit_code_for(ErrorCode::SchemaViolation) == 2);
  CHECK(exit_code_for(ErrorCode::Internal) == 5);
}

TEST_CASE("expand writes the golden star product") {
  auto c = parse_config(json::parse(R"({"command":"expand","model":"two_scalar",
    "expand":{"operation":"star","operands":["phi1^2[f]","phi1^2[g]"]}})"));
  auto dir = scratch("expand");
  auto r = run(c, dir.string());
  REQUIRE(r.exit_code == 0);
  auto j = json::parse(slurp(dir / "functional.json"));
  auto f = functional_from_json(j.contains("functional") ? j["functional"] : j);
  auto x = make_generator(Model::TwoScalar, Species::phi1, "f", 2);
  auto y = make_generator(Model::TwoScalar, Species::phi1, "g", 2);
  CHECK(equal(f, star_product(x, y)));
  CHECK(f.terms.size() == 3);
  CHECK(fs::exists(dir / "manifest.json"));
}

TEST_CASE("flow runs are byte-identical across repeats") {
  auto c = parse_config(msr_flow());
  auto d1 = scratch("det1"), d2 = scratch("det2");
  auto r1 = run(c, d1.string());
  auto r2 = run(c, d2.string());
  REQUIRE(r1.exit_code == 0);
  REQUIRE(r2.exit_code == 0);
  CHECK(r1.manifest["outputs"] == r2.manifest["outputs"]);
  CHECK(slurp(d1 / "trajectory.csv") == slurp(d2 / "trajectory.csv"));
  CHECK(r1.manifest["outputs"].size() >= 1);
}

TEST_CASE("aborted runs still leave a manifest") {
  // two-scalar flow driven into k^2 + m^2 = 0
  auto c = parse_config(json::parse(R"({"command":"flow","model":"two_scalar","mu_sq":1,
    "couplings":{"m1_sq":-0.5,"m2_sq":0.3,"lambda1":0.1,"lambda2":0.1,"lambda3":0.01},"k":[2,0.1]})"));
  auto dir = scratch("abort");
  auto r = run(c, dir.string());
  CHECK(r.exit_code == 3);
  auto m = json::parse(slurp(dir / "manifest.json"));
  CHECK(m["exit_code"] == 3);
  CHECK(m["termination"]["cause"] == "SingularLocus");
  CHECK(fs::exists(dir / "trajectory.csv"));
  CHECK(!fs::exists(dir / "manifest.json.tmp"));
}

}
