#include "lfrg/runner.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace lfrg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kCommands{"expand", "flow", "lpa"};
const std::vector<std::string> kModels{"two_scalar", "msr", "dirac"};
const std::vector<std::string> kOperations{"star",     "pointwise",        "time_ordered", "anti_time_ordered",
                                           "s_matrix", "s_matrix_inverse", "bogoliubov",   "vev"};

bool one_of(const std::string& s, const std::vector<std::string>& v) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::string join(const std::vector<std::string>& v) {
  std::string r;
  for (auto& s : v) r += (r.empty() ? "" : "|") + s;
  return r;
}

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Model algebra_model(const std::string& m) {
  if (m == "two_scalar") return Model::TwoScalar;
  if (m == "msr") return Model::MSR;
  return Model::Dirac;
}

FlowModel flow_model(const std::string& m, const std::string& dim) {
  if (m == "two_scalar") return FlowModel::TwoScalar;
  if (m == "msr") return dim == "d3" ? FlowModel::MSR_d3 : FlowModel::MSR_d4;
  return FlowModel::Dirac;
}

// collects violations while reading a JSON object
struct Reader {
  std::vector<std::string>& out;

  void bad(const std::string& path, const std::string& msg) { out.push_back(path + ": " + msg); }

  void allow(const json& j, const std::string& prefix, const std::vector<std::string>& keys) {
    for (auto& [k, v] : j.items())
      if (!one_of(k, keys)) bad(prefix + k, "unknown key");
  }

  std::optional<double> number(const json& j, const std::string& key, const std::string& path) {
    if (!j.contains(key)) return std::nullopt;
    if (!j[key].is_number()) {
      bad(path, "expected a number");
      return std::nullopt;
    }
    double v = j[key].get<double>();
    if (!std::isfinite(v)) {
      bad(path, "must be finite");
      return std::nullopt;
    }
    return v;
  }

  std::optional<std::string> string(const json& j, const std::string& key, const std::string& path) {
    if (!j.contains(key)) return std::nullopt;
    if (!j[key].is_string()) {
      bad(path, "expected a string");
      return std::nullopt;
    }
    return j[key].get<std::string>();
  }

  template <class T, size_t N>
  bool pair(const json& j, const std::string& key, const std::string& path, std::array<T, N>& dst) {
    if (!j.contains(key)) return false;
    const json& a = j[key];
    if (!a.is_array() || a.size() != N) {
      bad(path, "expected an array of " + std::to_string(N));
      return false;
    }
    for (size_t i = 0; i < N; ++i) {
      bool ok = std::is_integral_v<T> ? a[i].is_number_integer() : a[i].is_number();
      if (!ok) {
        bad(path + "[" + std::to_string(i) + "]", std::is_integral_v<T> ? "expected an integer" : "expected a number");
        return false;
      }
      dst[i] = a[i].get<T>();
    }
    return true;
  }
};

}  // namespace

SchemaError::SchemaError(std::vector<std::string> v)
    : Error(ErrorCode::SchemaViolation,
            [&] {
              std::string s;
              for (auto& x : v) s += (s.empty() ? "" : "; ") + x;
              return s;
            }()),
      violations_(std::move(v)) {}

bool RunConfig::operator==(const RunConfig& o) const {
  auto tol = [](const Tolerances& a, const Tolerances& b) {
    return a.rel_tol == b.rel_tol && a.abs_tol == b.abs_tol && a.h0 == b.h0 && a.min_step == b.min_step &&
           a.max_step == b.max_step && a.event_tol == b.event_tol;
  };
  auto grd = [](const Guards& a, const Guards& b) {
    return a.safety == b.safety && a.min_step == b.min_step && a.max_step == b.max_step &&
           a.k_ratio_cap == b.k_ratio_cap;
  };
  return command == o.command && model == o.model && dimension == o.dimension && mu_sq == o.mu_sq &&
         couplings == o.couplings && k == o.k && eps_sing == o.eps_sing && tol(tolerances, o.tolerances) &&
         grid.lo == o.grid.lo && grid.hi == o.grid.hi && grid.n == o.grid.n && grd(guards, o.guards) &&
         checkpoint_every == o.checkpoint_every && operation == o.operation && operands == o.operands &&
         kind == o.kind && order == o.order && out == o.out;
}

std::vector<std::string> coupling_names(const std::string& model, const std::string&) {
  if (model == "two_scalar") return {"U0", "m1_sq", "m2_sq", "lambda1", "lambda2", "lambda3"};
  if (model == "msr") return {"U0", "m_sq", "lambda", "D"};
  if (model == "dirac") return {"U0", "m", "lambda"};
  return {};
}

Functional parse_monomial(Model m, const std::string& text) {
  auto lb = text.find('['), rb = text.rfind(']');
  if (lb == std::string::npos || rb == std::string::npos || rb < lb || text.find_first_not_of(" \t", rb + 1) != std::string::npos)
    throw Error(ErrorCode::InvalidArgument, "monomial '" + text + "' needs a trailing [label]");
  std::string label = text.substr(lb + 1, rb - lb - 1);
  if (label.empty() || label.find_first_of(" \t[]") != std::string::npos)
    throw Error(ErrorCode::InvalidArgument, "bad smearing label in '" + text + "'");
  std::string body = text.substr(0, lb);
  std::replace(body.begin(), body.end(), '*', ' ');
  std::istringstream is(body);
  std::vector<Species> word;
  std::string tok;
  bool unit = false;
  while (is >> tok) {
    if (tok == "1") {
      unit = true;
      continue;
    }
    int power = 1;
    auto c = tok.find('^');
    std::string name = tok.substr(0, c);
    if (c != std::string::npos) {
      std::string p = tok.substr(c + 1);
      if (p.empty() || p.find_first_not_of("0123456789") != std::string::npos)
        throw Error(ErrorCode::InvalidArgument, "bad power in '" + tok + "'");
      power = std::stoi(p);
      if (power < 1) throw Error(ErrorCode::InvalidArgument, "power must be >= 1 in '" + tok + "'");
    }
    Species s = species_from_string(name);
    if (model_of(s) != m)
      throw Error(ErrorCode::UnknownSpecies, name + " does not belong to model " + to_string(m));
    word.insert(word.end(), power, s);
  }
  if (word.empty()) {
    if (!unit) throw Error(ErrorCode::InvalidArgument, "empty monomial '" + text + "'");
    return make_unit(m, label);
  }
  return make_local_monomial(m, word, label);
}

RunConfig parse_config(const json& j) {
  std::vector<std::string> v;
  Reader r{v};
  RunConfig c;
  if (!j.is_object()) throw SchemaError({"<root>: expected an object"});

  auto cmd = r.string(j, "command", "command");
  if (!cmd) {
    if (!j.contains("command")) r.bad("command", "required");
  } else if (!one_of(*cmd, kCommands)) {
    r.bad("command", "must be one of " + join(kCommands));
  } else {
    c.command = *cmd;
  }
  auto model = r.string(j, "model", "model");
  if (!model) {
    if (!j.contains("model")) r.bad("model", "required");
  } else if (!one_of(*model, kModels)) {
    r.bad("model", "must be one of " + join(kModels));
  } else {
    c.model = *model;
  }

  std::vector<std::string> keys{"command", "model", "out"};
  if (c.command == "flow" || c.command == "lpa")
    for (auto k : {"dimension", "mu_sq", "couplings", "k", "eps_sing"}) keys.push_back(k);
  if (c.command == "flow") keys.push_back("tolerances");
  if (c.command == "lpa")
    for (auto k : {"grid", "guards", "checkpoint_every"}) keys.push_back(k);
  if (c.command == "expand") keys.push_back("expand");
  if (!c.command.empty()) r.allow(j, "", keys);

  if (auto o = r.string(j, "out", "out")) c.out = *o;

  if (c.command == "flow" || c.command == "lpa") {
    if (auto d = r.string(j, "dimension", "dimension")) {
      if (c.model != "msr")
        r.bad("dimension", "only valid for model msr");
      else if (*d != "d4" && *d != "d3")
        r.bad("dimension", "must be d4|d3");
      else
        c.dimension = *d;
    }
    if (c.model == "dirac" && c.command == "lpa") r.bad("model", "dirac has no field-grid surface; use flow");
    if (auto m = r.number(j, "mu_sq", "mu_sq")) {
      if (*m <= 0) r.bad("mu_sq", "must be > 0");
      c.mu_sq = *m;
    }
    if (auto e = r.number(j, "eps_sing", "eps_sing")) {
      if (*e <= 0) r.bad("eps_sing", "must be > 0");
      c.eps_sing = *e;
    }
    auto names = coupling_names(c.model, c.dimension);
    for (auto& n : names) c.couplings[n] = 0;
    if (j.contains("couplings")) {
      const json& cj = j["couplings"];
      if (!cj.is_object()) {
        r.bad("couplings", "expected an object");
      } else {
        if (!c.model.empty()) r.allow(cj, "couplings.", names);
        for (auto& n : names)
          if (auto x = r.number(cj, n, "couplings." + n)) c.couplings[n] = *x;
      }
    }
    if (!j.contains("k")) {
      r.bad("k", "required");
    } else if (r.pair(j, "k", "k", c.k)) {
      if (c.k[0] <= 0 || c.k[1] <= 0) r.bad("k", "scales must be > 0");
      if (c.command == "lpa" && !(c.k[1] > c.k[0])) r.bad("k", "lpa needs k[0] < k[1]");
      if (c.command == "flow" && c.k[0] == c.k[1]) r.bad("k", "empty range");
    }
  }

  if (c.command == "flow" && j.contains("tolerances")) {
    const json& t = j["tolerances"];
    if (!t.is_object()) {
      r.bad("tolerances", "expected an object");
    } else {
      r.allow(t, "tolerances.", {"rel_tol", "abs_tol", "h0", "min_step", "max_step", "event_tol"});
      auto get = [&](const char* key, double& dst, bool strict) {
        if (auto x = r.number(t, key, std::string("tolerances.") + key)) {
          if (strict ? *x <= 0 : *x < 0) r.bad(std::string("tolerances.") + key, strict ? "must be > 0" : "must be >= 0");
          dst = *x;
        }
      };
      get("rel_tol", c.tolerances.rel_tol, true);
      get("abs_tol", c.tolerances.abs_tol, false);
      get("h0", c.tolerances.h0, false);
      get("min_step", c.tolerances.min_step, true);
      get("max_step", c.tolerances.max_step, false);
      get("event_tol", c.tolerances.event_tol, true);
    }
  }

  if (c.command == "lpa") {
    if (j.contains("grid")) {
      const json& g = j["grid"];
      if (!g.is_object()) {
        r.bad("grid", "expected an object");
      } else {
        r.allow(g, "grid.", {"lo", "hi", "points"});
        r.pair(g, "lo", "grid.lo", c.grid.lo);
        r.pair(g, "hi", "grid.hi", c.grid.hi);
        r.pair(g, "points", "grid.points", c.grid.n);
        for (int a = 0; a < 2; ++a) {
          if (c.grid.n[a] < 5) r.bad("grid.points[" + std::to_string(a) + "]", "minimum 5 points per axis");
          if (!(c.grid.hi[a] > c.grid.lo[a])) r.bad("grid.hi[" + std::to_string(a) + "]", "must exceed grid.lo");
        }
      }
    }
    if (j.contains("guards")) {
      const json& g = j["guards"];
      if (!g.is_object()) {
        r.bad("guards", "expected an object");
      } else {
        r.allow(g, "guards.", {"safety", "min_step", "max_step", "k_ratio_cap"});
        if (auto x = r.number(g, "safety", "guards.safety")) {
          if (*x <= 0 || *x > 1) r.bad("guards.safety", "must be in (0, 1]");
          c.guards.safety = *x;
        }
        if (auto x = r.number(g, "min_step", "guards.min_step")) {
          if (*x <= 0) r.bad("guards.min_step", "must be > 0");
          c.guards.min_step = *x;
        }
        if (auto x = r.number(g, "max_step", "guards.max_step")) {
          if (*x < 0) r.bad("guards.max_step", "must be >= 0");
          c.guards.max_step = *x;
        }
        if (auto x = r.number(g, "k_ratio_cap", "guards.k_ratio_cap")) {
          if (*x <= 0) r.bad("guards.k_ratio_cap", "must be > 0");
          c.guards.k_ratio_cap = *x;
        }
      }
    }
    if (auto x = r.number(j, "checkpoint_every", "checkpoint_every")) {
      if (*x < 0) r.bad("checkpoint_every", "must be >= 0");
      c.checkpoint_every = *x;
    }
  }

  if (c.command == "expand") {
    if (!j.contains("expand")) {
      r.bad("expand", "required");
    } else if (!j["expand"].is_object()) {
      r.bad("expand", "expected an object");
    } else {
      const json& e = j["expand"];
      r.allow(e, "expand.", {"operation", "operands", "kind", "order"});
      auto op = r.string(e, "operation", "expand.operation");
      if (!op) {
        if (!e.contains("operation")) r.bad("expand.operation", "required");
      } else if (!one_of(*op, kOperations)) {
        r.bad("expand.operation", "must be one of " + join(kOperations));
      } else {
        c.operation = *op;
      }
      if (e.contains("operands")) {
        if (!e["operands"].is_array()) {
          r.bad("expand.operands", "expected an array of strings");
        } else {
          for (size_t i = 0; i < e["operands"].size(); ++i) {
            std::string path = "expand.operands[" + std::to_string(i) + "]";
            if (!e["operands"][i].is_string()) {
              r.bad(path, "expected a string");
              continue;
            }
            std::string s = e["operands"][i].get<std::string>();
            if (!c.model.empty()) {
              try {
                parse_monomial(algebra_model(c.model), s);
              } catch (const Error& err) {
                r.bad(path, err.what());
              }
            }
            c.operands.push_back(s);
          }
        }
      }
      size_t n = c.operands.size();
      const std::string& o = c.operation;
      if ((o == "star" || o == "pointwise") && n != 2) r.bad("expand.operands", o + " takes exactly 2 operands");
      if ((o == "time_ordered" || o == "anti_time_ordered") && n < 1) r.bad("expand.operands", o + " needs >= 1 operand");
      if ((o == "s_matrix" || o == "s_matrix_inverse") && n != 0) r.bad("expand.operands", o + " takes no operands");
      if ((o == "bogoliubov" || o == "vev") && n != 1) r.bad("expand.operands", o + " takes exactly 1 observable");
      if (auto k = r.string(e, "kind", "expand.kind")) {
        if (o != "star") r.bad("expand.kind", "only valid for operation star");
        try {
          kind_from_string(*k);
          c.kind = *k;
        } catch (const Error&) {
          r.bad("expand.kind", "unknown kernel kind");
        }
      }
      if (e.contains("order")) {
        if (!e["order"].is_number_integer() || e["order"].get<int>() < 0)
          r.bad("expand.order", "expected a non-negative integer");
        else
          c.order = e["order"].get<int>();
      }
    }
  }

  if (!v.empty()) throw SchemaError(v);
  return c;
}

RunConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError({std::string("<root>: not valid JSON: ") + e.what()});
  }
  return parse_config(j);
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError({"<file>: cannot read " + path});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

json serialize(const RunConfig& c) {
  json j;
  j["command"] = c.command;
  j["model"] = c.model;
  if (!c.out.empty()) j["out"] = c.out;
  if (c.command == "flow" || c.command == "lpa") {
    if (c.model == "msr") j["dimension"] = c.dimension;
    j["mu_sq"] = c.mu_sq;
    if (c.eps_sing > 0) j["eps_sing"] = c.eps_sing;
    json cj = json::object();
    for (auto& [k, v] : c.couplings) cj[k] = v;
    j["couplings"] = cj;
    j["k"] = {c.k[0], c.k[1]};
  }
  if (c.command == "flow") {
    auto& t = c.tolerances;
    j["tolerances"] = {{"rel_tol", t.rel_tol}, {"abs_tol", t.abs_tol},   {"h0", t.h0},
                       {"min_step", t.min_step}, {"max_step", t.max_step}, {"event_tol", t.event_tol}};
  }
  if (c.command == "lpa") {
    j["grid"] = {{"lo", c.grid.lo}, {"hi", c.grid.hi}, {"points", c.grid.n}};
    auto& g = c.guards;
    j["guards"] = {{"safety", g.safety}, {"min_step", g.min_step}, {"max_step", g.max_step},
                   {"k_ratio_cap", g.k_ratio_cap}};
    j["checkpoint_every"] = c.checkpoint_every;
  }
  if (c.command == "expand") {
    json e{{"operation", c.operation}, {"operands", c.operands}, {"order", c.order}};
    if (c.operation == "star") e["kind"] = c.kind;
    j["expand"] = e;
  }
  return j;
}

int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::SchemaViolation: return 2;
    case ErrorCode::SingularLocus:
    case ErrorCode::LogDomain: return 3;
    case ErrorCode::StabilityGuard:
    case ErrorCode::SigmaNonPositive:
    case ErrorCode::KRatioExceeded:
    case ErrorCode::StepUnderflow: return 4;
    default: return 5;
  }
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned i = 0; i < len; ++i) s += hex[md[i] >> 4], s += hex[md[i] & 15];
  return s;
}

namespace {

std::vector<double> initial_vector(const RunConfig& c) {
  std::vector<double> y;
  for (auto& n : coupling_names(c.model, c.dimension)) y.push_back(c.couplings.at(n));
  return y;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream o(p, std::ios::binary);
  o << s;
  if (!o) throw Error(ErrorCode::Internal, "cannot write " + p.string());
}

std::string csv_row(double k, const std::vector<double>& y) {
  std::string s = num(k);
  for (double v : y) s += "," + num(v);
  return s + "\n";
}

void run_flow(const RunConfig& c, const fs::path& dir, RunOutcome& out) {
  auto sys = make_system(flow_model(c.model, c.dimension), c.mu_sq);
  if (c.eps_sing > 0) sys.eps_sing = c.eps_sing;
  auto names = sys.names();
  std::vector<double> y0 = initial_vector(c);

  auto tr = integrate_flow(sys, y0, c.k[0], c.k[1], c.tolerances);

  std::string csv = "k";
  for (auto& n : names) csv += "," + n;
  csv += "\n";
  for (auto& s : tr.samples) csv += csv_row(s.k, s.y);
  write_text(dir / "trajectory.csv", csv);

  json meta{{"model", to_string(sys.model)},
            {"names", names},
            {"mu_sq", c.mu_sq},
            {"termination", to_string(tr.termination)},
            {"accepted", tr.accepted},
            {"rejected", tr.rejected},
            {"samples", tr.samples.size()}};
  if (tr.termination == Termination::SingularLocus) meta["crossing"] = {tr.crossing_lo, tr.crossing_hi};
  if (c.model == "two_scalar") {
    ScalarCouplings sc{y0[0], y0[1], y0[2], y0[3], y0[4], y0[5], c.mu_sq};
    auto b = check_boundedness(sc);
    meta["boundedness"] = {{"ok", b.ok}, {"failed", b.failed}, {"margin", b.margin}};
  }
  write_text(dir / "trajectory.meta.json", meta.dump(2) + "\n");

  out.termination = to_string(tr.termination);
  if (tr.termination == Termination::SingularLocus) {
    out.exit_code = 3;
    out.message = "singular locus crossed in [" + num(std::min(tr.crossing_lo, tr.crossing_hi)) + ", " +
                  num(std::max(tr.crossing_lo, tr.crossing_hi)) + "]";
  } else if (tr.termination == Termination::StepUnderflow) {
    out.exit_code = 4;
    out.message = "step size underflow";
  }
}

void run_lpa(const RunConfig& c, const fs::path& dir, RunOutcome& out) {
  LpaModel model = c.model == "two_scalar" ? LpaModel::TwoScalar
                   : c.dimension == "d3"   ? LpaModel::MSR_d3
                                           : LpaModel::MSR_d4;
  FlowModel fm = flow_model(c.model, c.dimension);
  FieldGrid grid(c.grid.lo, c.grid.hi, c.grid.n);
  std::vector<double> y0 = initial_vector(c);
  LpaParams p;
  p.mu_sq = c.mu_sq;
  if (c.eps_sing > 0) p.eps_sing = c.eps_sing;
  Tolerances ode_tol{1e-13, 1e-15};
  auto bd = make_ode_boundary(model, grid, y0, c.k[0], c.mu_sq, ode_tol);
  auto sys = make_system(fm, c.mu_sq);

  double a = c.k[0], b = c.k[1];
  std::vector<double> cps{a};
  if (c.checkpoint_every > 0)
    for (int i = 1;; ++i) {
      double k = a + i * c.checkpoint_every;
      if (k >= b * (1 - 1e-12)) break;
      cps.push_back(k);
    }
  cps.push_back(b);

  std::ofstream diag(dir / "diagnostics.jsonl", std::ios::binary);
  std::ofstream coup(dir / "couplings.csv", std::ios::binary);
  std::ofstream index(dir / "checkpoints.csv", std::ios::binary);
  auto names = sys.names();
  coup << "k";
  for (auto& n : names) coup << ",fit_" << n;
  coup << ",fit_residual";
  for (auto& n : names) coup << ",ode_" << n;
  coup << "\n";
  index << "index,k,file\n";
  const char* ax0 = model == LpaModel::TwoScalar ? "phi1" : "phi";
  const char* ax1 = model == LpaModel::TwoScalar ? "phi2" : "phiTilde";
  int ncp = 0;

  auto on_step = [&](const StepDiagnostics& d) {
    json r{{"k", d.k}, {"dk", d.dk}, {"sigma_min", d.sigma_min}, {"sigma_max", d.sigma_max},
           {"k_ratio_max", d.k_ratio_max}, {"seminorms", d.seminorms}};
    diag << r.dump() << "\n";
  };
  auto on_cp = [&](const PotentialSurface& s) {
    char name[32];
    std::snprintf(name, sizeof name, "surface_%04d.csv", ncp);
    std::string body = std::string(ax0) + "," + ax1 + ",u\n";
    for (int i = 0; i < grid.n[0]; ++i)
      for (int j = 0; j < grid.n[1]; ++j)
        body += num(grid.x(i)) + "," + num(grid.y(j)) + "," + num(s.u[grid.idx(i, j)]) + "\n";
    write_text(dir / name, body);
    index << ncp << "," << num(s.k) << "," << name << "\n";
    ++ncp;
    auto f = fit_couplings(s);
    std::vector<double> ode = y0;
    if (s.k != a) ode = integrate_flow(sys, y0, a, s.k, ode_tol).samples.back().y;
    coup << num(s.k);
    for (double v : f.values) coup << "," << num(v);
    coup << "," << num(f.residual);
    for (double v : ode) coup << "," << num(v);
    coup << "\n";
    coup.flush();
    index.flush();
  };

  auto res = solve_flow(model, grid, bd, a, b, p, c.guards, cps, on_step, on_cp);
  json summary{{"model", to_string(model)},
               {"k_final", res.final_surface.k},
               {"steps", res.diagnostics.steps.size()},
               {"sigma_min", res.diagnostics.sigma_min},
               {"k_ratio_max", res.diagnostics.k_ratio_max},
               {"seminorms", res.diagnostics.seminorms},
               {"checkpoints", ncp}};
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  out.termination = "ReachedEnd";
}

void run_expand(const RunConfig& c, const fs::path& dir, RunOutcome& out) {
  Model m = algebra_model(c.model);
  std::vector<Functional> ops;
  for (auto& s : c.operands) ops.push_back(parse_monomial(m, s));
  Functional V = m == Model::TwoScalar ? two_scalar_interaction("h")
                 : m == Model::MSR     ? msr_interaction("h")
                                       : thirring_interaction("h");
  Functional F;
  const std::string& o = c.operation;
  if (o == "star")
    F = star_product(ops[0], ops[1], uniform_assignment(m, kind_from_string(c.kind)));
  else if (o == "pointwise")
    F = pointwise_product(ops[0], ops[1]);
  else if (o == "time_ordered")
    F = time_ordered_product(ops);
  else if (o == "anti_time_ordered")
    F = anti_time_ordered_product(ops);
  else if (o == "s_matrix" || o == "s_matrix_inverse")
    F = s_matrix_truncated(V, c.order, o == "s_matrix_inverse");
  else if (o == "bogoliubov")
    F = bogoliubov_truncated(V, ops[0], c.order);
  else
    F = bogoliubov_truncated(V, ops[0], c.order, true);
  json j = to_json(F);
  j["operation"] = o;
  j["operands"] = c.operands;
  if (o == "s_matrix" || o == "s_matrix_inverse" || o == "bogoliubov" || o == "vev") j["order"] = c.order;
  write_text(dir / "functional.json", j.dump(2) + "\n");
  out.termination = "Completed";
}

}  // namespace

RunOutcome run(const RunConfig& c, const std::string& out_dir) {
  RunOutcome out;
  auto t0 = std::chrono::steady_clock::now();
  fs::path dir(out_dir);
  json cause;
  try {
    fs::create_directories(dir);
    if (c.command == "flow")
      run_flow(c, dir, out);
    else if (c.command == "lpa")
      run_lpa(c, dir, out);
    else if (c.command == "expand")
      run_expand(c, dir, out);
    else
      throw Error(ErrorCode::Internal, "unknown command '" + c.command + "'");
  } catch (const Error& e) {
    out.exit_code = exit_code_for(e.code());
    out.termination = to_string(e.code());
    out.message = e.what();
    if (std::isfinite(e.k)) cause["k"] = e.k;
    if (std::isfinite(e.value)) cause["value"] = e.value;
    if (e.node_i >= 0) cause["node"] = {e.node_i, e.node_j};
  } catch (const std::exception& e) {
    out.exit_code = 5;
    out.termination = "Internal";
    out.message = e.what();
  }
  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json files = json::array();
  std::error_code ec;
  if (fs::is_directory(dir, ec)) {
    std::vector<std::string> names;
    for (auto& f : fs::directory_iterator(dir))
      if (f.is_regular_file() && f.path().filename() != "manifest.json" && f.path().extension() != ".tmp")
        names.push_back(f.path().filename().string());
    std::sort(names.begin(), names.end());
    for (auto& n : names)
      files.push_back({{"file", n}, {"bytes", fs::file_size(dir / n)}, {"sha256", sha256_file((dir / n).string())}});
  }
  cause["cause"] = out.termination;
  if (!out.message.empty()) cause["message"] = out.message;
  out.manifest = {{"artifact", "lfrg"},   {"version", kVersion},     {"command", c.command},
                  {"config", serialize(c)}, {"wall_time_s", wall},   {"termination", cause},
                  {"exit_code", out.exit_code}, {"outputs", files}};
  try {
    fs::path tmp = dir / "manifest.json.tmp";
    write_text(tmp, out.manifest.dump(2) + "\n");
    fs::rename(tmp, dir / "manifest.json");
  } catch (const std::exception& e) {
    if (out.exit_code == 0) out.exit_code = 5;
    out.message += std::string(" (manifest not written: ") + e.what() + ")";
  }
  return out;
}

}  // namespace lfrg
