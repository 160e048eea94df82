#pragma once

// Run configuration (JSON), orchestration and output writing for the CLI.

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lfrg/algebra.hpp"
#include "lfrg/error.hpp"
#include "lfrg/flows.hpp"
#include "lfrg/lpa.hpp"

namespace lfrg {

constexpr const char* kVersion = "0.1.0";

struct RunConfig {
  std::string command;            // expand | flow | lpa
  std::string model;              // two_scalar | msr | dirac
  std::string dimension = "d4";   // msr only
  double mu_sq = 1;
  std::map<std::string, double> couplings;
  std::array<double, 2> k{0, 0};
  double eps_sing = -1;

  Tolerances tolerances;  // flow

  // lpa
  FieldGrid grid;
  Guards guards;
  double checkpoint_every = 0;

  // expand
  std::string operation;  // star | time_ordered | anti_time_ordered | pointwise | s_matrix | s_matrix_inverse | bogoliubov | vev
  std::vector<std::string> operands;
  std::string kind = "TwoPoint";  // star only
  int order = 2;

  std::string out;

  bool operator==(const RunConfig&) const;
};

class SchemaError : public Error {
 public:
  explicit SchemaError(std::vector<std::string> v);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

// all violations are collected before throwing
RunConfig parse_config(const nlohmann::json& j);
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);
nlohmann::json serialize(const RunConfig& c);

// allowed coupling names per (model, dimension)
std::vector<std::string> coupling_names(const std::string& model, const std::string& dimension);

// "phi1^2 phi2[f]" or "psi*psiBar[g]"
Functional parse_monomial(Model m, const std::string& text);

struct RunOutcome {
  int exit_code = 0;
  std::string termination;  // ReachedEnd, SingularLocus, ... or the error code name
  std::string message;
  nlohmann::json manifest;
};

// exit codes: 0 ok, 2 schema, 3 singular locus, 4 stability/sigma/K-ratio, 5 internal
int exit_code_for(ErrorCode c);

// executes the config, writing into out_dir (created if needed); the manifest is
// written atomically even when the run aborts
RunOutcome run(const RunConfig& c, const std::string& out_dir);

std::string sha256_file(const std::string& path);

}  // namespace lfrg
