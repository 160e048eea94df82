#pragma once

#include <limits>
#include <stdexcept>
#include <string>

namespace lfrg {

enum class ErrorCode {
  UnknownSpecies,
  ModelMismatch,
  IncompleteAssignment,
  EmptyOperandList,
  NonPerturbativeVertex,
  InvalidArgument,
  SingularLocus,
  StepUnderflow,
  LogDomain,
  StabilityGuard,
  SigmaNonPositive,
  KRatioExceeded,
  IllConditionedFit,
  SchemaViolation,
  Internal
};

const char* to_string(ErrorCode c);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode c, const std::string& msg)
      : std::runtime_error(std::string(to_string(c)) + ": " + msg), code_(c) {}
  ErrorCode code() const { return code_; }

  // location info for numerical aborts, NaN when absent
  double k = std::numeric_limits<double>::quiet_NaN();
  double value = std::numeric_limits<double>::quiet_NaN();
  int node_i = -1, node_j = -1;

 private:
  ErrorCode code_;
};

}  // namespace lfrg
