#pragma once

// Closed-form LPA beta functions and an adaptive Dormand-Prince 4(5) integrator
// with singular-locus event detection. All beta_* return k*d/dk of each coupling.

#include <functional>
#include <string>
#include <vector>

#include "lfrg/error.hpp"

namespace lfrg {

struct ScalarCouplings {
  double U0 = 0, m1_sq = 0, m2_sq = 0, lambda1 = 0, lambda2 = 0, lambda3 = 0;
  double mu_sq = 1;  // reference scale, never flowed
};

enum class Dim { d4, d3 };

struct MSRCouplings {
  double U0 = 0, m_sq = 0, lambda = 0, D = 0;
  double mu_sq = 1;
  Dim dim = Dim::d4;
};

struct DiracCouplings {
  double U0 = 0, m = 0, lambda = 0;
};

// default singular-locus threshold relative to mu^2
constexpr double kEpsSingRel = 1e-8;

ScalarCouplings beta_two_scalar(const ScalarCouplings& s, double k, double eps_sing = -1);
MSRCouplings beta_msr(const MSRCouplings& s, double k, double eps_sing = -1);
DiracCouplings beta_dirac(const DiracCouplings& s, double k);

struct Boundedness {
  bool ok;
  std::string failed;  // empty when ok
  double margin;       // value of the failed (or tightest) inequality, lhs - rhs
};
Boundedness check_boundedness(const ScalarCouplings& s);

// ---------------------------------------------------------------- generic flow

enum class FlowModel { TwoScalar, MSR_d4, MSR_d3, Dirac };
const char* to_string(FlowModel m);

// A coupling vector in declared order plus the run constant mu^2.
struct FlowSystem {
  FlowModel model;
  double mu_sq = 1;
  double eps_sing = 1e-8;  // absolute

  std::vector<std::string> names() const;
  // dy/dk = beta/k
  std::vector<double> rhs(double k, const std::vector<double>& y) const;
  // smallest log argument minus eps_sing; +inf when the model has none
  double event(double k, const std::vector<double>& y) const;
};

FlowSystem make_system(FlowModel m, double mu_sq);

std::vector<double> to_vector(const ScalarCouplings& s);
std::vector<double> to_vector(const MSRCouplings& s);
std::vector<double> to_vector(const DiracCouplings& s);

struct Tolerances {
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  double h0 = 0;  // initial step, 0 = automatic
  double min_step = 1e-14;
  double max_step = 0;  // 0 = |b-a|
  double event_tol = 1e-13;  // bracket width for the singular-locus crossing
};

enum class Termination { ReachedEnd, SingularLocus, StepUnderflow };
const char* to_string(Termination t);

struct FlowSample {
  double k;
  std::vector<double> y;
};

struct FlowTrajectory {
  FlowModel model;
  std::vector<std::string> names;
  std::vector<FlowSample> samples;
  Termination termination = Termination::ReachedEnd;
  // bracket [lo, hi] in k around the singular-locus crossing (ordered along the flow)
  double crossing_lo = 0, crossing_hi = 0;
  int accepted = 0, rejected = 0;
};

// Adaptive DP45 from k=a to k=b (a > b allowed). Samples every accepted step.
FlowTrajectory integrate_flow(const FlowSystem& sys, const std::vector<double>& y0, double a, double b,
                              const Tolerances& tol = {});

// classical RK4 with n equal steps; throws SingularLocus if a stage hits it
std::vector<double> integrate_rk4(const FlowSystem& sys, const std::vector<double>& y0, double a, double b, int n);

}  // namespace lfrg
