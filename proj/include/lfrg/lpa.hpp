#pragma once

// Local potential approximation as a mixed Cauchy problem for u(x, y, k) on a
// uniform 2D field grid: method of lines + classical RK4 in k, Dirichlet boundary.

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "lfrg/error.hpp"
#include "lfrg/flows.hpp"

namespace lfrg {

enum class LpaModel { TwoScalar, MSR_d4, MSR_d3 };
const char* to_string(LpaModel m);

struct FieldGrid {
  std::array<double, 2> lo{-0.5, -0.5}, hi{0.5, 0.5};
  std::array<int, 2> n{41, 41};

  FieldGrid() = default;
  FieldGrid(std::array<double, 2> lo_, std::array<double, 2> hi_, std::array<int, 2> n_);

  double h(int axis) const { return (hi[axis] - lo[axis]) / (n[axis] - 1); }
  double x(int i) const { return i == n[0] - 1 ? hi[0] : lo[0] + i * h(0); }
  double y(int j) const { return j == n[1] - 1 ? hi[1] : lo[1] + j * h(1); }
  int size() const { return n[0] * n[1]; }
  int idx(int i, int j) const { return i * n[1] + j; }
  bool boundary(int i, int j) const { return i == 0 || j == 0 || i == n[0] - 1 || j == n[1] - 1; }
};

// axis 0 is phi1 (scalar) or phi (MSR); axis 1 is phi2 or phiTilde
struct PotentialSurface {
  FieldGrid grid;
  double k = 1;
  std::vector<double> u;
  LpaModel model = LpaModel::TwoScalar;
};

struct BoundaryData {
  std::vector<double> psi_init;                               // u at k=a
  std::function<double(double x, double y, double k)> beta;  // Dirichlet datum on the boundary
  // ∂β/∂k; optional, central differences of beta otherwise. Boundary nodes follow the
  // Runge-Kutta stages with this rate and are reset to beta after each accepted step.
  std::function<double(double x, double y, double k)> beta_k;
};

struct LpaParams {
  double mu_sq = 1;
  double eps_sing = -1;  // < 0: 1e-8 * mu_sq
  double eps() const { return eps_sing < 0 ? kEpsSingRel * mu_sq : eps_sing; }
};

struct Guards {
  double safety = 0.2;
  double min_step = 1e-9;
  double max_step = 0;  // 0: no cap beyond the stability guard
  double k_ratio_cap = 0.5;
};

struct StepDiagnostics {
  double k = 0, dk = 0;
  double sigma_min = 0, sigma_max = 0;
  double k_ratio_max = 0;
  std::array<double, 5> seminorms{};
};

struct FlowDiagnostics {
  double sigma_min = 0;
  double k_ratio_max = 0;
  std::array<double, 5> seminorms{};  // at the last accepted step
  std::vector<StepDiagnostics> steps;
};

// ∂_k u at interior nodes (boundary entries are 0)
std::vector<double> rhs_surface(LpaModel model, const PotentialSurface& u, double k, const LpaParams& p);

// effective mass field used by the RHS at interior nodes; axis = 0/1 for the scalar
// diagonal entries, ignored for MSR (mixed derivative)
std::vector<double> mass_field(const PotentialSurface& u, int axis);

// per-node diffusion coefficient ∂RHS/∂u'' (min over axes for the scalar model)
std::vector<double> sigma_field(LpaModel model, const PotentialSurface& u, double k, const LpaParams& p);

// largest dk allowed by the stability guard at the current state
double stable_dk(const PotentialSurface& u, const LpaParams& p, const Guards& g);

PotentialSurface step_flow(const PotentialSurface& u, double dk, const BoundaryData& bd, const LpaParams& p,
                           const Guards& g = {});

struct SolveResult {
  PotentialSurface final_surface;
  FlowDiagnostics diagnostics;
  std::vector<PotentialSurface> checkpoints;
};

// checkpoints: scales at which the surface is recorded (steps are clipped to land on them)
SolveResult solve_flow(LpaModel model, const FieldGrid& grid, const BoundaryData& bd, double a, double b,
                       const LpaParams& p, const Guards& g = {}, const std::vector<double>& checkpoints = {},
                       const std::function<void(const StepDiagnostics&)>& on_step = {},
                       const std::function<void(const PotentialSurface&)>& on_checkpoint = {});

// psi_init sampled from the ansatz at k=a, beta from the ansatz with couplings run by the
// beta-function ODE (y0 in FlowSystem order)
BoundaryData make_ode_boundary(LpaModel model, const FieldGrid& grid, const std::vector<double>& y0, double a,
                               double mu_sq, const Tolerances& tol = {1e-13, 1e-15});

struct FitResult {
  std::vector<std::string> names;
  std::vector<double> values;
  double residual = 0;   // RMS over the stencil
  double condition = 0;  // of the column-scaled design matrix
};

FitResult fit_couplings(const PotentialSurface& u, double condition_cap = 1e12);

// Taylor coefficients of the closed-form RHS at zero fields, by central differences
// in field values, mapped to beta vectors in FlowSystem order. fd_step is relative to
// the scale on which each log term varies.
std::vector<double> project_betas_fd(FlowModel model, const std::vector<double>& couplings, double k, double mu_sq,
                                     double fd_step = 0.02);

// sup over nodes and |alpha| <= n of |D^alpha u|
double seminorm_estimate(const PotentialSurface& u, int n);

// surfaces sampled from the model ansatz
PotentialSurface sample_scalar_ansatz(const FieldGrid& g, const ScalarCouplings& c, double k);
PotentialSurface sample_msr_ansatz(const FieldGrid& g, const MSRCouplings& c, double k);

}  // namespace lfrg
