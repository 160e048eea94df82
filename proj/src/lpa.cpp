#include "lfrg/lpa.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <sstream>

namespace lfrg {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double k8pi2 = 8 * kPi * kPi;

Error node_error(ErrorCode c, const std::string& what, double k, int i, int j, double value) {
  std::ostringstream os;
  os.precision(17);
  os << what << " = " << value << " at k = " << k << ", node (" << i << "," << j << ")";
  Error e(c, os.str());
  e.k = k;
  e.value = value;
  e.node_i = i;
  e.node_j = j;
  return e;
}

double second_diff(const PotentialSurface& s, int i, int j, int axis) {
  const auto& g = s.grid;
  const auto& u = s.u;
  double h = g.h(axis);
  if (axis == 0) return (u[g.idx(i + 1, j)] - 2 * u[g.idx(i, j)] + u[g.idx(i - 1, j)]) / (h * h);
  return (u[g.idx(i, j + 1)] - 2 * u[g.idx(i, j)] + u[g.idx(i, j - 1)]) / (h * h);
}

double mixed_diff(const PotentialSurface& s, int i, int j) {
  const auto& g = s.grid;
  const auto& u = s.u;
  return (u[g.idx(i + 1, j + 1)] - u[g.idx(i + 1, j - 1)] - u[g.idx(i - 1, j + 1)] + u[g.idx(i - 1, j - 1)]) /
         (4 * g.h(0) * g.h(1));
}

// (k/8pi^2) A log(A/mu^2)
double log_term(double k, double A, double mu_sq) { return k / k8pi2 * A * std::log(A / mu_sq); }

void set_boundary(PotentialSurface& s, const BoundaryData& bd, double k) {
  const auto& g = s.grid;
  for (int i = 0; i < g.n[0]; ++i)
    for (int j = 0; j < g.n[1]; ++j)
      if (g.boundary(i, j)) s.u[g.idx(i, j)] = bd.beta(g.x(i), g.y(j), k);
}

double boundary_rate(const BoundaryData& bd, double x, double y, double k) {
  if (bd.beta_k) return bd.beta_k(x, y, k);
  double d = 1e-4 * k;
  return (bd.beta(x, y, k + d) - bd.beta(x, y, k - d)) / (2 * d);
}

}  // namespace

const char* to_string(LpaModel m) {
  switch (m) {
    case LpaModel::TwoScalar: return "two_scalar";
    case LpaModel::MSR_d4: return "msr_d4";
    case LpaModel::MSR_d3: return "msr_d3";
  }
  return "?";
}

FieldGrid::FieldGrid(std::array<double, 2> lo_, std::array<double, 2> hi_, std::array<int, 2> n_)
    : lo(lo_), hi(hi_), n(n_) {
  for (int a = 0; a < 2; ++a) {
    if (n[a] < 5) throw Error(ErrorCode::InvalidArgument, "grid needs at least 5 points per axis");
    if (!(hi[a] > lo[a])) throw Error(ErrorCode::InvalidArgument, "grid bounds must satisfy lo < hi");
  }
}

std::vector<double> mass_field(const PotentialSurface& s, int axis) {
  const auto& g = s.grid;
  std::vector<double> M(g.size(), 0.0);
  for (int i = 1; i < g.n[0] - 1; ++i)
    for (int j = 1; j < g.n[1] - 1; ++j)
      M[g.idx(i, j)] = s.model == LpaModel::TwoScalar ? second_diff(s, i, j, axis) : mixed_diff(s, i, j);
  return M;
}

std::vector<double> rhs_surface(LpaModel model, const PotentialSurface& s, double k, const LpaParams& p) {
  const auto& g = s.grid;
  std::vector<double> r(g.size(), 0.0);
  double k2 = k * k, eps = p.eps();
  for (int i = 1; i < g.n[0] - 1; ++i)
    for (int j = 1; j < g.n[1] - 1; ++j) {
      double v = 0;
      switch (model) {
        case LpaModel::TwoScalar:
          for (int a = 0; a < 2; ++a) {
            double A = k2 + second_diff(s, i, j, a);
            if (!(A > eps)) throw node_error(ErrorCode::LogDomain, "k^2+M^2", k, i, j, A);
            v += log_term(k, A, p.mu_sq);
          }
          break;
        case LpaModel::MSR_d4: {
          double A = k2 + mixed_diff(s, i, j);
          if (!(A > eps)) throw node_error(ErrorCode::LogDomain, "k^2+M^2", k, i, j, A);
          v = log_term(k, A, p.mu_sq);
          break;
        }
        case LpaModel::MSR_d3:
          v = k / (4 * kPi) * (k2 + mixed_diff(s, i, j));
          break;
      }
      r[g.idx(i, j)] = v;
    }
  return r;
}

std::vector<double> sigma_field(LpaModel model, const PotentialSurface& s, double k, const LpaParams& p) {
  const auto& g = s.grid;
  std::vector<double> sg(g.size(), std::numeric_limits<double>::quiet_NaN());
  double k2 = k * k;
  auto sig = [&](double M) { return k / k8pi2 * (std::log((k2 + M) / p.mu_sq) + 1); };
  for (int i = 1; i < g.n[0] - 1; ++i)
    for (int j = 1; j < g.n[1] - 1; ++j) {
      double v;
      switch (model) {
        case LpaModel::TwoScalar: v = std::min(sig(second_diff(s, i, j, 0)), sig(second_diff(s, i, j, 1))); break;
        case LpaModel::MSR_d4: v = sig(mixed_diff(s, i, j)); break;
        default: v = k / (4 * kPi); break;
      }
      sg[g.idx(i, j)] = v;
    }
  return sg;
}

double stable_dk(const PotentialSurface& s, const LpaParams& p, const Guards& gd) {
  auto sg = sigma_field(s.model, s, s.k, p);
  double smax = 0;
  for (double v : sg)
    if (std::isfinite(v)) smax = std::max(smax, std::abs(v));
  double h = std::min(s.grid.h(0), s.grid.h(1));
  if (smax == 0) return std::numeric_limits<double>::infinity();
  return gd.safety * h * h / smax;
}

PotentialSurface step_flow(const PotentialSurface& s, double dk, const BoundaryData& bd, const LpaParams& p,
                           const Guards& gd) {
  double lim = stable_dk(s, p, gd);
  if (dk > lim * (1 + 1e-12)) {
    Error e(ErrorCode::StabilityGuard, "dk exceeds the stability guard");
    e.k = s.k;
    e.value = dk;
    throw e;
  }
  const auto& g = s.grid;
  double k = s.k;
  // rhs on the interior, ∂β/∂k on the boundary
  auto rate = [&](const PotentialSurface& t) {
    auto r = rhs_surface(t.model, t, t.k, p);
    for (int i = 0; i < g.n[0]; ++i)
      for (int j = 0; j < g.n[1]; ++j)
        if (g.boundary(i, j)) r[g.idx(i, j)] = boundary_rate(bd, g.x(i), g.y(j), t.k);
    return r;
  };
  auto stage = [&](const std::vector<double>& r, double c) {
    PotentialSurface t = s;
    for (size_t n = 0; n < t.u.size(); ++n) t.u[n] += c * dk * r[n];
    t.k = k + c * dk;
    return t;
  };
  auto r1 = rate(s);
  auto r2 = rate(stage(r1, 0.5));
  auto r3 = rate(stage(r2, 0.5));
  auto r4 = rate(stage(r3, 1.0));
  PotentialSurface out = s;
  for (int i = 1; i < g.n[0] - 1; ++i)
    for (int j = 1; j < g.n[1] - 1; ++j) {
      int n = g.idx(i, j);
      out.u[n] += dk / 6 * (r1[n] + 2 * r2[n] + 2 * r3[n] + r4[n]);
    }
  out.k = k + dk;
  set_boundary(out, bd, out.k);
  return out;
}

namespace {

struct SigmaSummary {
  double min, max;
  int i, j;
};

SigmaSummary summarize_sigma(const PotentialSurface& s, const std::vector<double>& sg) {
  SigmaSummary r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), -1, -1};
  const auto& g = s.grid;
  for (int i = 1; i < g.n[0] - 1; ++i)
    for (int j = 1; j < g.n[1] - 1; ++j) {
      double v = sg[g.idx(i, j)];
      if (std::isnan(v)) {
        r = {v, v, i, j};
        return r;
      }
      if (v < r.min) r.min = v, r.i = i, r.j = j;
      r.max = std::max(r.max, v);
    }
  return r;
}

// K = |∂σ/∂M^2 · D(M^2)| / σ = |D M^2| / ((k^2+M^2)(L+1)); σ depends on (phi, k) only through u''
double k_ratio(const PotentialSurface& now, const PotentialSurface* prev, const LpaParams& p, int& wi, int& wj) {
  if (now.model == LpaModel::MSR_d3) return 0;
  const auto& g = now.grid;
  double k2 = now.k * now.k;
  double worst = 0;
  int naxes = now.model == LpaModel::TwoScalar ? 2 : 1;
  for (int a = 0; a < naxes; ++a) {
    auto M = mass_field(now, a);
    std::vector<double> Mp;
    if (prev) Mp = mass_field(*prev, a);
    double dk = prev ? now.k - prev->k : 0;
    for (int i = 1; i < g.n[0] - 1; ++i)
      for (int j = 1; j < g.n[1] - 1; ++j) {
        int n = g.idx(i, j);
        double A = k2 + M[n];
        double denom = A * (std::log(A / p.mu_sq) + 1);
        double d = 0;
        if (i > 1 && i < g.n[0] - 2) d = std::max(d, std::abs(M[g.idx(i + 1, j)] - M[g.idx(i - 1, j)]) / (2 * g.h(0)));
        if (j > 1 && j < g.n[1] - 2) d = std::max(d, std::abs(M[g.idx(i, j + 1)] - M[g.idx(i, j - 1)]) / (2 * g.h(1)));
        if (prev && dk != 0) d = std::max(d, std::abs(M[n] - Mp[n]) / std::abs(dk));
        double K = d / std::abs(denom);
        if (K > worst) worst = K, wi = i, wj = j;
      }
  }
  return worst;
}

}  // namespace

SolveResult solve_flow(LpaModel model, const FieldGrid& grid, const BoundaryData& bd, double a, double b,
                       const LpaParams& p, const Guards& gd, const std::vector<double>& checkpoints,
                       const std::function<void(const StepDiagnostics&)>& on_step,
                       const std::function<void(const PotentialSurface&)>& on_checkpoint) {
  if (!(a > 0)) throw Error(ErrorCode::InvalidArgument, "k range must start at a > 0");
  if (!(b >= a)) throw Error(ErrorCode::InvalidArgument, "the surface flow is marched upward: need b >= a");
  if (int(bd.psi_init.size()) != grid.size()) throw Error(ErrorCode::InvalidArgument, "psi_init size mismatch");

  PotentialSurface s;
  s.grid = grid;
  s.k = a;
  s.model = model;
  s.u = bd.psi_init;
  for (int i = 0; i < grid.n[0]; ++i)
    for (int j = 0; j < grid.n[1]; ++j)
      if (grid.boundary(i, j)) {
        double want = bd.beta(grid.x(i), grid.y(j), a), have = s.u[grid.idx(i, j)];
        if (std::abs(want - have) > 1e-9 * (1 + std::abs(want)))
          throw node_error(ErrorCode::InvalidArgument, "boundary datum incompatible with psi_init, mismatch", a, i, j,
                           have - want);
        s.u[grid.idx(i, j)] = want;
      }

  std::vector<double> cps = checkpoints;
  std::sort(cps.begin(), cps.end());
  cps.erase(std::remove_if(cps.begin(), cps.end(), [&](double c) { return c < a || c > b; }), cps.end());
  size_t next_cp = 0;

  SolveResult res;
  auto& dg = res.diagnostics;
  dg.sigma_min = std::numeric_limits<double>::infinity();

  auto record = [&](const PotentialSurface& cur, const PotentialSurface* prev, double dk) {
    rhs_surface(model, cur, cur.k, p);  // LogDomain check on the state itself
    auto sg = sigma_field(model, cur, cur.k, p);
    auto ss = summarize_sigma(cur, sg);
    if (!(ss.min > 0)) throw node_error(ErrorCode::SigmaNonPositive, "sigma", cur.k, ss.i, ss.j, ss.min);
    int wi = -1, wj = -1;
    double K = k_ratio(cur, prev, p, wi, wj);
    if (K > gd.k_ratio_cap) throw node_error(ErrorCode::KRatioExceeded, "K ratio", cur.k, wi, wj, K);
    StepDiagnostics sd;
    sd.k = cur.k;
    sd.dk = dk;
    sd.sigma_min = ss.min;
    sd.sigma_max = ss.max;
    sd.k_ratio_max = K;
    for (int n = 0; n <= 4; ++n) sd.seminorms[n] = seminorm_estimate(cur, n);
    dg.sigma_min = std::min(dg.sigma_min, ss.min);
    dg.k_ratio_max = std::max(dg.k_ratio_max, K);
    dg.seminorms = sd.seminorms;
    dg.steps.push_back(sd);
    if (on_step) on_step(sd);
  };

  record(s, nullptr, 0);
  auto take = [&] {
    while (next_cp < cps.size() && cps[next_cp] <= s.k) {
      res.checkpoints.push_back(s), ++next_cp;
      if (on_checkpoint) on_checkpoint(s);
    }
  };
  take();

  while (s.k < b) {
    double lim = stable_dk(s, p, gd);
    double target = next_cp < cps.size() ? cps[next_cp] : b;
    double dk = std::min(lim, target - s.k);
    if (gd.max_step > 0) dk = std::min(dk, gd.max_step);
    if (dk < gd.min_step && dk < target - s.k) {
      Error e(ErrorCode::StabilityGuard, "required step below min_step");
      e.k = s.k;
      e.value = lim;
      throw e;
    }
    bool land = dk == target - s.k;
    auto nxt = step_flow(s, dk, bd, p, gd);
    if (land) {
      nxt.k = target;
      set_boundary(nxt, bd, target);
    }
    record(nxt, &s, dk);
    s = std::move(nxt);
    take();
  }
  res.final_surface = s;
  return res;
}

BoundaryData make_ode_boundary(LpaModel model, const FieldGrid& grid, const std::vector<double>& y0, double a,
                               double mu_sq, const Tolerances& tol) {
  FlowModel fm = model == LpaModel::TwoScalar ? FlowModel::TwoScalar
                 : model == LpaModel::MSR_d4  ? FlowModel::MSR_d4
                                              : FlowModel::MSR_d3;
  auto sys = make_system(fm, mu_sq);
  // every k is integrated from a, so the datum does not depend on call order
  auto cache = std::make_shared<std::map<double, std::vector<double>>>();
  auto couplings = [=](double k) {
    auto it = cache->find(k);
    if (it != cache->end()) return it->second;
    std::vector<double> y = y0;
    if (k != a) {
      auto tr = integrate_flow(sys, y0, a, k, tol);
      if (tr.termination != Termination::ReachedEnd) {
        Error e(ErrorCode::SingularLocus, "boundary ODE did not reach k");
        e.k = k;
        throw e;
      }
      y = tr.samples.back().y;
    }
    (*cache)[k] = y;
    return y;
  };
  auto value = [model](const std::vector<double>& c, double x, double y) {
    if (model == LpaModel::TwoScalar) {
      double x2 = x * x, y2 = y * y;
      return c[0] + c[1] / 2 * x2 + c[2] / 2 * y2 + c[3] / 24 * x2 * x2 + c[4] / 24 * y2 * y2 + c[5] / 4 * x2 * y2;
    }
    return c[0] + c[1] * x * y + c[2] / 2 * x * x * y - c[3] * y * y;
  };
  BoundaryData bd;
  bd.psi_init.resize(grid.size());
  for (int i = 0; i < grid.n[0]; ++i)
    for (int j = 0; j < grid.n[1]; ++j) bd.psi_init[grid.idx(i, j)] = value(y0, grid.x(i), grid.y(j));
  bd.beta = [=](double x, double y, double k) { return value(couplings(k), x, y); };
  // the ansatz is linear in the couplings, so ∂β/∂k is the ansatz of dy/dk
  bd.beta_k = [=](double x, double y, double k) { return value(sys.rhs(k, couplings(k)), x, y); };
  return bd;
}

// ---------------------------------------------------------------- projection

FitResult fit_couplings(const PotentialSurface& s, double condition_cap) {
  const auto& g = s.grid;
  std::vector<std::pair<double, double>> pts;
  std::vector<double> vals;
  for (int i = 0; i < g.n[0]; ++i)
    for (int j = 0; j < g.n[1]; ++j) {
      double cx = 0.5 * (g.lo[0] + g.hi[0]), cy = 0.5 * (g.lo[1] + g.hi[1]);
      double rx = (g.hi[0] - g.lo[0]) / 6, ry = (g.hi[1] - g.lo[1]) / 6;
      double x = g.x(i), y = g.y(j);
      if (std::abs(x - cx) <= rx * (1 + 1e-12) && std::abs(y - cy) <= ry * (1 + 1e-12)) {
        pts.push_back({x, y});
        vals.push_back(s.u[g.idx(i, j)]);
      }
    }
  bool scalar = s.model == LpaModel::TwoScalar;
  int nb = scalar ? 6 : 4;
  Eigen::MatrixXd A(pts.size(), nb);
  Eigen::VectorXd rhs(pts.size());
  for (size_t r = 0; r < pts.size(); ++r) {
    auto [x, y] = pts[r];
    if (scalar) {
      A.row(r) << 1, x * x, y * y, x * x * x * x, y * y * y * y, x * x * y * y;
    } else {
      A.row(r) << 1, x * y, x * x * y, y * y;
    }
    rhs(r) = vals[r];
  }
  FitResult fr;
  if (int(pts.size()) < nb) throw Error(ErrorCode::IllConditionedFit, "fit stencil has fewer nodes than basis functions");
  Eigen::VectorXd scale = A.colwise().lpNorm<Eigen::Infinity>().transpose();
  for (int c = 0; c < nb; ++c)
    if (scale(c) == 0) scale(c) = 1;
  Eigen::MatrixXd As = A * scale.cwiseInverse().asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(As, Eigen::ComputeThinU | Eigen::ComputeThinV);
  auto sv = svd.singularValues();
  fr.condition = sv(sv.size() - 1) > 0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
  if (!(fr.condition <= condition_cap)) {
    std::ostringstream os;
    os << "design matrix condition " << fr.condition << " exceeds " << condition_cap;
    throw Error(ErrorCode::IllConditionedFit, os.str());
  }
  Eigen::VectorXd c = svd.solve(rhs).cwiseQuotient(scale);
  fr.residual = std::sqrt((A * c - rhs).squaredNorm() / double(pts.size()));
  if (scalar) {
    fr.names = {"U0", "m1_sq", "m2_sq", "lambda1", "lambda2", "lambda3"};
    fr.values = {c(0), 2 * c(1), 2 * c(2), 24 * c(3), 24 * c(4), 4 * c(5)};
  } else {
    fr.names = {"U0", "m_sq", "lambda", "D"};
    fr.values = {c(0), c(1), 2 * c(2), -c(3)};
  }
  return fr;
}

std::vector<double> project_betas_fd(FlowModel model, const std::vector<double>& y, double k, double mu_sq,
                                     double fd) {
  if (model == FlowModel::Dirac) throw Error(ErrorCode::InvalidArgument, "no field-space projection for the Dirac model");
  double k2 = k * k, eps = kEpsSingRel * mu_sq;
  bool linear = model == FlowModel::MSR_d3;
  // one closed-form term of B as a function of its argument A
  auto term = [&](double A) {
    if (linear) return k / (4 * kPi) * A;
    if (!(A > eps)) {
      Error e(ErrorCode::LogDomain, "k^2+M^2 <= eps_sing in projection");
      e.k = k;
      e.value = A;
      throw e;
    }
    return log_term(k, A, mu_sq);
  };
  // central differences with two Richardson levels (h, h/2, h/4)
  auto rich = [](auto&& c, double h) { return (64 * c(h / 4) - 20 * c(h / 2) + c(h)) / 45; };
  // the step is scaled to the term's own variation A0/|c|, so each term is resolved
  // to full relative accuracy whatever the size of its coupling
  auto step = [&](double A0, double c) { return fd * std::max(std::abs(A0), eps) / std::abs(c); };
  // d/dr and d^2/dr^2 of term(A0 + c r) at r = 0
  auto d1 = [&](double A0, double c) {
    if (c == 0) return 0.0;
    return rich([&](double t) { return (term(A0 + c * t) - term(A0 - c * t)) / (2 * t); }, step(A0, c));
  };
  auto d2 = [&](double A0, double c) {
    if (c == 0) return 0.0;
    return rich([&](double t) { return (term(A0 + c * t) - 2 * term(A0) + term(A0 - c * t)) / (t * t); },
                step(A0, c));
  };
  // d^2/dr1 dr2 of term(A0 + c1 r1 + c2 r2)
  auto dmix = [&](double A0, double c1, double c2) {
    if (c1 == 0 || c2 == 0) return 0.0;
    double h = fd * std::max(std::abs(A0), eps) / std::max(std::abs(c1), std::abs(c2));
    return rich(
        [&](double t) {
          return ((term(A0 + c1 * t + c2 * t) - term(A0 + c1 * t - c2 * t)) -
                  (term(A0 - c1 * t + c2 * t) - term(A0 - c1 * t - c2 * t))) /
                 (4 * t * t);
        },
        h);
  };

  if (model == FlowModel::TwoScalar) {
    // M_l^2 = m_l^2 + lambda_l/6 rho_l + lambda3/2 rho_j, rho_l = phi_l^2/2
    double A1 = k2 + y[1], A2 = k2 + y[2], l1 = y[3], l2 = y[4], l3 = y[5];
    double b0 = term(A1) + term(A2);
    double r1 = d1(A1, l1 / 6) + d1(A2, l3 / 2);
    double r2 = d1(A1, l3 / 2) + d1(A2, l2 / 6);
    double q1 = d2(A1, l1 / 6) + d2(A2, l3 / 2);
    double q2 = d2(A1, l3 / 2) + d2(A2, l2 / 6);
    double x = dmix(A1, l1 / 6, l3 / 2) + dmix(A2, l3 / 2, l2 / 6);
    // U0 <-> 1, m_l^2 <-> rho_l, lambda_l/6 <-> rho_l^2 (Taylor 1/2), lambda3 <-> rho1 rho2
    return {k * b0, k * r1, k * r2, k * 6 * 0.5 * q1, k * 6 * 0.5 * q2, k * x};
  }
  // MSR at phiTilde = 1: M^2 = m^2 + lambda phi / 2
  double A = k2 + y[1], c = y[2] / 2;
  // U0 <-> 1, m^2 <-> phi, lambda/2 <-> phi^2, D <-> phiTilde^2 (no phi dependence)
  return {k * term(A), k * d1(A, c), k * 2 * 0.5 * d2(A, c), 0.0};
}

// ---------------------------------------------------------------- seminorms

namespace {

// Fornberg's weights for the m-th derivative at z from nodes x
std::vector<double> fd_weights(double z, const std::vector<double>& x, int m) {
  int n = int(x.size()) - 1;
  std::vector<std::vector<double>> c(n + 1, std::vector<double>(m + 1, 0.0));
  double c1 = 1, c4 = x[0] - z;
  c[0][0] = 1;
  for (int i = 1; i <= n; ++i) {
    int mn = std::min(i, m);
    double c2 = 1, c5 = c4;
    c4 = x[i] - z;
    for (int j = 0; j < i; ++j) {
      double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> w(n + 1);
  for (int i = 0; i <= n; ++i) w[i] = c[i][m];
  return w;
}

// m-th derivative along one axis, second order at every node: centered stencils in
// the interior, one-sided windows near the boundary
std::vector<double> diff_axis(const FieldGrid& g, const std::vector<double>& f, int axis, int m) {
  int n = g.n[axis];
  double h = g.h(axis);
  int width = std::min(n, m % 2 == 0 ? m + 1 : m + 2);
  std::vector<std::vector<double>> weights(n);
  std::vector<int> start(n);
  for (int p = 0; p < n; ++p) {
    int w = width;
    int s0 = p - w / 2;
    if (s0 < 0 || s0 + w > n) {
      w = std::min(n, m + 2);  // lopsided windows need one more point
      s0 = std::clamp(p - w / 2, 0, n - w);
    }
    std::vector<double> xs(w);
    for (int q = 0; q < w; ++q) xs[q] = (s0 + q - p) * 1.0;
    auto wt = fd_weights(0.0, xs, m);
    for (auto& v : wt) v /= std::pow(h, m);
    weights[p] = wt;
    start[p] = s0;
  }
  std::vector<double> d(f.size());
  for (int i = 0; i < g.n[0]; ++i)
    for (int j = 0; j < g.n[1]; ++j) {
      int p = axis == 0 ? i : j;
      double v = 0;
      for (size_t q = 0; q < weights[p].size(); ++q) {
        int r = start[p] + int(q);
        v += weights[p][q] * (axis == 0 ? f[g.idx(r, j)] : f[g.idx(i, r)]);
      }
      d[g.idx(i, j)] = v;
    }
  return d;
}

}  // namespace

double seminorm_estimate(const PotentialSurface& s, int n) {
  if (n < 0 || n > 4) throw Error(ErrorCode::InvalidArgument, "seminorm order must be in [0, 4]");
  const auto& g = s.grid;
  double best = 0;
  for (int a = 0; a <= n; ++a) {
    auto dx = a == 0 ? s.u : diff_axis(g, s.u, 0, a);
    for (int b = 0; a + b <= n; ++b) {
      auto d = b == 0 ? dx : diff_axis(g, dx, 1, b);
      for (double v : d) best = std::max(best, std::abs(v));
    }
  }
  return best;
}

PotentialSurface sample_scalar_ansatz(const FieldGrid& g, const ScalarCouplings& c, double k) {
  PotentialSurface s;
  s.grid = g;
  s.k = k;
  s.model = LpaModel::TwoScalar;
  s.u.resize(g.size());
  for (int i = 0; i < g.n[0]; ++i)
    for (int j = 0; j < g.n[1]; ++j) {
      double x = g.x(i), y = g.y(j), x2 = x * x, y2 = y * y;
      s.u[g.idx(i, j)] = c.U0 + c.m1_sq / 2 * x2 + c.m2_sq / 2 * y2 + c.lambda1 / 24 * x2 * x2 +
                         c.lambda2 / 24 * y2 * y2 + c.lambda3 / 4 * x2 * y2;
    }
  return s;
}

PotentialSurface sample_msr_ansatz(const FieldGrid& g, const MSRCouplings& c, double k) {
  PotentialSurface s;
  s.grid = g;
  s.k = k;
  s.model = c.dim == Dim::d4 ? LpaModel::MSR_d4 : LpaModel::MSR_d3;
  s.u.resize(g.size());
  for (int i = 0; i < g.n[0]; ++i)
    for (int j = 0; j < g.n[1]; ++j) {
      double x = g.x(i), y = g.y(j);
      s.u[g.idx(i, j)] = c.U0 + c.m_sq * x * y + c.lambda / 2 * x * x * y - c.D * y * y;
    }
  return s;
}

}  // namespace lfrg
