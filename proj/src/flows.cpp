#include "lfrg/flows.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace lfrg {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double k8pi2 = 8 * kPi * kPi;

double resolve_eps(double eps, double mu_sq) { return eps < 0 ? kEpsSingRel * mu_sq : eps; }

[[noreturn]] void singular(double k, double arg, const std::string& what) {
  std::ostringstream os;
  os.precision(17);
  os << "log argument " << what << " = " << arg << " at k = " << k;
  Error e(ErrorCode::SingularLocus, os.str());
  e.k = k;
  e.value = arg;
  throw e;
}

}  // namespace

ScalarCouplings beta_two_scalar(const ScalarCouplings& s, double k, double eps_sing) {
  if (!(k > 0)) throw Error(ErrorCode::InvalidArgument, "k must be positive");
  double eps = resolve_eps(eps_sing, s.mu_sq);
  double k2 = k * k;
  double a1 = k2 + s.m1_sq, a2 = k2 + s.m2_sq;
  if (a1 <= eps) singular(k, a1, "k^2+m1^2");
  if (a2 <= eps) singular(k, a2, "k^2+m2^2");
  double L1 = std::log(a1 / s.mu_sq), L2 = std::log(a2 / s.mu_sq);
  double c = k2 / k8pi2;
  ScalarCouplings b;
  b.mu_sq = 0;
  b.U0 = c * (a1 * L1 + a2 * L2);
  b.m1_sq = c * (s.lambda1 / 6 * (L1 + 1) + s.lambda3 / 2 * (L2 + 1));
  b.m2_sq = c * (s.lambda2 / 6 * (L2 + 1) + s.lambda3 / 2 * (L1 + 1));
  b.lambda1 = 3 * c * (s.lambda1 * s.lambda1 / 36 / a1 + s.lambda3 * s.lambda3 / 4 / a2);
  b.lambda2 = 3 * c * (s.lambda2 * s.lambda2 / 36 / a2 + s.lambda3 * s.lambda3 / 4 / a1);
  b.lambda3 = c * (s.lambda3 * s.lambda1 / (12 * a1) + s.lambda3 * s.lambda2 / (12 * a2));
  return b;
}

MSRCouplings beta_msr(const MSRCouplings& s, double k, double eps_sing) {
  if (!(k > 0)) throw Error(ErrorCode::InvalidArgument, "k must be positive");
  double k2 = k * k;
  double a = k2 + s.m_sq;
  MSRCouplings b;
  b.mu_sq = 0;
  b.dim = s.dim;
  b.D = 0;
  if (s.dim == Dim::d3) {
    b.U0 = k2 / (4 * kPi) * a;
    b.m_sq = k2 * s.lambda / (8 * kPi);
    b.lambda = 0;
    return b;
  }
  if (a <= resolve_eps(eps_sing, s.mu_sq)) singular(k, a, "k^2+m^2");
  double L = std::log(a / s.mu_sq);
  b.U0 = k2 / k8pi2 * a * L;
  b.m_sq = k2 / k8pi2 * (s.lambda / 2) * (L + 1);
  b.lambda = k2 / (4 * kPi * kPi) * (s.lambda * s.lambda / 4) / a;
  return b;
}

DiracCouplings beta_dirac(const DiracCouplings& s, double k) {
  if (!(k > 0)) throw Error(ErrorCode::InvalidArgument, "k must be positive");
  // verbatim: m enters unsquared
  return {k * (k * k + s.m), k * k * k * s.lambda / 2, 0};
}

Boundedness check_boundedness(const ScalarCouplings& s) {
  if (!(s.lambda1 > 0)) return {false, "lambda1 > 0", s.lambda1};
  if (!(s.lambda2 > 0)) return {false, "lambda2 > 0", s.lambda2};
  // det [[l1, 3 l3], [3 l3, l2]]
  double t = 3 * s.lambda3;
  double det = s.lambda1 * s.lambda2 - t * t;
  if (!(det > 0)) return {false, "lambda1*lambda2 > 9*lambda3^2", det};
  return {true, "", det};
}

// ---------------------------------------------------------------- systems

const char* to_string(FlowModel m) {
  switch (m) {
    case FlowModel::TwoScalar: return "two_scalar";
    case FlowModel::MSR_d4: return "msr_d4";
    case FlowModel::MSR_d3: return "msr_d3";
    case FlowModel::Dirac: return "dirac";
  }
  return "?";
}

const char* to_string(Termination t) {
  switch (t) {
    case Termination::ReachedEnd: return "ReachedEnd";
    case Termination::SingularLocus: return "SingularLocus";
    case Termination::StepUnderflow: return "StepUnderflow";
  }
  return "?";
}

std::vector<double> to_vector(const ScalarCouplings& s) {
  return {s.U0, s.m1_sq, s.m2_sq, s.lambda1, s.lambda2, s.lambda3};
}
std::vector<double> to_vector(const MSRCouplings& s) { return {s.U0, s.m_sq, s.lambda, s.D}; }
std::vector<double> to_vector(const DiracCouplings& s) { return {s.U0, s.m, s.lambda}; }

FlowSystem make_system(FlowModel m, double mu_sq) {
  FlowSystem s;
  s.model = m;
  s.mu_sq = mu_sq;
  s.eps_sing = kEpsSingRel * mu_sq;
  return s;
}

std::vector<std::string> FlowSystem::names() const {
  switch (model) {
    case FlowModel::TwoScalar: return {"U0", "m1_sq", "m2_sq", "lambda1", "lambda2", "lambda3"};
    case FlowModel::MSR_d4:
    case FlowModel::MSR_d3: return {"U0", "m_sq", "lambda", "D"};
    case FlowModel::Dirac: return {"U0", "m", "lambda"};
  }
  return {};
}

std::vector<double> FlowSystem::rhs(double k, const std::vector<double>& y) const {
  std::vector<double> b;
  switch (model) {
    case FlowModel::TwoScalar: {
      ScalarCouplings s{y[0], y[1], y[2], y[3], y[4], y[5], mu_sq};
      b = to_vector(beta_two_scalar(s, k, eps_sing));
      break;
    }
    case FlowModel::MSR_d4:
    case FlowModel::MSR_d3: {
      MSRCouplings s{y[0], y[1], y[2], y[3], mu_sq, model == FlowModel::MSR_d4 ? Dim::d4 : Dim::d3};
      b = to_vector(beta_msr(s, k, eps_sing));
      break;
    }
    case FlowModel::Dirac:
      b = to_vector(beta_dirac({y[0], y[1], y[2]}, k));
      break;
  }
  for (auto& x : b) x /= k;
  return b;
}

double FlowSystem::event(double k, const std::vector<double>& y) const {
  switch (model) {
    case FlowModel::TwoScalar: return std::min(k * k + y[1], k * k + y[2]) - eps_sing;
    case FlowModel::MSR_d4: return k * k + y[1] - eps_sing;
    default: return std::numeric_limits<double>::infinity();
  }
}

// ---------------------------------------------------------------- integrators

namespace {

// Dormand-Prince 5(4) tableau
constexpr double c2 = 1. / 5, c3 = 3. / 10, c4 = 4. / 5, c5 = 8. / 9;
constexpr double a21 = 1. / 5;
constexpr double a31 = 3. / 40, a32 = 9. / 40;
constexpr double a41 = 44. / 45, a42 = -56. / 15, a43 = 32. / 9;
constexpr double a51 = 19372. / 6561, a52 = -25360. / 2187, a53 = 64448. / 6561, a54 = -212. / 729;
constexpr double a61 = 9017. / 3168, a62 = -355. / 33, a63 = 46732. / 5247, a64 = 49. / 176, a65 = -5103. / 18656;
constexpr double b1 = 35. / 384, b3 = 500. / 1113, b4 = 125. / 192, b5 = -2187. / 6784, b6 = 11. / 84;
constexpr double e1 = 71. / 57600, e3 = -71. / 16695, e4 = 71. / 1920, e5 = -17253. / 339200, e6 = 22. / 525,
                 e7 = -1. / 40;

using Vec = std::vector<double>;

Vec axpy(const Vec& y, double h, std::initializer_list<std::pair<double, const Vec*>> terms) {
  Vec r = y;
  for (size_t i = 0; i < r.size(); ++i) {
    double s = 0;
    for (auto& [a, v] : terms) s += a * (*v)[i];
    r[i] += h * s;
  }
  return r;
}

struct StepResult {
  Vec y;
  Vec f_end;
  double err;  // scaled max-norm error
};

// One DP step; throws SingularLocus if any stage lands on the locus.
StepResult dp_step(const FlowSystem& sys, double k, const Vec& y, const Vec& f1, double h, const Tolerances& tol) {
  Vec f2 = sys.rhs(k + c2 * h, axpy(y, h, {{a21, &f1}}));
  Vec f3 = sys.rhs(k + c3 * h, axpy(y, h, {{a31, &f1}, {a32, &f2}}));
  Vec f4 = sys.rhs(k + c4 * h, axpy(y, h, {{a41, &f1}, {a42, &f2}, {a43, &f3}}));
  Vec f5 = sys.rhs(k + c5 * h, axpy(y, h, {{a51, &f1}, {a52, &f2}, {a53, &f3}, {a54, &f4}}));
  Vec f6 = sys.rhs(k + h, axpy(y, h, {{a61, &f1}, {a62, &f2}, {a63, &f3}, {a64, &f4}, {a65, &f5}}));
  Vec y5 = axpy(y, h, {{b1, &f1}, {b3, &f3}, {b4, &f4}, {b5, &f5}, {b6, &f6}});
  Vec f7 = sys.rhs(k + h, y5);
  double err = 0;
  for (size_t i = 0; i < y.size(); ++i) {
    double d = h * (e1 * f1[i] + e3 * f3[i] + e4 * f4[i] + e5 * f5[i] + e6 * f6[i] + e7 * f7[i]);
    double sc = tol.abs_tol + tol.rel_tol * std::max(std::abs(y[i]), std::abs(y5[i]));
    err = std::max(err, std::abs(d) / sc);
  }
  return {std::move(y5), std::move(f7), err};
}

bool is_singular(const Error& e) { return e.code() == ErrorCode::SingularLocus; }

}  // namespace

FlowTrajectory integrate_flow(const FlowSystem& sys, const Vec& y0, double a, double b, const Tolerances& tol) {
  if (!(a > 0) || !(b > 0)) throw Error(ErrorCode::InvalidArgument, "k range must be positive");
  if (y0.size() != sys.names().size()) throw Error(ErrorCode::InvalidArgument, "state size mismatch");
  FlowTrajectory tr;
  tr.model = sys.model;
  tr.names = sys.names();
  double dir = b >= a ? 1 : -1;
  double span = std::abs(b - a);
  double hmax = tol.max_step > 0 ? tol.max_step : span;

  double k = a;
  Vec y = y0;
  if (sys.event(k, y) <= 0) {
    tr.samples.push_back({k, y});
    tr.termination = Termination::SingularLocus;
    tr.crossing_lo = tr.crossing_hi = k;
    return tr;
  }
  Vec f = sys.rhs(k, y);
  tr.samples.push_back({k, y});
  if (span == 0) return tr;

  double h = tol.h0 > 0 ? tol.h0 : std::min(hmax, 1e-2 * span);
  const double safety = 0.9, fac_min = 0.2, fac_max = 5.0;
  double err_prev = 1e-4;  // PI controller memory

  while (dir * (b - k) > 0) {
    if (h < tol.min_step) {
      tr.termination = Termination::StepUnderflow;
      return tr;
    }
    double hs = std::min(h, std::abs(b - k));
    bool last = hs == std::abs(b - k);

    StepResult st;
    bool hit = false;
    try {
      st = dp_step(sys, k, y, f, dir * hs, tol);
      hit = sys.event(k + dir * hs, st.y) <= 0;
    } catch (const Error& e) {
      if (!is_singular(e)) throw;
      hit = true;
    }

    if (hit) {
      // A stage or the endpoint reached the locus. First shrink like an ordinary
      // rejection; once the step is as small as the event tolerance allows, bisect
      // the admissible step length and stop there.
      double lo = 0, hi = hs;
      auto admissible = [&](double hh, StepResult& out) {
        try {
          out = dp_step(sys, k, y, f, dir * hh, tol);
          return sys.event(k + dir * hh, out.y) > 0;
        } catch (const Error& e) {
          if (!is_singular(e)) throw;
          return false;
        }
      };
      StepResult half;
      if (hs > 64 * tol.event_tol && admissible(hs / 2, half)) {
        ++tr.rejected;
        h = hs / 2;
        continue;
      }
      StepResult best;
      bool have = false;
      while (hi - lo > tol.event_tol * std::max(1.0, std::abs(k))) {
        double mid = 0.5 * (lo + hi);
        StepResult tmp;
        if (admissible(mid, tmp)) {
          lo = mid;
          best = std::move(tmp);
          have = true;
        } else {
          hi = mid;
        }
      }
      if (have) {
        k += dir * lo;
        y = best.y;
        tr.samples.push_back({k, y});
        ++tr.accepted;
      }
      tr.termination = Termination::SingularLocus;
      tr.crossing_lo = k;
      tr.crossing_hi = k + dir * (hi - lo);
      return tr;
    }

    if (st.err <= 1) {
      k = last ? b : k + dir * hs;
      y = std::move(st.y);
      f = std::move(st.f_end);
      tr.samples.push_back({k, y});
      ++tr.accepted;
      double e = std::max(st.err, 1e-10);
      double fac = safety * std::pow(e, -0.7 / 5) * std::pow(err_prev, 0.4 / 5);
      fac = std::clamp(fac, fac_min, fac_max);
      err_prev = e;
      h = std::min(hmax, hs * fac);
    } else {
      ++tr.rejected;
      double fac = std::max(fac_min, safety * std::pow(st.err, -1.0 / 5));
      h = hs * fac;
    }
  }
  return tr;
}

Vec integrate_rk4(const FlowSystem& sys, const Vec& y0, double a, double b, int n) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "rk4 needs at least one step");
  double h = (b - a) / n;
  Vec y = y0;
  for (int i = 0; i < n; ++i) {
    double k = a + i * h;
    Vec k1 = sys.rhs(k, y);
    Vec k2 = sys.rhs(k + h / 2, axpy(y, h / 2, {{1, &k1}}));
    Vec k3 = sys.rhs(k + h / 2, axpy(y, h / 2, {{1, &k2}}));
    Vec k4 = sys.rhs(k + h, axpy(y, h, {{1, &k3}}));
    y = axpy(y, h / 6, {{1, &k1}, {2, &k2}, {2, &k3}, {1, &k4}});
  }
  return y;
}

}  // namespace lfrg
