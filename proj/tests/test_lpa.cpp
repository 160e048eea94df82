#include <doctest.h>

#include <cmath>
#include <random>

#include "lfrg/lpa.hpp"

using namespace lfrg;

namespace {

const double PI = 3.14159265358979323846;

PotentialSurface surface(const FieldGrid& g, LpaModel m, double k, const std::function<double(double, double)>& f) {
  PotentialSurface s;
  s.grid = g;
  s.k = k;
  s.model = m;
  s.u.resize(g.size());
  for (int i = 0; i < g.n[0]; ++i)
    for (int j = 0; j < g.n[1]; ++j) s.u[g.idx(i, j)] = f(g.x(i), g.y(j));
  return s;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0;
  for (size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST_SUITE("lpa") {

TEST_CASE("grid") {
  FieldGrid g({-1, 0}, {1, 2}, {5, 9});
  CHECK(g.h(0) == 0.5);
  CHECK(g.h(1) == 0.25);
  CHECK(g.x(4) == 1);
  CHECK(g.y(8) == 2);
  int nb = 0;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 9; ++j) nb += g.boundary(i, j);
  CHECK(nb == 2 * 5 + 2 * 9 - 4);
  CHECK_THROWS_AS(FieldGrid({-1, -1}, {1, 1}, {4, 9}), Error);
  CHECK_THROWS_AS(FieldGrid({1, -1}, {1, 1}, {5, 5}), Error);
}

TEST_CASE("zero surface with mu^2 = k^2 has zero flow") {
  FieldGrid g;
  auto s = surface(g, LpaModel::TwoScalar, 1.5, [](double, double) { return 0.0; });
  LpaParams p;
  p.mu_sq = 1.5 * 1.5;
  for (double r : rhs_surface(LpaModel::TwoScalar, s, 1.5, p)) CHECK(std::abs(r) < 1e-16);
}

TEST_CASE("MSR d4 right-hand side on the exact ansatz") {
  FieldGrid g;
  MSRCouplings c{0.3, 0.1, 0.2, 1, 1, Dim::d4};
  auto s = sample_msr_ansatz(g, c, 1.2);
  double k = 1.2;
  auto r = rhs_surface(LpaModel::MSR_d4, s, k, {});
  for (int i = 1; i < g.n[0] - 1; ++i)
    for (int j = 1; j < g.n[1] - 1; ++j) {
      // mixed Hessian of m^2 phi phiTilde + lambda/2 phi^2 phiTilde
      double A = k * k + c.m_sq + c.lambda * g.x(i);
      CHECK(r[g.idx(i, j)] == doctest::Approx(k / (8 * PI * PI) * A * std::log(A)).epsilon(1e-12));
    }
  auto d3 = rhs_surface(LpaModel::MSR_d3, s, k, {});
  int n = g.idx(10, 30);
  CHECK(d3[n] == doctest::Approx(k / (4 * PI) * (k * k + c.m_sq + c.lambda * g.x(10))).epsilon(1e-12));
}

TEST_CASE("difference Hessians converge at second order on a planted function") {
  auto f = [](double x, double y) { return std::sin(1.3 * x + 0.4) * std::cos(0.7 * y) + x * x * x * y; };
  auto fxy = [](double x, double y) { return -1.3 * 0.7 * std::cos(1.3 * x + 0.4) * std::sin(0.7 * y) + 3 * x * x; };
  auto fxx = [](double x, double y) { return -1.69 * std::sin(1.3 * x + 0.4) * std::cos(0.7 * y) + 6 * x * y; };
  std::vector<double> emix, ediag;
  for (int n : {21, 41, 81}) {
    FieldGrid g({-0.5, -0.5}, {0.5, 0.5}, {n, n});
    auto sm = surface(g, LpaModel::MSR_d4, 1, f);
    auto ss = surface(g, LpaModel::TwoScalar, 1, f);
    auto M = mass_field(sm, 0), D = mass_field(ss, 0);
    double a = 0, b = 0;
    for (int i = 1; i < n - 1; ++i)
      for (int j = 1; j < n - 1; ++j) {
        a = std::max(a, std::abs(M[g.idx(i, j)] - fxy(g.x(i), g.y(j))));
        b = std::max(b, std::abs(D[g.idx(i, j)] - fxx(g.x(i), g.y(j))));
      }
    emix.push_back(a);
    ediag.push_back(b);
  }
  for (int i = 0; i < 2; ++i) {
    CHECK(emix[i] / emix[i + 1] == doctest::Approx(4).epsilon(0.1));
    CHECK(ediag[i] / ediag[i + 1] == doctest::Approx(4).epsilon(0.1));
  }
}

TEST_CASE("log domain and sigma sign are reported with the node") {
  FieldGrid g({-0.5, -0.5}, {0.5, 0.5}, {11, 11});
  auto s = surface(g, LpaModel::TwoScalar, 0.5, [](double x, double y) { return -0.5 * x * x + 0.01 * y * y; });
  try {
    rhs_surface(LpaModel::TwoScalar, s, 0.5, {});
    FAIL("expected LogDomain");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LogDomain);
    CHECK(e.node_i >= 1);
    CHECK(e.node_j >= 1);
    CHECK(e.value <= 0);
    CHECK(e.k == 0.5);
  }
  // k^2 + M^2 = 0.3: log(0.3) + 1 < 0
  auto init = [](double x, double y) { return 0.025 * (x * x + y * y); };
  BoundaryData bd;
  bd.psi_init = surface(g, LpaModel::TwoScalar, 0.5, init).u;
  bd.beta = [&](double x, double y, double) { return init(x, y); };
  try {
    solve_flow(LpaModel::TwoScalar, g, bd, 0.5, 0.6, {}, {});
    FAIL("expected SigmaNonPositive");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SigmaNonPositive);
    CHECK(e.value < 0);
    CHECK(e.node_i >= 1);
  }
}

TEST_CASE("field-independent data tracks the U0 drift") {
  FieldGrid g({-0.5, -0.5}, {0.5, 0.5}, {9, 9});
  double a = 1, b = 1.5, c = 0.2;
  // du/dk = 2 (k/8pi^2) k^2 log k^2 integrated in closed form
  auto U = [&](double k) {
    auto F = [](double q) { return (q * q * q * q / 4 * std::log(q * q) - q * q * q * q / 8) / (4 * PI * PI); };
    return c + F(k) - F(a);
  };
  BoundaryData bd;
  bd.psi_init.assign(g.size(), c);
  bd.beta = [&](double, double, double k) { return U(k); };
  bd.beta_k = [&](double, double, double k) { return k * k * k * std::log(k * k) / (4 * PI * PI); };
  Guards gd;
  gd.max_step = 0.01;  // keeps the time-stepping error below the checked tolerance
  auto res = solve_flow(LpaModel::TwoScalar, g, bd, a, b, {}, gd);
  for (double v : res.final_surface.u) CHECK(v == doctest::Approx(U(b)).epsilon(1e-10));
  double lo = *std::min_element(res.final_surface.u.begin(), res.final_surface.u.end());
  double hi = *std::max_element(res.final_surface.u.begin(), res.final_surface.u.end());
  CHECK(hi - lo < 1e-11);
}

TEST_CASE("one step versus two half steps: fourth-order local error") {
  FieldGrid g({-0.5, -0.5}, {0.5, 0.5}, {9, 9});
  ScalarCouplings c{0, 0.3, 0.2, 1.0, 0.8, 0.3, 1};
  auto bd = make_ode_boundary(LpaModel::TwoScalar, g, to_vector(c), 1, 1);
  PotentialSurface s = sample_scalar_ansatz(g, c, 1);
  double lim = stable_dk(s, {}, {});
  std::vector<double> diffs;
  for (double dk : {lim, lim / 2, lim / 4}) {
    auto one = step_flow(s, dk, bd, {});
    auto two = step_flow(step_flow(s, dk / 2, bd, {}), dk / 2, bd, {});
    diffs.push_back(max_abs_diff(one.u, two.u));
  }
  CHECK(diffs[0] / diffs[1] == doctest::Approx(32).epsilon(0.3));
  CHECK(diffs[1] / diffs[2] == doctest::Approx(32).epsilon(0.3));
}

TEST_CASE("boundary exactness and stability guard") {
  FieldGrid g({-0.5, -0.5}, {0.5, 0.5}, {11, 11});
  ScalarCouplings c{0, 0.3, 0.2, 1.0, 0.8, 0.3, 1};
  auto bd = make_ode_boundary(LpaModel::TwoScalar, g, to_vector(c), 1, 1);
  PotentialSurface s = sample_scalar_ansatz(g, c, 1);
  double lim = stable_dk(s, {}, {});
  auto t = step_flow(s, lim, bd, {});
  for (int i = 0; i < g.n[0]; ++i)
    for (int j = 0; j < g.n[1]; ++j)
      if (g.boundary(i, j)) CHECK(t.u[g.idx(i, j)] == bd.beta(g.x(i), g.y(j), t.k));
  try {
    step_flow(s, 2 * lim, bd, {});
    FAIL("expected StabilityGuard");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::StabilityGuard);
  }
  Guards gd;
  gd.min_step = 1;
  try {
    solve_flow(LpaModel::TwoScalar, g, bd, 1, 2, {}, gd);
    FAIL("expected StabilityGuard");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::StabilityGuard);
  }
  BoundaryData off = bd;
  off.psi_init[0] += 1e-3;
  CHECK_THROWS_AS(solve_flow(LpaModel::TwoScalar, g, off, 1, 2, {}, {}), Error);
}

TEST_CASE("two-scalar solve: diagnostics and checkpoints") {
  FieldGrid g({-0.5, -0.5}, {0.5, 0.5}, {21, 21});
  ScalarCouplings c{0, 0.3, 0.2, 0.5, 0.4, 0.1, 1};
  auto bd = make_ode_boundary(LpaModel::TwoScalar, g, to_vector(c), 1, 1);
  int calls = 0;
  std::vector<double> seen;
  auto res = solve_flow(
      LpaModel::TwoScalar, g, bd, 1, 1.4, {}, {}, {1.1, 1.2, 1.4}, [&](const StepDiagnostics&) { ++calls; },
      [&](const PotentialSurface& s) { seen.push_back(s.k); });
  CHECK(seen == std::vector<double>{1.1, 1.2, 1.4});
  CHECK(res.checkpoints.size() == 3);
  CHECK(res.final_surface.k == 1.4);
  CHECK(calls == int(res.diagnostics.steps.size()));
  for (auto& st : res.diagnostics.steps) {
    CHECK(st.sigma_min > 0);
    CHECK(st.sigma_max >= st.sigma_min);
    CHECK(st.k_ratio_max <= 0.5);
    for (int n = 1; n <= 4; ++n) CHECK(st.seminorms[n] >= st.seminorms[n - 1]);
  }
  CHECK(res.diagnostics.sigma_min > 0);
  for (size_t i = 1; i < res.diagnostics.steps.size(); ++i)
    CHECK(res.diagnostics.steps[i].k > res.diagnostics.steps[i - 1].k);
}

TEST_CASE("MSR d3 surface keeps the fitted lambda") {
  FieldGrid g({-0.5, -0.5}, {0.5, 0.5}, {21, 21});
  MSRCouplings c{0, 0.1, 0.2, 1, 1, Dim::d3};
  auto bd = make_ode_boundary(LpaModel::MSR_d3, g, to_vector(c), 1, 1);
  auto res = solve_flow(LpaModel::MSR_d3, g, bd, 1, 1.2, {}, {}, {1.2});
  auto f0 = fit_couplings(sample_msr_ansatz(g, c, 1));
  auto f1 = fit_couplings(res.final_surface);
  CHECK(std::abs(f1.values[2] - f0.values[2]) <= 10 * f1.residual + 1e-10);
  CHECK(std::abs(f1.values[3] - f0.values[3]) <= 10 * f1.residual + 1e-10);
}

TEST_CASE("fit recovers the ansatz") {
  FieldGrid g;
  ScalarCouplings c{0.7, 0.3, -0.2, 1.5, 0.8, 0.25, 1};
  auto f = fit_couplings(sample_scalar_ansatz(g, c, 1));
  std::vector<double> want{0.7, 0.3, -0.2, 1.5, 0.8, 0.25};
  REQUIRE(f.values.size() == 6);
  for (int i = 0; i < 6; ++i) CHECK(f.values[i] == doctest::Approx(want[i]).epsilon(1e-8));
  CHECK(f.residual < 1e-13);
  CHECK(f.names[5] == "lambda3");

  MSRCouplings m{0.1, 0.2, 0.3, 1.7, 1, Dim::d4};
  auto fm = fit_couplings(sample_msr_ansatz(g, m, 1));
  std::vector<double> wm{0.1, 0.2, 0.3, 1.7};
  for (int i = 0; i < 4; ++i) CHECK(fm.values[i] == doctest::Approx(wm[i]).epsilon(1e-9));

  auto cst = surface(g, LpaModel::TwoScalar, 1, [](double, double) { return 2.5; });
  auto fc = fit_couplings(cst);
  CHECK(fc.values[0] == doctest::Approx(2.5));
  for (int i = 1; i < 6; ++i) CHECK(std::abs(fc.values[i]) < 1e-8);
  try {
    fit_couplings(cst, 1.0);
    FAIL("expected IllConditionedFit");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IllConditionedFit);
  }
}

TEST_CASE("projected betas") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> U(-0.2, 0.8), P(0.1, 2.0), K(0.7, 2.5);
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-12); };
  for (int i = 0; i < 20; ++i) {
    ScalarCouplings s{U(rng), U(rng), U(rng), P(rng), P(rng), U(rng), 1};
    double k = K(rng);
    auto fd = project_betas_fd(FlowModel::TwoScalar, to_vector(s), k, 1);
    auto b = to_vector(beta_two_scalar(s, k));
    for (int c = 0; c < 6; ++c) CHECK(rel(fd[c], b[c]) < 1e-6);

    MSRCouplings m{U(rng), U(rng), P(rng), P(rng), 1, Dim::d4};
    auto pm = project_betas_fd(FlowModel::MSR_d4, to_vector(m), k, 1);
    auto bm = to_vector(beta_msr(m, k));
    CHECK(rel(pm[0], bm[0]) < 1e-6);
    CHECK(rel(pm[1], bm[1]) < 1e-6);
    CHECK(pm[3] == 0);
    // monomial projection of the phi^2 coefficient
    double A = k * k + m.m_sq;
    CHECK(rel(pm[2], k * k / (8 * PI * PI) * m.lambda * m.lambda / 4 / A) < 1e-6);

    m.dim = Dim::d3;
    auto p3 = project_betas_fd(FlowModel::MSR_d3, to_vector(m), k, 1);
    auto b3 = to_vector(beta_msr(m, k));
    for (int c = 0; c < 2; ++c) CHECK(rel(p3[c], b3[c]) < 1e-6);
    CHECK(std::abs(p3[2]) < 1e-9 * std::abs(p3[1]));
    CHECK(p3[3] == 0);
  }
  ScalarCouplings sym{0, 0.4, 0.4, 1.2, 1.2, 0, 1};
  auto p = project_betas_fd(FlowModel::TwoScalar, to_vector(sym), 1.3, 1);
  CHECK(p[1] == doctest::Approx(p[2]).epsilon(1e-12));
  CHECK(p[5] == 0);
  CHECK_THROWS_AS(project_betas_fd(FlowModel::Dirac, {0, 1, 1}, 1, 1), Error);
  try {
    project_betas_fd(FlowModel::MSR_d4, {0, -4, 1, 1}, 1, 1);
    FAIL("expected LogDomain");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LogDomain);
  }
}

TEST_CASE("seminorms") {
  FieldGrid g({-0.5, -0.5}, {0.5, 0.5}, {21, 21});
  auto c = surface(g, LpaModel::TwoScalar, 1, [](double, double) { return -1.25; });
  for (int n = 0; n <= 4; ++n) CHECK(seminorm_estimate(c, n) == doctest::Approx(1.25).epsilon(1e-12));
  auto lin = surface(g, LpaModel::TwoScalar, 1, [](double x, double) { return 3 * x + 0.1; });
  CHECK(seminorm_estimate(lin, 0) == doctest::Approx(1.6));
  CHECK(seminorm_estimate(lin, 1) == doctest::Approx(3).epsilon(1e-12));
  auto lin2 = surface(g, LpaModel::TwoScalar, 1, [](double x, double) { return 0.5 * x + 2; });
  CHECK(seminorm_estimate(lin2, 1) == doctest::Approx(2.25));
  CHECK_THROWS_AS(seminorm_estimate(c, 5), Error);

  // e^{2x} cos y: the largest derivative up to order 2 is d^2/dx^2 = 4e at (0.5, 0)
  std::vector<double> err;
  for (int n : {21, 41, 81}) {
    FieldGrid h({-0.5, -0.5}, {0.5, 0.5}, {n, n});
    auto s = surface(h, LpaModel::TwoScalar, 1, [](double x, double y) { return std::exp(2 * x) * std::cos(y); });
    err.push_back(std::abs(seminorm_estimate(s, 2) - 4 * std::exp(1.0)));
  }
  CHECK(err[0] / err[1] >= 3);
  CHECK(err[1] / err[2] >= 3);
}

}  // TEST_SUITE
