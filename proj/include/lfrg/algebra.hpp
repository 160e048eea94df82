#pragma once

// Polynomial multilocal functionals and their deformed products.
//
// A Term is coefficient * hbar^n * couplings * (field factors at abstract
// vertices) * (propagator kernels between vertices). Vertices are local to a
// term and carry a smearing label; two factors at the same vertex share it.

#include <boost/multiprecision/cpp_int.hpp>
#include <map>
#include <json.hpp>
#include <string>
#include <vector>

#include "lfrg/error.hpp"

namespace lfrg {

using Rational = boost::multiprecision::cpp_rational;

enum class Model { TwoScalar, MSR, Dirac };
enum class Species { phi1, phi2, phi, phiTilde, psi, psiBar };
enum class Kind { TwoPoint, Feynman, AntiFeynman, Retarded, Advanced };

const char* to_string(Model m);
const char* to_string(Species s);
const char* to_string(Kind k);
Model model_from_string(const std::string& s);
Species species_from_string(const std::string& s);
Kind kind_from_string(const std::string& s);

Model model_of(Species s);
bool is_odd(Species s);
bool channel_allowed(Model m, Species a, Species b);
std::vector<std::pair<Species, Species>> channels(Model m);

// exact Gaussian rational re + i*im
struct Coeff {
  Rational re, im;
  Coeff() = default;
  Coeff(Rational r, Rational i = 0) : re(std::move(r)), im(std::move(i)) {}
  bool is_zero() const { return re == 0 && im == 0; }
  Coeff operator*(const Coeff& o) const { return {re * o.re - im * o.im, re * o.im + im * o.re}; }
  Coeff operator+(const Coeff& o) const { return {re + o.re, im + o.im}; }
  Coeff operator-() const { return {-re, -im}; }
  bool operator==(const Coeff& o) const { return re == o.re && im == o.im; }
};

// slot: position within the vertex word. Dirac factors at one vertex carry distinct
// implicit spinor indices, so the slot keeps them apart; even models leave it 0.
struct FieldFactor {
  Species species;
  int vertex;
  int slot = 0;
};

struct Kernel {
  Kind kind;
  Species a, b;  // species channel, a at `from`, b at `to`
  int from, to;
  int power = 1;
  int from_slot = 0, to_slot = 0;
};

struct Term {
  Coeff coeff{1};
  int hbar = 0;  // negative for S-matrix / Bogoliubov terms
  std::map<std::string, int> couplings;
  std::vector<std::string> vertices;  // smearing label per vertex
  std::vector<FieldFactor> factors;   // word order matters for Dirac
  std::vector<Kernel> kernels;

  int kernel_power() const;
  int coupling_degree() const;
};

struct Functional {
  Model model = Model::TwoScalar;
  std::vector<Term> terms;

  bool empty() const { return terms.empty(); }
};

using Assignment = std::map<std::pair<Species, Species>, Kind>;
Assignment uniform_assignment(Model m, Kind k);

Functional make_generator(Model m, Species s, const std::string& smearing, int power);
// single vertex carrying an arbitrary list of species, e.g. (phi1 phi2)[f]
Functional make_local_monomial(Model m, const std::vector<Species>& word, const std::string& smearing,
                               Coeff c = Coeff{1}, std::map<std::string, int> couplings = {});
// identity functional; with a label, the scalar symbol 1[f]
Functional make_unit(Model m, const std::string& smearing = "");

Functional add(const Functional& F, const Functional& G);
Functional scale(const Functional& F, const Coeff& c, int hbar_shift = 0);
Functional pointwise_product(const Functional& F, const Functional& G);
// vacuum_only: drop every pairing that leaves an uncontracted factor
Functional star_product(const Functional& F, const Functional& G, const Assignment& a, bool vacuum_only = false);
Functional star_product(const Functional& F, const Functional& G);  // TwoPoint on every channel
Functional time_ordered_product(const std::vector<Functional>& ops, bool vacuum_only = false);
Functional anti_time_ordered_product(const std::vector<Functional>& ops, bool vacuum_only = false);
// n-ary product with one propagator kind on every pair of distinct operands
Functional ordered_product(const std::vector<Functional>& ops, Kind kind, bool vacuum_only = false);

// joint truncation in total coupling degree; per_symbol_cap < 0 disables
Functional truncate(const Functional& F, int order, int per_symbol_cap = -1);
Functional s_matrix_truncated(const Functional& V, int order, bool inverse);
// vacuum_only: return only the fully contracted part (= vacuum_expectation of the full result)
Functional bogoliubov_truncated(const Functional& V, const Functional& F, int order, bool vacuum_only = false);
Functional vacuum_expectation(const Functional& F);
Functional canonicalize(const Functional& F);

// interaction densities with smearing label h and coupling symbols
Functional two_scalar_interaction(const std::string& h = "h");  // l1/24 phi1^4 + l2/24 phi2^4 + l3/4 phi1^2 phi2^2
Functional msr_interaction(const std::string& h = "h");         // lambda/2 phi^2 phiTilde - D phiTilde^2
Functional thirring_interaction(const std::string& h = "h");    // lambda/2 psiBar psi psiBar psi

std::string canonical_key(const Term& t);  // expects a canonical term
bool equal(const Functional& F, const Functional& G);  // after canonicalization

nlohmann::json to_json(const Functional& F);
Functional functional_from_json(const nlohmann::json& j);
std::string format_coeff(const Rational& r);  // "p/q" or "p"

}  // namespace lfrg
