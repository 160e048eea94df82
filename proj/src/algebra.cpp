#include "lfrg/algebra.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace lfrg {

const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::UnknownSpecies: return "UnknownSpecies";
    case ErrorCode::ModelMismatch: return "ModelMismatch";
    case ErrorCode::IncompleteAssignment: return "IncompleteAssignment";
    case ErrorCode::EmptyOperandList: return "EmptyOperandList";
    case ErrorCode::NonPerturbativeVertex: return "NonPerturbativeVertex";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SingularLocus: return "SingularLocus";
    case ErrorCode::StepUnderflow: return "StepUnderflow";
    case ErrorCode::LogDomain: return "LogDomain";
    case ErrorCode::StabilityGuard: return "StabilityGuard";
    case ErrorCode::SigmaNonPositive: return "SigmaNonPositive";
    case ErrorCode::KRatioExceeded: return "KRatioExceeded";
    case ErrorCode::IllConditionedFit: return "IllConditionedFit";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::Internal: return "Internal";
  }
  return "?";
}

const char* to_string(Model m) {
  switch (m) {
    case Model::TwoScalar: return "TwoScalar";
    case Model::MSR: return "MSR";
    case Model::Dirac: return "Dirac";
  }
  return "?";
}

const char* to_string(Species s) {
  switch (s) {
    case Species::phi1: return "phi1";
    case Species::phi2: return "phi2";
    case Species::phi: return "phi";
    case Species::phiTilde: return "phiTilde";
    case Species::psi: return "psi";
    case Species::psiBar: return "psiBar";
  }
  return "?";
}

const char* to_string(Kind k) {
  switch (k) {
    case Kind::TwoPoint: return "TwoPoint";
    case Kind::Feynman: return "Feynman";
    case Kind::AntiFeynman: return "AntiFeynman";
    case Kind::Retarded: return "Retarded";
    case Kind::Advanced: return "Advanced";
  }
  return "?";
}

Model model_from_string(const std::string& s) {
  for (Model m : {Model::TwoScalar, Model::MSR, Model::Dirac})
    if (s == to_string(m)) return m;
  throw Error(ErrorCode::InvalidArgument, "unknown model '" + s + "'");
}

Species species_from_string(const std::string& s) {
  for (int i = 0; i < 6; ++i)
    if (s == to_string(Species(i))) return Species(i);
  throw Error(ErrorCode::UnknownSpecies, "'" + s + "'");
}

Kind kind_from_string(const std::string& s) {
  for (int i = 0; i < 5; ++i)
    if (s == to_string(Kind(i))) return Kind(i);
  throw Error(ErrorCode::InvalidArgument, "unknown kernel kind '" + s + "'");
}

Model model_of(Species s) {
  switch (s) {
    case Species::phi1:
    case Species::phi2: return Model::TwoScalar;
    case Species::phi:
    case Species::phiTilde: return Model::MSR;
    default: return Model::Dirac;
  }
}

bool is_odd(Species s) { return s == Species::psi || s == Species::psiBar; }

bool channel_allowed(Model m, Species a, Species b) {
  if (model_of(a) != m || model_of(b) != m) return false;
  switch (m) {
    case Model::TwoScalar: return a == b;
    case Model::MSR: return a == Species::phi && b == Species::phiTilde;
    case Model::Dirac: return a != b;
  }
  return false;
}

std::vector<std::pair<Species, Species>> channels(Model m) {
  switch (m) {
    case Model::TwoScalar: return {{Species::phi1, Species::phi1}, {Species::phi2, Species::phi2}};
    case Model::MSR: return {{Species::phi, Species::phiTilde}};
    case Model::Dirac: return {{Species::psi, Species::psiBar}, {Species::psiBar, Species::psi}};
  }
  return {};
}

Assignment uniform_assignment(Model m, Kind k) {
  Assignment a;
  for (auto& c : channels(m)) a[c] = k;
  return a;
}

int Term::kernel_power() const {
  int n = 0;
  for (auto& k : kernels) n += k.power;
  return n;
}

int Term::coupling_degree() const {
  int n = 0;
  for (auto& [s, p] : couplings) n += p;
  return n;
}

std::string format_coeff(const Rational& r) {
  auto num = boost::multiprecision::numerator(r);
  auto den = boost::multiprecision::denominator(r);
  if (den == 1) return num.str();
  return num.str() + "/" + den.str();
}

namespace {

// ---------------------------------------------------------------- canonical form

bool symmetric_kernel(Model m, Kind k) {
  return m == Model::TwoScalar && k != Kind::Retarded && k != Kind::Advanced;
}

void normalize_kernel(Model m, Kernel& k) {
  if (symmetric_kernel(m, k.kind) && k.from > k.to) {
    std::swap(k.from, k.to);
    std::swap(k.a, k.b);
    std::swap(k.from_slot, k.to_slot);
  }
}

bool kernel_less(const Kernel& x, const Kernel& y) {
  return std::tie(x.kind, x.a, x.b, x.from, x.to, x.from_slot, x.to_slot, x.power) <
         std::tie(y.kind, y.a, y.b, y.from, y.to, y.from_slot, y.to_slot, y.power);
}

void append_couplings(std::ostringstream& os, const Term& t) {
  for (auto& [s, p] : t.couplings)
    if (p) os << s << '^' << p << ',';
}

std::string key_of(const Term& t) {
  std::ostringstream os;
  os << 'h' << t.hbar << "|c";
  append_couplings(os, t);
  os << "|v";
  for (auto& v : t.vertices) os << v << ',';
  os << "|f";
  for (auto& f : t.factors) os << int(f.species) << '@' << f.vertex << '.' << f.slot << ',';
  os << "|k";
  for (auto& k : t.kernels)
    os << int(k.kind) << ':' << int(k.a) << int(k.b) << ':' << k.from << '.' << k.from_slot << '>' << k.to << '.'
       << k.to_slot << '^' << k.power << ',';
  return os.str();
}

// relabel vertices by perm (old -> new), sort factors and kernels; returns sign
int apply_relabel(Model m, const Term& in, const std::vector<int>& perm, Term& out) {
  out.coeff = in.coeff;
  out.hbar = in.hbar;
  out.couplings.clear();
  for (auto& [s, p] : in.couplings)
    if (p) out.couplings[s] = p;
  out.vertices.assign(in.vertices.size(), "");
  for (size_t i = 0; i < in.vertices.size(); ++i) out.vertices[perm[i]] = in.vertices[i];

  std::vector<FieldFactor> f = in.factors;
  for (auto& x : f) x.vertex = perm[x.vertex];
  std::vector<int> idx(f.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return std::tie(f[a].vertex, f[a].slot, f[a].species) < std::tie(f[b].vertex, f[b].slot, f[b].species);
  });
  int sign = 1;
  if (m == Model::Dirac) {
    // parity of idx as a permutation
    for (size_t i = 0; i < idx.size(); ++i)
      for (size_t j = i + 1; j < idx.size(); ++j)
        if (idx[i] > idx[j]) sign = -sign;
  }
  out.factors.resize(f.size());
  for (size_t i = 0; i < idx.size(); ++i) out.factors[i] = f[idx[i]];

  std::vector<Kernel> ks = in.kernels;
  for (auto& k : ks) {
    k.from = perm[k.from];
    k.to = perm[k.to];
    normalize_kernel(m, k);
  }
  std::sort(ks.begin(), ks.end(), [](const Kernel& x, const Kernel& y) {
    return std::tie(x.kind, x.a, x.b, x.from, x.to, x.from_slot, x.to_slot) <
           std::tie(y.kind, y.a, y.b, y.from, y.to, y.from_slot, y.to_slot);
  });
  out.kernels.clear();
  for (auto& k : ks) {
    if (!out.kernels.empty()) {
      auto& b = out.kernels.back();
      if (b.kind == k.kind && b.a == k.a && b.b == k.b && b.from == k.from && b.to == k.to &&
          b.from_slot == k.from_slot && b.to_slot == k.to_slot) {
        b.power += k.power;
        continue;
      }
    }
    out.kernels.push_back(k);
  }
  return sign;
}

// vertex invariant, independent of labelling
std::string vertex_signature(Model m, const Term& t, int v) {
  std::ostringstream os;
  os << t.vertices[v] << '#';
  std::vector<std::pair<int, int>> sp;
  for (auto& f : t.factors)
    if (f.vertex == v) sp.push_back({f.slot, int(f.species)});
  std::sort(sp.begin(), sp.end());
  for (auto [sl, s] : sp) os << sl << ':' << s << ',';
  os << '#';
  std::vector<std::string> ks;
  for (auto& k : t.kernels) {
    auto tag = [&](char d, Species s, int slot) {
      return d + std::to_string(int(k.kind)) + ':' + std::to_string(int(s)) + ':' + std::to_string(slot) + '^' +
             std::to_string(k.power);
    };
    bool sym = symmetric_kernel(m, k.kind);
    if (k.from == v) ks.push_back(tag(sym ? 'u' : 'o', k.a, k.from_slot));
    if (k.to == v) ks.push_back(tag(sym ? 'u' : 'i', k.b, k.to_slot));
  }
  std::sort(ks.begin(), ks.end());
  for (auto& s : ks) os << s << ',';
  return os.str();
}

Term canonical_term(Model m, const Term& t) {
  int nv = int(t.vertices.size());
  std::vector<std::string> sig(nv);
  for (int v = 0; v < nv; ++v) sig[v] = vertex_signature(m, t, v);
  std::vector<int> order(nv);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return sig[a] < sig[b]; });

  // blocks of equal signature; permute within blocks
  std::vector<std::pair<int, int>> blocks;
  for (int i = 0; i < nv;) {
    int j = i;
    while (j < nv && sig[order[j]] == sig[order[i]]) ++j;
    blocks.push_back({i, j});
    i = j;
  }

  Term best, cand;
  std::string best_key;
  bool have = false;
  std::vector<int> slot = order;  // slot[pos] = old vertex
  std::vector<int> perm(nv);
  std::function<void(size_t)> rec = [&](size_t b) {
    if (b == blocks.size()) {
      for (int p = 0; p < nv; ++p) perm[slot[p]] = p;
      int s = apply_relabel(m, t, perm, cand);
      std::string key = key_of(cand);
      if (!have || key < best_key) {
        best = cand;
        if (s < 0) best.coeff = -best.coeff;
        best_key = key;
        have = true;
      }
      return;
    }
    auto [lo, hi] = blocks[b];
    std::sort(slot.begin() + lo, slot.begin() + hi);
    do {
      rec(b + 1);
    } while (std::next_permutation(slot.begin() + lo, slot.begin() + hi));
  };
  rec(0);
  return best;
}

Functional finalize(Model m, std::vector<Term>&& raw) {
  std::map<std::string, Term> acc;
  for (auto& t : raw) {
    if (t.coeff.is_zero()) continue;
    Term c = canonical_term(m, t);
    std::string key = key_of(c);
    auto it = acc.find(key);
    if (it == acc.end())
      acc.emplace(std::move(key), std::move(c));
    else
      it->second.coeff = it->second.coeff + c.coeff;
  }
  Functional out;
  out.model = m;
  for (auto& [k, t] : acc)
    if (!t.coeff.is_zero()) out.terms.push_back(std::move(t));
  return out;
}

void check_same_model(const std::vector<const Functional*>& fs) {
  for (auto* f : fs)
    if (f->model != fs.front()->model)
      throw Error(ErrorCode::ModelMismatch,
                  std::string(to_string(fs.front()->model)) + " vs " + to_string(f->model));
}

void check_assignment(Model m, const Assignment& a) {
  for (auto& c : channels(m))
    if (!a.count(c))
      throw Error(ErrorCode::IncompleteAssignment,
                  std::string("no kernel kind for channel (") + to_string(c.first) + "," + to_string(c.second) + ")");
}

// ---------------------------------------------------------------- contraction

// kernel kind for a contraction between operands i, j (word order i < j) on channel (a, b)
using KindFn = std::function<Kind(int, int, Species, Species)>;

// Merge operand terms into one uncontracted word. offsets[i] = first vertex of operand i,
// owner[j] = operand of factor j.
Term concat(const std::vector<const Term*>& ops, std::vector<int>& owner) {
  Term t;
  owner.clear();
  for (size_t i = 0; i < ops.size(); ++i) {
    const Term& o = *ops[i];
    int off = int(t.vertices.size());
    t.coeff = t.coeff * o.coeff;
    t.hbar += o.hbar;
    for (auto& [s, p] : o.couplings) t.couplings[s] += p;
    t.vertices.insert(t.vertices.end(), o.vertices.begin(), o.vertices.end());
    for (auto f : o.factors) {
      f.vertex += off;
      t.factors.push_back(f);
      owner.push_back(int(i));
    }
    for (auto k : o.kernels) {
      k.from += off;
      k.to += off;
      t.kernels.push_back(k);
    }
  }
  return t;
}

Rational falling(int n, int r) {
  Rational x = 1;
  for (int i = 0; i < r; ++i) x *= n - i;
  return x;
}

// Even-graded fields: factors at one vertex of one species are interchangeable, so
// count pairings per group. A pattern c[p] over admissible group pairs p=(g,h) has
// multiplicity prod_g a_g!/(a_g-r_g)! / prod_p c_p!.
void contract_even(Model m, const std::vector<const Term*>& ops, const KindFn& kind, bool vacuum_only,
                   std::vector<Term>& out) {
  std::vector<int> owner;
  Term base = concat(ops, owner);

  struct Group {
    int op, vertex;
    Species s;
    int n;
  };
  std::vector<Group> groups;
  for (size_t j = 0; j < base.factors.size(); ++j) {
    auto& f = base.factors[j];
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const Group& g) { return g.vertex == f.vertex && g.s == f.species; });
    if (it == groups.end())
      groups.push_back({owner[j], f.vertex, f.species, 1});
    else
      ++it->n;
  }

  struct Pair {
    int g, h;  // oriented: channel (groups[g].s, groups[h].s)
  };
  std::vector<Pair> pairs;
  for (size_t g = 0; g < groups.size(); ++g)
    for (size_t h = g + 1; h < groups.size(); ++h) {
      if (groups[g].op == groups[h].op) continue;
      if (channel_allowed(m, groups[g].s, groups[h].s))
        pairs.push_back({int(g), int(h)});
      else if (channel_allowed(m, groups[h].s, groups[g].s))
        pairs.push_back({int(h), int(g)});
    }

  std::vector<int> left(groups.size()), c(pairs.size(), 0);
  for (size_t g = 0; g < groups.size(); ++g) left[g] = groups[g].n;

  std::function<void(size_t)> rec = [&](size_t p) {
    if (p == pairs.size()) {
      if (vacuum_only && std::any_of(left.begin(), left.end(), [](int x) { return x != 0; })) return;
      Term t;
      t.hbar = base.hbar;
      t.couplings = base.couplings;
      t.vertices = base.vertices;
      t.kernels = base.kernels;
      Rational mult = 1;
      for (size_t g = 0; g < groups.size(); ++g) {
        mult *= falling(groups[g].n, groups[g].n - left[g]);
        for (int r = 0; r < left[g]; ++r) t.factors.push_back({groups[g].s, groups[g].vertex});
      }
      for (size_t q = 0; q < pairs.size(); ++q) {
        if (!c[q]) continue;
        auto& G = groups[pairs[q].g];
        auto& H = groups[pairs[q].h];
        mult /= falling(c[q], c[q]);
        t.kernels.push_back({kind(std::min(G.op, H.op), std::max(G.op, H.op), G.s, H.s), G.s, H.s, G.vertex, H.vertex,
                             c[q]});
        t.hbar += c[q];
      }
      t.coeff = base.coeff * Coeff(mult);
      out.push_back(std::move(t));
      return;
    }
    int g = pairs[p].g, h = pairs[p].h;
    int cap = std::min(left[g], left[h]);
    for (int k = 0; k <= cap; ++k) {
      c[p] = k;
      left[g] -= k;
      left[h] -= k;
      rec(p + 1);
      left[g] += k;
      left[h] += k;
    }
    c[p] = 0;
  };
  rec(0);
}

// Odd-graded fields: enumerate matchings of individual factor instances. The sign is
// the parity of the permutation bringing each contracted pair adjacent, times -1 for
// every pair whose first factor in the word is psiBar.
void contract_odd(Model m, const std::vector<const Term*>& ops, const KindFn& kind, bool vacuum_only,
                  std::vector<Term>& out) {
  std::vector<int> owner;
  Term base = concat(ops, owner);
  const auto& f = base.factors;
  int n = int(f.size());
  std::vector<int> mate(n, -1);

  // raw aggregation: many matchings coincide before relabelling
  std::unordered_map<std::string, Term> acc;

  std::function<void(int)> rec = [&](int p) {
    while (p < n && mate[p] != -1) ++p;
    if (p == n) {
      std::vector<int> seq;
      int sign = 1;
      std::vector<int> rest;
      Term t;
      t.hbar = base.hbar;
      t.couplings = base.couplings;
      t.vertices = base.vertices;
      t.kernels = base.kernels;
      for (int i = 0; i < n; ++i) {
        if (mate[i] == -2) {
          rest.push_back(i);
        } else if (mate[i] > i) {
          seq.push_back(i);
          seq.push_back(mate[i]);
          if (f[i].species == Species::psiBar) sign = -sign;
          t.kernels.push_back({kind(owner[i], owner[mate[i]], f[i].species, f[mate[i]].species), f[i].species,
                               f[mate[i]].species,
                               f[i].vertex, f[mate[i]].vertex, 1, f[i].slot, f[mate[i]].slot});
          t.hbar += 1;
        }
      }
      seq.insert(seq.end(), rest.begin(), rest.end());
      for (size_t i = 0; i < seq.size(); ++i)
        for (size_t j = i + 1; j < seq.size(); ++j)
          if (seq[i] > seq[j]) sign = -sign;
      for (int i : rest) t.factors.push_back(f[i]);
      t.coeff = sign > 0 ? base.coeff : -base.coeff;
      std::ostringstream key;
      for (auto& x : t.factors) key << int(x.species) << '@' << x.vertex << '.' << x.slot << ',';
      key << '|';
      std::vector<Kernel> ks(t.kernels.begin() + base.kernels.size(), t.kernels.end());
      std::sort(ks.begin(), ks.end(), kernel_less);
      for (auto& k : ks) key << int(k.a) << ':' << k.from << '.' << k.from_slot << '>' << k.to << '.' << k.to_slot << ',';
      auto it = acc.find(key.str());
      if (it == acc.end())
        acc.emplace(key.str(), std::move(t));
      else
        it->second.coeff = it->second.coeff + t.coeff;
      return;
    }
    if (!vacuum_only) {
      mate[p] = -2;
      rec(p + 1);
      mate[p] = -1;
    }
    for (int q = p + 1; q < n; ++q) {
      if (mate[q] != -1 || owner[q] == owner[p]) continue;
      if (!channel_allowed(m, f[p].species, f[q].species)) continue;
      mate[p] = q;
      mate[q] = p;
      rec(p + 1);
      mate[p] = mate[q] = -1;
    }
  };
  rec(0);
  // deterministic order regardless of hash layout
  std::vector<std::pair<std::string, Term>> v(acc.begin(), acc.end());
  std::sort(v.begin(), v.end(), [](auto& a, auto& b) { return a.first < b.first; });
  for (auto& [k, t] : v) out.push_back(std::move(t));
}

void contract(Model m, const std::vector<const Term*>& sel, const KindFn& kind, bool vacuum_only,
              std::vector<Term>& raw) {
  if (m == Model::Dirac)
    contract_odd(m, sel, kind, vacuum_only, raw);
  else
    contract_even(m, sel, kind, vacuum_only, raw);
}

// every choice of one term per operand; visit(sel) for each
void for_each_selection(const std::vector<const Functional*>& ops,
                        const std::function<void(const std::vector<const Term*>&)>& visit) {
  for (auto* o : ops)
    if (o->terms.empty()) return;
  std::vector<size_t> idx(ops.size(), 0);
  std::vector<const Term*> sel(ops.size());
  while (true) {
    for (size_t i = 0; i < ops.size(); ++i) sel[i] = &ops[i]->terms[idx[i]];
    visit(sel);
    size_t i = 0;
    while (i < ops.size() && ++idx[i] == ops[i]->terms.size()) idx[i++] = 0;
    if (i == ops.size()) break;
  }
}

Functional nary(const std::vector<Functional>& ops, const Assignment& asg, bool vacuum_only) {
  if (ops.empty()) throw Error(ErrorCode::EmptyOperandList, "product needs at least one operand");
  std::vector<const Functional*> ps;
  for (auto& o : ops) ps.push_back(&o);
  check_same_model(ps);
  Model m = ops.front().model;
  check_assignment(m, asg);
  KindFn kind = [&](int, int, Species a, Species b) { return asg.at({a, b}); };
  std::vector<Term> raw;
  for_each_selection(ps, [&](const std::vector<const Term*>& sel) { contract(m, sel, kind, vacuum_only, raw); });
  return finalize(m, std::move(raw));
}

Coeff i_power(int n, bool conj) {
  static const Coeff cyc[4] = {Coeff(1), Coeff(0, 1), Coeff(-1), Coeff(0, -1)};
  int r = ((n % 4) + 4) % 4;
  if (conj) r = (4 - r) % 4;
  return cyc[r];
}

}  // namespace

// ---------------------------------------------------------------- constructors

Functional make_local_monomial(Model m, const std::vector<Species>& word, const std::string& smearing, Coeff c,
                               std::map<std::string, int> couplings) {
  for (Species s : word)
    if (model_of(s) != m)
      throw Error(ErrorCode::UnknownSpecies,
                  std::string(to_string(s)) + " does not belong to model " + to_string(m));
  Term t;
  t.coeff = std::move(c);
  t.couplings = std::move(couplings);
  t.vertices = {smearing};
  for (size_t i = 0; i < word.size(); ++i) t.factors.push_back({word[i], 0, m == Model::Dirac ? int(i) : 0});
  return finalize(m, {t});
}

Functional make_generator(Model m, Species s, const std::string& smearing, int power) {
  if (model_of(s) != m)
    throw Error(ErrorCode::UnknownSpecies, std::string(to_string(s)) + " does not belong to model " + to_string(m));
  if (power < 1) throw Error(ErrorCode::InvalidArgument, "generator power must be >= 1");
  return make_local_monomial(m, std::vector<Species>(power, s), smearing);
}

Functional make_unit(Model m, const std::string& smearing) {
  Term t;
  if (!smearing.empty()) t.vertices = {smearing};
  Functional F;
  F.model = m;
  F.terms.push_back(t);
  return F;
}

Functional two_scalar_interaction(const std::string& h) {
  using S = Species;
  auto V = make_local_monomial(Model::TwoScalar, {S::phi1, S::phi1, S::phi1, S::phi1}, h, Rational(1, 24),
                               {{"lambda1", 1}});
  V = add(V, make_local_monomial(Model::TwoScalar, {S::phi2, S::phi2, S::phi2, S::phi2}, h, Rational(1, 24),
                                 {{"lambda2", 1}}));
  V = add(V, make_local_monomial(Model::TwoScalar, {S::phi1, S::phi1, S::phi2, S::phi2}, h, Rational(1, 4),
                                 {{"lambda3", 1}}));
  return V;
}

Functional msr_interaction(const std::string& h) {
  using S = Species;
  auto V = make_local_monomial(Model::MSR, {S::phi, S::phi, S::phiTilde}, h, Rational(1, 2), {{"lambda", 1}});
  return add(V, make_local_monomial(Model::MSR, {S::phiTilde, S::phiTilde}, h, Rational(-1), {{"D", 1}}));
}

Functional thirring_interaction(const std::string& h) {
  using S = Species;
  return make_local_monomial(Model::Dirac, {S::psiBar, S::psi, S::psiBar, S::psi}, h, Rational(1, 2),
                             {{"lambda", 1}});
}

// ---------------------------------------------------------------- algebra

Functional canonicalize(const Functional& F) {
  auto raw = F.terms;
  return finalize(F.model, std::move(raw));
}

Functional add(const Functional& F, const Functional& G) {
  check_same_model({&F, &G});
  auto raw = F.terms;
  raw.insert(raw.end(), G.terms.begin(), G.terms.end());
  return finalize(F.model, std::move(raw));
}

Functional scale(const Functional& F, const Coeff& c, int hbar_shift) {
  auto raw = F.terms;
  for (auto& t : raw) {
    t.coeff = t.coeff * c;
    t.hbar += hbar_shift;
  }
  return finalize(F.model, std::move(raw));
}

Functional pointwise_product(const Functional& F, const Functional& G) {
  check_same_model({&F, &G});
  std::vector<Term> raw;
  std::vector<int> owner;
  for (auto& a : F.terms)
    for (auto& b : G.terms) raw.push_back(concat({&a, &b}, owner));
  return finalize(F.model, std::move(raw));
}

Functional star_product(const Functional& F, const Functional& G, const Assignment& a, bool vacuum_only) {
  return nary({F, G}, a, vacuum_only);
}

Functional star_product(const Functional& F, const Functional& G) {
  return star_product(F, G, uniform_assignment(F.model, Kind::TwoPoint));
}

Functional ordered_product(const std::vector<Functional>& ops, Kind kind, bool vacuum_only) {
  if (ops.empty()) throw Error(ErrorCode::EmptyOperandList, "product needs at least one operand");
  return nary(ops, uniform_assignment(ops.front().model, kind), vacuum_only);
}

Functional time_ordered_product(const std::vector<Functional>& ops, bool vacuum_only) {
  return ordered_product(ops, Kind::Feynman, vacuum_only);
}

Functional anti_time_ordered_product(const std::vector<Functional>& ops, bool vacuum_only) {
  return ordered_product(ops, Kind::AntiFeynman, vacuum_only);
}

Functional truncate(const Functional& F, int order, int per_symbol_cap) {
  Functional out{F.model, {}};
  for (auto& t : F.terms) {
    if (t.coupling_degree() > order) continue;
    if (per_symbol_cap >= 0 &&
        std::any_of(t.couplings.begin(), t.couplings.end(), [&](auto& c) { return c.second > per_symbol_cap; }))
      continue;
    out.terms.push_back(t);
  }
  return out;
}

Functional vacuum_expectation(const Functional& F) {
  Functional out{F.model, {}};
  for (auto& t : F.terms)
    if (t.factors.empty()) out.terms.push_back(t);
  return out;
}

namespace {

void check_perturbative(const Functional& V) {
  for (auto& t : V.terms)
    if (t.coupling_degree() <= 0)
      throw Error(ErrorCode::NonPerturbativeVertex, "interaction term without coupling power");
}

// (±i)^n / n!; the 1/hbar^n is applied separately
Coeff exp_weight_coeff(int n, bool conj) {
  Rational fact = 1;
  for (int i = 2; i <= n; ++i) fact *= i;
  return i_power(n, conj) * Coeff(Rational(1) / fact);
}

Functional exp_weight(const Functional& X, int n, bool conj) { return scale(X, exp_weight_coeff(n, conj), -n); }

}  // namespace

Functional s_matrix_truncated(const Functional& V, int order, bool inverse) {
  if (order < 0) throw Error(ErrorCode::InvalidArgument, "order must be >= 0");
  check_perturbative(V);
  Functional S = make_unit(V.model);
  Kind kind = inverse ? Kind::AntiFeynman : Kind::Feynman;
  for (int n = 1; n <= order; ++n) {
    auto Tn = truncate(ordered_product(std::vector<Functional>(n, V), kind), order);
    S = add(S, exp_weight(Tn, n, inverse));
  }
  return truncate(S, order);
}

namespace {

// Vacuum part of S^-1(V) *_H [S(V) ._T F] in one pass: operands are k copies of V
// (anti-time-ordered among themselves), n copies of V and F (time-ordered among
// themselves), H between the two groups; only complete matchings survive.
Functional bogoliubov_vacuum(const Functional& V, const Functional& F, int order) {
  Model m = V.model;
  std::vector<Term> raw;
  for (int k = 0; k <= order; ++k)
    for (int n = 0; k + n <= order; ++n) {
      std::vector<const Functional*> ops(k + n, &V);
      ops.push_back(&F);
      KindFn kind = [k](int i, int j, Species, Species) {
        if (i < k && j < k) return Kind::AntiFeynman;
        if (i >= k && j >= k) return Kind::Feynman;
        return Kind::TwoPoint;
      };
      Coeff w = exp_weight_coeff(k, true) * exp_weight_coeff(n, false);
      for_each_selection(ops, [&](const std::vector<const Term*>& sel) {
        int deg = 0;
        for (auto* t : sel) deg += t->coupling_degree();
        if (deg > order) return;
        size_t first = raw.size();
        contract(m, sel, kind, true, raw);
        for (size_t r = first; r < raw.size(); ++r) {
          raw[r].coeff = raw[r].coeff * w;
          raw[r].hbar -= k + n;
        }
      });
    }
  return finalize(m, std::move(raw));
}

}  // namespace

Functional bogoliubov_truncated(const Functional& V, const Functional& F, int order, bool vacuum_only) {
  if (order < 0) throw Error(ErrorCode::InvalidArgument, "order must be >= 0");
  check_perturbative(V);
  check_same_model({&V, &F});
  if (vacuum_only) return bogoliubov_vacuum(V, F, order);
  Functional inner = F;
  for (int n = 1; n <= order; ++n) {
    std::vector<Functional> ops(n, V);
    ops.push_back(F);
    inner = add(inner, exp_weight(truncate(time_ordered_product(ops), order), n, false));
  }
  auto Sinv = s_matrix_truncated(V, order, true);
  auto asg = uniform_assignment(V.model, Kind::TwoPoint);
  Functional out{V.model, {}};
  // split by coupling degree so only jointly admissible pairs are multiplied
  for (auto& a : Sinv.terms)
    for (auto& b : inner.terms) {
      if (a.coupling_degree() + b.coupling_degree() > order) continue;
      auto p = star_product(Functional{V.model, {a}}, Functional{V.model, {b}}, asg, vacuum_only);
      out.terms.insert(out.terms.end(), p.terms.begin(), p.terms.end());
    }
  return canonicalize(out);
}

std::string canonical_key(const Term& t) { return key_of(t); }

bool equal(const Functional& F, const Functional& G) {
  if (F.model != G.model) return false;
  auto a = canonicalize(F), b = canonicalize(G);
  if (a.terms.size() != b.terms.size()) return false;
  for (size_t i = 0; i < a.terms.size(); ++i)
    if (key_of(a.terms[i]) != key_of(b.terms[i]) || !(a.terms[i].coeff == b.terms[i].coeff)) return false;
  return true;
}

// ---------------------------------------------------------------- JSON

nlohmann::json to_json(const Functional& F) {
  using nlohmann::json;
  json terms = json::array();
  for (auto& t : F.terms) {
    json jt;
    jt["coeff"] = format_coeff(t.coeff.re);
    if (t.coeff.im != 0) jt["coeff_im"] = format_coeff(t.coeff.im);
    jt["hbar"] = t.hbar;
    jt["couplings"] = json::object();
    for (auto& [s, p] : t.couplings)
      if (p) jt["couplings"][s] = p;
    jt["vertices"] = t.vertices;
    jt["factors"] = json::array();
    for (auto& f : t.factors) {
      json jf = {{"species", to_string(f.species)}, {"vertex", f.vertex}};
      if (F.model == Model::Dirac) jf["slot"] = f.slot;
      jt["factors"].push_back(jf);
    }
    jt["kernels"] = json::array();
    for (auto& k : t.kernels) {
      json jk = {{"kind", to_string(k.kind)},
                 {"channel", {to_string(k.a), to_string(k.b)}},
                 {"endpoints", {k.from, k.to}},
                 {"power", k.power}};
      if (F.model == Model::Dirac) jk["slots"] = {k.from_slot, k.to_slot};
      jt["kernels"].push_back(jk);
    }
    terms.push_back(jt);
  }
  return json{{"model", to_string(F.model)}, {"terms", terms}};
}

Functional functional_from_json(const nlohmann::json& j) {
  Functional F;
  F.model = model_from_string(j.at("model").get<std::string>());
  for (auto& jt : j.at("terms")) {
    Term t;
    Rational re(jt.at("coeff").get<std::string>()), im = 0;
    if (jt.contains("coeff_im")) im = Rational(jt["coeff_im"].get<std::string>());
    t.coeff = Coeff(re, im);
    t.hbar = jt.at("hbar").get<int>();
    for (auto& [s, p] : jt.at("couplings").items()) t.couplings[s] = p.get<int>();
    t.vertices = jt.at("vertices").get<std::vector<std::string>>();
    for (auto& f : jt.at("factors"))
      t.factors.push_back({species_from_string(f.at("species").get<std::string>()), f.at("vertex").get<int>(),
                           f.value("slot", 0)});
    for (auto& k : jt.at("kernels")) {
      auto ch = k.at("channel");
      auto ep = k.at("endpoints");
      Kernel kk{kind_from_string(k.at("kind").get<std::string>()),
                species_from_string(ch[0].get<std::string>()),
                species_from_string(ch[1].get<std::string>()),
                ep[0].get<int>(),
                ep[1].get<int>(),
                k.at("power").get<int>()};
      if (k.contains("slots")) {
        kk.from_slot = k["slots"][0].get<int>();
        kk.to_slot = k["slots"][1].get<int>();
      }
      t.kernels.push_back(kk);
    }
    F.terms.push_back(std::move(t));
  }
  return canonicalize(F);
}

}  // namespace lfrg
