#include "kae/smiles.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>

namespace kae {

namespace {

[[noreturn]] void fail(const std::string& msg, int pos) {
  std::ostringstream os;
  os << msg << " at position " << pos;
  throw std::invalid_argument(os.str());
}

bool is_organic_symbol(const std::string& s, size_t i, std::string* elem,
                       size_t* len) {
  static const char* two[] = {"Cl", "Br"};
  for (const char* t : two) {
    if (s.compare(i, 2, t) == 0) {
      *elem = t;
      *len = 2;
      return true;
    }
  }
  static const char one[] = {'B', 'C', 'N', 'O', 'P', 'S', 'F', 'I'};
  for (char c : one) {
    if (s[i] == c) {
      *elem = std::string(1, c);
      *len = 1;
      return true;
    }
  }
  return false;
}

bool is_aromatic_symbol(char c) {
  return c == 'b' || c == 'c' || c == 'n' || c == 'o' || c == 'p' || c == 's';
}

struct RingOpen {
  int atom = -1;
  int bond_order = 0;  // 0 = unspecified
  bool aromatic_bond = false;
  int pos = -1;
};

struct Parser {
  const std::string& s;
  MolecularGraph g;
  int prev = -1;
  std::vector<int> branch_stack;
  int pending_order = 0;  // 0 none, else 1/2/3
  bool pending_aromatic = false;
  int pending_pos = -1;
  std::map<int, RingOpen> ring_open;

  explicit Parser(const std::string& str) : s(str) {}

  void add_bond(int a, int b, int order, bool arom, int pos) {
    if (a == b) fail("self-bond", pos);
    for (const auto& bd : g.bonds)
      if ((bd.a == a && bd.b == b) || (bd.a == b && bd.b == a))
        fail("duplicate bond", pos);
    Bond bd;
    bd.a = a;
    bd.b = b;
    bd.order = order;
    bd.aromatic = arom;
    g.bonds.push_back(bd);
  }

  void attach(int atom_idx, int pos) {
    if (prev < 0 && (pending_order || pending_aromatic))
      fail("dangling bond symbol", pending_pos);
    if (prev >= 0) {
      int order = pending_order ? pending_order : 1;
      bool arom = pending_aromatic;
      if (!pending_order && !pending_aromatic &&
          g.atoms[static_cast<size_t>(prev)].aromatic &&
          g.atoms[static_cast<size_t>(atom_idx)].aromatic) {
        arom = true;
      }
      add_bond(prev, atom_idx, arom ? 1 : order, arom, pos);
    }
    prev = atom_idx;
    pending_order = 0;
    pending_aromatic = false;
  }

  void ring_digit(int digit, int pos) {
    if (prev < 0) fail("ring closure before any atom", pos);
    auto it = ring_open.find(digit);
    if (it == ring_open.end()) {
      RingOpen ro;
      ro.atom = prev;
      ro.bond_order = pending_order;
      ro.aromatic_bond = pending_aromatic;
      ro.pos = pos;
      ring_open[digit] = ro;
    } else {
      RingOpen ro = it->second;
      ring_open.erase(it);
      if (ro.atom == prev) fail("ring bond closes on the same atom", pos);
      int order = pending_order ? pending_order : ro.bond_order;
      bool arom = pending_aromatic || ro.aromatic_bond;
      if (!order && !arom && g.atoms[static_cast<size_t>(ro.atom)].aromatic &&
          g.atoms[static_cast<size_t>(prev)].aromatic)
        arom = true;
      add_bond(ro.atom, prev, arom ? 1 : (order ? order : 1), arom, pos);
    }
    pending_order = 0;
    pending_aromatic = false;
  }

  int parse_bracket(size_t i, size_t* end) {
    size_t j = i + 1;
    Atom a;
    // isotope
    while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) {
      a.isotope = a.isotope * 10 + (s[j] - '0');
      ++j;
    }
    if (j >= s.size()) fail("unterminated bracket atom", static_cast<int>(i));
    // element symbol (or aromatic lowercase)
    if (std::isupper(static_cast<unsigned char>(s[j]))) {
      a.element = std::string(1, s[j]);
      ++j;
      if (j < s.size() && std::islower(static_cast<unsigned char>(s[j])) &&
          s[j] != 'h') {
        // two-letter element only when the pair is a known symbol
        static const std::set<std::string> known = {
            "Cl", "Br", "Si", "Se", "As", "Na", "Li", "Mg", "Ca", "Fe",
            "Zn", "Cu", "Mn", "Al", "Sn", "Te"};
        std::string two = a.element + s[j];
        if (known.count(two)) {
          a.element = two;
          ++j;
        }
      }
    } else if (is_aromatic_symbol(s[j]) || s[j] == 'e') {  // se handled below
      if (s.compare(j, 2, "se") == 0) {
        a.element = "Se";
        a.aromatic = true;
        j += 2;
      } else if (is_aromatic_symbol(s[j])) {
        a.element = std::string(1, static_cast<char>(std::toupper(s[j])));
        a.aromatic = true;
        ++j;
      } else {
        fail("bad bracket-atom symbol", static_cast<int>(j));
      }
    } else {
      fail("bad bracket-atom symbol", static_cast<int>(j));
    }
    a.explicit_h = 0;
    // chirality markers (ignored beyond syntax)
    while (j < s.size() && s[j] == '@') ++j;
    if (j < s.size() && (s.compare(j, 2, "TH") == 0 || s.compare(j, 2, "AL") == 0))
      j += 2;
    // hydrogen count
    if (j < s.size() && s[j] == 'H') {
      ++j;
      if (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) {
        a.explicit_h = s[j] - '0';
        ++j;
      } else {
        a.explicit_h = 1;
      }
    }
    // charge
    if (j < s.size() && (s[j] == '+' || s[j] == '-')) {
      int sign = s[j] == '+' ? 1 : -1;
      char sym = s[j];
      int mag = 0;
      while (j < s.size() && s[j] == sym) {
        ++mag;
        ++j;
      }
      if (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) {
        if (mag != 1) fail("bad charge syntax", static_cast<int>(j));
        mag = s[j] - '0';
        ++j;
      }
      a.charge = sign * mag;
    }
    // atom class
    if (j < s.size() && s[j] == ':') {
      ++j;
      if (j >= s.size() || !std::isdigit(static_cast<unsigned char>(s[j])))
        fail("bad atom class", static_cast<int>(j));
      while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
    }
    if (j >= s.size() || s[j] != ']')
      fail("unterminated bracket atom", static_cast<int>(i));
    *end = j + 1;
    g.atoms.push_back(a);
    return static_cast<int>(g.atoms.size()) - 1;
  }

  void run() {
    size_t i = 0;
    while (i < s.size()) {
      char c = s[i];
      int pos = static_cast<int>(i);
      if (c == '(') {
        if (prev < 0) fail("branch before any atom", pos);
        if (pending_order || pending_aromatic)
          fail("dangling bond symbol before branch", pos);
        branch_stack.push_back(prev);
        ++i;
      } else if (c == ')') {
        if (branch_stack.empty()) fail("unbalanced parenthesis", pos);
        if (pending_order || pending_aromatic)
          fail("dangling bond symbol before branch close", pos);
        prev = branch_stack.back();
        branch_stack.pop_back();
        ++i;
      } else if (c == '-' || c == '=' || c == '#' || c == ':' || c == '/' ||
                 c == '\\') {
        if (pending_order || pending_aromatic)
          fail("duplicate bond symbol", pos);
        if (c == ':')
          pending_aromatic = true;
        else if (c == '=')
          pending_order = 2;
        else if (c == '#')
          pending_order = 3;
        else
          pending_order = 1;  // '-' and the stereo slashes
        pending_pos = pos;
        ++i;
      } else if (c == '.') {
        if (pending_order || pending_aromatic)
          fail("dangling bond symbol before dot", pos);
        prev = -1;
        ++i;
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        ring_digit(c - '0', pos);
        ++i;
      } else if (c == '%') {
        if (i + 2 >= s.size() ||
            !std::isdigit(static_cast<unsigned char>(s[i + 1])) ||
            !std::isdigit(static_cast<unsigned char>(s[i + 2])))
          fail("bad %nn ring closure", pos);
        ring_digit((s[i + 1] - '0') * 10 + (s[i + 2] - '0'), pos);
        i += 3;
      } else if (c == '[') {
        size_t end = 0;
        int idx = parse_bracket(i, &end);
        attach(idx, pos);
        i = end;
      } else if (std::isupper(static_cast<unsigned char>(c))) {
        std::string elem;
        size_t len = 0;
        if (!is_organic_symbol(s, i, &elem, &len))
          fail(std::string("unknown atom symbol '") + c + "'", pos);
        Atom a;
        a.element = elem;
        g.atoms.push_back(a);
        attach(static_cast<int>(g.atoms.size()) - 1, pos);
        i += len;
      } else if (is_aromatic_symbol(c)) {
        Atom a;
        a.element = std::string(1, static_cast<char>(std::toupper(c)));
        a.aromatic = true;
        g.atoms.push_back(a);
        attach(static_cast<int>(g.atoms.size()) - 1, pos);
        ++i;
      } else {
        fail(std::string("unexpected character '") + c + "'", pos);
      }
    }
    if (!branch_stack.empty())
      fail("unbalanced parenthesis", static_cast<int>(s.size()));
    if (pending_order || pending_aromatic)
      fail("dangling bond symbol", pending_pos);
    if (!ring_open.empty()) {
      std::ostringstream os;
      os << "ring bond " << ring_open.begin()->first << " unclosed";
      fail(os.str(), ring_open.begin()->second.pos);
    }
    if (g.atoms.empty()) fail("no atoms", 0);
  }
};

// ---- ring perception: minimum cycle basis over GF(2) ----

using EdgeSet = std::vector<std::uint64_t>;

EdgeSet make_edgeset(size_t nbits) { return EdgeSet((nbits + 63) / 64, 0); }
void set_bit(EdgeSet& e, int i) {
  e[static_cast<size_t>(i) / 64] |= 1ULL << (i % 64);
}
bool get_bit(const EdgeSet& e, int i) {
  return (e[static_cast<size_t>(i) / 64] >> (i % 64)) & 1ULL;
}
void xor_into(EdgeSet& a, const EdgeSet& b) {
  for (size_t i = 0; i < a.size(); ++i) a[i] ^= b[i];
}
bool is_zero(const EdgeSet& e) {
  for (auto w : e)
    if (w) return false;
  return true;
}
int lowest_bit(const EdgeSet& e) {
  for (size_t i = 0; i < e.size(); ++i)
    if (e[i]) return static_cast<int>(i * 64 + __builtin_ctzll(e[i]));
  return -1;
}

struct Candidate {
  int length = 0;
  std::vector<int> atoms;
  EdgeSet edges;
};

std::vector<std::vector<int>> min_cycle_basis(const MolecularGraph& g) {
  int na = static_cast<int>(g.atoms.size());
  int nb = static_cast<int>(g.bonds.size());
  auto adj = g.adjacency();

  // cyclomatic number = nb - na + components
  std::vector<int> comp(static_cast<size_t>(na), -1);
  int ncomp = 0;
  for (int i = 0; i < na; ++i) {
    if (comp[static_cast<size_t>(i)] >= 0) continue;
    std::queue<int> q;
    q.push(i);
    comp[static_cast<size_t>(i)] = ncomp;
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (auto [v, be] : adj[static_cast<size_t>(u)])
        if (comp[static_cast<size_t>(v)] < 0) {
          comp[static_cast<size_t>(v)] = ncomp;
          q.push(v);
        }
    }
    ++ncomp;
  }
  int rank_needed = nb - na + ncomp;
  if (rank_needed <= 0) return {};

  // candidate per bond: shortest cycle through that bond
  std::vector<Candidate> cands;
  for (int e = 0; e < nb; ++e) {
    int src = g.bonds[static_cast<size_t>(e)].a;
    int dst = g.bonds[static_cast<size_t>(e)].b;
    // BFS from src to dst avoiding edge e
    std::vector<int> par(static_cast<size_t>(na), -2);
    std::vector<int> par_edge(static_cast<size_t>(na), -1);
    std::queue<int> q;
    q.push(src);
    par[static_cast<size_t>(src)] = -1;
    while (!q.empty() && par[static_cast<size_t>(dst)] == -2) {
      int u = q.front();
      q.pop();
      for (auto [v, be] : adj[static_cast<size_t>(u)]) {
        if (be == e) continue;
        if (par[static_cast<size_t>(v)] == -2) {
          par[static_cast<size_t>(v)] = u;
          par_edge[static_cast<size_t>(v)] = be;
          q.push(v);
        }
      }
    }
    if (par[static_cast<size_t>(dst)] == -2) continue;  // bridge
    Candidate c;
    c.edges = make_edgeset(static_cast<size_t>(nb));
    set_bit(c.edges, e);
    int cur = dst;
    while (cur != src) {
      c.atoms.push_back(cur);
      set_bit(c.edges, par_edge[static_cast<size_t>(cur)]);
      cur = par[static_cast<size_t>(cur)];
    }
    c.atoms.push_back(src);
    c.length = static_cast<int>(c.atoms.size());
    cands.push_back(std::move(c));
  }
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Candidate& a, const Candidate& b) {
                     if (a.length != b.length) return a.length < b.length;
                     return a.atoms < b.atoms;
                   });

  // greedy independent selection via GF(2) elimination
  std::vector<EdgeSet> pivots;   // reduced rows
  std::vector<int> pivot_bits;
  std::vector<std::vector<int>> rings;
  for (auto& c : cands) {
    EdgeSet row = c.edges;
    for (size_t i = 0; i < pivots.size(); ++i)
      if (get_bit(row, pivot_bits[i])) xor_into(row, pivots[i]);
    if (is_zero(row)) continue;
    pivots.push_back(row);
    pivot_bits.push_back(lowest_bit(row));
    rings.push_back(c.atoms);
    if (static_cast<int>(rings.size()) == rank_needed) break;
  }
  return rings;
}

}  // namespace

std::vector<std::vector<std::pair<int, int>>> MolecularGraph::adjacency() const {
  std::vector<std::vector<std::pair<int, int>>> adj(atoms.size());
  for (size_t e = 0; e < bonds.size(); ++e) {
    adj[static_cast<size_t>(bonds[e].a)].push_back({bonds[e].b, static_cast<int>(e)});
    adj[static_cast<size_t>(bonds[e].b)].push_back({bonds[e].a, static_cast<int>(e)});
  }
  return adj;
}

MolecularGraph parse_smiles(const std::string& s) {
  Parser p(s);
  p.run();
  for (const auto& b : p.g.bonds) {
    if (b.a < 0 || b.b < 0 || b.a >= static_cast<int>(p.g.atoms.size()) ||
        b.b >= static_cast<int>(p.g.atoms.size()))
      throw std::logic_error("bond endpoint out of range");
  }
  p.g.rings = min_cycle_basis(p.g);
  return std::move(p.g);
}

namespace {
std::vector<int> allowed_valences(const std::string& elem) {
  if (elem == "C") return {4};
  if (elem == "N") return {3, 5};
  if (elem == "O") return {2};
  if (elem == "S") return {2, 4, 6};
  if (elem == "P") return {3, 5};
  if (elem == "B") return {3};
  if (elem == "F" || elem == "Cl" || elem == "Br" || elem == "I") return {1};
  return {};  // unknown elements are not valence-checked
}
}  // namespace

ValenceVerdict check_valence(const MolecularGraph& g) {
  std::vector<double> order_sum(g.atoms.size(), 0.0);
  for (const auto& b : g.bonds) {
    double o = b.aromatic ? 1.5 : static_cast<double>(b.order);
    order_sum[static_cast<size_t>(b.a)] += o;
    order_sum[static_cast<size_t>(b.b)] += o;
  }
  for (size_t i = 0; i < g.atoms.size(); ++i) {
    const Atom& a = g.atoms[i];
    std::vector<int> base = allowed_valences(a.element);
    if (base.empty()) continue;
    // a fully charge-compensated atom (e.g. chloride) may carry zero bonds
    int max_allowed = 0;
    for (int v : base) {
      int adj = v + a.charge;
      if (adj > max_allowed) max_allowed = adj;
    }
    double total = order_sum[i] + (a.explicit_h >= 0 ? a.explicit_h : 0);
    // aromatic sums land on half-integers; round up to the bonded-electron count
    int itotal = static_cast<int>(std::ceil(total - 1e-9));
    if (itotal > max_allowed) {
      ValenceVerdict verdict;
      verdict.ok = false;
      std::ostringstream os;
      os << "atom " << i << " (" << a.element << ") bond order sum " << itotal
         << " exceeds allowed valence " << max_allowed;
      verdict.reason = os.str();
      return verdict;
    }
  }
  return {};
}

bool is_valid(const std::string& s) {
  try {
    MolecularGraph g = parse_smiles(s);
    if (!check_valence(g).ok) return false;
    std::vector<bool> in_ring(g.atoms.size(), false);
    for (const auto& ring : g.rings)
      for (int a : ring) in_ring[static_cast<size_t>(a)] = true;
    for (size_t i = 0; i < g.atoms.size(); ++i)
      if (g.atoms[i].aromatic && !in_ring[i]) return false;
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

int ring_count_gt6(const MolecularGraph& g) {
  int n = 0;
  for (const auto& r : g.rings)
    if (static_cast<int>(r.size()) > 6) ++n;
  return n;
}

}  // namespace kae
