#include "kae/fingerprint.hpp"

#include <algorithm>

#include "kae/array.hpp"

namespace kae {

namespace {
std::uint64_t mix(std::uint64_t h) {
  // splitmix64 finalizer as the 32-bit-folding identifier hash
  h += 0x9e3779b97f4a7c15ULL;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  return h ^ (h >> 31);
}

std::uint32_t hash_ints(const std::vector<std::uint64_t>& xs) {
  std::uint64_t h = 0x2545f4914f6cdd1dULL;
  for (auto x : xs) h = mix(h ^ x);
  return static_cast<std::uint32_t>(h & 0xffffffffULL);
}
}  // namespace

Fingerprint morgan_fingerprint(const MolecularGraph& g, int radius) {
  auto adj = g.adjacency();
  std::vector<bool> in_ring(g.atoms.size(), false);
  for (const auto& r : g.rings)
    for (int a : r) in_ring[static_cast<size_t>(a)] = true;

  size_t na = g.atoms.size();
  std::vector<std::uint32_t> ids(na);
  for (size_t i = 0; i < na; ++i) {
    const Atom& a = g.atoms[i];
    ids[i] = hash_ints({hash_str(a.element),
                        static_cast<std::uint64_t>(adj[i].size()),
                        static_cast<std::uint64_t>(a.charge + 16),
                        static_cast<std::uint64_t>(a.explicit_h + 1),
                        static_cast<std::uint64_t>(in_ring[i] ? 1 : 0),
                        static_cast<std::uint64_t>(a.aromatic ? 1 : 0)});
  }

  Fingerprint fp;
  auto fold = [&fp](std::uint32_t id) {
    fp.bits.insert(static_cast<int>(id % Fingerprint::kWidth));
  };
  for (auto id : ids) fold(id);

  for (int round = 0; round < radius; ++round) {
    std::vector<std::uint32_t> next(na);
    for (size_t i = 0; i < na; ++i) {
      // sorted (bond invariant, neighbor id) pairs keep the update
      // independent of traversal order
      std::vector<std::pair<std::uint64_t, std::uint64_t>> nbrs;
      for (auto [v, be] : adj[i]) {
        const Bond& b = g.bonds[static_cast<size_t>(be)];
        std::uint64_t bo = b.aromatic ? 4 : static_cast<std::uint64_t>(b.order);
        nbrs.push_back({bo, ids[static_cast<size_t>(v)]});
      }
      std::sort(nbrs.begin(), nbrs.end());
      std::vector<std::uint64_t> feat = {static_cast<std::uint64_t>(round + 1),
                                         ids[i]};
      for (auto [bo, nid] : nbrs) {
        feat.push_back(bo);
        feat.push_back(nid);
      }
      next[i] = hash_ints(feat);
    }
    ids = std::move(next);
    for (auto id : ids) fold(id);
  }
  return fp;
}

double tanimoto(const Fingerprint& a, const Fingerprint& b) {
  if (a.bits.empty() && b.bits.empty()) return 1.0;
  size_t inter = 0;
  for (int x : a.bits)
    if (b.bits.count(x)) ++inter;
  size_t uni = a.bits.size() + b.bits.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace kae
