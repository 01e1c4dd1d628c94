#pragma once

#include <set>

#include "kae/smiles.hpp"

namespace kae {

struct Fingerprint {
  static constexpr int kWidth = 2048;
  std::set<int> bits;
};

// Circular (ECFP-style) fingerprint: iterative neighborhood hashing of atom
// invariants (element, degree, charge, H count, ring membership, aromaticity)
// folded into kWidth bits.
Fingerprint morgan_fingerprint(const MolecularGraph& g, int radius = 2);

// |a ∩ b| / |a ∪ b|; 1.0 when both are empty.
double tanimoto(const Fingerprint& a, const Fingerprint& b);

}  // namespace kae
