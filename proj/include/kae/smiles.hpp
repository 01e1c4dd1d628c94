#pragma once

#include <optional>
#include <string>
#include <vector>

namespace kae {

struct Atom {
  std::string element;
  int charge = 0;
  bool aromatic = false;
  int explicit_h = -1;  // -1 when hydrogens are implicit (organic subset)
  int isotope = 0;
};

struct Bond {
  int a = 0;
  int b = 0;
  int order = 1;  // 1,2,3
  bool aromatic = false;
};

struct MolecularGraph {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;
  std::vector<std::vector<int>> rings;  // minimum cycle basis, atom indices

  std::vector<std::vector<std::pair<int, int>>> adjacency() const;  // (nbr, bond idx)
};

struct SmilesError {
  std::string message;
  int position = -1;
};

// Parses the OpenSMILES-style subset common in drug-like strings: organic
// subset atoms, aromatic lowercase, bracket atoms with isotope/charge/H,
// branches, ring closures (incl. %nn), bonds - = # : / \ and dot separators.
// Rings are perceived (minimum cycle basis) before returning.
MolecularGraph parse_smiles(const std::string& s);

struct ValenceVerdict {
  bool ok = true;
  std::string reason;
};
ValenceVerdict check_valence(const MolecularGraph& g);

// parse + valence + every aromatic atom in a ring; total on arbitrary bytes
bool is_valid(const std::string& s);

int ring_count_gt6(const MolecularGraph& g);

}  // namespace kae
