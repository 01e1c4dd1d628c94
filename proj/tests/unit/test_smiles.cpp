#include <string>
#include <vector>

#include <doctest.h>

#include "kae/array.hpp"
#include "kae/smiles.hpp"

using namespace kae;

TEST_SUITE("smiles") {

TEST_CASE("curated corpus: valid strings") {
  const std::vector<std::string> valid = {
      "C",
      "CC",
      "CCO",
      "C=C",
      "C#N",
      "N#N",
      "CC(=O)O",
      "C1CC1",
      "C1CCCCC1",
      "c1ccccc1",
      "c1ccncc1",
      "C1=CC=CC=C1",
      "[NH4+]",
      "[O-]C(=O)C",
      "ClCCl",
      "BrCBr",
      "FC(F)F",
      "S=C=S",
      "O=C=O",
      "CN(C)C",
      "CC(C)(C)C",
      "C/C=C/C",
      "CC.OC",
      "C%12CCCCC%12",
      "[13CH4]",
      "[C@@H](C)(C)O",
      "CSC",
      "CP(C)C",
      "OO",
      "OB(O)O",
      "IC",
      "N1CC1",
      "[CH3-]",
      "[Na+].[Cl-]",
      "C=C=C",
      "[nH]1cccc1",
      "[OH3+]",
      "C1CC1C1CC1",
      "N(=O)(=O)C",
      "CCCCCCCCCC",
  };
  for (const auto& s : valid) {
    INFO("expected valid: ", s);
    CHECK(is_valid(s));
  }
}

TEST_CASE("curated corpus: invalid strings") {
  const std::vector<std::string> invalid = {
      "",
      "(",
      "C(",
      "CC)",
      "C(C",
      "C1CC",
      "C1CC2C1",
      "C=",
      "=C",
      "C==C",
      "C--C",
      "C11",
      "CX",
      "C%1C",
      "[C",
      "[]",
      "[Cx]",
      "C(C)(C)(C)(C)C",
      "O(C)(C)C",
      "F=F",
      "C#C#C",
      "cc",
      "CC-",
      "9",
      "abc",
      "[O--]C",
      "C.=C",
      "C(=)C",
      "O=[CH3]",
  };
  for (const auto& s : invalid) {
    INFO("expected invalid: ", s);
    CHECK_FALSE(is_valid(s));
  }
}

TEST_CASE("parse errors carry positions") {
  try {
    parse_smiles("CC(C");
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("position") != std::string::npos);
  }
  CHECK_THROWS_WITH_AS(parse_smiles("C1CC"),
                       doctest::Contains("ring bond 1 unclosed"),
                       std::invalid_argument);
}

TEST_CASE("ring perception finds the minimum cycle basis") {
  MolecularGraph g = parse_smiles("C1CCCCC1");
  REQUIRE(g.rings.size() == 1);
  CHECK(g.rings[0].size() == 6);

  g = parse_smiles("CCC");
  CHECK(g.rings.empty());

  // two separate rings
  g = parse_smiles("C1CC1C1CCC1");
  REQUIRE(g.rings.size() == 2);
  CHECK((g.rings[0].size() == 3 || g.rings[1].size() == 3));
  CHECK((g.rings[0].size() == 4 || g.rings[1].size() == 4));

  // bicyclo[2.2.1]: cyclomatic number 2, both basis rings of size 5
  g = parse_smiles("C1CC2CCC1C2");
  REQUIRE(g.rings.size() == 2);
  CHECK(g.rings[0].size() + g.rings[1].size() < 11);
}

TEST_CASE("ring_count_gt6 counts only large rings") {
  CHECK(ring_count_gt6(parse_smiles("C1CCCCC1")) == 0);
  CHECK(ring_count_gt6(parse_smiles("C1CCCCCC1")) == 1);
  CHECK(ring_count_gt6(parse_smiles("C1CCCCCC1C1CCCCCCC1")) == 2);
  CHECK(ring_count_gt6(parse_smiles("CCCC")) == 0);
}

TEST_CASE("bracket atoms carry isotope, charge and hydrogens") {
  MolecularGraph g = parse_smiles("[13CH3-]");
  REQUIRE(g.atoms.size() == 1);
  CHECK(g.atoms[0].isotope == 13);
  CHECK(g.atoms[0].charge == -1);
  CHECK(g.atoms[0].explicit_h == 3);
  CHECK(g.atoms[0].element == "C");

  g = parse_smiles("[Fe++]");
  CHECK(g.atoms[0].element == "Fe");
  CHECK(g.atoms[0].charge == 2);
}

TEST_CASE("aromatic bonds are marked between adjacent aromatic atoms") {
  MolecularGraph g = parse_smiles("c1ccccc1");
  CHECK(g.bonds.size() == 6);
  for (const auto& b : g.bonds) CHECK(b.aromatic);
}

TEST_CASE("valence checker explains failures") {
  ValenceVerdict v = check_valence(parse_smiles("C(C)(C)(C)(C)C"));
  CHECK_FALSE(v.ok);
  CHECK(v.reason.find("C") != std::string::npos);
  CHECK(check_valence(parse_smiles("CC(C)(C)C")).ok);
}

TEST_CASE("fuzz: is_valid never throws on random bytes") {
  Rng rng(2024);
  const std::string pool =
      "CNOPSFIcnops123456789%()[]+-=#@/\\.BrClH~!{}\t abcXYZ";
  for (int iter = 0; iter < 100000; ++iter) {
    int len = static_cast<int>(rng.below(24));
    std::string s;
    for (int k = 0; k < len; ++k)
      s += pool[static_cast<size_t>(rng.below(static_cast<int>(pool.size())))];
    (void)is_valid(s);  // must not throw or crash
  }
}

}  // TEST_SUITE
