#pragma once

#include <map>
#include <optional>
#include <string>

#include "kae/smiles.hpp"

namespace kae {

// Deterministic molecule -> value map. Three backends:
//  - dataset-column: exact lookup of values carried by the dataset
//  - toy-descriptor: carbon count - rings(>6) - heteroatoms/2, self-contained
//  - external-command: one SMILES per input line, one decimal per output line
class PropertyOracle {
 public:
  enum class Kind { DatasetColumn, ToyDescriptor, ExternalCommand };

  static PropertyOracle toy();
  static PropertyOracle dataset(std::map<std::string, double> values);
  static PropertyOracle external(std::string command);

  Kind kind() const { return kind_; }
  double value(const std::string& smiles) const;
  double value(const std::string& smiles, const MolecularGraph& g) const;

 private:
  Kind kind_ = Kind::ToyDescriptor;
  std::map<std::string, double> table_;
  std::string command_;
};

double toy_descriptor(const MolecularGraph& g);

}  // namespace kae
