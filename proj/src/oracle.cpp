#include "kae/oracle.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace kae {

double toy_descriptor(const MolecularGraph& g) {
  int carbons = 0, hetero = 0;
  for (const auto& a : g.atoms) {
    if (a.element == "C")
      ++carbons;
    else if (a.element != "H")
      ++hetero;
  }
  return static_cast<double>(carbons) - ring_count_gt6(g) -
         static_cast<double>(hetero) / 2.0;
}

PropertyOracle PropertyOracle::toy() {
  PropertyOracle o;
  o.kind_ = Kind::ToyDescriptor;
  return o;
}

PropertyOracle PropertyOracle::dataset(std::map<std::string, double> values) {
  PropertyOracle o;
  o.kind_ = Kind::DatasetColumn;
  o.table_ = std::move(values);
  return o;
}

PropertyOracle PropertyOracle::external(std::string command) {
  PropertyOracle o;
  o.kind_ = Kind::ExternalCommand;
  o.command_ = std::move(command);
  return o;
}

double PropertyOracle::value(const std::string& smiles) const {
  if (kind_ == Kind::DatasetColumn) {
    auto it = table_.find(smiles);
    if (it == table_.end())
      throw std::runtime_error("property oracle: no dataset entry for '" +
                               smiles + "'");
    return it->second;
  }
  if (kind_ == Kind::ToyDescriptor) {
    return toy_descriptor(parse_smiles(smiles));
  }
  // external command, line protocol
  std::string in_path = std::string(std::getenv("TMPDIR") ? std::getenv("TMPDIR")
                                                          : "/tmp") +
                        "/kae_oracle_in.txt";
  std::string out_path = in_path + ".out";
  {
    std::ofstream f(in_path);
    f << smiles << "\n";
  }
  std::string cmd = command_ + " < " + in_path + " > " + out_path;
  if (std::system(cmd.c_str()) != 0)
    throw std::runtime_error("property oracle: external command failed");
  std::ifstream f(out_path);
  double v = 0.0;
  if (!(f >> v))
    throw std::runtime_error("property oracle: no value from external command");
  return v;
}

double PropertyOracle::value(const std::string& smiles,
                             const MolecularGraph& g) const {
  if (kind_ == Kind::ToyDescriptor) return toy_descriptor(g);
  return value(smiles);
}

}  // namespace kae
