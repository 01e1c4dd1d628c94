#pragma once

#include <map>
#include <string>
#include <vector>

#include "kae/array.hpp"

namespace kae {

struct DatasetRecord {
  std::string smiles;
  std::map<std::string, double> props;
};

struct DatasetSplit {
  std::vector<DatasetRecord> train;
  std::vector<DatasetRecord> validation;
  std::vector<DatasetRecord> test;
};

struct SplitRatios {
  double train = 0.90;
  double validation = 0.004;  // test takes the remainder
};

// Delimited text (comma or tab, sniffed from the header), header row with a
// required `smiles` column; requested property columns parsed as reals.
std::vector<DatasetRecord> load_records(
    const std::string& path, const std::vector<std::string>& property_columns);

DatasetSplit split_dataset(std::vector<DatasetRecord> records,
                           const SplitRatios& ratios, std::uint64_t seed);

DatasetSplit load_dataset(const std::string& path,
                          const std::vector<std::string>& property_columns,
                          const SplitRatios& ratios, std::uint64_t seed);

void write_records(const std::string& path,
                   const std::vector<DatasetRecord>& records,
                   const std::vector<std::string>& property_columns);

std::vector<std::string> smiles_of(const std::vector<DatasetRecord>& records);

// small valid molecules (chains, branches, one ring family) for experiments
std::vector<std::string> make_toy_corpus(int n, std::uint64_t seed);

}  // namespace kae
