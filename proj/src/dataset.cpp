#include "kae/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "kae/smiles.hpp"

namespace kae {

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, delim)) out.push_back(field);
  if (!line.empty() && line.back() == delim) out.push_back("");
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

std::vector<DatasetRecord> load_records(
    const std::string& path, const std::vector<std::string>& property_columns) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_records: cannot open " + path);
  std::string header;
  if (!std::getline(in, header))
    throw std::runtime_error("load_records: empty file " + path);
  header = strip_cr(header);
  char delim = header.find('\t') != std::string::npos ? '\t' : ',';
  std::vector<std::string> cols = split_line(header, delim);
  auto col_index = [&](const std::string& name) {
    auto it = std::find(cols.begin(), cols.end(), name);
    return it == cols.end() ? -1 : static_cast<int>(it - cols.begin());
  };
  int smiles_col = col_index("smiles");
  if (smiles_col < 0)
    throw std::runtime_error("load_records: missing required column smiles");
  std::vector<int> prop_cols;
  for (const auto& name : property_columns) {
    int idx = col_index(name);
    if (idx < 0)
      throw std::runtime_error("load_records: missing property column " + name);
    prop_cols.push_back(idx);
  }

  std::vector<DatasetRecord> records;
  std::string line;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    std::vector<std::string> fields = split_line(line, delim);
    if (fields.size() != cols.size())
      throw std::runtime_error("load_records: line " + std::to_string(line_no) +
                               ": expected " + std::to_string(cols.size()) +
                               " fields, got " + std::to_string(fields.size()));
    DatasetRecord rec;
    rec.smiles = fields[static_cast<size_t>(smiles_col)];
    for (size_t i = 0; i < property_columns.size(); ++i) {
      const std::string& raw = fields[static_cast<size_t>(prop_cols[i])];
      try {
        size_t used = 0;
        double v = std::stod(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
        rec.props[property_columns[i]] = v;
      } catch (const std::exception&) {
        throw std::runtime_error("load_records: line " +
                                 std::to_string(line_no) + ": bad value \"" +
                                 raw + "\" in column " + property_columns[i]);
      }
    }
    records.push_back(std::move(rec));
  }
  return records;
}

DatasetSplit split_dataset(std::vector<DatasetRecord> records,
                           const SplitRatios& ratios, std::uint64_t seed) {
  if (ratios.train < 0 || ratios.validation < 0 ||
      ratios.train + ratios.validation > 1.0)
    throw std::invalid_argument("split_dataset: invalid ratios");
  Rng rng = Rng(seed).fork("dataset-split");
  // Fisher-Yates with the portable stream
  for (size_t i = records.size(); i > 1; --i)
    std::swap(records[i - 1],
              records[static_cast<size_t>(rng.below(static_cast<std::int64_t>(i)))]);
  size_t n = records.size();
  size_t n_train = static_cast<size_t>(ratios.train * static_cast<double>(n) + 0.5);
  size_t n_val =
      static_cast<size_t>(ratios.validation * static_cast<double>(n) + 0.5);
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);
  DatasetSplit split;
  split.train.assign(records.begin(), records.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.validation.assign(records.begin() + static_cast<std::ptrdiff_t>(n_train),
                          records.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test.assign(records.begin() + static_cast<std::ptrdiff_t>(n_train + n_val),
                    records.end());
  return split;
}

DatasetSplit load_dataset(const std::string& path,
                          const std::vector<std::string>& property_columns,
                          const SplitRatios& ratios, std::uint64_t seed) {
  return split_dataset(load_records(path, property_columns), ratios, seed);
}

void write_records(const std::string& path,
                   const std::vector<DatasetRecord>& records,
                   const std::vector<std::string>& property_columns) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_records: cannot open " + path);
  out << "smiles";
  for (const auto& name : property_columns) out << "," << name;
  out << "\n";
  out.precision(17);
  for (const auto& rec : records) {
    out << rec.smiles;
    for (const auto& name : property_columns) out << "," << rec.props.at(name);
    out << "\n";
  }
}

std::vector<std::string> smiles_of(const std::vector<DatasetRecord>& records) {
  std::vector<std::string> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.smiles);
  return out;
}

std::vector<std::string> make_toy_corpus(int n, std::uint64_t seed) {
  Rng rng = Rng(seed).fork("toy-corpus");
  const char elements[] = {'C', 'C', 'C', 'N', 'O'};  // carbon-weighted
  std::set<std::string> seen;
  std::vector<std::string> out;
  int guard = 0;
  while (static_cast<int>(out.size()) < n) {
    if (++guard > n * 1000)
      throw std::runtime_error("make_toy_corpus: generation stalled");
    std::string s;
    bool ring = rng.uniform() < 0.3;
    if (ring) {
      int k = 3 + static_cast<int>(rng.below(4));  // ring size k+2
      s += "C1";
      for (int i = 0; i < k; ++i)
        s += elements[rng.below(5)];
      s += "C1";
    } else {
      int len = 3 + static_cast<int>(rng.below(6));
      for (int i = 0; i < len; ++i) {
        s += elements[rng.below(5)];
        if (i > 0 && i + 1 < len && rng.uniform() < 0.2) {
          s += '(';
          s += elements[rng.below(5)];
          s += ')';
        }
      }
    }
    if (!is_valid(s)) continue;
    if (!seen.insert(s).second) continue;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace kae
