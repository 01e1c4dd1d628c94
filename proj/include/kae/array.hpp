#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace kae {

// Dense row-major array of doubles. Parameters are kept float32-representable
// (see Adam::step) so checkpoints round-trip bit-exactly.
struct Array {
  std::vector<int> shape;
  std::vector<double> data;

  Array() = default;
  explicit Array(std::vector<int> s, double fill = 0.0);

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }
  bool same_shape(const Array& o) const { return shape == o.shape; }

  double& at(std::int64_t i) { return data[static_cast<size_t>(i)]; }
  double at(std::int64_t i) const { return data[static_cast<size_t>(i)]; }
};

std::int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Deterministic RNG with explicit uniform/gaussian transforms so streams are
// identical across standard-library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed), seed_(seed) {}

  std::uint64_t next_u64() { return eng_(); }
  // uniform in [0,1)
  double uniform();
  // standard normal via Box-Muller
  double gaussian();
  // integer in [0, n)
  std::int64_t below(std::int64_t n);

  void fill_gaussian(Array& a);
  // derive an independent stream from a label (order-insensitive wrt other streams)
  Rng fork(const std::string& label) const;

  std::uint64_t seed() const { return seed_; }

 private:
  Rng(std::uint64_t seed, std::mt19937_64 eng) : eng_(eng), seed_(seed) {}
  std::mt19937_64 eng_;
  std::uint64_t seed_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v);
std::uint64_t hash_str(const std::string& s);

}  // namespace kae
