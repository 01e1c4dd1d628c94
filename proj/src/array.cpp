#include "kae/array.hpp"

#include <cmath>
#include <sstream>

namespace kae {

Array::Array(std::vector<int> s, double fill) : shape(std::move(s)) {
  data.assign(static_cast<size_t>(shape_numel(shape)), fill);
}

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative dimension");
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

double Rng::uniform() {
  // 53 random bits -> [0,1)
  return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
}

double Rng::gaussian() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  while (u1 <= 0.0) u1 = uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

std::int64_t Rng::below(std::int64_t n) {
  if (n <= 0) throw std::invalid_argument("Rng::below: n must be positive");
  // rejection sampling for an unbiased draw
  std::uint64_t un = static_cast<std::uint64_t>(n);
  std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  std::uint64_t v;
  do {
    v = eng_();
  } while (v >= limit);
  return static_cast<std::int64_t>(v % un);
}

void Rng::fill_gaussian(Array& a) {
  for (auto& x : a.data) x = gaussian();
}

Rng Rng::fork(const std::string& label) const {
  std::uint64_t s = hash_combine(seed_, hash_str(label));
  Rng r(s);
  r.seed_ = s;
  return r;
}

std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 12) + (h >> 4);
  return h;
}

std::uint64_t hash_str(const std::string& s) {
  // FNV-1a
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace kae
