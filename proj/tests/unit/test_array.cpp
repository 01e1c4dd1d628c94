#include <cmath>

#include <doctest.h>

#include "kae/array.hpp"

using namespace kae;

TEST_SUITE("array") {

TEST_CASE("array construction and shape") {
  Array a({2, 3}, 1.5);
  CHECK(a.ndim() == 2);
  CHECK(a.dim(0) == 2);
  CHECK(a.dim(1) == 3);
  CHECK(a.size() == 6);
  for (auto x : a.data) CHECK(x == 1.5);
  CHECK(shape_numel({4, 5, 6}) == 120);
}

TEST_CASE("rng streams are deterministic") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(42), d(43);
  bool differ = false;
  for (int i = 0; i < 10; ++i)
    if (c.next_u64() != d.next_u64()) differ = true;
  CHECK(differ);
}

TEST_CASE("uniform stays in [0,1)") {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("below covers the range without bias artifacts") {
  Rng rng(11);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 20000; ++i) {
    std::int64_t v = rng.below(5);
    REQUIRE(v >= 0);
    REQUIRE(v < 5);
    ++counts[static_cast<size_t>(v)];
  }
  for (int c : counts) CHECK(c > 3500);
}

TEST_CASE("gaussian has roughly unit moments") {
  Rng rng(13);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double g = rng.gaussian();
    sum += g;
    sq += g * g;
  }
  double mean = sum / n;
  double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("fork derives independent reproducible streams") {
  Rng base(99);
  Rng f1 = base.fork("alpha");
  Rng f2 = base.fork("alpha");
  Rng f3 = base.fork("beta");
  for (int i = 0; i < 50; ++i) CHECK(f1.next_u64() == f2.next_u64());
  bool differ = false;
  Rng f4 = base.fork("alpha");
  for (int i = 0; i < 10; ++i)
    if (f3.next_u64() != f4.next_u64()) differ = true;
  CHECK(differ);
  // forking does not perturb the parent stream
  Rng a(99), b(99);
  (void)a.fork("x");
  CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("fill_gaussian matches elementwise draws") {
  Rng a(5), b(5);
  Array arr({3, 4});
  a.fill_gaussian(arr);
  for (auto x : arr.data) CHECK(x == b.gaussian());
}

}  // TEST_SUITE
