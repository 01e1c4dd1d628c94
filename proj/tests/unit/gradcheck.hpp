#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include <doctest.h>

#include "kae/tape.hpp"

namespace kae::testing {

// central finite differences against the tape, elementwise over all params
inline void gradcheck(const std::vector<Tensor>& params,
                      const std::function<Tensor()>& build, double h = 1e-5,
                      double tol = 1e-4) {
  Tensor y = build();
  REQUIRE(y.value().size() == 1);
  for (const auto& p : params) const_cast<Tensor&>(p).zero_grad();
  backward(y);
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params)
    analytic.emplace_back(p.grad().data.begin(), p.grad().data.end());

  for (size_t pi = 0; pi < params.size(); ++pi) {
    Array& v = const_cast<Tensor&>(params[pi]).mutable_value();
    for (size_t i = 0; i < v.data.size(); ++i) {
      double keep = v.data[i];
      v.data[i] = keep + h;
      double up = build().value().at(0);
      v.data[i] = keep - h;
      double dn = build().value().at(0);
      v.data[i] = keep;
      double fd = (up - dn) / (2.0 * h);
      double an = analytic[pi][i];
      double denom = std::max({std::abs(fd), std::abs(an), 1e-4});
      INFO("param ", pi, " element ", i, " analytic ", an, " fd ", fd);
      CHECK(std::abs(fd - an) / denom <= tol);
    }
  }
}

}  // namespace kae::testing
