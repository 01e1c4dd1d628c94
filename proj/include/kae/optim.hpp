#pragma once

#include "kae/tape.hpp"

namespace kae {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive-moment optimizer. Updated parameters are rounded to float32 so the
// in-memory model and its float32 checkpoint agree bit-exactly.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Tensor> params, AdamConfig cfg);

  // Applies one update from the gradients currently stored on the parameters.
  // Throws if any gradient is non-finite; parameters are left untouched then.
  void step();

  std::int64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return cfg_; }
  std::vector<Array>& moments1() { return m_; }
  std::vector<Array>& moments2() { return v_; }
  void set_step_count(std::int64_t t) { step_count_ = t; }

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  std::vector<Array> m_, v_;
  std::int64_t step_count_ = 0;
};

double to_f32(double x);

}  // namespace kae
