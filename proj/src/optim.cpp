#include "kae/optim.hpp"

#include <cmath>

namespace kae {

double to_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (auto& p : params_) {
    m_.emplace_back(p.value().shape);
    v_.emplace_back(p.value().shape);
  }
}

void Adam::step() {
  for (auto& p : params_) {
    const Array& g = p.grad();
    if (g.shape != p.value().shape)
      throw std::runtime_error("Adam::step: missing gradient");
    for (double x : g.data)
      if (!std::isfinite(x))
        throw std::runtime_error("Adam::step: non-finite gradient, step rejected");
  }
  ++step_count_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Array& w = params_[i].mutable_value();
    const Array& g = params_[i].grad();
    for (size_t j = 0; j < w.data.size(); ++j) {
      double gj = g.data[j];
      m_[i].data[j] = cfg_.beta1 * m_[i].data[j] + (1.0 - cfg_.beta1) * gj;
      v_[i].data[j] = cfg_.beta2 * v_[i].data[j] + (1.0 - cfg_.beta2) * gj * gj;
      double mhat = m_[i].data[j] / bc1;
      double vhat = v_[i].data[j] / bc2;
      w.data[j] = to_f32(w.data[j] -
                         cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
}

}  // namespace kae
