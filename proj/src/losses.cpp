#include "kae/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace kae {

void LossConfig::validate() const {
  if (std::abs(lambda + delta + 1.0) < 1e-12)
    throw std::invalid_argument("LossConfig: lambda + delta + 1 must be nonzero");
  if (two_sigma_sq <= 0.0)
    throw std::invalid_argument("LossConfig: bandwidth must be positive");
  if (gaussian_samples < 1)
    throw std::invalid_argument("LossConfig: gaussian_samples must be >= 1");
}

Tensor cel(const Tensor& logits, const std::vector<int>& labels,
           const Array& pad_mask, bool mean_over_batch) {
  return cross_entropy_masked(logits, labels, pad_mask, mean_over_batch);
}

Tensor wcel(const Tensor& logits_noisy, const Tensor& logits_clean,
            const std::vector<int>& labels, const Array& pad_mask,
            double lambda, double delta, bool mean_over_batch) {
  double denom = lambda + delta + 1.0;
  if (std::abs(denom) < 1e-12)
    throw std::invalid_argument("wcel: lambda + delta + 1 must be nonzero");
  Tensor a = cel(logits_noisy, labels, pad_mask, mean_over_batch);
  Tensor b = cel(logits_clean, labels, pad_mask, mean_over_batch);
  return scale(add(a, scale(b, lambda + delta)), 1.0 / denom);
}

double rbf_kernel(const std::vector<double>& a, const std::vector<double>& b,
                  double two_sigma_sq) {
  if (a.size() != b.size())
    throw std::invalid_argument("rbf_kernel: length mismatch");
  if (a.empty()) throw std::invalid_argument("rbf_kernel: empty vectors");
  double ss = 0.0;
  for (size_t d = 0; d < a.size(); ++d) {
    double diff = a[d] - b[d];
    ss += diff * diff;
  }
  double D = static_cast<double>(a.size());
  return std::exp(-(ss / D) / two_sigma_sq);
}

Tensor s_mmd(const Tensor& latents, const Array& gaussians, double lambda,
             double two_sigma_sq) {
  Tensor self = kernel_self_mean(latents, two_sigma_sq);
  Tensor cross = kernel_cross_mean(latents, gaussians, two_sigma_sq);
  return scale(add(self, scale(cross, -2.0)), lambda);
}

Tensor m_mmd(const Tensor& latents, const Array& gaussians, double lambda,
             double two_sigma_sq) {
  Tensor cross = kernel_cross_mean(latents, gaussians, two_sigma_sq);
  return scale(add_const(scale(cross, -1.0), 1.0), lambda);
}

Tensor kl_loss(const Tensor& mean, const Tensor& sigma) {
  const Array& mv = mean.value();
  const Array& sv = sigma.value();
  if (mv.shape != sv.shape) throw std::invalid_argument("kl_loss: shape mismatch");
  if (mv.ndim() != 2) throw std::invalid_argument("kl_loss: expect [batch, D]");
  for (double s : sv.data)
    if (!(s > 0.0)) throw std::invalid_argument("kl_loss: sigma must be positive");
  int B = mv.dim(0);
  // 0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2) / B
  Tensor var = square(sigma);
  Tensor term = sub(add(square(mean), var), log_t(var));
  Tensor summed = sum_all(add_const(term, -1.0));
  return scale(summed, 0.5 / static_cast<double>(B));
}

LossReport total_loss(const TotalLossInputs& in, const LossConfig& cfg) {
  cfg.validate();
  LossReport r;
  r.cel_noisy = cel(in.logits_noisy, in.labels, in.pad_mask,
                    cfg.cel_mean_over_batch);
  r.cel_clean = cel(in.logits_clean, in.labels, in.pad_mask,
                    cfg.cel_mean_over_batch);
  double denom = cfg.lambda + cfg.delta + 1.0;
  r.wcel = scale(add(r.cel_noisy, scale(r.cel_clean, cfg.lambda + cfg.delta)),
                 1.0 / denom);
  switch (cfg.objective) {
    case LatentObjective::MMD_Modified:
      r.latent_term =
          m_mmd(in.latents_flat, in.gaussians, cfg.lambda, cfg.two_sigma_sq);
      break;
    case LatentObjective::MMD_Standard:
      r.latent_term =
          s_mmd(in.latents_flat, in.gaussians, cfg.lambda, cfg.two_sigma_sq);
      break;
    case LatentObjective::KL:
      r.latent_term = kl_loss(in.kl_mean, in.kl_sigma);
      break;
  }
  r.total = add(r.wcel, r.latent_term);
  return r;
}

}  // namespace kae
