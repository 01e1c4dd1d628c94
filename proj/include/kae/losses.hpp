#pragma once

#include "kae/tape.hpp"

namespace kae {

enum class LatentObjective { MMD_Modified, MMD_Standard, KL };

struct LossConfig {
  double lambda = 1.0;
  double delta = 1.0;
  double two_sigma_sq = 0.64;   // 2 * 0.32
  int gaussian_samples = 1000;  // N_y
  LatentObjective objective = LatentObjective::MMD_Modified;
  bool cel_mean_over_batch = true;

  void validate() const;
  // alternative bandwidth preset: 2*sigma^2 = 0.0005 * E
  static double bandwidth_scaled(int embed) { return 0.0005 * embed; }
};

struct LossReport {
  Tensor total;
  Tensor wcel;
  Tensor latent_term;  // mmd or kl
  Tensor cel_noisy;
  Tensor cel_clean;
};

// -sum_s sum_c Y log P over non-pad positions (mean over batch optional)
Tensor cel(const Tensor& logits, const std::vector<int>& labels,
           const Array& pad_mask, bool mean_over_batch = true);

Tensor wcel(const Tensor& logits_noisy, const Tensor& logits_clean,
            const std::vector<int>& labels, const Array& pad_mask,
            double lambda, double delta, bool mean_over_batch = true);

// exp(-(1/D) * sum_d (a_d-b_d)^2 / two_sigma_sq), plain doubles
double rbf_kernel(const std::vector<double>& a, const std::vector<double>& b,
                  double two_sigma_sq);

Tensor s_mmd(const Tensor& latents, const Array& gaussians, double lambda,
             double two_sigma_sq);
Tensor m_mmd(const Tensor& latents, const Array& gaussians, double lambda,
             double two_sigma_sq);

// closed-form KL to the unit Gaussian, summed over D, averaged over batch
Tensor kl_loss(const Tensor& mean, const Tensor& sigma);

struct TotalLossInputs {
  Tensor logits_noisy;
  Tensor logits_clean;
  std::vector<int> labels;
  Array pad_mask;
  Tensor latents_flat;  // [N_x, D]
  Array gaussians;      // [N_y, D], resampled each step by the caller
  Tensor kl_mean, kl_sigma;  // KL objective only
};

LossReport total_loss(const TotalLossInputs& in, const LossConfig& cfg);

}  // namespace kae
