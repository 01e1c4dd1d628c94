#pragma once

#include <string>
#include <vector>

#include "kae/optim.hpp"
#include "kae/tape.hpp"
#include "kae/vocab.hpp"

namespace kae {

struct ModelConfig {
  int encoder_layers = 6;
  int decoder_layers = 6;
  int heads = 4;
  int embed = 128;          // E
  int latent_positions = 10;
  int max_len = 0;          // M, from the training corpus
  int vocab_size = 0;       // T
  int ffn = 512;
  bool conditional = false;
  bool kl_mode = false;     // KL-divergence baseline variant
  double dropout = 0.1;

  int latent_dim() const { return latent_positions * embed; }  // D
  void validate() const;

  // full-size preset from the reference configuration
  static ModelConfig full();
  // small preset for CPU-scale experiments
  static ModelConfig desk();
};

struct LatentCode {
  Tensor values;  // [B, latent_positions, E]
  bool noisy = false;
};

struct ForwardTrainOut {
  Tensor logits_noisy;  // [B, M-1, T]
  Tensor logits_clean;
  Tensor latents_flat;  // [B, D], un-noised, for the MMD term
  Tensor kl_mean;       // [B, D] (KL mode only)
  Tensor kl_sigma;      // [B, D] (KL mode only)
};

class KaeModel {
 public:
  KaeModel(ModelConfig cfg, Vocabulary vocab, Rng init_rng);

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }

  // conditions: one scalar per batch row; required iff cfg.conditional
  LatentCode encode(const PaddedBatch& batch,
                    const std::vector<double>* conditions,
                    Rng* dropout_rng = nullptr) const;
  LatentCode add_noise(const LatentCode& z, Rng& rng) const;
  Tensor expand(const LatentCode& z, const std::vector<double>* conditions) const;
  // prefix ids [B, S] row-major with pad mask; returns logits [B, S, T]
  Tensor decode_logits(const Tensor& memory, const std::vector<int>& prefix_ids,
                       const Array& prefix_pad_mask, int batch, int prefix_len,
                       Rng* dropout_rng = nullptr) const;

  ForwardTrainOut forward_train(const PaddedBatch& batch,
                                const std::vector<double>* conditions,
                                Rng& rng, double noise_scale = 1.0) const;

  // KL baseline: (mean, sigma) latents, both [B, latent_positions, E]
  std::pair<Tensor, Tensor> kl_variant_encode(const PaddedBatch& batch,
                                              Rng* dropout_rng = nullptr) const;

  LatentCode latent_from_array(const Array& values) const;  // [B, L, E]

  std::vector<Tensor> parameters() const;
  const std::vector<std::pair<std::string, Tensor>>& named_parameters() const {
    return params_;
  }
  Tensor find_param(const std::string& name) const;
  void zero_grads() const;

 private:
  Tensor p(const std::string& name) const;
  Tensor block_forward(const Tensor& x, const std::string& prefix,
                       const Array* self_key_mask, bool causal,
                       const Tensor* memory, Rng* dropout_rng) const;
  Tensor attention(const Tensor& q_in, const Tensor& kv_in,
                   const std::string& prefix, const Array* key_mask,
                   bool causal) const;
  Tensor encoder_stack(const PaddedBatch& batch,
                       const std::vector<double>* conditions,
                       Rng* dropout_rng, Array* enc_mask_out) const;

  ModelConfig cfg_;
  Vocabulary vocab_;
  std::vector<std::pair<std::string, Tensor>> params_;
};

}  // namespace kae
