#include "kae/model.hpp"

#include <cmath>
#include <stdexcept>

namespace kae {

void ModelConfig::validate() const {
  if (embed % heads != 0)
    throw std::invalid_argument("ModelConfig: embed not divisible by heads");
  if (latent_positions >= max_len)
    throw std::invalid_argument("ModelConfig: latent_positions must be < max_len");
  if (max_len <= 0 || vocab_size <= 0)
    throw std::invalid_argument("ModelConfig: max_len and vocab_size required");
}

ModelConfig ModelConfig::full() {
  ModelConfig c;
  c.encoder_layers = 6;
  c.decoder_layers = 6;
  c.heads = 4;
  c.embed = 128;
  c.latent_positions = 10;
  c.ffn = 512;
  return c;
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.encoder_layers = 2;
  c.decoder_layers = 2;
  c.heads = 4;
  c.embed = 64;
  c.latent_positions = 4;
  c.ffn = 128;
  c.dropout = 0.0;
  return c;
}

namespace {
Array init_uniform(std::vector<int> shape, double a, Rng& rng) {
  Array w(shape);
  for (auto& x : w.data) x = to_f32((rng.uniform() * 2.0 - 1.0) * a);
  return w;
}

Array init_linear(int fan_in, int fan_out, std::vector<int> shape, Rng& rng) {
  double a = std::sqrt(6.0 / (fan_in + fan_out));
  return init_uniform(std::move(shape), a, rng);
}
}  // namespace

KaeModel::KaeModel(ModelConfig cfg, Vocabulary vocab, Rng init_rng)
    : cfg_(cfg), vocab_(std::move(vocab)) {
  cfg_.validate();
  int E = cfg_.embed, T = cfg_.vocab_size, M = cfg_.max_len, F = cfg_.ffn;
  int L = cfg_.latent_positions;
  int Menc = M + (cfg_.conditional ? 1 : 0);
  int Lexp = L + (cfg_.conditional ? 1 : 0);

  auto reg = [this](const std::string& name, Array w) {
    params_.push_back({name, Tensor::param(std::move(w))});
  };
  auto reg_linear = [&](const std::string& name, int in, int out) {
    reg(name + ".w", init_linear(in, out, {in, out}, init_rng));
    reg(name + ".b", Array({out}));
  };
  auto reg_ln = [&](const std::string& name) {
    reg(name + ".g", Array({E}, 1.0));
    reg(name + ".b", Array({E}));
  };
  auto reg_attn = [&](const std::string& name) {
    reg_linear(name + ".q", E, E);
    reg_linear(name + ".k", E, E);
    reg_linear(name + ".v", E, E);
    reg_linear(name + ".o", E, E);
  };
  auto reg_block = [&](const std::string& name, bool cross) {
    reg_attn(name + ".sa");
    reg_ln(name + ".ln1");
    if (cross) {
      reg_attn(name + ".ca");
      reg_ln(name + ".ln2");
    }
    reg_linear(name + ".ff1", E, F);
    reg_linear(name + ".ff2", F, E);
    reg_ln(name + ".ln3");
  };

  reg("tok_emb", init_uniform({T, E}, 0.05, init_rng));
  reg("pos_emb", init_uniform({M + 1, E}, 0.05, init_rng));
  if (cfg_.conditional) reg("cond_emb", init_uniform({1, E}, 0.05, init_rng));
  for (int l = 0; l < cfg_.encoder_layers; ++l)
    reg_block("enc" + std::to_string(l), false);
  reg("compress.w", init_linear(Menc, L, {L, Menc}, init_rng));
  reg("compress.b", Array({L, E}));
  if (cfg_.kl_mode) {
    reg("compress_lv.w", init_linear(Menc, L, {L, Menc}, init_rng));
    reg("compress_lv.b", Array({L, E}, -2.0));  // start near-deterministic
  }
  reg("expand.w", init_linear(Lexp, M, {M, Lexp}, init_rng));
  reg("expand.b", Array({M, E}));
  for (int l = 0; l < cfg_.decoder_layers; ++l)
    reg_block("dec" + std::to_string(l), true);
  reg_linear("out", E, T);
}

Tensor KaeModel::p(const std::string& name) const { return find_param(name); }

Tensor KaeModel::find_param(const std::string& name) const {
  for (const auto& [n, t] : params_)
    if (n == name) return t;
  throw std::logic_error("KaeModel: no parameter named " + name);
}

std::vector<Tensor> KaeModel::parameters() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& [n, t] : params_) out.push_back(t);
  return out;
}

void KaeModel::zero_grads() const {
  for (const auto& [n, t] : params_) const_cast<Tensor&>(t).zero_grad();
}

Tensor KaeModel::attention(const Tensor& q_in, const Tensor& kv_in,
                           const std::string& prefix, const Array* key_mask,
                           bool causal) const {
  int H = cfg_.heads;
  int dh = cfg_.embed / H;
  Tensor q = split_heads(linear(q_in, p(prefix + ".q.w"), p(prefix + ".q.b")), H);
  Tensor k = split_heads(linear(kv_in, p(prefix + ".k.w"), p(prefix + ".k.b")), H);
  Tensor v = split_heads(linear(kv_in, p(prefix + ".v.w"), p(prefix + ".v.b")), H);
  Tensor scores = scale(bmm_nt(q, k), 1.0 / std::sqrt(static_cast<double>(dh)));
  scores = mask_scores(scores, key_mask, causal);
  Tensor probs = softmax_lastdim(scores);
  Tensor mixed = merge_heads(bmm(probs, v));
  return linear(mixed, p(prefix + ".o.w"), p(prefix + ".o.b"));
}

Tensor KaeModel::block_forward(const Tensor& x_in, const std::string& prefix,
                               const Array* self_key_mask, bool causal,
                               const Tensor* memory, Rng* dropout_rng) const {
  auto drop = [&](Tensor t) {
    if (dropout_rng && cfg_.dropout > 0.0)
      return dropout(t, cfg_.dropout, *dropout_rng);
    return t;
  };
  Tensor x = x_in;
  Tensor a = drop(attention(x, x, prefix + ".sa", self_key_mask, causal));
  x = layer_norm(add(x, a), p(prefix + ".ln1.g"), p(prefix + ".ln1.b"));
  if (memory) {
    Tensor c = drop(attention(x, *memory, prefix + ".ca", nullptr, false));
    x = layer_norm(add(x, c), p(prefix + ".ln2.g"), p(prefix + ".ln2.b"));
  }
  Tensor h = relu(linear(x, p(prefix + ".ff1.w"), p(prefix + ".ff1.b")));
  Tensor f = drop(linear(h, p(prefix + ".ff2.w"), p(prefix + ".ff2.b")));
  return layer_norm(add(x, f), p(prefix + ".ln3.g"), p(prefix + ".ln3.b"));
}

Tensor KaeModel::encoder_stack(const PaddedBatch& batch,
                               const std::vector<double>* conditions,
                               Rng* dropout_rng, Array* enc_mask_out) const {
  int B = batch.batch, M = batch.max_len, E = cfg_.embed;
  if (M != cfg_.max_len)
    throw std::invalid_argument("encode: batch width differs from model max_len");
  for (int id : batch.ids)
    if (id < 0 || id >= cfg_.vocab_size)
      throw std::invalid_argument("encode: token id out of range");
  if (cfg_.conditional && !conditions)
    throw std::invalid_argument("encode: conditional model requires conditions");
  if (conditions && static_cast<int>(conditions->size()) != B)
    throw std::invalid_argument("encode: condition count mismatch");

  Tensor emb = embedding(p("tok_emb"), batch.ids, {B, M});
  std::vector<int> pos_ids(static_cast<size_t>(B) * M);
  for (int b = 0; b < B; ++b)
    for (int s = 0; s < M; ++s) pos_ids[static_cast<size_t>(b) * M + s] = s;
  Tensor x = add(emb, embedding(p("pos_emb"), pos_ids, {B, M}));
  if (dropout_rng && cfg_.dropout > 0.0)
    x = dropout(x, cfg_.dropout, *dropout_rng);

  Array enc_mask = batch.pad_mask;
  if (cfg_.conditional) {
    // condition-scaled embedding appended as one extra sequence position
    Array cond_col({B, 1});
    for (int b = 0; b < B; ++b)
      cond_col.data[static_cast<size_t>(b)] = (*conditions)[static_cast<size_t>(b)];
    Tensor cond_rows = matmul(Tensor::constant(cond_col), p("cond_emb"));
    std::vector<int> cpos(static_cast<size_t>(B), M);
    Tensor cond3 = add(reshape(cond_rows, {B, 1, E}),
                       embedding(p("pos_emb"), cpos, {B, 1}));
    x = concat_seq(x, cond3);
    Array m2({B, M + 1});
    for (int b = 0; b < B; ++b)
      for (int s = 0; s < M; ++s)
        m2.data[static_cast<size_t>(b) * (M + 1) + s] =
            enc_mask.data[static_cast<size_t>(b) * M + s];
    enc_mask = std::move(m2);
  }

  for (int l = 0; l < cfg_.encoder_layers; ++l)
    x = block_forward(x, "enc" + std::to_string(l), &enc_mask, false, nullptr,
                      dropout_rng);
  x = zero_rows(x, enc_mask);
  if (enc_mask_out) *enc_mask_out = enc_mask;
  return x;
}

LatentCode KaeModel::encode(const PaddedBatch& batch,
                            const std::vector<double>* conditions,
                            Rng* dropout_rng) const {
  Tensor x = encoder_stack(batch, conditions, dropout_rng, nullptr);
  LatentCode z;
  z.values = seq_linear(x, p("compress.w"), p("compress.b"));
  z.noisy = false;
  return z;
}

std::pair<Tensor, Tensor> KaeModel::kl_variant_encode(const PaddedBatch& batch,
                                                      Rng* dropout_rng) const {
  if (!cfg_.kl_mode)
    throw std::logic_error("kl_variant_encode: model not built in KL mode");
  Tensor x = encoder_stack(batch, nullptr, dropout_rng, nullptr);
  Tensor mean = seq_linear(x, p("compress.w"), p("compress.b"));
  Tensor logvar = seq_linear(x, p("compress_lv.w"), p("compress_lv.b"));
  Tensor sigma = exp_t(scale(logvar, 0.5));
  return {mean, sigma};
}

LatentCode KaeModel::add_noise(const LatentCode& z, Rng& rng) const {
  if (z.noisy) throw std::logic_error("add_noise: latent already noisy");
  Array noise(z.values.value().shape);
  rng.fill_gaussian(noise);
  LatentCode out;
  out.values = add(z.values, Tensor::constant(std::move(noise)));
  out.noisy = true;
  return out;
}

Tensor KaeModel::expand(const LatentCode& z,
                        const std::vector<double>* conditions) const {
  const Array& zv = z.values.value();
  if (zv.ndim() != 3 || zv.dim(1) != cfg_.latent_positions ||
      zv.dim(2) != cfg_.embed)
    throw std::invalid_argument("expand: latent shape mismatch");
  Tensor x = z.values;
  if (cfg_.conditional) {
    if (!conditions)
      throw std::invalid_argument("expand: conditional model requires condition");
    int B = zv.dim(0), E = cfg_.embed;
    if (static_cast<int>(conditions->size()) != B)
      throw std::invalid_argument("expand: condition count mismatch");
    Array cond_col({B, 1});
    for (int b = 0; b < B; ++b)
      cond_col.data[static_cast<size_t>(b)] = (*conditions)[static_cast<size_t>(b)];
    Tensor cond_rows = matmul(Tensor::constant(cond_col), p("cond_emb"));
    x = concat_seq(x, reshape(cond_rows, {B, 1, E}));
  } else if (conditions) {
    throw std::invalid_argument("expand: condition given to unconditional model");
  }
  return seq_linear(x, p("expand.w"), p("expand.b"));
}

Tensor KaeModel::decode_logits(const Tensor& memory,
                               const std::vector<int>& prefix_ids,
                               const Array& prefix_pad_mask, int batch,
                               int prefix_len, Rng* dropout_rng) const {
  if (prefix_len > cfg_.max_len)
    throw std::invalid_argument("decode_logits: prefix longer than max_len");
  if (static_cast<int>(prefix_ids.size()) != batch * prefix_len)
    throw std::invalid_argument("decode_logits: prefix shape mismatch");
  for (int b = 0; b < batch; ++b)
    if (prefix_ids[static_cast<size_t>(b) * prefix_len] != vocab_.sos_id())
      throw std::invalid_argument("decode_logits: prefix must begin with SOS");
  int B = batch, S = prefix_len;
  Tensor emb = embedding(p("tok_emb"), prefix_ids, {B, S});
  std::vector<int> pos_ids(static_cast<size_t>(B) * S);
  for (int b = 0; b < B; ++b)
    for (int s = 0; s < S; ++s) pos_ids[static_cast<size_t>(b) * S + s] = s;
  Tensor x = add(emb, embedding(p("pos_emb"), pos_ids, {B, S}));
  if (dropout_rng && cfg_.dropout > 0.0)
    x = dropout(x, cfg_.dropout, *dropout_rng);
  for (int l = 0; l < cfg_.decoder_layers; ++l)
    x = block_forward(x, "dec" + std::to_string(l), &prefix_pad_mask, true,
                      &memory, dropout_rng);
  return linear(x, p("out.w"), p("out.b"));
}

ForwardTrainOut KaeModel::forward_train(const PaddedBatch& batch,
                                        const std::vector<double>* conditions,
                                        Rng& rng, double noise_scale) const {
  int B = batch.batch, M = batch.max_len;
  int S = M - 1;
  // teacher forcing: decoder input is the label sequence shifted right
  std::vector<int> dec_in(static_cast<size_t>(B) * S);
  Array dec_mask({B, S});
  for (int b = 0; b < B; ++b)
    for (int s = 0; s < S; ++s) {
      dec_in[static_cast<size_t>(b) * S + s] =
          batch.ids[static_cast<size_t>(b) * M + s];
      dec_mask.data[static_cast<size_t>(b) * S + s] =
          batch.pad_mask.data[static_cast<size_t>(b) * M + s];
    }

  ForwardTrainOut out;
  if (cfg_.kl_mode) {
    auto [mean, sigma] = kl_variant_encode(batch, &rng);
    Array eps(mean.value().shape);
    rng.fill_gaussian(eps);
    if (noise_scale != 1.0)
      for (auto& e : eps.data) e *= noise_scale;
    Tensor sample = add(mean, mul(sigma, Tensor::constant(std::move(eps))));
    LatentCode zc{mean, false}, zs{sample, true};
    Tensor mem_noisy = expand(zs, conditions);
    Tensor mem_clean = expand(zc, conditions);
    out.logits_noisy = decode_logits(mem_noisy, dec_in, dec_mask, B, S, &rng);
    out.logits_clean = decode_logits(mem_clean, dec_in, dec_mask, B, S, &rng);
    out.latents_flat = reshape(mean, {B, cfg_.latent_dim()});
    out.kl_mean = reshape(mean, {B, cfg_.latent_dim()});
    out.kl_sigma = reshape(sigma, {B, cfg_.latent_dim()});
    return out;
  }

  LatentCode z = encode(batch, conditions, &rng);
  Array noise(z.values.value().shape);
  rng.fill_gaussian(noise);
  if (noise_scale != 1.0)
    for (auto& e : noise.data) e *= noise_scale;
  LatentCode z_noisy{add(z.values, Tensor::constant(std::move(noise))), true};
  Tensor mem_noisy = expand(z_noisy, conditions);
  Tensor mem_clean = expand(z, conditions);
  out.logits_noisy = decode_logits(mem_noisy, dec_in, dec_mask, B, S, &rng);
  out.logits_clean = decode_logits(mem_clean, dec_in, dec_mask, B, S, &rng);
  out.latents_flat = reshape(z.values, {B, cfg_.latent_dim()});
  return out;
}

LatentCode KaeModel::latent_from_array(const Array& values) const {
  if (values.ndim() != 3 || values.dim(1) != cfg_.latent_positions ||
      values.dim(2) != cfg_.embed)
    throw std::invalid_argument("latent_from_array: shape mismatch");
  LatentCode z;
  z.values = Tensor::constant(values);
  z.noisy = false;
  return z;
}

}  // namespace kae
