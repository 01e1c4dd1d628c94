#include "kae/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kae/checkpoint.hpp"
#include "kae/decode.hpp"
#include "kae/losses.hpp"
#include "kae/smiles.hpp"

namespace kae {

double pearson(const std::vector<double>& xs, const std::vector<double>& ys,
               bool& defined) {
  defined = false;
  if (xs.size() != ys.size() || xs.size() < 2) return 0.0;
  size_t n = xs.size();
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  defined = true;
  return sxy / std::sqrt(sxx * syy);
}

CorrelationResult correlation_experiment(const KaeModel& model,
                                         const PropertyOracle& oracle,
                                         const std::vector<double>& grid,
                                         int n_per_point, int beam,
                                         const std::set<std::string>& training,
                                         Rng& rng) {
  if (grid.empty())
    throw std::invalid_argument("correlation_experiment: empty grid");
  if (!model.config().conditional)
    throw std::invalid_argument("correlation_experiment: model not conditional");
  CorrelationResult res;
  std::vector<double> xs, ys;
  for (double c : grid) {
    std::vector<double> conds(static_cast<size_t>(n_per_point), c);
    auto gen = sample_strings(model, training, n_per_point, beam, rng, &conds);
    CorrelationPoint pt;
    pt.condition = c;
    double sum = 0.0;
    for (const auto& s : gen) {
      if (!is_valid(s)) continue;
      sum += oracle.value(s);
      ++pt.valid_count;
    }
    if (pt.valid_count > 0) {
      pt.mean_property = sum / pt.valid_count;
      xs.push_back(pt.condition);
      ys.push_back(pt.mean_property);
    }
    res.points.push_back(pt);
  }
  res.r = pearson(xs, ys, res.r_defined);
  return res;
}

SweepKind sweep_kind_from_name(const std::string& name) {
  if (name == "lambda") return SweepKind::Lambda;
  if (name == "delta") return SweepKind::Delta;
  if (name == "sigma") return SweepKind::Sigma;
  if (name == "loss-type") return SweepKind::LossType;
  if (name == "beam-size") return SweepKind::BeamSize;
  throw std::invalid_argument("unknown sweep kind: " + name);
}

namespace {

LatentObjective objective_from_setting(const std::string& s) {
  if (s == "m-mmd") return LatentObjective::MMD_Modified;
  if (s == "s-mmd") return LatentObjective::MMD_Standard;
  if (s == "kl") return LatentObjective::KL;
  throw std::invalid_argument("unknown objective: " + s);
}

// compact continued-training loop over the checkpoint's own vocabulary
void continue_training(KaeModel& model, Adam& optimizer, const RunConfig& cfg,
                       const DatasetSplit& data, int extra_epochs,
                       const std::string& tag) {
  const ModelConfig& mc = model.config();
  const Vocabulary& vocab = model.vocab();
  int M = mc.max_len, D = mc.latent_dim();
  std::vector<TokenSequence> tokens;
  std::vector<double> conds_all;
  std::vector<double> train_conds;
  if (mc.conditional)
    train_conds = conditions_for(data.train, cfg.property_column);
  for (size_t i = 0; i < data.train.size(); ++i) {
    TokenSequence t = tokenize(data.train[i].smiles, vocab);
    if (t.length > M) continue;
    tokens.push_back(std::move(t));
    if (mc.conditional) conds_all.push_back(train_conds[i]);
  }
  int n = static_cast<int>(tokens.size());
  if (n == 0) throw std::runtime_error("sweep: no usable training rows");

  std::int64_t step = 0;
  for (int epoch = 1; epoch <= extra_epochs; ++epoch) {
    Rng order_rng =
        Rng(cfg.seed).fork("sweep-" + tag + "-shuffle-" + std::to_string(epoch));
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    for (int i = n; i > 1; --i)
      std::swap(order[static_cast<size_t>(i - 1)],
                order[static_cast<size_t>(order_rng.below(i))]);
    for (int start = 0; start < n; start += cfg.batch_size) {
      int b = std::min(cfg.batch_size, n - start);
      std::vector<TokenSequence> seqs;
      std::vector<double> conds;
      for (int i = 0; i < b; ++i) {
        int idx = order[static_cast<size_t>(start + i)];
        seqs.push_back(tokens[static_cast<size_t>(idx)]);
        if (mc.conditional) conds.push_back(conds_all[static_cast<size_t>(idx)]);
      }
      PaddedBatch batch = pad_batch(seqs, M, vocab);
      Rng step_rng =
          Rng(cfg.seed).fork("sweep-" + tag + "-step-" + std::to_string(step));
      ForwardTrainOut fwd = model.forward_train(
          batch, mc.conditional ? &conds : nullptr, step_rng, cfg.noise_scale);

      int S = M - 1;
      std::vector<int> labels(static_cast<size_t>(b) * S);
      Array label_mask({b, S});
      for (int r = 0; r < b; ++r)
        for (int s = 0; s < S; ++s) {
          labels[static_cast<size_t>(r) * S + s] =
              batch.ids[static_cast<size_t>(r) * M + s + 1];
          label_mask.data[static_cast<size_t>(r) * S + s] =
              batch.pad_mask.data[static_cast<size_t>(r) * M + s + 1];
        }
      TotalLossInputs in;
      in.logits_noisy = fwd.logits_noisy;
      in.logits_clean = fwd.logits_clean;
      in.labels = std::move(labels);
      in.pad_mask = std::move(label_mask);
      in.latents_flat = fwd.latents_flat;
      in.kl_mean = fwd.kl_mean;
      in.kl_sigma = fwd.kl_sigma;
      Array gaussians({cfg.loss.gaussian_samples, D});
      Rng mmd_rng = step_rng.fork("mmd-reference");
      mmd_rng.fill_gaussian(gaussians);
      in.gaussians = std::move(gaussians);

      LossReport report = total_loss(in, cfg.loss);
      if (!std::isfinite(report.total.value().at(0)))
        throw std::runtime_error("sweep: non-finite loss in setting " + tag);
      model.zero_grads();
      backward(report.total);
      optimizer.step();
      ++step;
    }
  }
}

}  // namespace

std::vector<SweepRow> sweep(SweepKind kind,
                            const std::vector<std::string>& grid,
                            const RunConfig& base, const DatasetSplit& data,
                            const std::string& checkpoint_path,
                            int extra_epochs) {
  std::vector<SweepRow> rows;
  std::set<std::string> training_set;
  for (const auto& r : data.train) training_set.insert(r.smiles);

  for (const auto& setting : grid) {
    LoadedCheckpoint ck = load_checkpoint(checkpoint_path);
    RunConfig cfg = base;
    cfg.model = ck.model->config();
    int eval_beam = cfg.eval_beam;
    switch (kind) {
      case SweepKind::Lambda: cfg.loss.lambda = std::stod(setting); break;
      case SweepKind::Delta: cfg.loss.delta = std::stod(setting); break;
      case SweepKind::Sigma: cfg.loss.two_sigma_sq = std::stod(setting); break;
      case SweepKind::LossType:
        cfg.loss.objective = objective_from_setting(setting);
        break;
      case SweepKind::BeamSize: eval_beam = std::stoi(setting); break;
    }
    if (kind != SweepKind::BeamSize) {
      if (!ck.optimizer)
        ck.optimizer = std::make_unique<Adam>(ck.model->parameters(), cfg.adam);
      continue_training(*ck.model, *ck.optimizer, cfg, data, extra_epochs,
                        setting);
    }
    Rng er = Rng(cfg.seed).fork("sweep-eval-" + setting);
    SweepRow row;
    row.setting = setting;
    row.metrics = light_validation_metrics(
        *ck.model, training_set, data.validation, cfg.property_column,
        cfg.eval_samples, cfg.eval_repeats, eval_beam, er);
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::vector<double> top_eigvec(std::vector<double>& cov, int D, Rng& rng,
                               double& eig_out) {
  std::vector<double> v(static_cast<size_t>(D));
  for (auto& x : v) x = rng.gaussian();
  std::vector<double> w(static_cast<size_t>(D));
  for (int it = 0; it < 300; ++it) {
    for (int i = 0; i < D; ++i) {
      double s = 0.0;
      for (int j = 0; j < D; ++j)
        s += cov[static_cast<size_t>(i) * D + j] * v[static_cast<size_t>(j)];
      w[static_cast<size_t>(i)] = s;
    }
    double norm = 0.0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) break;
    for (int i = 0; i < D; ++i) v[static_cast<size_t>(i)] = w[static_cast<size_t>(i)] / norm;
  }
  double eig = 0.0;
  for (int i = 0; i < D; ++i) {
    double s = 0.0;
    for (int j = 0; j < D; ++j)
      s += cov[static_cast<size_t>(i) * D + j] * v[static_cast<size_t>(j)];
    eig += v[static_cast<size_t>(i)] * s;
  }
  eig_out = eig;
  // deflate so the next power iteration finds the following component
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j)
      cov[static_cast<size_t>(i) * D + j] -=
          eig * v[static_cast<size_t>(i)] * v[static_cast<size_t>(j)];
  return v;
}

}  // namespace

PcaResult latent_pca(const KaeModel& model,
                     const std::vector<std::string>& molecules,
                     const std::vector<double>* conditions, int n_gaussian,
                     Rng& rng) {
  if (n_gaussian < 2)
    throw std::invalid_argument("latent_pca: need at least 2 Gaussian samples");
  NoGradGuard ng;
  const ModelConfig& mc = model.config();
  int D = mc.latent_dim();

  Array ref({n_gaussian, D});
  Rng ref_rng = rng.fork("pca-reference");
  ref_rng.fill_gaussian(ref);
  std::vector<double> mu(static_cast<size_t>(D), 0.0);
  for (int i = 0; i < n_gaussian; ++i)
    for (int d = 0; d < D; ++d)
      mu[static_cast<size_t>(d)] += ref.data[static_cast<size_t>(i) * D + d];
  for (auto& m : mu) m /= n_gaussian;
  std::vector<double> var(static_cast<size_t>(D), 0.0);
  std::vector<double> cov(static_cast<size_t>(D) * D, 0.0);
  for (int i = 0; i < n_gaussian; ++i)
    for (int a = 0; a < D; ++a) {
      double da = ref.data[static_cast<size_t>(i) * D + a] - mu[static_cast<size_t>(a)];
      var[static_cast<size_t>(a)] += da * da;
      for (int b = a; b < D; ++b) {
        double db = ref.data[static_cast<size_t>(i) * D + b] - mu[static_cast<size_t>(b)];
        cov[static_cast<size_t>(a) * D + b] += da * db;
      }
    }
  for (int a = 0; a < D; ++a) {
    var[static_cast<size_t>(a)] /= (n_gaussian - 1);
    for (int b = a; b < D; ++b) {
      cov[static_cast<size_t>(a) * D + b] /= (n_gaussian - 1);
      cov[static_cast<size_t>(b) * D + a] = cov[static_cast<size_t>(a) * D + b];
    }
  }

  PcaResult res;
  Rng pi_rng = rng.fork("pca-power-iteration");
  std::vector<double> cov_work = cov;
  std::vector<double> pc1 = top_eigvec(cov_work, D, pi_rng, res.eig1);
  std::vector<double> pc2 = top_eigvec(cov_work, D, pi_rng, res.eig2);

  auto project = [&](const double* z, const std::string& kind) {
    PcaRow row;
    row.kind = kind;
    for (int d = 0; d < D; ++d) {
      double c = z[d] - mu[static_cast<size_t>(d)];
      row.x += c * pc1[static_cast<size_t>(d)];
      row.y += c * pc2[static_cast<size_t>(d)];
    }
    res.rows.push_back(std::move(row));
  };
  auto mahalanobis = [&](const double* z) {
    double s = 0.0;
    for (int d = 0; d < D; ++d) {
      double c = z[d] - mu[static_cast<size_t>(d)];
      double v2 = std::max(var[static_cast<size_t>(d)], 1e-12);
      s += c * c / v2;
    }
    return std::sqrt(s);
  };

  for (int i = 0; i < n_gaussian; ++i)
    project(ref.data.data() + static_cast<size_t>(i) * D, "gaussian");

  Rng noise_rng = rng.fork("pca-latent-noise");
  constexpr int kChunk = 100;
  int n_mol = static_cast<int>(molecules.size());
  for (int start = 0; start < n_mol; start += kChunk) {
    int b = std::min(kChunk, n_mol - start);
    std::vector<TokenSequence> seqs;
    for (int i = 0; i < b; ++i)
      seqs.push_back(tokenize(molecules[static_cast<size_t>(start + i)],
                              model.vocab()));
    PaddedBatch batch = pad_batch(seqs, mc.max_len, model.vocab());
    std::vector<double> cond_slice;
    const std::vector<double>* cond_ptr = nullptr;
    if (conditions) {
      cond_slice.assign(conditions->begin() + start,
                        conditions->begin() + start + b);
      cond_ptr = &cond_slice;
    }
    Array lat = model.encode(batch, cond_ptr).values.value();
    for (int i = 0; i < b; ++i) {
      const double* z = lat.data.data() + static_cast<size_t>(i) * D;
      project(z, "encoded");
      res.mean_mahalanobis_encoded += mahalanobis(z);
      std::vector<double> zn(z, z + D);
      for (auto& x : zn) x += noise_rng.gaussian();
      project(zn.data(), "encoded_noisy");
      res.mean_mahalanobis_noisy += mahalanobis(zn.data());
    }
  }
  if (n_mol > 0) {
    res.mean_mahalanobis_encoded /= n_mol;
    res.mean_mahalanobis_noisy /= n_mol;
  }
  return res;
}

ReconstructReport reconstruct_report(const KaeModel& model,
                                     const std::vector<std::string>& inputs,
                                     const std::vector<double>* conditions) {
  ReconstructReport rep;
  const ModelConfig& mc = model.config();
  NoGradGuard ng;
  std::vector<int> usable;  // indices into inputs
  std::vector<TokenSequence> seqs_all;
  for (size_t i = 0; i < inputs.size(); ++i) {
    ReconstructRow row;
    row.smiles = inputs[i];
    try {
      TokenSequence t = tokenize(inputs[i], model.vocab());
      if (t.length > mc.max_len) {
        row.skipped = true;
        row.skip_reason = "longer than model max length";
      } else {
        usable.push_back(static_cast<int>(i));
        seqs_all.push_back(std::move(t));
      }
    } catch (const std::exception& e) {
      row.skipped = true;
      row.skip_reason = e.what();
    }
    rep.rows.push_back(std::move(row));
  }

  constexpr int kChunk = 100;
  int n = static_cast<int>(usable.size());
  for (int start = 0; start < n; start += kChunk) {
    int b = std::min(kChunk, n - start);
    std::vector<TokenSequence> seqs(seqs_all.begin() + start,
                                    seqs_all.begin() + start + b);
    PaddedBatch batch = pad_batch(seqs, mc.max_len, model.vocab());
    std::vector<double> cond_slice;
    const std::vector<double>* cond_ptr = nullptr;
    if (conditions) {
      for (int i = 0; i < b; ++i)
        cond_slice.push_back(
            (*conditions)[static_cast<size_t>(usable[static_cast<size_t>(start + i)])]);
      cond_ptr = &cond_slice;
    }
    LatentCode z = model.encode(batch, cond_ptr);
    Array memories = model.expand(z, cond_ptr).value();
    auto step = make_model_step(model, std::move(memories));
    BeamConfig bc{1, mc.max_len};
    auto beams = beam_decode_batch(step, mc.vocab_size, model.vocab().sos_id(),
                                   model.vocab().eos_id(), model.vocab().pad_id(),
                                   bc, b);
    for (int i = 0; i < b; ++i) {
      ReconstructRow& row =
          rep.rows[static_cast<size_t>(usable[static_cast<size_t>(start + i)])];
      row.decoded = detokenize_ids(beams[static_cast<size_t>(i)][0].ids,
                                   model.vocab());
      row.match = row.decoded == row.smiles;
      ++rep.attempted;
      if (row.match) ++rep.matched;
    }
  }
  rep.rate_defined = rep.attempted > 0;
  if (rep.rate_defined)
    rep.rate = static_cast<double>(rep.matched) / rep.attempted;
  return rep;
}

}  // namespace kae
