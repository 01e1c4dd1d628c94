#include "kae/ses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kae/metrics.hpp"

namespace kae {

void SESConfig::validate() const {
  if (step <= 0.0) throw std::invalid_argument("SESConfig: step must be > 0");
  if (max_increase <= 0.0)
    throw std::invalid_argument("SESConfig: max_increase must be > 0");
  if (beam < 1 || phase_two_reps < 1 || reposition_iters < 1)
    throw std::invalid_argument("SESConfig: counts must be >= 1");
}

int SESConfig::condition_steps() const {
  return static_cast<int>(std::lround(max_increase / step));
}

int SESConfig::condition_search_candidates() const {
  return beam + beam * condition_steps();
}

SimilarityExhaustionSearch::SimilarityExhaustionSearch(const KaeModel& model,
                                                       PropertyOracle oracle,
                                                       SESConfig cfg)
    : model_(model), oracle_(std::move(oracle)), cfg_(cfg) {
  cfg_.validate();
  if (!model.config().conditional)
    throw std::invalid_argument("SES requires a conditional model");
}

Array SimilarityExhaustionSearch::encode_target(const std::string& target,
                                                double condition) const {
  NoGradGuard ng;
  std::vector<TokenSequence> seqs = {tokenize(target, model_.vocab())};
  PaddedBatch batch = pad_batch(seqs, model_.config().max_len, model_.vocab());
  std::vector<double> conds = {condition};
  return model_.encode(batch, &conds).values.value();
}

void SimilarityExhaustionSearch::score_candidates(
    const std::vector<Hypothesis>& hyps, const Fingerprint& target_fp,
    SESPhase phase, double& best_property,
    std::optional<CandidateRecord>& best) const {
  for (const Hypothesis& h : hyps) {
    std::string s = detokenize_ids(h.ids, model_.vocab());
    if (!is_valid(s)) continue;  // invalid decodes are skipped silently
    MolecularGraph g;
    try {
      g = parse_smiles(s);
    } catch (const std::exception&) {
      continue;
    }
    double sim = tanimoto(morgan_fingerprint(g), target_fp);
    if (sim < cfg_.similarity_threshold) continue;
    double prop = oracle_.value(s, g);
    if (prop > best_property) {
      best_property = prop;
      CandidateRecord rec;
      rec.smiles = s;
      rec.property = prop;
      rec.similarity = sim;
      rec.phase = phase;
      best = rec;
    }
  }
}

void SimilarityExhaustionSearch::sweep_conditions(
    const Array& latent, double base_condition, const Fingerprint& target_fp,
    SESPhase phase, double& best_property, std::optional<CandidateRecord>& best,
    int& explored) const {
  NoGradGuard ng;
  const ModelConfig& mc = model_.config();
  int steps = cfg_.condition_steps();
  int n = steps + 1;
  int L = mc.latent_positions, E = mc.embed;
  Array latents({n, L, E});
  std::vector<double> conds(static_cast<size_t>(n));
  for (int j = 0; j < n; ++j) {
    std::copy(latent.data.begin(), latent.data.end(),
              latents.data.begin() + static_cast<size_t>(j) * L * E);
    conds[static_cast<size_t>(j)] = base_condition + j * cfg_.step;
  }
  LatentCode z = model_.latent_from_array(latents);
  Array memories = model_.expand(z, &conds).value();
  auto step_fn = make_model_step(model_, std::move(memories));
  BeamConfig bc{cfg_.beam, mc.max_len};
  auto beams = beam_decode_batch(step_fn, mc.vocab_size, model_.vocab().sos_id(),
                                 model_.vocab().eos_id(), model_.vocab().pad_id(),
                                 bc, n);
  for (const auto& hyps : beams) {
    explored += static_cast<int>(hyps.size());
    score_candidates(hyps, target_fp, phase, best_property, best);
  }
}

SimilarityExhaustionSearch::Stage SimilarityExhaustionSearch::condition_search(
    const std::string& target, const Array& latent, double base_condition,
    const Fingerprint& target_fp) const {
  (void)target;
  Stage st;
  st.latent = latent;
  double best_property = -1e300;
  std::optional<CandidateRecord> best;
  // the stage reports any candidate; the caller compares with the original
  sweep_conditions(latent, base_condition, target_fp, SESPhase::ConditionSearch,
                   best_property, best, st.candidates);
  st.best = best;
  return st;
}

std::optional<Array> SimilarityExhaustionSearch::reposition(
    const Array& latent, double condition, const Fingerprint& target_fp,
    double& best_property, std::optional<CandidateRecord>& best,
    Rng& rng) const {
  NoGradGuard ng;
  const ModelConfig& mc = model_.config();
  Array current = latent;
  std::optional<Array> accepted;
  BeamConfig bc{cfg_.beam, mc.max_len};
  std::vector<double> conds = {condition};
  for (int it = 0; it < cfg_.reposition_iters; ++it) {
    Array trial = current;
    for (auto& x : trial.data) x += rng.gaussian();
    LatentCode z = model_.latent_from_array(trial);
    Array memories = model_.expand(z, &conds).value();
    auto step_fn = make_model_step(model_, std::move(memories));
    auto beams = beam_decode_batch(step_fn, mc.vocab_size,
                                   model_.vocab().sos_id(),
                                   model_.vocab().eos_id(),
                                   model_.vocab().pad_id(), bc, 1);
    double before = best_property;
    score_candidates(beams[0], target_fp, SESPhase::Reposition, best_property,
                     best);
    if (best_property > before) {
      // restart sampling from the repositioned vector
      current = trial;
      accepted = trial;
    }
  }
  return accepted;
}

SESResult SimilarityExhaustionSearch::optimize(const std::string& target,
                                               Rng& rng) const {
  SESResult res;
  res.target = target;
  MolecularGraph g = parse_smiles(target);
  Fingerprint target_fp = morgan_fingerprint(g);
  double c0 = oracle_.value(target, g);
  res.original_property = c0;

  Array z = encode_target(target, c0);
  double best_property = c0;  // success requires strictly surpassing this
  std::optional<CandidateRecord> best;

  // phase one: condition search
  sweep_conditions(z, c0, target_fp, SESPhase::ConditionSearch, best_property,
                   best, res.condition_search_candidates);
  res.candidates_explored += res.condition_search_candidates;
  res.condition_search_property = best_property;
  // repositioning
  std::optional<Array> z_repositioned =
      reposition(z, c0, target_fp, best_property, best, rng);

  // phase two over both latent sets
  std::vector<Array> sets = {z};
  if (z_repositioned) sets.push_back(*z_repositioned);
  for (const Array& base : sets) {
    for (int r = 0; r < cfg_.phase_two_reps; ++r) {
      Array noisy = base;
      for (auto& x : noisy.data) x += rng.gaussian();
      sweep_conditions(noisy, c0, target_fp, SESPhase::PhaseTwo, best_property,
                       best, res.candidates_explored);
    }
  }

  res.best = best;
  return res;
}

SESResult dataset_search_baseline(const std::string& target,
                                  const PropertyOracle& oracle,
                                  const std::vector<std::string>& dataset,
                                  double threshold) {
  SESResult res;
  res.target = target;
  MolecularGraph g = parse_smiles(target);
  Fingerprint target_fp = morgan_fingerprint(g);
  double c0 = oracle.value(target, g);
  res.original_property = c0;
  double best_property = c0;
  for (const auto& s : dataset) {
    if (s == target) continue;
    MolecularGraph cg;
    try {
      cg = parse_smiles(s);
    } catch (const std::exception&) {
      continue;
    }
    double sim = tanimoto(morgan_fingerprint(cg), target_fp);
    if (sim < threshold) continue;
    double prop = oracle.value(s, cg);
    ++res.candidates_explored;
    if (prop > best_property) {
      best_property = prop;
      CandidateRecord rec;
      rec.smiles = s;
      rec.property = prop;
      rec.similarity = sim;
      rec.phase = SESPhase::ConditionSearch;
      res.best = rec;
    }
  }
  return res;
}

std::vector<CandidateRecord> random_search_baseline(
    const KaeModel& model, const PropertyOracle& oracle, int n_vectors,
    double cond_lo, double cond_hi, double cond_step, int beam,
    const std::string& target, double similarity_threshold, Rng& rng) {
  std::vector<CandidateRecord> out;
  if (n_vectors <= 0) return out;
  NoGradGuard ng;
  const ModelConfig& mc = model.config();
  Fingerprint target_fp = morgan_fingerprint(parse_smiles(target));
  BeamConfig bc{beam, mc.max_len};
  for (double c = cond_lo; c <= cond_hi + 1e-9; c += cond_step) {
    Array latents({n_vectors, mc.latent_positions, mc.embed});
    rng.fill_gaussian(latents);
    std::vector<double> conds(static_cast<size_t>(n_vectors), c);
    LatentCode z = model.latent_from_array(latents);
    Array memories = model.expand(z, &conds).value();
    auto step_fn = make_model_step(model, std::move(memories));
    auto beams = beam_decode_batch(step_fn, mc.vocab_size, model.vocab().sos_id(),
                                   model.vocab().eos_id(), model.vocab().pad_id(),
                                   bc, n_vectors);
    for (const auto& hyps : beams)
      for (const auto& h : hyps) {
        std::string s = detokenize_ids(h.ids, model.vocab());
        if (!is_valid(s)) continue;
        MolecularGraph cg = parse_smiles(s);
        double sim = tanimoto(morgan_fingerprint(cg), target_fp);
        if (sim < similarity_threshold) continue;
        CandidateRecord rec;
        rec.smiles = s;
        rec.property = oracle.value(s, cg);
        rec.similarity = sim;
        rec.phase = SESPhase::ConditionSearch;
        out.push_back(std::move(rec));
      }
  }
  return out;
}

}  // namespace kae
