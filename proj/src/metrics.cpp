#include "kae/metrics.hpp"

#include <algorithm>
#include <iostream>

#include "kae/smiles.hpp"

namespace kae {

double novelty(const std::vector<std::string>& generated,
               const std::set<std::string>& training) {
  if (generated.empty()) {
    std::cerr << "warning: novelty of empty generation set reported as 0\n";
    return 0.0;
  }
  size_t novel = 0;
  for (const auto& s : generated)
    if (!training.count(s)) ++novel;
  return static_cast<double>(novel) / static_cast<double>(generated.size());
}

double uniqueness(const std::vector<std::string>& generated) {
  if (generated.empty()) {
    std::cerr << "warning: uniqueness of empty generation set reported as 0\n";
    return 0.0;
  }
  std::set<std::string> distinct(generated.begin(), generated.end());
  return static_cast<double>(distinct.size()) /
         static_cast<double>(generated.size());
}

double validity(const std::vector<std::string>& generated) {
  if (generated.empty()) {
    std::cerr << "warning: validity of empty generation set reported as 0\n";
    return 0.0;
  }
  size_t valid = 0;
  for (const auto& s : generated)
    if (is_valid(s)) ++valid;
  return static_cast<double>(valid) / static_cast<double>(generated.size());
}

std::string select_from_beam(const std::vector<Hypothesis>& candidates,
                             const Vocabulary& vocab,
                             const std::set<std::string>& seen,
                             const std::set<std::string>& training) {
  if (candidates.empty())
    throw std::invalid_argument("select_from_beam: empty candidate list");
  std::string first_valid;
  bool have_valid = false;
  for (const auto& h : candidates) {
    std::string s = detokenize_ids(h.ids, vocab);
    bool valid = is_valid(s);
    if (valid && !have_valid) {
      first_valid = s;
      have_valid = true;
    }
    if (valid && !training.count(s) && !seen.count(s)) return s;
  }
  if (have_valid) return first_valid;
  return detokenize_ids(candidates.front().ids, vocab);
}

namespace {
constexpr int kChunk = 100;

Array expand_latents(const KaeModel& model, const Array& latents,
                     const std::vector<double>* conditions) {
  NoGradGuard ng;
  LatentCode z = model.latent_from_array(latents);
  return model.expand(z, conditions).value();
}
}  // namespace

std::vector<std::string> sample_strings(const KaeModel& model,
                                        const std::set<std::string>& training,
                                        int n, int beam, Rng& rng,
                                        const std::vector<double>* conditions) {
  const ModelConfig& cfg = model.config();
  std::vector<std::string> out;
  std::set<std::string> seen;
  BeamConfig bc{beam, cfg.max_len};
  for (int start = 0; start < n; start += kChunk) {
    int b = std::min(kChunk, n - start);
    Array latents({b, cfg.latent_positions, cfg.embed});
    rng.fill_gaussian(latents);
    std::vector<double> cond_slice;
    const std::vector<double>* cond_ptr = nullptr;
    if (conditions) {
      cond_slice.assign(conditions->begin() + start,
                        conditions->begin() + start + b);
      cond_ptr = &cond_slice;
    }
    Array memories = expand_latents(model, latents, cond_ptr);
    auto step = make_model_step(model, std::move(memories));
    auto beams = beam_decode_batch(step, cfg.vocab_size, model.vocab().sos_id(),
                                   model.vocab().eos_id(), model.vocab().pad_id(),
                                   bc, b);
    for (const auto& hyps : beams) {
      std::string s = select_from_beam(hyps, model.vocab(), seen, training);
      seen.insert(s);
      out.push_back(std::move(s));
    }
  }
  return out;
}

double reconstruction_rate(const KaeModel& model,
                           const std::vector<std::string>& test_set,
                           const std::vector<double>* conditions) {
  if (test_set.empty()) {
    std::cerr << "warning: reconstruction over empty set reported as 0\n";
    return 0.0;
  }
  const ModelConfig& cfg = model.config();
  NoGradGuard ng;
  size_t matched = 0;
  for (size_t start = 0; start < test_set.size();
       start += static_cast<size_t>(kChunk)) {
    size_t stop = std::min(test_set.size(), start + static_cast<size_t>(kChunk));
    int b = static_cast<int>(stop - start);
    std::vector<TokenSequence> seqs;
    for (size_t i = start; i < stop; ++i)
      seqs.push_back(tokenize(test_set[i], model.vocab()));
    PaddedBatch batch = pad_batch(seqs, cfg.max_len, model.vocab());
    std::vector<double> cond_slice;
    const std::vector<double>* cond_ptr = nullptr;
    if (conditions) {
      cond_slice.assign(conditions->begin() + static_cast<std::ptrdiff_t>(start),
                        conditions->begin() + static_cast<std::ptrdiff_t>(stop));
      cond_ptr = &cond_slice;
    }
    LatentCode z = model.encode(batch, cond_ptr);
    Array memories = model.expand(z, cond_ptr).value();
    auto step = make_model_step(model, std::move(memories));
    BeamConfig bc{1, cfg.max_len};
    auto beams = beam_decode_batch(step, cfg.vocab_size, model.vocab().sos_id(),
                                   model.vocab().eos_id(), model.vocab().pad_id(),
                                   bc, b);
    for (size_t i = 0; i < beams.size(); ++i) {
      std::string s = detokenize_ids(beams[i][0].ids, model.vocab());
      if (s == test_set[start + i]) ++matched;
    }
  }
  return static_cast<double>(matched) / static_cast<double>(test_set.size());
}

MetricsRecord evaluate_nuvr(const KaeModel& model,
                            const std::set<std::string>& training,
                            const std::vector<std::string>& test_set, int n,
                            int repeats, int beam, Rng& rng,
                            const std::vector<double>* conditions) {
  MetricsRecord rec;
  rec.sample_count = n;
  rec.repeats = repeats;
  for (int r = 0; r < repeats; ++r) {
    auto gen = sample_strings(model, training, n, beam, rng, conditions);
    rec.novelty += novelty(gen, training);
    rec.uniqueness += uniqueness(gen);
    rec.validity += validity(gen);
  }
  rec.novelty /= repeats;
  rec.uniqueness /= repeats;
  rec.validity /= repeats;
  rec.reconstruction = reconstruction_rate(model, test_set, nullptr);
  rec.nuv = rec.novelty * rec.uniqueness * rec.validity;
  rec.nuvr = rec.nuv * rec.reconstruction;
  return rec;
}

}  // namespace kae
