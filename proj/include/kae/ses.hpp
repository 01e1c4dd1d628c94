#pragma once

#include <optional>

#include "kae/decode.hpp"
#include "kae/fingerprint.hpp"
#include "kae/oracle.hpp"

namespace kae {

struct SESConfig {
  int beam = 15;               // B
  double step = 0.1;           // delta_s, property units
  double max_increase = 20.0;  // Delta
  int phase_two_reps = 4;      // R
  int reposition_iters = 100;
  double similarity_threshold = 0.4;

  void validate() const;
  int condition_steps() const;  // Delta / delta_s
  // B + B * Delta / delta_s
  int condition_search_candidates() const;
};

enum class SESPhase { ConditionSearch, Reposition, PhaseTwo };

struct CandidateRecord {
  std::string smiles;
  double property = 0.0;
  double similarity = 0.0;
  SESPhase phase = SESPhase::ConditionSearch;
};

struct SESResult {
  std::string target;
  double original_property = 0.0;
  std::optional<CandidateRecord> best;  // present iff property improved
  int candidates_explored = 0;
  int condition_search_candidates = 0;  // phase-one portion of the total
  // best constrained property after phase one only (the original when none)
  double condition_search_property = 0.0;
};

class SimilarityExhaustionSearch {
 public:
  SimilarityExhaustionSearch(const KaeModel& model, PropertyOracle oracle,
                             SESConfig cfg);

  // full pipeline: condition search, repositioning, phase two
  SESResult optimize(const std::string& target, Rng& rng) const;

  // individual stages (exposed for inspection and tests)
  struct Stage {
    std::optional<CandidateRecord> best;
    Array latent;  // [1, L, E]
    int candidates = 0;
  };
  Stage condition_search(const std::string& target, const Array& latent,
                         double base_condition,
                         const Fingerprint& target_fp) const;
  // returns repositioned latent when any accepted move improved the best
  std::optional<Array> reposition(const Array& latent, double condition,
                                  const Fingerprint& target_fp,
                                  double& best_property,
                                  std::optional<CandidateRecord>& best,
                                  Rng& rng) const;

  Array encode_target(const std::string& target, double condition) const;
  const SESConfig& config() const { return cfg_; }

 private:
  // beam-decodes one latent over the condition grid, scoring candidates
  void sweep_conditions(const Array& latent, double base_condition,
                        const Fingerprint& target_fp, SESPhase phase,
                        double& best_property,
                        std::optional<CandidateRecord>& best,
                        int& explored) const;
  void score_candidates(const std::vector<Hypothesis>& hyps,
                        const Fingerprint& target_fp, SESPhase phase,
                        double& best_property,
                        std::optional<CandidateRecord>& best) const;

  const KaeModel& model_;
  PropertyOracle oracle_;
  SESConfig cfg_;
};

// exhaustive scan of a dataset for the best property under the constraint
SESResult dataset_search_baseline(
    const std::string& target, const PropertyOracle& oracle,
    const std::vector<std::string>& dataset, double threshold);

// samples latents per condition grid point and beam-decodes them
std::vector<CandidateRecord> random_search_baseline(
    const KaeModel& model, const PropertyOracle& oracle, int n_vectors,
    double cond_lo, double cond_hi, double cond_step, int beam,
    const std::string& target, double similarity_threshold, Rng& rng);

}  // namespace kae
