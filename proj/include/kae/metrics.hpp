#pragma once

#include <set>
#include <string>
#include <vector>

#include "kae/decode.hpp"

namespace kae {

struct MetricsRecord {
  double novelty = 0.0;
  double uniqueness = 0.0;
  double validity = 0.0;
  double reconstruction = 0.0;
  double nuv = 0.0;
  double nuvr = 0.0;
  int sample_count = 0;
  int repeats = 0;
};

// exact string matching; no canonicalization
double novelty(const std::vector<std::string>& generated,
               const std::set<std::string>& training);
double uniqueness(const std::vector<std::string>& generated);
double validity(const std::vector<std::string>& generated);

// Beam-output policy: first candidate that is novel+unique+valid, else first
// valid, else the top-ranked hypothesis.
std::string select_from_beam(const std::vector<Hypothesis>& candidates,
                             const Vocabulary& vocab,
                             const std::set<std::string>& seen,
                             const std::set<std::string>& training);

// Decodes the test set without noise and counts exact string matches.
double reconstruction_rate(const KaeModel& model,
                           const std::vector<std::string>& test_set,
                           const std::vector<double>* conditions);

// Gaussian-samples n latents, beam-decodes, applies the selection policy, and
// averages N/U/V over `repeats` draws; reconstruction over the test set.
MetricsRecord evaluate_nuvr(const KaeModel& model,
                            const std::set<std::string>& training,
                            const std::vector<std::string>& test_set, int n,
                            int repeats, int beam, Rng& rng,
                            const std::vector<double>* conditions = nullptr);

// one evaluation pass (one repeat) returning the selected strings
std::vector<std::string> sample_strings(const KaeModel& model,
                                        const std::set<std::string>& training,
                                        int n, int beam, Rng& rng,
                                        const std::vector<double>* conditions =
                                            nullptr);

}  // namespace kae
