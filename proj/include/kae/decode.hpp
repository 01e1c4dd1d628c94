#pragma once

#include <functional>

#include "kae/model.hpp"

namespace kae {

struct Hypothesis {
  std::vector<int> ids;      // starts with SOS
  double logprob_sum = 0.0;  // over generated non-pad tokens
  int nonpad_count = 0;      // N_i
  bool finished = false;
};

// P_i = logprob_sum / sqrt(N_i)
double hypothesis_score(const Hypothesis& h);

struct BeamConfig {
  int beam_size = 1;
  int max_len = 0;
};

// Model abstraction for decoding: given flat prefixes [rows, prefix_len] and
// the lattice index of each row, return next-token log-probabilities [rows, T].
using BatchStepFn =
    std::function<Array(const std::vector<int>& prefix_ids,
                        const std::vector<int>& lattice_of_row, int prefix_len)>;

// Length-normalized beam search over independent lattices in lockstep.
// Expansion covers all tokens except SOS and PAD; EOS (or reaching max_len)
// finishes a hypothesis, which keeps its beam slot at its frozen score.
// Ties break lexicographically on token ids.
std::vector<std::vector<Hypothesis>> beam_decode_batch(
    const BatchStepFn& step, int vocab_size, int sos_id, int eos_id, int pad_id,
    const BeamConfig& cfg, int n_lattices);

std::vector<Hypothesis> beam_decode(const BatchStepFn& step, int vocab_size,
                                    int sos_id, int eos_id, int pad_id,
                                    const BeamConfig& cfg);

// argmax decoding; equals beam_decode with B=1, top-1
std::vector<int> greedy_decode(const BatchStepFn& step, int vocab_size,
                               int sos_id, int eos_id, int pad_id, int max_len);

// Adapts a model + decoder memories [n, M, E] to the step interface.
BatchStepFn make_model_step(const KaeModel& model, Array memories);

}  // namespace kae
