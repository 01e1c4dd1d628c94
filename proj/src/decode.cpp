#include "kae/decode.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kae {

double hypothesis_score(const Hypothesis& h) {
  if (h.nonpad_count < 1)
    throw std::invalid_argument("hypothesis_score: no generated tokens");
  return h.logprob_sum / std::sqrt(static_cast<double>(h.nonpad_count));
}

namespace {
bool better(const Hypothesis& a, const Hypothesis& b) {
  double sa = hypothesis_score(a), sb = hypothesis_score(b);
  if (sa != sb) return sa > sb;
  return a.ids < b.ids;
}
}  // namespace

std::vector<std::vector<Hypothesis>> beam_decode_batch(
    const BatchStepFn& step, int vocab_size, int sos_id, int eos_id, int pad_id,
    const BeamConfig& cfg, int n_lattices) {
  int B = cfg.beam_size;
  int M = cfg.max_len;
  if (B < 1) throw std::invalid_argument("beam_decode: beam size must be >= 1");
  if (M < 2) throw std::invalid_argument("beam_decode: max_len too small");

  std::vector<std::vector<Hypothesis>> beams(static_cast<size_t>(n_lattices));
  for (auto& beam : beams) {
    Hypothesis h;
    h.ids = {sos_id};
    beam.push_back(h);
  }

  for (int len = 1; len < M; ++len) {
    // gather unfinished hypotheses across lattices
    std::vector<int> rows_lattice;
    std::vector<std::pair<int, int>> rows_hyp;  // (lattice, hyp index)
    std::vector<int> prefix_ids;
    for (int li = 0; li < n_lattices; ++li)
      for (size_t hi = 0; hi < beams[static_cast<size_t>(li)].size(); ++hi) {
        const Hypothesis& h = beams[static_cast<size_t>(li)][hi];
        if (h.finished) continue;
        rows_lattice.push_back(li);
        rows_hyp.push_back({li, static_cast<int>(hi)});
        prefix_ids.insert(prefix_ids.end(), h.ids.begin(), h.ids.end());
      }
    if (rows_lattice.empty()) break;
    Array logprobs = step(prefix_ids, rows_lattice, len);
    if (logprobs.ndim() != 2 ||
        logprobs.dim(0) != static_cast<int>(rows_lattice.size()) ||
        logprobs.dim(1) != vocab_size)
      throw std::runtime_error("beam_decode: step function shape mismatch");

    // per-lattice candidate pools
    std::vector<std::vector<Hypothesis>> pools(static_cast<size_t>(n_lattices));
    for (int li = 0; li < n_lattices; ++li)
      for (const Hypothesis& h : beams[static_cast<size_t>(li)])
        if (h.finished) pools[static_cast<size_t>(li)].push_back(h);
    for (size_t r = 0; r < rows_hyp.size(); ++r) {
      auto [li, hi] = rows_hyp[r];
      const Hypothesis& h = beams[static_cast<size_t>(li)][static_cast<size_t>(hi)];
      const double* lp = logprobs.data.data() + r * static_cast<size_t>(vocab_size);
      for (int t = 0; t < vocab_size; ++t) {
        if (t == sos_id || t == pad_id) continue;
        Hypothesis c = h;
        c.ids.push_back(t);
        c.logprob_sum += lp[t];
        c.nonpad_count += 1;
        if (t == eos_id || static_cast<int>(c.ids.size()) >= M)
          c.finished = true;
        pools[static_cast<size_t>(li)].push_back(std::move(c));
      }
    }
    for (int li = 0; li < n_lattices; ++li) {
      auto& pool = pools[static_cast<size_t>(li)];
      std::sort(pool.begin(), pool.end(), better);
      if (static_cast<int>(pool.size()) > B) pool.resize(static_cast<size_t>(B));
      beams[static_cast<size_t>(li)] = std::move(pool);
    }
    bool any_open = false;
    for (const auto& beam : beams)
      for (const auto& h : beam)
        if (!h.finished) any_open = true;
    if (!any_open) break;
  }

  for (auto& beam : beams) {
    for (auto& h : beam) h.finished = true;
    std::sort(beam.begin(), beam.end(), better);
  }
  return beams;
}

std::vector<Hypothesis> beam_decode(const BatchStepFn& step, int vocab_size,
                                    int sos_id, int eos_id, int pad_id,
                                    const BeamConfig& cfg) {
  return beam_decode_batch(step, vocab_size, sos_id, eos_id, pad_id, cfg, 1)[0];
}

std::vector<int> greedy_decode(const BatchStepFn& step, int vocab_size,
                               int sos_id, int eos_id, int pad_id, int max_len) {
  BeamConfig cfg;
  cfg.beam_size = 1;
  cfg.max_len = max_len;
  return beam_decode(step, vocab_size, sos_id, eos_id, pad_id, cfg)[0].ids;
}

BatchStepFn make_model_step(const KaeModel& model, Array memories) {
  if (memories.ndim() != 3)
    throw std::invalid_argument("make_model_step: expect memories [n, M, E]");
  return [&model, memories = std::move(memories)](
             const std::vector<int>& prefix_ids,
             const std::vector<int>& lattice_of_row, int prefix_len) {
    NoGradGuard ng;
    int rows = static_cast<int>(lattice_of_row.size());
    int M = memories.dim(1), E = memories.dim(2);
    Array mem({rows, M, E});
    for (int r = 0; r < rows; ++r)
      std::copy(memories.data.begin() +
                    static_cast<size_t>(lattice_of_row[static_cast<size_t>(r)]) *
                        M * E,
                memories.data.begin() +
                    static_cast<size_t>(lattice_of_row[static_cast<size_t>(r)] + 1) *
                        M * E,
                mem.data.begin() + static_cast<size_t>(r) * M * E);
    Array pad_mask({rows, prefix_len});  // no pads in decode prefixes
    Tensor logits = model.decode_logits(Tensor::constant(std::move(mem)),
                                        prefix_ids, pad_mask, rows, prefix_len);
    // last position, log-softmax
    const Array& lv = logits.value();
    int T = lv.dim(2);
    Array out({rows, T});
    for (int r = 0; r < rows; ++r) {
      const double* xi =
          lv.data.data() +
          ((static_cast<size_t>(r) * prefix_len) + (prefix_len - 1)) * T;
      double mx = xi[0];
      for (int j = 1; j < T; ++j) mx = std::max(mx, xi[j]);
      double s = 0.0;
      for (int j = 0; j < T; ++j) s += std::exp(xi[j] - mx);
      double lse = mx + std::log(s);
      for (int j = 0; j < T; ++j)
        out.data[static_cast<size_t>(r) * T + j] = xi[j] - lse;
    }
    return out;
  };
}

}  // namespace kae
