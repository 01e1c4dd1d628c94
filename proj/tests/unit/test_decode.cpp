#include <algorithm>
#include <cmath>

#include <doctest.h>

#include "kae/decode.hpp"

using namespace kae;

namespace {

constexpr int kT = 5;
constexpr int kEos = 2, kSos = 3, kPad = 4;

// deterministic pseudo-random log-softmax table keyed by (prefix, seed)
struct ToyStep {
  std::uint64_t seed;

  std::vector<double> logprobs(const std::vector<int>& prefix) const {
    std::uint64_t h = seed;
    for (int id : prefix) h = hash_combine(h, static_cast<std::uint64_t>(id) + 17);
    std::vector<double> logits(kT);
    for (int t = 0; t < kT; ++t) {
      std::uint64_t ht = hash_combine(h, static_cast<std::uint64_t>(t) + 101);
      logits[static_cast<size_t>(t)] =
          3.0 * (static_cast<double>(ht % 10007) / 10007.0 - 0.5);
    }
    double mx = *std::max_element(logits.begin(), logits.end());
    double s = 0.0;
    for (double x : logits) s += std::exp(x - mx);
    double lse = mx + std::log(s);
    for (auto& x : logits) x -= lse;
    return logits;
  }

  BatchStepFn fn() const {
    return [*this](const std::vector<int>& prefix_ids,
                   const std::vector<int>& lattice_of_row, int prefix_len) {
      int rows = static_cast<int>(lattice_of_row.size());
      Array out({rows, kT});
      for (int r = 0; r < rows; ++r) {
        std::vector<int> prefix(
            prefix_ids.begin() + static_cast<size_t>(r) * prefix_len,
            prefix_ids.begin() + static_cast<size_t>(r + 1) * prefix_len);
        auto lp = logprobs(prefix);
        for (int t = 0; t < kT; ++t)
          out.data[static_cast<size_t>(r) * kT + t] = lp[static_cast<size_t>(t)];
      }
      return out;
    };
  }
};

// exhaustive enumeration of every hypothesis the beam could produce
void enumerate(const ToyStep& step, std::vector<int> prefix, double logprob,
               int max_len, std::vector<Hypothesis>& out) {
  auto lp = step.logprobs(prefix);
  for (int t = 0; t < kT; ++t) {
    if (t == kSos || t == kPad) continue;
    Hypothesis h;
    h.ids = prefix;
    h.ids.push_back(t);
    h.logprob_sum = logprob + lp[static_cast<size_t>(t)];
    h.nonpad_count = static_cast<int>(h.ids.size()) - 1;
    h.finished = true;
    if (t == kEos || static_cast<int>(h.ids.size()) >= max_len)
      out.push_back(h);
    else
      enumerate(step, h.ids, h.logprob_sum, max_len, out);
  }
}

bool better(const Hypothesis& a, const Hypothesis& b) {
  double sa = hypothesis_score(a), sb = hypothesis_score(b);
  if (sa != sb) return sa > sb;
  return a.ids < b.ids;
}

double rescore(const ToyStep& step, const std::vector<int>& ids) {
  double sum = 0.0;
  for (size_t i = 1; i < ids.size(); ++i) {
    std::vector<int> prefix(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(i));
    sum += step.logprobs(prefix)[static_cast<size_t>(ids[i])];
  }
  return sum / std::sqrt(static_cast<double>(ids.size() - 1));
}

}  // namespace

TEST_SUITE("decode") {

TEST_CASE("hypothesis_score normalizes by sqrt length") {
  Hypothesis h;
  h.ids = {kSos, 0, 1, kEos};
  h.logprob_sum = -3.0;
  h.nonpad_count = 3;
  CHECK(hypothesis_score(h) == doctest::Approx(-3.0 / std::sqrt(3.0)));
  h.nonpad_count = 0;
  CHECK_THROWS(hypothesis_score(h));
}

TEST_CASE("input validation") {
  ToyStep step{1};
  BeamConfig cfg{0, 4};
  CHECK_THROWS(beam_decode(step.fn(), kT, kSos, kEos, kPad, cfg));
  cfg = {1, 1};
  CHECK_THROWS(beam_decode(step.fn(), kT, kSos, kEos, kPad, cfg));
}

TEST_CASE("beam width 1 equals greedy decoding") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    ToyStep step{seed};
    BeamConfig cfg{1, 6};
    auto beam = beam_decode(step.fn(), kT, kSos, kEos, kPad, cfg);
    auto greedy = greedy_decode(step.fn(), kT, kSos, kEos, kPad, 6);
    REQUIRE(!beam.empty());
    CHECK(beam[0].ids == greedy);

    // manual greedy walk
    std::vector<int> manual = {kSos};
    while (static_cast<int>(manual.size()) < 6) {
      auto lp = step.logprobs(manual);
      int best = -1;
      double bv = -1e300;
      for (int t = 0; t < kT; ++t) {
        if (t == kSos || t == kPad) continue;
        if (lp[static_cast<size_t>(t)] > bv) {
          bv = lp[static_cast<size_t>(t)];
          best = t;
        }
      }
      manual.push_back(best);
      if (best == kEos) break;
    }
    CHECK(greedy == manual);
  }
}

TEST_CASE("returned scores match independent rescoring") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ToyStep step{seed};
    BeamConfig cfg{4, 6};
    auto beam = beam_decode(step.fn(), kT, kSos, kEos, kPad, cfg);
    for (const auto& h : beam) {
      CHECK(h.finished);
      CHECK(std::abs(hypothesis_score(h) - rescore(step, h.ids)) <= 1e-9);
    }
  }
}

TEST_CASE("full-width beam matches exhaustive enumeration") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ToyStep step{seed};
    std::vector<Hypothesis> all;
    enumerate(step, {kSos}, 0.0, 4, all);
    std::sort(all.begin(), all.end(), better);
    REQUIRE(all.size() == 15);  // 1 + 2 + 12 terminal sequences at M=4

    BeamConfig cfg{15, 4};
    auto beam = beam_decode(step.fn(), kT, kSos, kEos, kPad, cfg);
    REQUIRE(beam.size() == all.size());
    for (size_t i = 0; i < all.size(); ++i) {
      CHECK(beam[i].ids == all[i].ids);
      CHECK(hypothesis_score(beam[i]) ==
            doctest::Approx(hypothesis_score(all[i])).epsilon(1e-12));
    }
  }
}

TEST_CASE("results are sorted and deterministic") {
  ToyStep step{42};
  BeamConfig cfg{8, 6};
  auto a = beam_decode(step.fn(), kT, kSos, kEos, kPad, cfg);
  auto b = beam_decode(step.fn(), kT, kSos, kEos, kPad, cfg);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].ids == b[i].ids);
  for (size_t i = 1; i < a.size(); ++i)
    CHECK(hypothesis_score(a[i - 1]) >= hypothesis_score(a[i]));
}

TEST_CASE("expansion excludes SOS and PAD") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ToyStep step{seed};
    BeamConfig cfg{8, 6};
    auto beam = beam_decode(step.fn(), kT, kSos, kEos, kPad, cfg);
    for (const auto& h : beam)
      for (size_t i = 1; i < h.ids.size(); ++i) {
        CHECK(h.ids[i] != kSos);
        CHECK(h.ids[i] != kPad);
      }
  }
}

TEST_CASE("batched lattices decode independently") {
  ToyStep s0{7}, s1{8};
  // one shared fn that dispatches per lattice
  BatchStepFn fn = [&](const std::vector<int>& prefix_ids,
                       const std::vector<int>& lattice_of_row, int prefix_len) {
    int rows = static_cast<int>(lattice_of_row.size());
    Array out({rows, kT});
    for (int r = 0; r < rows; ++r) {
      std::vector<int> prefix(
          prefix_ids.begin() + static_cast<size_t>(r) * prefix_len,
          prefix_ids.begin() + static_cast<size_t>(r + 1) * prefix_len);
      const ToyStep& s = lattice_of_row[static_cast<size_t>(r)] == 0 ? s0 : s1;
      auto lp = s.logprobs(prefix);
      for (int t = 0; t < kT; ++t)
        out.data[static_cast<size_t>(r) * kT + t] = lp[static_cast<size_t>(t)];
    }
    return out;
  };
  BeamConfig cfg{4, 6};
  auto both = beam_decode_batch(fn, kT, kSos, kEos, kPad, cfg, 2);
  auto solo0 = beam_decode(s0.fn(), kT, kSos, kEos, kPad, cfg);
  auto solo1 = beam_decode(s1.fn(), kT, kSos, kEos, kPad, cfg);
  REQUIRE(both[0].size() == solo0.size());
  REQUIRE(both[1].size() == solo1.size());
  for (size_t i = 0; i < solo0.size(); ++i) CHECK(both[0][i].ids == solo0[i].ids);
  for (size_t i = 0; i < solo1.size(); ++i) CHECK(both[1][i].ids == solo1[i].ids);
}

}  // TEST_SUITE
