#include <doctest.h>

#include "kae/metrics.hpp"

using namespace kae;

namespace {

Hypothesis hyp(const Vocabulary& v, const std::string& s, double score) {
  Hypothesis h;
  h.ids.push_back(v.sos_id());
  for (char c : s) h.ids.push_back(v.id_of(c));
  h.ids.push_back(v.eos_id());
  h.nonpad_count = static_cast<int>(h.ids.size()) - 1;
  h.logprob_sum = score;
  h.finished = true;
  return h;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("novelty counts strings absent from training") {
  std::set<std::string> train = {"CC", "CCC"};
  CHECK(novelty({"CC", "CO", "CN"}, train) == doctest::Approx(2.0 / 3.0));
  CHECK(novelty({"CC", "CCC"}, train) == 0.0);
  CHECK(novelty({"CO"}, {}) == 1.0);
  CHECK(novelty({}, train) == 0.0);  // empty set reported as 0 with a warning
}

TEST_CASE("uniqueness counts distinct strings") {
  CHECK(uniqueness({"CC", "CC", "CO"}) == doctest::Approx(2.0 / 3.0));
  CHECK(uniqueness({"CC"}) == 1.0);
  CHECK(uniqueness({}) == 0.0);
}

TEST_CASE("validity applies the molecular checks") {
  CHECK(validity({"CC", "C(", "CCO", "cc"}) == doctest::Approx(0.5));
  CHECK(validity({}) == 0.0);
}

TEST_CASE("select_from_beam prefers novel unique valid candidates") {
  Vocabulary v = Vocabulary::build({"CCON("});
  std::set<std::string> train = {"CC"};
  std::set<std::string> seen = {"CO"};

  // first candidate novel+valid+unseen wins
  std::vector<Hypothesis> c1 = {hyp(v, "CN", -0.1), hyp(v, "CO", -0.2)};
  CHECK(select_from_beam(c1, v, seen, train) == "CN");

  // training member skipped in favor of a later novel valid one
  std::vector<Hypothesis> c2 = {hyp(v, "CC", -0.1), hyp(v, "OCC", -0.2)};
  CHECK(select_from_beam(c2, v, seen, train) == "OCC");

  // already-seen skipped the same way
  std::vector<Hypothesis> c3 = {hyp(v, "CO", -0.1), hyp(v, "OCO", -0.2)};
  CHECK(select_from_beam(c3, v, seen, train) == "OCO");

  // no novel candidate: fall back to the first valid one
  std::vector<Hypothesis> c4 = {hyp(v, "C(", -0.1), hyp(v, "CC", -0.2),
                                hyp(v, "CO", -0.3)};
  CHECK(select_from_beam(c4, v, seen, train) == "CC");

  // nothing valid: fall back to the top-ranked hypothesis
  std::vector<Hypothesis> c5 = {hyp(v, "C(", -0.1), hyp(v, "((", -0.2)};
  CHECK(select_from_beam(c5, v, seen, train) == "C(");

  CHECK_THROWS(select_from_beam({}, v, seen, train));
}

TEST_CASE("reconstruction_rate on an empty set is 0 with a warning") {
  Vocabulary v = Vocabulary::build({"CCO"});
  ModelConfig cfg;
  cfg.encoder_layers = 1;
  cfg.decoder_layers = 1;
  cfg.heads = 2;
  cfg.embed = 8;
  cfg.latent_positions = 2;
  cfg.ffn = 16;
  cfg.dropout = 0.0;
  cfg.max_len = 6;
  cfg.vocab_size = v.size();
  KaeModel model(cfg, v, Rng(1));
  CHECK(reconstruction_rate(model, {}, nullptr) == 0.0);
}

TEST_CASE("sample_strings is deterministic under a fixed seed") {
  Vocabulary v = Vocabulary::build({"CCO"});
  ModelConfig cfg;
  cfg.encoder_layers = 1;
  cfg.decoder_layers = 1;
  cfg.heads = 2;
  cfg.embed = 8;
  cfg.latent_positions = 2;
  cfg.ffn = 16;
  cfg.dropout = 0.0;
  cfg.max_len = 6;
  cfg.vocab_size = v.size();
  KaeModel model(cfg, v, Rng(1));
  Rng r1(9), r2(9);
  auto a = sample_strings(model, {}, 12, 2, r1, nullptr);
  auto b = sample_strings(model, {}, 12, 2, r2, nullptr);
  CHECK(a == b);
  CHECK(a.size() == 12);
}

}  // TEST_SUITE
