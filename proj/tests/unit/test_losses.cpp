#include <cmath>

#include <doctest.h>

#include "gradcheck.hpp"
#include "kae/losses.hpp"

using namespace kae;
using kae::testing::gradcheck;

namespace {

Array random_array(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Array a(std::move(shape));
  for (auto& x : a.data) x = rng.gaussian() * scale;
  return a;
}

double mmd_oracle_modified(const Array& x, const Array& y, double lambda,
                           double two_sigma_sq) {
  int nx = x.dim(0), ny = y.dim(0), d = x.dim(1);
  double cross = 0.0;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      std::vector<double> a(x.data.begin() + static_cast<size_t>(i) * d,
                            x.data.begin() + static_cast<size_t>(i + 1) * d);
      std::vector<double> b(y.data.begin() + static_cast<size_t>(j) * d,
                            y.data.begin() + static_cast<size_t>(j + 1) * d);
      cross += rbf_kernel(a, b, two_sigma_sq);
    }
  cross /= static_cast<double>(nx) * ny;
  return lambda * (1.0 - cross);
}

double mmd_oracle_standard(const Array& x, const Array& y, double lambda,
                           double two_sigma_sq) {
  int nx = x.dim(0), ny = y.dim(0), d = x.dim(1);
  double self = 0.0, cross = 0.0;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < nx; ++j) {
      std::vector<double> a(x.data.begin() + static_cast<size_t>(i) * d,
                            x.data.begin() + static_cast<size_t>(i + 1) * d);
      std::vector<double> b(x.data.begin() + static_cast<size_t>(j) * d,
                            x.data.begin() + static_cast<size_t>(j + 1) * d);
      self += rbf_kernel(a, b, two_sigma_sq);
    }
  self /= static_cast<double>(nx) * nx;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      std::vector<double> a(x.data.begin() + static_cast<size_t>(i) * d,
                            x.data.begin() + static_cast<size_t>(i + 1) * d);
      std::vector<double> b(y.data.begin() + static_cast<size_t>(j) * d,
                            y.data.begin() + static_cast<size_t>(j + 1) * d);
      cross += rbf_kernel(a, b, two_sigma_sq);
    }
  cross /= static_cast<double>(nx) * ny;
  return lambda * (self - 2.0 * cross);
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("rbf kernel identities") {
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> a, b;
    for (int d = 0; d < 8; ++d) {
      a.push_back(rng.gaussian());
      b.push_back(rng.gaussian());
    }
    CHECK(rbf_kernel(a, a, 0.64) == 1.0);
    CHECK(rbf_kernel(a, b, 0.64) == rbf_kernel(b, a, 0.64));
    CHECK(rbf_kernel(a, b, 0.64) > 0.0);
    CHECK(rbf_kernel(a, b, 0.64) <= 1.0);
  }
}

TEST_CASE("rbf kernel hand value") {
  // D=1, |a-b|^2 = 1, 2sigma^2 = 0.64: exp(-1/0.64) = exp(-1.5625)
  CHECK(rbf_kernel({0.0}, {1.0}, 0.64) ==
        doctest::Approx(std::exp(-1.5625)).epsilon(1e-15));
  // D=4 with the same total distance divides by D
  CHECK(rbf_kernel({0, 0, 0, 0}, {0.5, 0.5, 0.5, 0.5}, 0.64) ==
        doctest::Approx(std::exp(-1.0 / (4.0 * 0.64))).epsilon(1e-15));
}

TEST_CASE("mmd losses match double-loop oracles") {
  Rng rng(2);
  Array x = random_array({32, 16}, rng);
  Array y = random_array({32, 16}, rng);
  Tensor xt = Tensor::constant(x);
  for (double lambda : {0.5, 1.0, 4.0}) {
    double m = m_mmd(xt, y, lambda, 0.64).value().at(0);
    double mo = mmd_oracle_modified(x, y, lambda, 0.64);
    CHECK(std::abs(m - mo) / std::max(1.0, std::abs(mo)) <= 1e-10);
    double s = s_mmd(xt, y, lambda, 0.64).value().at(0);
    double so = mmd_oracle_standard(x, y, lambda, 0.64);
    CHECK(std::abs(s - so) / std::max(1.0, std::abs(so)) <= 1e-10);
  }
}

TEST_CASE("wcel with lambda=1 delta=-1 equals noisy cel exactly") {
  Rng rng(3);
  for (int t = 0; t < 5; ++t) {
    Array ln = random_array({2, 3, 5}, rng);
    Array lc = random_array({2, 3, 5}, rng);
    std::vector<int> labels = {0, 1, 2, 3, 4, 0};
    Array pad({2, 3});
    pad.data[5] = 1.0;
    Tensor noisy = Tensor::constant(ln), clean = Tensor::constant(lc);
    double w = wcel(noisy, clean, labels, pad, 1.0, -1.0).value().at(0);
    double c = cel(noisy, labels, pad).value().at(0);
    CHECK(w == c);
  }
}

TEST_CASE("wcel collapses to cel when both logit sets agree") {
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    Array lv = random_array({2, 4, 6}, rng);
    std::vector<int> labels;
    for (int i = 0; i < 8; ++i)
      labels.push_back(static_cast<int>(rng.below(6)));
    Array pad({2, 4});
    Tensor logits = Tensor::constant(lv);
    double lambda = rng.gaussian() * 2.0;
    double delta = rng.gaussian() * 2.0;
    if (std::abs(lambda + delta + 1.0) < 0.2) { --t; continue; }
    double w = wcel(logits, logits, labels, pad, lambda, delta).value().at(0);
    double c = cel(logits, labels, pad).value().at(0);
    CHECK(w == doctest::Approx(c).epsilon(1e-12));
  }
}

TEST_CASE("loss config validation") {
  LossConfig cfg;
  cfg.lambda = 1.0;
  cfg.delta = -2.0;  // lambda + delta + 1 = 0 would break the wcel weights
  CHECK_THROWS(cfg.validate());
  cfg.delta = 1.0;
  cfg.two_sigma_sq = 0.0;
  CHECK_THROWS(cfg.validate());
  cfg = LossConfig{};
  CHECK_NOTHROW(cfg.validate());
  CHECK(LossConfig::bandwidth_scaled(128) == doctest::Approx(0.064));
}

TEST_CASE("cel gradients match finite differences") {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    Tensor logits = Tensor::param(random_array({2, 3, 4}, rng));
    std::vector<int> labels;
    for (int i = 0; i < 6; ++i) labels.push_back(static_cast<int>(rng.below(4)));
    Array pad({2, 3});
    pad.data[static_cast<size_t>(rng.below(6))] = 1.0;
    gradcheck({logits}, [&] { return cel(logits, labels, pad); });
  }
}

TEST_CASE("wcel gradients match finite differences at three settings") {
  Rng rng(6);
  const double settings[3][2] = {{1.0, -1.0}, {3.5, 1.0}, {0.5, 2.0}};
  for (auto [lambda, delta] : settings) {
    for (int t = 0; t < 20; ++t) {
      Tensor noisy = Tensor::param(random_array({2, 3, 4}, rng));
      Tensor clean = Tensor::param(random_array({2, 3, 4}, rng));
      std::vector<int> labels;
      for (int i = 0; i < 6; ++i)
        labels.push_back(static_cast<int>(rng.below(4)));
      Array pad({2, 3});
      gradcheck({noisy, clean}, [&] {
        return wcel(noisy, clean, labels, pad, lambda, delta);
      });
    }
  }
}

TEST_CASE("mmd gradients match finite differences") {
  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    Tensor x = Tensor::param(random_array({4, 3}, rng));
    Array y = random_array({5, 3}, rng);
    gradcheck({x}, [&] { return m_mmd(x, y, 2.0, 0.64); });
    gradcheck({x}, [&] { return s_mmd(x, y, 2.0, 0.64); });
  }
}

TEST_CASE("kl loss value and gradients") {
  // closed form at mean 0, sigma 1 is zero
  Tensor mu = Tensor::constant(Array({2, 3}, 0.0));
  Tensor sg = Tensor::constant(Array({2, 3}, 1.0));
  CHECK(kl_loss(mu, sg).value().at(0) == doctest::Approx(0.0));

  // hand value: one element, mean m, sigma s
  Tensor m1 = Tensor::constant(Array({1, 1}, 0.5));
  Tensor s1 = Tensor::constant(Array({1, 1}, 2.0));
  double expect = 0.5 * (0.25 + 4.0 - 1.0 - std::log(4.0));
  CHECK(kl_loss(m1, s1).value().at(0) == doctest::Approx(expect).epsilon(1e-12));

  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    Tensor mean = Tensor::param(random_array({3, 4}, rng));
    Array sv = random_array({3, 4}, rng);
    for (auto& x : sv.data) x = std::abs(x) + 0.3;
    Tensor sigma = Tensor::param(sv);
    gradcheck({mean, sigma}, [&] { return kl_loss(mean, sigma); });
  }

  Tensor bad = Tensor::constant(Array({1, 1}, -1.0));
  CHECK_THROWS(kl_loss(m1, bad));
}

TEST_CASE("total_loss composes wcel and the latent term") {
  Rng rng(9);
  TotalLossInputs in;
  in.logits_noisy = Tensor::constant(random_array({2, 3, 4}, rng));
  in.logits_clean = Tensor::constant(random_array({2, 3, 4}, rng));
  in.labels = {0, 1, 2, 3, 0, 1};
  in.pad_mask = Array({2, 3});
  in.latents_flat = Tensor::constant(random_array({2, 6}, rng));
  in.gaussians = random_array({8, 6}, rng);

  LossConfig cfg;
  cfg.lambda = 2.0;
  cfg.delta = 0.5;
  LossReport rep = total_loss(in, cfg);
  CHECK(rep.total.value().at(0) ==
        doctest::Approx(rep.wcel.value().at(0) + rep.latent_term.value().at(0))
            .epsilon(1e-12));
  double expect_latent = mmd_oracle_modified(in.latents_flat.value(),
                                             in.gaussians, 2.0, 0.64);
  CHECK(rep.latent_term.value().at(0) ==
        doctest::Approx(expect_latent).epsilon(1e-10));

  cfg.objective = LatentObjective::MMD_Standard;
  rep = total_loss(in, cfg);
  double expect_s = mmd_oracle_standard(in.latents_flat.value(), in.gaussians,
                                        2.0, 0.64);
  CHECK(rep.latent_term.value().at(0) ==
        doctest::Approx(expect_s).epsilon(1e-10));
}

}  // TEST_SUITE
