#include <cmath>

#include <doctest.h>

#include "gradcheck.hpp"
#include "kae/tape.hpp"

using namespace kae;
using kae::testing::gradcheck;

namespace {

Array random_array(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Array a(std::move(shape));
  for (auto& x : a.data) x = rng.gaussian() * scale;
  return a;
}

}  // namespace

TEST_SUITE("tape") {

TEST_CASE("elementwise ops match finite differences") {
  Rng rng(1);
  Tensor a = Tensor::param(random_array({3, 4}, rng));
  Tensor b = Tensor::param(random_array({3, 4}, rng));
  gradcheck({a, b}, [&] {
    Tensor t = add(mul(a, b), scale(sub(a, b), 0.7));
    t = add_const(t, 0.3);
    t = mul(t, exp_t(scale(a, 0.1)));
    return mean_all(square(t));
  });
}

TEST_CASE("relu and log match finite differences") {
  Rng rng(2);
  Array av = random_array({5}, rng);
  for (auto& x : av.data) x += (x >= 0 ? 0.5 : -0.5);  // keep off the kink
  Tensor a = Tensor::param(av);
  gradcheck({a}, [&] { return sum_all(relu(a)); });
  Array pv = random_array({5}, rng);
  for (auto& x : pv.data) x = std::abs(x) + 0.5;
  Tensor p = Tensor::param(pv);
  gradcheck({p}, [&] { return sum_all(log_t(p)); });
}

TEST_CASE("linear and matmul match finite differences") {
  Rng rng(3);
  Tensor x = Tensor::param(random_array({2, 3, 4}, rng));
  Tensor w = Tensor::param(random_array({4, 5}, rng));
  Tensor b = Tensor::param(random_array({5}, rng));
  gradcheck({x, w, b}, [&] { return mean_all(square(linear(x, w, b))); });

  Tensor m1 = Tensor::param(random_array({3, 4}, rng));
  Tensor m2 = Tensor::param(random_array({4, 2}, rng));
  gradcheck({m1, m2}, [&] { return sum_all(matmul(m1, m2)); });
}

TEST_CASE("seq_linear and bmm match finite differences") {
  Rng rng(4);
  Tensor x = Tensor::param(random_array({2, 5, 3}, rng));
  Tensor w = Tensor::param(random_array({4, 5}, rng));
  Tensor b = Tensor::param(random_array({4, 3}, rng));
  gradcheck({x, w, b}, [&] { return mean_all(square(seq_linear(x, w, b))); });

  Tensor p = Tensor::param(random_array({2, 3, 4}, rng));
  Tensor q = Tensor::param(random_array({2, 4, 5}, rng));
  gradcheck({p, q}, [&] { return mean_all(square(bmm(p, q))); });
  Tensor r = Tensor::param(random_array({2, 5, 4}, rng));
  gradcheck({p, r}, [&] { return mean_all(square(bmm_nt(p, r))); });
}

TEST_CASE("layer_norm matches finite differences") {
  Rng rng(5);
  Tensor x = Tensor::param(random_array({2, 3, 6}, rng));
  Tensor g = Tensor::param(random_array({6}, rng, 0.3));
  Tensor b = Tensor::param(random_array({6}, rng));
  gradcheck({x, g, b},
            [&] { return mean_all(square(layer_norm(x, g, b))); }, 1e-5, 2e-4);
}

TEST_CASE("softmax and masking match finite differences") {
  Rng rng(6);
  Tensor s = Tensor::param(random_array({2, 2, 3, 4}, rng));
  Array key_mask({2, 4});
  key_mask.data[1] = 1.0;
  key_mask.data[6] = 1.0;
  gradcheck({s}, [&] {
    Tensor t = softmax_lastdim(mask_scores(s, &key_mask, false));
    return mean_all(square(t));
  });
  gradcheck({s}, [&] {
    Tensor t = softmax_lastdim(mask_scores(s, nullptr, true));
    return mean_all(square(t));
  });
}

TEST_CASE("masked positions get zero attention") {
  Rng rng(7);
  Tensor s = Tensor::constant(random_array({1, 1, 2, 3}, rng));
  Array key_mask({1, 3});
  key_mask.data[2] = 1.0;
  Tensor p = softmax_lastdim(mask_scores(s, &key_mask, false));
  CHECK(p.value().at(2) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p.value().at(5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p.value().at(0) + p.value().at(1) == doctest::Approx(1.0));
}

TEST_CASE("causal mask blocks future keys") {
  Rng rng(8);
  Tensor s = Tensor::constant(random_array({1, 1, 3, 3}, rng));
  Tensor p = softmax_lastdim(mask_scores(s, nullptr, true));
  CHECK(p.value().at(1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p.value().at(2) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p.value().at(5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p.value().at(0) == doctest::Approx(1.0));
}

TEST_CASE("embedding gathers rows and scatters gradients") {
  Rng rng(9);
  Tensor table = Tensor::param(random_array({5, 3}, rng));
  std::vector<int> ids = {1, 4, 1};
  Tensor e = embedding(table, ids, {3});
  for (int d = 0; d < 3; ++d) {
    CHECK(e.value().at(d) == table.value().at(3 + d));
    CHECK(e.value().at(3 + d) == table.value().at(12 + d));
    CHECK(e.value().at(6 + d) == table.value().at(3 + d));
  }
  gradcheck({table}, [&] { return mean_all(square(embedding(table, ids, {3}))); });
}

TEST_CASE("shape ops round-trip") {
  Rng rng(10);
  Tensor x = Tensor::param(random_array({2, 4, 6}, rng));
  Tensor h = split_heads(x, 3);
  CHECK(h.value().shape == std::vector<int>{2, 3, 4, 2});
  Tensor back = merge_heads(h);
  CHECK(back.value().shape == x.value().shape);
  for (std::int64_t i = 0; i < x.value().size(); ++i)
    CHECK(back.value().at(i) == x.value().at(i));
  gradcheck({x}, [&] { return mean_all(square(merge_heads(split_heads(x, 3)))); });

  Tensor a = Tensor::param(random_array({2, 3, 5}, rng));
  Tensor b = Tensor::param(random_array({2, 2, 5}, rng));
  Tensor cat = concat_seq(a, b);
  CHECK(cat.value().shape == std::vector<int>{2, 5, 5});
  gradcheck({a, b}, [&] {
    Tensor c = concat_seq(a, b);
    return mean_all(square(slice_seq(c, 1, 3)));
  });
}

TEST_CASE("zero_rows zeroes masked rows and their gradients") {
  Rng rng(11);
  Tensor x = Tensor::param(random_array({2, 3, 2}, rng));
  Array mask({2, 3});
  mask.data[1] = 1.0;
  mask.data[5] = 1.0;
  Tensor z = zero_rows(x, mask);
  CHECK(z.value().at(2) == 0.0);
  CHECK(z.value().at(3) == 0.0);
  CHECK(z.value().at(10) == 0.0);
  CHECK(z.value().at(0) == x.value().at(0));
  gradcheck({x}, [&] { return mean_all(square(zero_rows(x, mask))); });
}

TEST_CASE("cross_entropy_masked value matches a manual computation") {
  Rng rng(12);
  Array lv = random_array({2, 2, 3}, rng);
  Tensor logits = Tensor::param(lv);
  std::vector<int> labels = {0, 2, 1, 1};
  Array pad({2, 2});
  pad.data[3] = 1.0;  // last position of row 1 excluded
  Tensor loss = cross_entropy_masked(logits, labels, pad, true);

  double expect = 0.0;
  for (int r = 0; r < 4; ++r) {
    if (pad.data[static_cast<size_t>(r)] != 0.0) continue;
    const double* x = lv.data.data() + r * 3;
    double mx = std::max({x[0], x[1], x[2]});
    double s = std::exp(x[0] - mx) + std::exp(x[1] - mx) + std::exp(x[2] - mx);
    expect -= x[labels[static_cast<size_t>(r)]] - mx - std::log(s);
  }
  expect /= 2.0;  // batch mean
  CHECK(loss.value().at(0) == doctest::Approx(expect).epsilon(1e-12));
  gradcheck({logits},
            [&] { return cross_entropy_masked(logits, labels, pad, true); });
}

TEST_CASE("kernel means match finite differences") {
  Rng rng(13);
  Tensor x = Tensor::param(random_array({4, 6}, rng));
  Array y = random_array({5, 6}, rng);
  gradcheck({x}, [&] { return kernel_cross_mean(x, y, 0.64); });
  gradcheck({x}, [&] { return kernel_self_mean(x, 0.64); });
}

TEST_CASE("no_grad suppresses graph construction") {
  Rng rng(14);
  Tensor a = Tensor::param(random_array({3}, rng));
  NoGradGuard ng;
  Tensor y = sum_all(square(a));
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("fan-out accumulates gradients") {
  Tensor a = Tensor::param(Array({1}, 2.0));
  Tensor y = add(mul(a, a), scale(a, 3.0));  // a^2 + 3a
  a.zero_grad();
  backward(y);
  CHECK(a.grad().at(0) == doctest::Approx(7.0));  // 2a + 3
}

}  // TEST_SUITE
