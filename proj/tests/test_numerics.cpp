// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>

#include "adarank/kernels.hpp"
#include "adarank/rng.hpp"
#include "adarank/tape.hpp"
#include "adarank/tensor.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace adarank;
using adarank::testing::GradientCheck;
using adarank::testing::random_tensor;

namespace {
constexpr double kGradTol = 1e-6;
}

TEST_CASE("population_std") {
  CHECK(population_std(Tensor::vector({5, 5, 5, 5})) == 0.0);
  CHECK(population_std(Tensor::vector({1, 2, 3, 4})) == doctest::Approx(std::sqrt(1.25)).epsilon(1e-15));
  CHECK_THROWS_WITH(population_std(Tensor{}), "empty tensor");

  const Tensor t = random_tensor({7, 5}, 3);
  for (double c : {-3.0, 0.5, 11.0}) {
    CHECK(std::abs(population_std(scale(t, c)) - std::abs(c) * population_std(t)) <= 1e-12);
  }
}

TEST_CASE("gaussian sampling") {
  RngStream rng(1, 2);
  CHECK(gaussian({2, 2}, 0.0, 0.0, rng) == Tensor::matrix({{0, 0}, {0, 0}}));
  CHECK_THROWS(gaussian({2}, 0.0, -1.0, rng));

  RngStream a(42, 7), b(42, 7), c(42, 8);
  const Tensor ta = gaussian({3, 5}, 0.0, 1.0, a);
  CHECK(ta == gaussian({3, 5}, 0.0, 1.0, b));
  CHECK_FALSE(ta == gaussian({3, 5}, 0.0, 1.0, c));

  RngStream big(9, 1);
  const Tensor s = gaussian({1000000}, 0.0, 1.0, big);
  CHECK(std::abs(mean(s)) <= 0.01);
  CHECK(std::abs(population_std(s) - 1.0) <= 0.01);
}

TEST_CASE("substreams do not depend on draw order") {
  const std::uint64_t id = RngStream::stream_id({3, 1, 4});
  RngStream first(5, id);
  const double x = first.normal();
  RngStream other(5, RngStream::stream_id({3, 1, 5}));
  for (int i = 0; i < 10; ++i) other.normal();
  RngStream again(5, id);
  CHECK(again.normal() == x);
}

TEST_CASE("l1_diff") {
  const Tensor a = Tensor::vector({1, 2});
  CHECK(l1_diff(a, a) == 0.0);
  CHECK(l1_diff(a, Tensor::vector({0, 4})) == 3.0);
  CHECK_THROWS(l1_diff(a, Tensor::vector({1, 2, 3})));
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Tensor x = random_tensor({4, 3}, s), y = random_tensor({4, 3}, s + 100);
    CHECK(l1_diff(x, y) == l1_diff(y, x));
  }
}

TEST_CASE("dense kernels") {
  const Tensor x = random_tensor({4, 4}, 11);
  Tensor eye({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.0;
  CHECK(matmul(eye, x) == x);
  CHECK_THROWS(matmul(x, random_tensor({3, 2}, 1)));
  CHECK_THROWS(add(x, random_tensor({4, 3}, 1)));

  const Tensor sm = softmax_rows(Tensor::matrix({{0, 0, 0}}));
  for (std::size_t i = 0; i < 3; ++i) CHECK(sm[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const Tensor wide = random_tensor({6, 9}, 12, 5.0);
  const Tensor p = softmax_rows(wide);
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < p.cols(); ++c) s += p.at(r, c);
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }

  const Tensor ln = layer_norm_rows(wide, Tensor({9}, 1.0), Tensor({9}, 0.0), kLayerNormEps);
  for (std::size_t r = 0; r < ln.rows(); ++r) {
    double m = 0.0, v = 0.0;
    for (std::size_t c = 0; c < 9; ++c) m += ln.at(r, c) / 9.0;
    for (std::size_t c = 0; c < 9; ++c) v += (ln.at(r, c) - m) * (ln.at(r, c) - m) / 9.0;
    CHECK(std::abs(m) <= 1e-9);
    CHECK(std::abs(v - 1.0) <= 1e-9);
  }

  CHECK(gelu(Tensor::vector({0.0}))[0] == 0.0);
  CHECK(gelu(Tensor::vector({1.0}))[0] == doctest::Approx(0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)))));
  CHECK(transpose(Tensor::matrix({{1, 2, 3}})) == Tensor::matrix({{1}, {2}, {3}}));
}

TEST_CASE("gradients match central differences") {
  const Tensor a = random_tensor({4, 4}, 21), b = random_tensor({4, 4}, 22), c = random_tensor({4, 4}, 23);
  const Tensor bias = random_tensor({4}, 24), gamma = random_tensor({4}, 25), beta = random_tensor({4}, 26);

  SUBCASE("matmul") {
    GradientCheck g([](Tape& t, const std::vector<Var>& v) { return ops::matmul(t, v[0], v[1]); }, 1);
    CHECK(g.worst_error({a, b}) < kGradTol);
  }
  SUBCASE("matmul rectangular") {
    GradientCheck g([](Tape& t, const std::vector<Var>& v) { return ops::matmul(t, v[0], v[1]); }, 2);
    CHECK(g.worst_error({random_tensor({3, 5}, 1), random_tensor({5, 2}, 2)}) < kGradTol);
  }
  SUBCASE("add") {
    GradientCheck g([](Tape& t, const std::vector<Var>& v) { return ops::add(t, v[0], v[1]); }, 3);
    CHECK(g.worst_error({a, b}) < kGradTol);
  }
  SUBCASE("add_bias") {
    GradientCheck g([](Tape& t, const std::vector<Var>& v) { return ops::add_bias(t, v[0], v[1]); }, 4);
    CHECK(g.worst_error({a, bias}) < kGradTol);
  }
  SUBCASE("scale") {
    GradientCheck g([](Tape& t, const std::vector<Var>& v) { return ops::scale(t, v[0], -1.7); }, 5);
    CHECK(g.worst_error({a}) < kGradTol);
  }
  SUBCASE("gelu") {
    GradientCheck g([](Tape& t, const std::vector<Var>& v) { return ops::gelu(t, v[0]); }, 6);
    CHECK(g.worst_error({a}) < kGradTol);
  }
  SUBCASE("softmax") {
    GradientCheck g([](Tape& t, const std::vector<Var>& v) { return ops::softmax(t, v[0]); }, 7);
    CHECK(g.worst_error({a}) < kGradTol);
  }
  SUBCASE("layer_norm") {
    GradientCheck g([](Tape& t, const std::vector<Var>& v) { return ops::layer_norm(t, v[0], v[1], v[2]); }, 8);
    CHECK(g.worst_error({a, gamma, beta}) < kGradTol);
  }
  SUBCASE("gather_rows") {
    GradientCheck g([](Tape& t, const std::vector<Var>& v) { return ops::gather_rows(t, v[0], {0, 2, 2, 3}); }, 9);
    CHECK(g.worst_error({a}) < kGradTol);
  }
  SUBCASE("cross_entropy") {
    const std::vector<int> labels = {0, 3, 1, 1};
    GradientCheck g([&](Tape& t, const std::vector<Var>& v) { return ops::cross_entropy(t, v[0], labels); }, 10);
    CHECK(g.worst_error({a}) < kGradTol);
  }
  SUBCASE("attention with a masked key") {
    const ops::AttentionLayout layout{2, 2, 2};  // 2 sequences of 2 tokens, 2 heads over width 4
    const std::vector<std::uint8_t> valid = {1, 1, 1, 0};
    GradientCheck g(
        [&](Tape& t, const std::vector<Var>& v) { return ops::attention(t, v[0], v[1], v[2], layout, valid); }, 11);
    CHECK(g.worst_error({a, b, c}) < kGradTol);
  }
  SUBCASE("composite chain") {
    GradientCheck g(
        [](Tape& t, const std::vector<Var>& v) {
          const Var h = ops::gelu(t, ops::add_bias(t, ops::matmul(t, v[0], v[1]), v[2]));
          return ops::softmax(t, ops::layer_norm(t, h, v[3], v[4]));
        },
        12);
    CHECK(g.worst_error({a, b, bias, gamma, beta}) < kGradTol);
  }
}

TEST_CASE("masked keys receive no attention") {
  const Tensor q = random_tensor({4, 4}, 31), k = random_tensor({4, 4}, 32), v = random_tensor({4, 4}, 33);
  Tensor k2 = k, v2 = v;
  for (std::size_t c = 0; c < 4; ++c) {
    k2.at(3, c) += 10.0;  // key 1 of sequence 1 is masked
    v2.at(3, c) -= 7.0;
  }
  const ops::AttentionLayout layout{2, 2, 2};
  auto run = [&](const Tensor& kk, const Tensor& vv) {
    Tape t;
    return t.value(ops::attention(t, t.constant(q), t.constant(kk), t.constant(vv), layout, {1, 1, 1, 0}));
  };
  CHECK(run(k, v) == run(k2, v2));
}

TEST_CASE("backward skips frozen subgraphs") {
  Tape t;
  const Tensor x = random_tensor({4, 4}, 1), w = random_tensor({4, 4}, 2);
  const Var frozen = ops::gelu(t, ops::matmul(t, t.constant(x), t.constant(w)));
  const Var p = t.parameter(w);
  const Var out = ops::matmul(t, frozen, p);
  const Var loss = ops::weighted_sum(t, out, random_tensor({4, 4}, 3));
  CHECK(t.backward(loss) == 2);  // the final matmul and the probe
  CHECK_FALSE(t.has_grad(frozen));
}

TEST_CASE("determinism of an op sequence") {
  auto run = [] {
    RngStream rng(77, 1);
    const Tensor x = gaussian({5, 6}, 0.0, 1.0, rng), w = gaussian({6, 3}, 0.0, 0.3, rng);
    return softmax_rows(gelu(matmul(x, w)));
  };
  CHECK(run() == run());
}
