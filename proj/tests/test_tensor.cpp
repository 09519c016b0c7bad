#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "spikekit/errors.hpp"
#include "spikekit/quantizer.hpp"
#include "spikekit/tape.hpp"

using namespace spikekit;

TEST_CASE("DenseArray validates shape and finiteness") {
  CHECK_THROWS_AS(DenseArray({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  CHECK_THROWS_AS(DenseArray({1}, {std::nan("")}), NonFiniteError);
  CHECK_THROWS_AS(DenseArray({1}, {INFINITY}), NonFiniteError);
  DenseArray a({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(a.at(1, 2) == 6.0);
  CHECK(a.slice0(1) == DenseArray({3}, {4, 5, 6}));
  CHECK_THROWS_AS(a.reshaped({4}), DimensionError);
  CHECK(DenseArray().numel() == 0);
}

TEST_CASE("matmul worked examples") {
  Tape t;
  Var eye = t.constant(DenseArray({2, 2}, {1, 0, 0, 1}));
  Var col = t.constant(DenseArray({2, 1}, {3, 4}));
  CHECK(t.value(t.matmul(eye, col)) == DenseArray({2, 1}, {3, 4}));

  Var row = t.constant(DenseArray({1, 2}, {1, 2}));
  CHECK(t.value(t.matmul(row, col)).item() == 11.0);

  CHECK_THROWS_AS(t.matmul(col, col), DimensionError);
}

TEST_CASE("matmul gradients match central differences") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a0 = oracle::random_array({4, 3}, rng);
    const auto b0 = oracle::random_array({3, 2}, rng);
    const auto r = oracle::random_array({4, 2}, rng);

    Tape t;
    Var a = t.leaf(a0, true), b = t.leaf(b0, true);
    Var loss = t.sum(t.mul(t.matmul(a, b), t.constant(r)));
    auto g = t.backward(loss);

    // loss(a, b) = sum_ij r_ij * sum_k a_ik b_kj, evaluated directly.
    auto loss_of = [&](const std::vector<double>& av, const std::vector<double>& bv) {
      double s = 0;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 2; ++j) {
          double c = 0;
          for (int k = 0; k < 3; ++k) c += av[i * 3 + k] * bv[k * 2 + j];
          s += r[i * 2 + j] * c;
        }
      return s;
    };
    double worst = 0;
    for (std::size_t i = 0; i < a0.numel(); ++i) {
      auto fd = oracle::central_diff([&](const auto& p) { return loss_of(p, b0.values()); },
                                     a0.values(), i, 1e-4);
      worst = std::max(worst, std::abs(fd - g.of(a)[i]));
    }
    for (std::size_t i = 0; i < b0.numel(); ++i) {
      auto fd = oracle::central_diff([&](const auto& p) { return loss_of(a0.values(), p); },
                                     b0.values(), i, 1e-4);
      worst = std::max(worst, std::abs(fd - g.of(b)[i]));
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("transposed matmul gradients") {
  std::mt19937_64 rng(5);
  const auto x0 = oracle::random_array({3, 4}, rng);
  const auto w0 = oracle::random_array({2, 4}, rng);
  Tape t;
  Var x = t.leaf(x0, true), w = t.leaf(w0, true);
  Var y = t.matmul(x, w, true);
  CHECK(t.shape(y) == Shape{3, 2});
  auto g = t.backward(t.sum(y));
  // d sum(x wᵀ)/dw_jk = sum_i x_ik ; d/dx_ik = sum_j w_jk
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t k = 0; k < 4; ++k) {
      double col = 0;
      for (std::size_t i = 0; i < 3; ++i) col += x0.at(i, k);
      CHECK(g.of(w).at(j, k) == doctest::Approx(col).epsilon(1e-14));
    }
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 4; ++k)
      CHECK(g.of(x).at(i, k) == doctest::Approx(w0.at(0, k) + w0.at(1, k)).epsilon(1e-14));
}

TEST_CASE("elementwise primitives") {
  Tape t;
  Var v = t.constant(DenseArray({4}, {2.5, 3.5, -2.5, 0.49}));
  CHECK(t.value(t.round_half_even(v)) == DenseArray({4}, {2.0, 4.0, -2.0, 0.0}));
  CHECK(t.value(t.clamp(t.constant(DenseArray::scalar(5.1)), 0, 4)).item() == 4.0);
  CHECK(t.value(t.heaviside(t.constant(DenseArray({3}, {0.0, -1e-300, 2.0})))) ==
        DenseArray({3}, {1.0, 0.0, 1.0}));

  Var a = t.constant(DenseArray({2}, {1, 2}));
  Var s = t.constant(DenseArray::scalar(3));
  CHECK(t.value(t.add(a, s)) == DenseArray({2}, {4, 5}));
  CHECK(t.value(t.sub(s, a)) == DenseArray({2}, {2, 1}));
  CHECK(t.value(t.mul(a, a)) == DenseArray({2}, {1, 4}));
  CHECK(t.value(t.scale(a, -2)) == DenseArray({2}, {-2, -4}));
  CHECK_THROWS_AS(t.add(a, t.constant(DenseArray::zeros({3}))), DimensionError);
  CHECK_THROWS_AS(t.add(a, t.constant(DenseArray::zeros({2, 1}))), DimensionError);
}

TEST_CASE("round half even is idempotent") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-50, 50);
  std::vector<double> xs;
  for (int i = 0; i < 2000; ++i) xs.push_back(i % 10 == 0 ? std::floor(d(rng)) + 0.5 : d(rng));
  Tape t;
  Var x = t.constant(DenseArray({xs.size()}, xs));
  Var once = t.round_half_even(x);
  Var twice = t.round_half_even(once);
  CHECK(t.value(once) == t.value(twice));
  for (std::size_t i = 0; i < xs.size(); ++i) CHECK(t.value(once)[i] == oracle::round_even(xs[i]));
}

TEST_CASE("backward basics") {
  Tape t;
  Var x = t.leaf(DenseArray({2, 3}, {1, -2, 3, 0, 5, 6}), true);
  auto g = t.backward(t.sum(x));
  CHECK(g.of(x) == DenseArray::ones({2, 3}));

  Tape t2;
  Var y = t2.leaf(DenseArray({2}, {1, 2}), true);
  auto g2 = t2.backward(t2.sum(t2.mul(y, y)));
  CHECK(g2.of(y) == DenseArray({2}, {2, 4}));

  CHECK_THROWS_AS(t2.backward(y), ContractError);
}

TEST_CASE("scalar broadcast gradients reduce onto the scalar") {
  Tape t;
  Var a = t.leaf(DenseArray({3}, {1, 2, 3}), true);
  Var s = t.leaf(DenseArray::scalar(2), true);
  auto g = t.backward(t.sum(t.mul(s, a)));
  CHECK(g.of(s).item() == 6.0);
  CHECK(g.of(a) == DenseArray::full({3}, 2.0));
}

TEST_CASE("non-finite values surface as errors") {
  Tape t;
  Var big = t.constant(DenseArray::scalar(1e308));
  CHECK_THROWS_AS(t.scale(big, 10.0), NonFiniteError);
  CHECK_THROWS_AS(t.add(big, big), NonFiniteError);
}

TEST_CASE("detach blocks gradient") {
  Tape t;
  Var x = t.leaf(DenseArray({2}, {1, 2}), true);
  Var y = t.add(x, t.detach(t.scale(x, 5.0)));
  auto g = t.backward(t.sum(y));
  CHECK(g.of(x) == DenseArray::ones({2}));
}

TEST_CASE("cross entropy value and gradient") {
  Tape t;
  Var z = t.leaf(DenseArray({2, 3}, {1, 2, 3, 0, 0, 0}), true);
  const int labels[] = {2, 0};
  Var loss = t.cross_entropy(z, labels);
  const double l0 = std::log(std::exp(1) + std::exp(2) + std::exp(3)) - 3;
  const double l1 = std::log(3.0);
  CHECK(t.value(loss).item() == doctest::Approx((l0 + l1) / 2).epsilon(1e-13));
  auto g = t.backward(loss);
  std::vector<double> params = t.value(z).values();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto fd = oracle::central_diff(
        [&](const std::vector<double>& p) {
          Tape u;
          return u.value(u.cross_entropy(u.constant(DenseArray({2, 3}, p)), labels)).item();
        },
        params, i, 1e-5);
    CHECK(std::abs(fd - g.of(z)[i]) < 1e-8);
  }
}

TEST_CASE("composite linear -> quantizer -> loss vs finite differences in the pass-through region") {
  // Straight-through oracle: inside the window the quantizer acts as u/N plus a
  // rounding offset frozen at the base point, so finite differences of that
  // function reproduce the STE derivative.
  std::mt19937_64 rng(21);
  QuantizerSpec spec;
  spec.steps = 8;
  spec.normalizer = 2.0;
  int checked = 0;
  for (int trial = 0; trial < 200 && checked < 30; ++trial) {
    const auto x0 = oracle::random_array({3, 4}, rng, 0.0, 2.0);
    const auto w0 = oracle::random_array({5, 4}, rng, 0.0, 1.0);
    const auto r = oracle::random_array({3, 5}, rng);

    auto pre = [&](const std::vector<double>& w, std::size_t i, std::size_t o) {
      double acc = 0;
      for (std::size_t k = 0; k < 4; ++k) acc += x0.at(i, k) * w[o * 4 + k];
      return acc;
    };
    bool interior = true;
    std::vector<double> offset(15);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t o = 0; o < 5; ++o) {
        const double u = pre(w0.values(), i, o);
        const double frac = u - std::floor(u);
        if (u < spec.window_lo() + 0.05 || u > spec.window_hi() - 0.05 || std::abs(frac - 0.5) < 0.05)
          interior = false;
        offset[i * 5 + o] = oracle::clip_round(u, 0, spec.steps, spec.normalizer, true) - u / spec.normalizer;
      }
    if (!interior) continue;
    ++checked;

    Tape t;
    Var w = t.leaf(w0, true);
    Var y = t.matmul(t.constant(x0), w, true);
    Var q = quantize(t, y, t.constant(DenseArray::scalar(0.0)), spec);
    auto g = t.backward(t.sum(t.mul(q, t.constant(r))));

    auto smooth = [&](const std::vector<double>& w) {
      double s = 0;
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t o = 0; o < 5; ++o)
          s += r[i * 5 + o] * (pre(w, i, o) / spec.normalizer + offset[i * 5 + o]);
      return s;
    };
    double worst = 0;
    for (std::size_t i = 0; i < w0.numel(); ++i) {
      worst = std::max(worst, std::abs(oracle::central_diff(smooth, w0.values(), i, 1e-4) - g.of(w)[i]));
    }
    CHECK(worst < 1e-5);
  }
  CHECK(checked >= 10);
}

TEST_CASE("backward is deterministic") {
  std::mt19937_64 rng(8);
  const auto x0 = oracle::random_array({6, 5}, rng, -3, 3);
  const auto w0 = oracle::random_array({4, 5}, rng);
  auto run = [&] {
    Tape t;
    Var w = t.leaf(w0, true);
    Var alpha = t.leaf(DenseArray::scalar(0.3), true);
    QuantizerSpec spec;
    Var q = quantize(t, t.matmul(t.constant(x0), w, true), alpha, spec);
    auto g = t.backward(t.sum(t.mul(q, q)));
    return std::make_pair(g.of(w), g.of(alpha));
  };
  auto first = run();
  auto second = run();
  CHECK(first.first == second.first);
  CHECK(first.second == second.second);
}

TEST_CASE("tape bookkeeping") {
  Tape t;
  Var x = t.leaf(DenseArray::scalar(1.0), false);
  Var y = t.scale(x, 2.0);
  CHECK_FALSE(t.requires_grad(y));
  CHECK(t.kind(y) == OpKind::scale);
  CHECK(op_name(OpKind::quantize) == "quantize");
  auto g = t.backward(y);
  CHECK_FALSE(g.has(x));
  CHECK_THROWS_AS(g.of(x), ContractError);
  CHECK_THROWS_AS(t.value(Var{99}), ContractError);
}
