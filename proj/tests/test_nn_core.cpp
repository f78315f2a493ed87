#include <doctest.h>

#include <stdexcept>

#include <array>
#include <cmath>

#include "dialogscore/nn/adam.hpp"
#include "dialogscore/nn/grad_check.hpp"
#include "dialogscore/nn/tensor.hpp"
#include "dialogscore/prng.hpp"

using namespace dialogscore;
using nn::Parameter;
using nn::Tape;
using nn::Tensor;

namespace {

Parameter random_param(const std::string& name, nn::Shape shape, std::uint64_t seed) {
  Parameter p(name, std::move(shape));
  Prng rng(seed);
  normal_init(p, 1.0, rng);
  return p;
}

double fd_check(const nn::LossFn& loss, std::initializer_list<Parameter*> params) {
  std::vector<Parameter*> v(params);
  return nn::grad_check(loss, v, {});
}

}  // namespace

TEST_CASE("tanh and sigmoid forward values and gradients") {
  Parameter x = random_param("x", {1}, 1);
  x.value[0] = 0.0;
  Tape t;
  Tensor y = t.tanh(t.leaf(x));
  CHECK(y.value()[0] == doctest::Approx(0.0));
  t.backward(t.sum(y));
  CHECK(x.grad[0] == doctest::Approx(1.0));  // d tanh at 0

  Parameter a = random_param("a", {4, 5}, 2);
  CHECK(fd_check(
            [&](bool g) {
              Tape tp;
              Tensor l = tp.sum(tp.tanh(tp.leaf(a)));
              if (g) tp.backward(l);
              return l.item();
            },
            {&a}) < 1e-6);
  CHECK(fd_check(
            [&](bool g) {
              Tape tp;
              Tensor l = tp.sum(tp.sigmoid(tp.leaf(a)));
              if (g) tp.backward(l);
              return l.item();
            },
            {&a}) < 1e-6);
}

TEST_CASE("matmul shapes and gradients") {
  Parameter a = random_param("a", {3, 4}, 3);
  Parameter b = random_param("b", {4, 5}, 4);
  Parameter v = random_param("v", {4}, 5);
  Parameter u = random_param("u", {3}, 6);

  {
    Tape t;
    CHECK(t.matmul(t.leaf(a), t.leaf(b)).shape() == nn::Shape{3, 5});
  }
  {
    Tape t;
    CHECK(t.matmul(t.leaf(a), t.leaf(v)).shape() == nn::Shape{3});
  }
  {
    Tape t;
    CHECK(t.matmul(t.leaf(u), t.leaf(a)).shape() == nn::Shape{4});
  }
  {
    Tape t;
    CHECK(t.matmul(t.leaf(v), t.leaf(v)).shape() == nn::Shape{1});
  }
  {
    Tape t;
    CHECK_THROWS_WITH_AS(t.matmul(t.leaf(a), t.leaf(u)),
                         doctest::Contains("(3,4)"), std::invalid_argument);
  }

  // Weighted sums make every coordinate matter.
  Parameter w = random_param("w", {3, 5}, 7);
  CHECK(fd_check(
            [&](bool g) {
              Tape tp;
              Tensor l = tp.sum(tp.mul(tp.matmul(tp.leaf(a), tp.leaf(b)), tp.leaf(w)));
              if (g) tp.backward(l);
              return l.item();
            },
            {&a, &b, &w}) < 1e-6);
  CHECK(fd_check(
            [&](bool g) {
              Tape tp;
              Tensor l = tp.sum(tp.matmul(tp.leaf(u), tp.leaf(a)));
              if (g) tp.backward(l);
              return l.item();
            },
            {&u, &a}) < 1e-6);
  CHECK(fd_check(
            [&](bool g) {
              Tape tp;
              Tensor l = tp.matmul(tp.leaf(v), tp.leaf(v));
              if (g) tp.backward(l);
              return l.item();
            },
            {&v}) < 1e-6);
}

TEST_CASE("add with bias broadcast") {
  Parameter m = random_param("m", {4, 3}, 8);
  Parameter b = random_param("b", {3}, 9);
  {
    Tape t;
    Tensor out = t.add(t.leaf(m), t.leaf(b));
    CHECK(out.value()[5] ==
          doctest::Approx(m.value[5] + b.value[2]));
  }
  {
    Tape t;
    CHECK_THROWS_AS(t.add(t.leaf(b), t.leaf(m)), std::invalid_argument);
  }
  Parameter w = random_param("w", {4, 3}, 10);
  CHECK(fd_check(
            [&](bool g) {
              Tape tp;
              Tensor l = tp.sum(tp.mul(tp.add(tp.leaf(m), tp.leaf(b)), tp.leaf(w)));
              if (g) tp.backward(l);
              return l.item();
            },
            {&m, &b}) < 1e-6);
}

TEST_CASE("concat flattens parts and routes gradients") {
  Parameter a = random_param("a", {3}, 11);
  Parameter b = random_param("b", {2, 2}, 12);
  Parameter w = random_param("w", {7}, 13);
  {
    Tape t;
    const std::array<Tensor, 2> parts = {t.leaf(a), t.leaf(b)};
    Tensor out = t.concat(parts);
    CHECK(out.shape() == nn::Shape{7});
    CHECK(out.value()[4] == doctest::Approx(b.value[1]));
  }
  CHECK(fd_check(
            [&](bool g) {
              Tape tp;
              const std::array<Tensor, 2> parts = {tp.leaf(a), tp.leaf(b)};
              Tensor l = tp.sum(tp.mul(tp.concat(parts), tp.leaf(w)));
              if (g) tp.backward(l);
              return l.item();
            },
            {&a, &b}) < 1e-6);
}

TEST_CASE("reshape is a gradient pass-through") {
  Parameter a = random_param("a", {6}, 14);
  Parameter w = random_param("w", {2, 3}, 15);
  CHECK(fd_check(
            [&](bool g) {
              Tape tp;
              Tensor l = tp.sum(tp.mul(tp.reshape(tp.leaf(a), {2, 3}), tp.leaf(w)));
              if (g) tp.backward(l);
              return l.item();
            },
            {&a}) < 1e-6);
  Tape t;
  CHECK_THROWS_AS(t.reshape(t.leaf(a), {4, 2}), std::invalid_argument);
}

TEST_CASE("elementwise mul with scalar broadcast") {
  Parameter a = random_param("a", {3, 3}, 16);
  Parameter s = random_param("s", {1}, 17);
  CHECK(fd_check(
            [&](bool g) {
              Tape tp;
              Tensor l = tp.sum(tp.mul(tp.leaf(a), tp.leaf(s)));
              if (g) tp.backward(l);
              return l.item();
            },
            {&a, &s}) < 1e-6);
  Tape t;
  Parameter b = random_param("b", {2}, 18);
  CHECK_THROWS_AS(t.mul(t.leaf(a), t.leaf(b)), std::invalid_argument);
}

TEST_CASE("softmax values, shift invariance and gradient") {
  {
    Tape t;
    Tensor p = t.softmax(t.constant({2}, {0.0, 0.0}));
    CHECK(p.value()[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p.value()[1] == doctest::Approx(0.5).epsilon(1e-12));
  }
  {
    Prng rng(19);
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<double> logits(5);
      for (double& v : logits) v = rng.uniform(-4.0, 4.0);
      Tape t;
      Tensor p1 = t.softmax(t.constant({5}, logits));
      const double shift = rng.uniform(-10.0, 10.0);
      std::vector<double> shifted = logits;
      for (double& v : shifted) v += shift;
      Tensor p2 = t.softmax(t.constant({5}, shifted));
      double sum = 0.0;
      for (std::size_t i = 0; i < 5; ++i) {
        CHECK(std::abs(p1.value()[i] - p2.value()[i]) < 1e-12);
        sum += p1.value()[i];
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
  Parameter a = random_param("a", {6}, 20);
  Parameter w = random_param("w", {6}, 21);
  CHECK(fd_check(
            [&](bool g) {
              Tape tp;
              Tensor l = tp.sum(tp.mul(tp.softmax(tp.leaf(a)), tp.leaf(w)));
              if (g) tp.backward(l);
              return l.item();
            },
            {&a}) < 1e-6);
  // row-wise over a matrix
  Parameter m = random_param("m", {3, 4}, 22);
  Parameter wm = random_param("wm", {3, 4}, 23);
  CHECK(fd_check(
            [&](bool g) {
              Tape tp;
              Tensor l = tp.sum(tp.mul(tp.softmax(tp.leaf(m)), tp.leaf(wm)));
              if (g) tp.backward(l);
              return l.item();
            },
            {&m}) < 1e-6);
}

TEST_CASE("embedding lookup gathers rows and scatter-adds gradients") {
  Parameter table = random_param("table", {5, 3}, 24);
  const std::vector<int> idx = {1, 3, 1};  // repeated row accumulates
  {
    Tape t;
    Tensor rows = t.embedding_lookup(t.leaf(table), idx);
    CHECK(rows.shape() == nn::Shape{3, 3});
    CHECK(rows.value()[0] == doctest::Approx(table.value[3]));
  }
  Parameter w = random_param("w", {3, 3}, 25);
  CHECK(fd_check(
            [&](bool g) {
              Tape tp;
              Tensor l = tp.sum(tp.mul(tp.embedding_lookup(tp.leaf(table), idx), tp.leaf(w)));
              if (g) tp.backward(l);
              return l.item();
            },
            {&table}) < 1e-6);
  Tape t;
  const std::vector<int> bad = {5};
  CHECK_THROWS_AS(t.embedding_lookup(t.leaf(table), bad), std::out_of_range);
}

TEST_CASE("dropout: identity cases, scaling and gradient through a fixed mask") {
  Parameter a = random_param("a", {64}, 26);
  {
    Tape t;
    Prng rng(1);
    Tensor out = t.dropout(t.leaf(a), 0.0, rng, true);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(out.value()[i] == a.value[i]);
  }
  {
    Tape t;
    Prng rng(1);
    Tensor out = t.dropout(t.leaf(a), 0.9, rng, false);  // eval mode
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(out.value()[i] == a.value[i]);
  }
  {
    // Inverted scaling keeps the expected value equal to the input.
    Parameter ones("ones", {64});
    std::fill(ones.value.begin(), ones.value.end(), 1.0);
    Prng rng(99);
    double total = 0.0;
    const int reps = 4000;
    for (int r = 0; r < reps; ++r) {
      Tape t;
      Tensor out = t.dropout(t.leaf(ones), 0.3, rng, true);
      for (double v : out.value()) total += v;
    }
    CHECK(total / (reps * 64.0) == doctest::Approx(1.0).epsilon(0.02));
  }
  CHECK(fd_check(
            [&](bool g) {
              Tape tp;
              Prng rng(7);  // same mask on every evaluation
              Tensor l = tp.sum(tp.dropout(tp.leaf(a), 0.4, rng, true));
              if (g) tp.backward(l);
              return l.item();
            },
            {&a}) < 1e-6);
  Tape t;
  Prng rng(1);
  CHECK_THROWS_AS(t.dropout(t.leaf(a), 1.0, rng, true), std::invalid_argument);
}

TEST_CASE("cross entropy matches log-sum-exp arithmetic and differentiates") {
  Parameter logits = random_param("logits", {4}, 27);
  {
    Tape t;
    Tensor l = t.cross_entropy(t.leaf(logits), 2);
    double mx = logits.value[0];
    for (double v : logits.value) mx = std::max(mx, v);
    double total = 0.0;
    for (double v : logits.value) total += std::exp(v - mx);
    const double expected = mx + std::log(total) - logits.value[2];
    CHECK(l.item() == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK(fd_check(
            [&](bool g) {
              Tape tp;
              Tensor l = tp.cross_entropy(tp.leaf(logits), 1);
              if (g) tp.backward(l);
              return l.item();
            },
            {&logits}) < 1e-6);
  Tape t;
  CHECK_THROWS_AS(t.cross_entropy(t.leaf(logits), 4), std::out_of_range);
}

TEST_CASE("sum and mean") {
  Parameter a = random_param("a", {3}, 28);
  {
    Tape t;
    Tensor s = t.sum(t.leaf(a));
    t.backward(s);
    for (double g : a.grad) CHECK(g == doctest::Approx(1.0));
  }
  a.zero_grad();
  {
    Tape t;
    Tensor m = t.mean(t.leaf(a));
    CHECK(m.item() == doctest::Approx((a.value[0] + a.value[1] + a.value[2]) / 3.0));
    t.backward(m);
    for (double g : a.grad) CHECK(g == doctest::Approx(1.0 / 3.0));
  }
}

TEST_CASE("backward contract: product-rule chain, constants, reuse, scalar check") {
  Parameter x = random_param("x", {4}, 29);
  Parameter y = random_param("y", {4}, 30);
  CHECK(fd_check(
            [&](bool g) {
              Tape tp;
              Tensor l = tp.matmul(tp.leaf(x), tp.leaf(y));  // dot product
              if (g) tp.backward(l);
              return l.item();
            },
            {&x, &y}) < 1e-6);

  {
    Tape t;
    Tensor c = t.constant({3}, {1.0, 2.0, 3.0});
    Tensor l = t.sum(c);
    CHECK_FALSE(l.requires_grad());
    t.backward(l);  // loss independent of parameters: a no-op
    CHECK_THROWS_AS((void)c.grad(), std::logic_error);
  }
  {
    Tape t;
    Tensor l = t.sum(t.leaf(x));
    t.backward(l);
    CHECK_THROWS_AS(t.backward(l), std::logic_error);  // tape consumed
  }
  {
    Tape t;
    CHECK_THROWS_AS(t.backward(t.leaf(x)), std::invalid_argument);  // non-scalar loss
  }
}

TEST_CASE("adam: zero gradient freeze, first-step magnitude, determinism") {
  nn::AdamConfig cfg;
  {
    Parameter p("p", {3});
    p.value = {1.0, -2.0, 3.0};
    std::array<Parameter*, 1> params = {&p};
    nn::Adam adam(params, cfg);
    p.zero_grad();
    adam.step(params);
    CHECK(p.value[0] == doctest::Approx(1.0));
    CHECK(p.value[1] == doctest::Approx(-2.0));
  }
  {
    // Bias correction makes the first step lr * g / (|g| + eps').
    Parameter p("p", {1});
    p.value = {0.5};
    p.grad = {2.5};
    std::array<Parameter*, 1> params = {&p};
    nn::Adam adam(params, cfg);
    adam.step(params);
    const double mhat = 2.5;
    const double vhat = 2.5 * 2.5;
    const double expected = 0.5 - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    CHECK(p.value[0] == doctest::Approx(expected).epsilon(1e-12));
  }
  {
    auto run = [&] {
      Parameter p = random_param("p", {8}, 31);
      std::array<Parameter*, 1> params = {&p};
      nn::Adam adam(params, cfg);
      Prng rng(77);
      for (int step = 0; step < 25; ++step) {
        for (double& g : p.grad) g = rng.uniform(-1.0, 1.0);
        adam.step(params);
      }
      return p.value;
    };
    CHECK(run() == run());
  }
}

TEST_CASE("grad_check: exactness on a linear loss, non-determinism detection") {
  Parameter a = random_param("a", {5}, 32);
  const double err = fd_check(
      [&](bool g) {
        Tape tp;
        Tensor l = tp.sum(tp.leaf(a));
        if (g) tp.backward(l);
        return l.item();
      },
      {&a});
  CHECK(err < 1e-10);

  int calls = 0;
  std::array<Parameter*, 1> params = {&a};
  CHECK_THROWS_AS(nn::grad_check(
                      [&](bool) {
                        return static_cast<double>(++calls);  // changes every call
                      },
                      params, {}),
                  std::logic_error);
}

TEST_CASE("random op pipelines stay finite and differentiate") {
  // Composite pipelines can saturate tanh, leaving gradients near the
  // finite-difference noise floor; the composite bound matches the
  // full-model one rather than the single-op one.
  for (std::uint64_t seed = 40; seed < 44; ++seed) {
    Prng shape_rng(seed);
    const std::size_t m = 2 + shape_rng.below(4);
    const std::size_t k = 2 + shape_rng.below(4);
    Parameter w1 = random_param("w1", {m, k}, seed * 3 + 1);
    Parameter b1 = random_param("b1", {m}, seed * 3 + 2);
    Parameter x = random_param("x", {k}, seed * 3 + 3);
    const int label = static_cast<int>(shape_rng.below(static_cast<std::uint32_t>(m)));
    const double err = fd_check(
        [&](bool g) {
          Tape tp;
          Tensor h = tp.tanh(tp.add(tp.matmul(tp.leaf(w1), tp.leaf(x)), tp.leaf(b1)));
          Tensor l = tp.cross_entropy(h, label);
          if (g) tp.backward(l);
          return l.item();
        },
        {&w1, &b1, &x});
    CHECK(err < 1e-4);
  }
}
