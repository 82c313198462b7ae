#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "satomil/autodiff.hpp"
#include "satomil/error.hpp"

using namespace satomil;
using namespace satomil::ad;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(r, c);
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Reduces any op output to a scalar with fixed random weights so every
// output entry contributes a distinct gradient.
Var weighted_sum(Tape& tape, Var y, const Tensor& w) { return sum(mul(y, tape.constant(w))); }

double central_difference(const std::function<double()>& f, double& x, double h) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2 * h);
}

}  // namespace

TEST_CASE("matmul examples") {
  Tape t;
  const Tensor eye = Tensor::from_rows({{1, 0}, {0, 1}});
  const Tensor m = Tensor::from_rows({{1, 2}, {3, 4}});
  CHECK(matmul(t.constant(eye), t.constant(m)).value() == m);
  CHECK(matmul(t.constant(Tensor(1, 1, 2.0)), t.constant(Tensor(1, 1, 3.0))).value()[0] == 6.0);
  const Var r = matmul(t.constant(m), t.constant(Tensor::from_rows({{5}, {6}})));
  CHECK(r.value() == Tensor::from_rows({{17}, {39}}));
  CHECK_THROWS_AS(matmul(t.constant(m), t.constant(Tensor(3, 1))), DimensionError);
}

TEST_CASE("layer_norm examples") {
  Tape t;
  const Var ones = t.constant(Tensor(1, 3, 1.0));
  const Var zeros = t.constant(Tensor(1, 3, 0.0));
  const Var y = layer_norm(t.constant(Tensor::from_rows({{5, 5, 5}})), ones, zeros);
  for (double v : y.value().data()) CHECK(v == 0.0);

  // (x - 2) / sqrt(1 + 1e-5)
  const Var y2 = layer_norm(t.constant(Tensor::from_rows({{1, 3}})), t.constant(Tensor(1, 2, 1.0)),
                            t.constant(Tensor(1, 2, 0.0)), 1e-5);
  const double expect = 1.0 / std::sqrt(1.0 + 1e-5);
  CHECK(y2.value()[0] == doctest::Approx(-expect).epsilon(1e-14));
  CHECK(y2.value()[1] == doctest::Approx(expect).epsilon(1e-14));
  CHECK(expect == doctest::Approx(0.999995).epsilon(1e-6));

  const Tensor bias = Tensor::from_rows({{0.5, -2.0, 7.0}});
  const Var y3 = layer_norm(t.constant(Tensor::from_rows({{0.3, -1.2, 9.0}, {1, 2, 4}})),
                            t.constant(Tensor(1, 3, 0.0)), t.constant(bias));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(y3.value()(i, j) == bias[j]);
}

TEST_CASE("masked_softmax examples and contracts") {
  Tape t;
  const Var a = masked_softmax(t.constant(Tensor(1, 4, 1.0)), Tensor(1, 4, 1.0));
  for (double v : a.value().data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  const Var b = masked_softmax(t.constant(Tensor(1, 2, 0.0)), Tensor::from_rows({{0, 1}}));
  CHECK(b.value()[0] == 0.0);
  CHECK(b.value()[1] == 1.0);

  const Var c = masked_softmax(t.constant(Tensor::from_rows({{std::log(2.0), 0, 0}})), Tensor(1, 3, 1.0));
  CHECK(c.value()[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(c.value()[1] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(c.value()[2] == doctest::Approx(0.25).epsilon(1e-14));

  CHECK_THROWS_AS(masked_softmax(t.constant(Tensor(2, 2)), Tensor::from_rows({{1, 0}, {0, 0}})),
                  ContractError);
}

TEST_CASE("masked_softmax rows sum to one and masked entries are exactly zero") {
  std::mt19937_64 rng(11);
  std::bernoulli_distribution keep(0.6);
  for (int trial = 0; trial < 200; ++trial) {
    Tape t;
    Tensor z = random_tensor(3, 7, rng);
    Tensor mask(3, 7);
    for (std::size_t i = 0; i < 3; ++i) {
      mask(i, trial % 7) = 1.0;
      for (std::size_t j = 0; j < 7; ++j)
        if (keep(rng)) mask(i, j) = 1.0;
    }
    for (double& v : z.data()) v *= 30.0;
    const Tensor& y = masked_softmax(t.constant(z), mask).value();
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        if (mask(i, j) == 0.0) CHECK(y(i, j) == 0.0);
        CHECK(y(i, j) >= 0.0);
        s += y(i, j);
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("pointwise examples") {
  Tape t;
  CHECK(sigmoid(t.constant(Tensor(1, 1, 0.0))).value()[0] == 0.5);
  CHECK(relu(t.constant(Tensor(1, 1, -3.0))).value()[0] == 0.0);
  CHECK(sigmoid(t.constant(Tensor(1, 1, std::log(3.0)))).value()[0] == doctest::Approx(0.75).epsilon(1e-15));
  // pre-activation is clamped at +-40; 1 - e^-40 rounds to 1.0 in double
  const double hi = sigmoid(t.constant(Tensor(1, 1, 1e6))).value()[0];
  const double lo = sigmoid(t.constant(Tensor(1, 1, -1e6))).value()[0];
  CHECK(hi == 1.0 / (1.0 + std::exp(-40.0)));
  CHECK(lo > 0.0);
  CHECK(lo == doctest::Approx(1.0 / (1.0 + std::exp(40.0))).epsilon(1e-12));
}

TEST_CASE("backward basics") {
  {
    Tape t;
    const Var x = t.input(Tensor(2, 3, 0.7));
    t.backward(sum(x));
    for (double g : x.grad().data()) CHECK(g == 1.0);
  }
  {
    Tape t;
    const Var x = t.input(Tensor(1, 1, 3.0));
    t.backward(mul(x, x));
    CHECK(x.grad()[0] == 6.0);
  }
  {
    Tape t;
    const Var x = t.input(Tensor(2, 2, 1.0));
    CHECK_THROWS_AS(t.backward(x), ContractError);
  }
}

TEST_CASE("repeated backward accumulates into parameters") {
  Parameter p("w", Tensor::from_rows({{1.5, -2.0}}));
  Tape t;
  const Var y = sum(mul(t.param(p), t.param(p)));
  t.backward(y);
  t.backward(y);
  CHECK(p.grad[0] == doctest::Approx(2 * 2 * 1.5));
  CHECK(p.grad[1] == doctest::Approx(2 * 2 * -2.0));
  p.zero_grad();
  t.backward(y);
  CHECK(p.grad[0] == doctest::Approx(2 * 1.5));
}

TEST_CASE("gradients accumulate into shared parents") {
  Tape t;
  const Var x = t.input(Tensor(1, 1, 2.0));
  // y = x + 3x + x^2 -> dy/dx = 4 + 2x
  const Var y = sum(add(add(x, scale(x, 3.0)), mul(x, x)));
  t.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(8.0));
}

TEST_CASE("matmul + sigmoid chain matches central differences") {
  std::mt19937_64 rng(5);
  Tensor a = random_tensor(3, 4, rng);
  Tensor b = random_tensor(4, 2, rng);
  const Tensor w = random_tensor(3, 2, rng);
  auto f = [&] {
    Tape t;
    return weighted_sum(t, sigmoid(matmul(t.constant(a), t.constant(b))), w).value()[0];
  };
  Tape t;
  const Var va = t.input(a), vb = t.input(b);
  t.backward(weighted_sum(t, sigmoid(matmul(va, vb)), w));
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double num = central_difference(f, a[i], 1e-5);
    CHECK(std::abs(va.grad()[i] - num) / std::max(1.0, std::abs(num)) <= 1e-6);
  }
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double num = central_difference(f, b[i], 1e-5);
    CHECK(std::abs(vb.grad()[i] - num) / std::max(1.0, std::abs(num)) <= 1e-6);
  }
}

TEST_CASE("grad_check examples") {
  std::mt19937_64 rng(3);
  Parameter w("w", random_tensor(3, 3, rng));
  const double err = grad_check([&](Tape& t) { return sum(mul(t.param(w), t.param(w))); }, {&w});
  CHECK(err < 1e-8);

  Parameter c("c", random_tensor(2, 2, rng));
  const double zero = grad_check([&](Tape& t) {
    t.param(c);
    return t.constant(Tensor(1, 1, 4.2));
  }, {&c});
  CHECK(zero == 0.0);

  CHECK_THROWS_AS(evaluate([](Tape& t) { return t.record(Tensor(1, 1, NAN), {}, {}); }), NumericError);
}

TEST_CASE("every differentiable op passes gradcheck on random inputs") {
  std::mt19937_64 rng(2024);
  using Op = std::function<Var(Tape&, Var, Var)>;
  // Each op receives two bound parameters: x [3x4] and y (shape chosen per op).
  struct Case {
    const char* name;
    std::size_t yr, yc;
    Op op;
  };
  const Tensor mask = Tensor::from_rows({{1, 0, 1, 1}, {0, 1, 0, 0}, {1, 1, 1, 0}});
  const std::vector<Case> cases = {
      {"matmul", 4, 2, [](Tape&, Var x, Var y) { return matmul(x, y); }},
      {"transpose", 1, 1, [](Tape&, Var x, Var) { return transpose(x); }},
      {"add", 3, 4, [](Tape&, Var x, Var y) { return add(x, y); }},
      {"add_row", 1, 4, [](Tape&, Var x, Var y) { return add_row(x, y); }},
      {"mul", 3, 4, [](Tape&, Var x, Var y) { return mul(x, y); }},
      {"scale", 1, 1, [](Tape&, Var x, Var) { return scale(x, -1.7); }},
      {"relu", 1, 1, [](Tape&, Var x, Var) { return relu(x); }},
      {"sigmoid", 1, 1, [](Tape&, Var x, Var) { return sigmoid(scale(x, 3.0)); }},
      {"tanh", 1, 1, [](Tape&, Var x, Var) { return tanh(x); }},
      {"layer_norm", 1, 4,
       [](Tape& t, Var x, Var y) { return layer_norm(x, y, t.constant(Tensor(1, 4, 0.3))); }},
      {"layer_norm bias", 1, 4,
       [](Tape& t, Var x, Var y) { return layer_norm(x, t.constant(Tensor(1, 4, 1.1)), y); }},
      {"masked_softmax pre", 1, 1,
       [mask](Tape&, Var x, Var) { return masked_softmax(scale(x, 2.0), mask); }},
      {"masked_softmax post", 1, 1,
       [mask](Tape&, Var x, Var) {
         return masked_softmax(scale(x, 2.0), mask, MaskApply::PostSoftmax);
       }},
      {"concat_rows", 2, 4, [](Tape&, Var x, Var y) { return concat_rows(x, y); }},
      {"slice_rows", 1, 1, [](Tape&, Var x, Var) { return slice_rows(x, 1, 3); }},
      {"mean_rows", 1, 1, [](Tape&, Var x, Var) { return mean_rows(x); }},
      {"max_rows", 1, 1, [](Tape&, Var x, Var) { return max_rows(x); }},
      {"sum_cols", 1, 1, [](Tape&, Var x, Var) { return sum_cols(x); }},
      {"softmax_cross_entropy", 1, 1,
       [](Tape&, Var x, Var) { return softmax_cross_entropy(slice_rows(x, 0, 1), 2); }},
  };
  for (const Case& c : cases) {
    for (int trial = 0; trial < 5; ++trial) {
      Parameter x("x", random_tensor(3, 4, rng));
      Parameter y("y", random_tensor(c.yr, c.yc, rng));
      Tensor w;
      {
        Tape probe;
        const Var out = c.op(probe, probe.param(x), probe.param(y));
        w = random_tensor(out.rows(), out.cols(), rng);
      }
      const double err = grad_check(
          [&](Tape& t) { return weighted_sum(t, c.op(t, t.param(x), t.param(y)), w); }, {&x, &y});
      INFO(c.name);
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("backward is deterministic") {
  std::mt19937_64 rng(9);
  Parameter a("a", random_tensor(4, 4, rng));
  Parameter b("b", random_tensor(4, 3, rng));
  auto run = [&] {
    a.zero_grad();
    b.zero_grad();
    Tape t;
    const Var h = tanh(matmul(t.param(a), t.param(b)));
    t.backward(sum(mul(h, h)));
    return std::make_pair(a.grad, b.grad);
  };
  const auto first = run();
  const auto second = run();
  CHECK(first.first == second.first);
  CHECK(first.second == second.second);
}

TEST_CASE("non-finite values are rejected") {
  Tape t;
  CHECK_THROWS_AS(t.input(Tensor(1, 1, INFINITY)), NumericError);
  const Var x = t.constant(Tensor(1, 1, 1e200));
  CHECK_THROWS_AS(mul(x, x), NumericError);
}

TEST_CASE("inference tapes record parameters as constants") {
  Parameter p("p", Tensor(1, 2, 1.0));
  Tape t(false);
  const Var v = t.param(p);
  CHECK_FALSE(v.requires_grad());
  t.backward(sum(v));
  CHECK(p.grad[0] == 0.0);
}
