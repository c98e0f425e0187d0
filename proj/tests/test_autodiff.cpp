#include <cmath>

#include "doctest.h"
#include "sgmc/gradcheck.hpp"
#include "sgmc/ops.hpp"
#include "sgmc/params.hpp"

using namespace sgmc;

TEST_CASE("relu forward clamps negatives") {
  Tape<double> t;
  Var x = t.leaf(Tensor<double>({3}, {-1.0, 0.0, 2.0}), false);
  const Tensor<double>& y = t.value(ops::relu(t, x));
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 2.0);
}

TEST_CASE("1d convolution matches the sliding-window oracle") {
  // input [1,2,3,4], kernel [1,1], stride 1 -> [3,5,7]
  Tape<double> t;
  Var x = t.leaf(Tensor<double>({1, 1, 1, 4}, {1.0, 2.0, 3.0, 4.0}), false);
  Var w = t.leaf(Tensor<double>({1, 1, 1, 2}, {1.0, 1.0}), false);
  Var b = t.leaf(Tensor<double>({1}), false);
  const Tensor<double>& y = t.value(ops::conv2d(t, x, w, b, {}));
  REQUIRE(y.shape() == Shape{1, 1, 1, 3});
  CHECK(y[0] == 3.0);
  CHECK(y[1] == 5.0);
  CHECK(y[2] == 7.0);
}

TEST_CASE("max pooling width 2 stride 2") {
  Tape<double> t;
  Var x = t.leaf(Tensor<double>({1, 1, 1, 4}, {1.0, 3.0, 2.0, 0.0}), false);
  ops::Pool2dAttrs at;
  at.kw = 2;
  at.stride_w = 2;
  const Tensor<double>& y = t.value(ops::maxpool2d(t, x, at));
  REQUIRE(y.numel() == 2);
  CHECK(y[0] == 3.0);
  CHECK(y[1] == 2.0);
}

TEST_CASE("backward of sum(relu(x)) uses subgradient 0 at the kink") {
  Tape<double> t;
  Var x = t.leaf(Tensor<double>({2}, {-1.0, 2.0}), true);
  Var loss = ops::sum(t, ops::relu(t, x));
  t.backward(loss);
  const Tensor<double>& g = t.grad(x);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 1.0);
}

TEST_CASE("unused parameters get zero gradients") {
  ParamStore<double> store;
  store.add("used", Tensor<double>({2}, {1.0, 2.0}));
  store.add("unused", Tensor<double>({3}, {1.0, 1.0, 1.0}));
  Tape<double> t;
  BoundParams<double> bp(t, store);
  Var loss = ops::sum(t, bp["used"]);
  t.backward(loss);
  auto grads = bp.gradients(t);
  REQUIRE(grads.size() == 2);
  CHECK(grads[0][0] == 1.0);
  CHECK(grads[1].shape() == Shape{3});
  for (std::size_t i = 0; i < 3; ++i) CHECK(grads[1][i] == 0.0);
}

TEST_CASE("non-scalar loss is rejected") {
  Tape<double> t;
  Var x = t.leaf(Tensor<double>({2}, {1.0, 2.0}), true);
  CHECK_THROWS_AS(t.backward(x), ContractError);
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(0);
  Tape<double> t;
  Var x = t.leaf(random_uniform<double>({5, 7}, rng, -3.0, 3.0), false);
  const Tensor<double>& y = t.value(ops::softmax_rows(t, x));
  for (std::size_t n = 0; n < 5; ++n) {
    double s = 0;
    for (std::size_t k = 0; k < 7; ++k) s += y[n * 7 + k];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("cross entropy of uniform logits is ln(K)") {
  Tape<double> t;
  Var x = t.leaf(Tensor<double>({1, 2}, {0.0, 0.0}), false);
  double loss = t.value(ops::cross_entropy_mean(t, x, {0}))[0];
  CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("batchnorm train output is standardized before affine terms") {
  Rng rng(1);
  Tape<double> t;
  std::size_t N = 64, F = 5;
  Var x = t.leaf(random_uniform<double>({N, F}, rng, -2.0, 5.0), false);
  Var g = t.leaf(Tensor<double>({F}, 1.0), false);
  Var b = t.leaf(Tensor<double>({F}), false);
  Tensor<double> rm({F}), rv({F}, 1.0);
  const Tensor<double>& y = t.value(ops::batchnorm(t, x, g, b, &rm, &rv, true));
  for (std::size_t f = 0; f < F; ++f) {
    double mean = 0, var = 0;
    for (std::size_t n = 0; n < N; ++n) mean += y[n * F + f];
    mean /= N;
    for (std::size_t n = 0; n < N; ++n) {
      double d = y[n * F + f] - mean;
      var += d * d;
    }
    var /= N;
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(var - 1.0) < 1e-3);
  }
}

TEST_CASE("dropout eval is the identity; train preserves the mean at rate 0.5") {
  Rng rng(2);
  Tensor<double> x = random_uniform<double>({10, 10}, rng, 0.5, 1.5);
  {
    Tape<double> t;
    Rng r(0);
    const Tensor<double>& y = t.value(ops::dropout(t, t.leaf(x, false), 0.5, false, r));
    CHECK(y == x);
  }
  double acc = 0;
  const int trials = 1000;  // 1000 x 100 elements = 1e5 draws
  Rng r(3);
  for (int i = 0; i < trials; ++i) {
    Tape<double> t;
    const Tensor<double>& y = t.value(ops::dropout(t, t.leaf(x, false), 0.5, true, r));
    for (std::size_t k = 0; k < y.numel(); ++k) acc += y[k] - x[k];
  }
  double mean_dev = acc / (trials * x.numel());
  CHECK(std::abs(mean_dev) < 0.01);
}

TEST_CASE("forward is pure: repeated evaluation is bit-identical") {
  Rng rng(4);
  Tensor<double> x = random_uniform<double>({3, 6}, rng, -1.0, 1.0);
  Tensor<double> w = random_uniform<double>({4, 6}, rng, -1.0, 1.0);
  Tensor<double> b = random_uniform<double>({4}, rng, -1.0, 1.0);
  auto run = [&]() {
    Tape<double> t;
    return t.value(ops::relu(
        t, ops::linear(t, t.leaf(x, false), t.leaf(w, false), t.leaf(b, false))));
  };
  CHECK(run() == run());
}

TEST_CASE("gradient suite passes on a sample of shapes per primitive") {
  for (Primitive kind : all_primitives()) {
    GradCheckReport r = grad_check_suite(kind, 5, 1000);
    INFO("primitive ", r.primitive, " max_abs ", r.max_abs_err, " max_rel ", r.max_rel_err);
    CHECK(r.pass);
  }
}

TEST_CASE("spot gradient checks from the numerics examples") {
  CHECK(grad_check(Primitive::kLinear, 0).pass);        // linear 4->3 style
  CHECK(grad_check(Primitive::kConvTime, 0).pass);      // 1d conv kernel over time
  CHECK(grad_check(Primitive::kBatchNormTrain, 0).pass);
}

TEST_CASE("finite differences expose a corrupted backward rule") {
  // A "mul" whose backward pretends to be "add": d/dx (x*y) reported as 1.
  auto broken_mul = [](Tape<double>& t, Var a, Var b) {
    Tensor<double> out = t.value(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= t.value(b)[i];
    return t.emplace(std::move(out), {a, b}, [a, b](Tape<double>& tp, Var self) {
      const Tensor<double>& g = tp.grad(self);
      Tensor<double>& ga = tp.grad_buffer(a);
      Tensor<double>& gb = tp.grad_buffer(b);
      for (std::size_t i = 0; i < g.numel(); ++i) {
        ga[i] += g[i];  // wrong: should be g * b
        gb[i] += g[i];  // wrong: should be g * a
      }
    });
  };
  Rng rng(5);
  std::vector<Tensor<double>> inputs = {random_uniform<double>({3, 3}, rng, 1.5, 2.5),
                                        random_uniform<double>({3, 3}, rng, 1.5, 2.5)};
  GradCheckReport r = check_gradients(
      [&](Tape<double>& t, const std::vector<Var>& v) {
        return ops::sum(t, broken_mul(t, v[0], v[1]));
      },
      inputs);
  CHECK_FALSE(r.pass);
}
