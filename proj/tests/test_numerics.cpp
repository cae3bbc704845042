#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "aqo/checkpoint.hpp"
#include "aqo/numerics.hpp"
#include "aqo/rng.hpp"

using namespace aqo;
using numerics::Activation;
using numerics::Matrix;
using numerics::Vec;

namespace {

// Straight-line re-evaluation, independent of numerics::forward.
Vec straight_line_eval(const numerics::MlpSpec& spec, const numerics::MlpParams& params,
                       const Vec& input) {
  Vec cur = input;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    Vec next(spec.layers[l].out, 0.0);
    for (std::size_t r = 0; r < spec.layers[l].out; ++r) {
      double acc = params.biases[l].values[r];
      for (std::size_t c = 0; c < spec.layers[l].in; ++c)
        acc += params.weights[l].at(r, c) * cur[c];
      switch (spec.layers[l].act) {
        case Activation::Identity: break;
        case Activation::Relu: acc = acc > 0 ? acc : 0; break;
        case Activation::Sigmoid: acc = 1.0 / (1.0 + std::exp(-acc)); break;
      }
      next[r] = acc;
    }
    cur = next;
  }
  return cur;
}

}  // namespace

TEST_CASE("forward identity layer passes input through") {
  numerics::MlpSpec spec{{{2, 2, Activation::Identity}}};
  auto params = numerics::make_params(spec);
  params.weights[0].at(0, 0) = 1.0;
  params.weights[0].at(1, 1) = 1.0;
  const Vec out = numerics::forward_value(spec, params, Vec{1.0, 2.0});
  CHECK(out[0] == 1.0);
  CHECK(out[1] == 2.0);
}

TEST_CASE("forward sigmoid of zero weights is one half") {
  numerics::MlpSpec spec{{{3, 4, Activation::Sigmoid}}};
  auto params = numerics::make_params(spec);
  const Vec out = numerics::forward_value(spec, params, Vec{0.3, -2.0, 5.0});
  for (double v : out) CHECK(v == 0.5);
}

TEST_CASE("forward matches an independent straight-line evaluator bit for bit") {
  Rng rng(7);
  numerics::MlpSpec spec{{{4, 6, Activation::Relu},
                          {6, 5, Activation::Sigmoid},
                          {5, 2, Activation::Identity}}};
  auto params = numerics::make_params(spec);
  numerics::init_xavier(spec, params, rng);
  const Vec input(4, 1.0);
  const Vec a = numerics::forward_value(spec, params, input);
  const Vec b = straight_line_eval(spec, params, input);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("forward is deterministic") {
  Rng rng(11);
  numerics::MlpSpec spec{{{5, 3, Activation::Relu}, {3, 2, Activation::Sigmoid}}};
  auto params = numerics::make_params(spec);
  numerics::init_xavier(spec, params, rng);
  Vec input{0.1, -0.4, 2.0, 0.0, -1.0};
  const Vec a = numerics::forward_value(spec, params, input);
  const Vec b = numerics::forward_value(spec, params, input);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("forward rejects dimension mismatch") {
  numerics::MlpSpec spec{{{3, 2, Activation::Identity}}};
  auto params = numerics::make_params(spec);
  CHECK_THROWS_AS(numerics::forward(spec, params, Vec{1.0, 2.0}),
                  numerics::ContractViolation);
}

TEST_CASE("backward of a single identity layer is plain linear calculus") {
  numerics::MlpSpec spec{{{2, 2, Activation::Identity}}};
  auto params = numerics::make_params(spec);
  params.weights[0].at(0, 0) = 2.0;
  params.weights[0].at(0, 1) = -1.0;
  params.weights[0].at(1, 0) = 0.5;
  params.weights[0].at(1, 1) = 3.0;
  const Vec input{1.5, -2.0};
  auto [out, tape] = numerics::forward(spec, params, input);
  const Vec g{0.7, -0.3};
  auto [grads, input_grad] = numerics::backward(spec, params, tape, g);

  // input gradient = W^T g
  CHECK(input_grad[0] == doctest::Approx(2.0 * 0.7 + 0.5 * -0.3));
  CHECK(input_grad[1] == doctest::Approx(-1.0 * 0.7 + 3.0 * -0.3));
  // weight gradient = g * input^T
  CHECK(grads.weights[0].at(0, 0) == doctest::Approx(0.7 * 1.5));
  CHECK(grads.weights[0].at(0, 1) == doctest::Approx(0.7 * -2.0));
  CHECK(grads.weights[0].at(1, 0) == doctest::Approx(-0.3 * 1.5));
  CHECK(grads.biases[0].values[0] == doctest::Approx(0.7));
}

TEST_CASE("backward with a zero output gradient yields a zero bundle") {
  Rng rng(3);
  numerics::MlpSpec spec{{{3, 4, Activation::Relu}, {4, 2, Activation::Identity}}};
  auto params = numerics::make_params(spec);
  numerics::init_xavier(spec, params, rng);
  auto [out, tape] = numerics::forward(spec, params, Vec{1.0, -2.0, 0.5});
  auto [grads, input_grad] = numerics::backward(spec, params, tape, Vec{0.0, 0.0});
  for (const Matrix* m : grads.all())
    for (double v : m->values) CHECK(v == 0.0);
  for (double v : input_grad) CHECK(v == 0.0);
}

TEST_CASE("backward matches finite differences over many seeds") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    numerics::MlpSpec spec{{{5, 7, Activation::Relu},
                            {7, 6, Activation::Sigmoid},
                            {6, 3, Activation::Identity}}};
    auto params = numerics::make_params(spec);
    numerics::init_xavier(spec, params, rng);
    Vec input(5);
    for (auto& v : input) v = rng.normal();

    auto loss_fn = [&] {
      const Vec o = numerics::forward_value(spec, params, input);
      double s = 0.0;
      for (double v : o) s += v * v;
      return 0.5 * s;
    };
    auto [out, tape] = numerics::forward(spec, params, input);
    auto [grads, unused] = numerics::backward(spec, params, tape, out);
    const auto pp = params.all();
    const auto gp = grads.all();
    const double err =
        numerics::finite_difference_check(loss_fn, pp, {gp.data(), gp.size()}, 1e-5);
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("finite_difference_check on a quadratic loss is tight") {
  Matrix p(2, 3);
  Rng rng(9);
  for (auto& v : p.values) v = rng.uniform(-1, 1);
  auto loss_fn = [&] {
    double s = 0.0;
    for (double v : p.values) s += v * v;
    return 0.5 * s;
  };
  Matrix analytic = p;  // gradient of 0.5*||p||^2 is p itself
  Matrix* pp[] = {&p};
  const Matrix* gp[] = {&analytic};
  CHECK(numerics::finite_difference_check(loss_fn, pp, gp, 1e-5) <= 1e-8);
}

TEST_CASE("finite_difference_check on a constant loss returns zero") {
  Matrix p(1, 4);
  p.fill(0.3);
  auto loss_fn = [] { return 42.0; };
  Matrix zero(1, 4);
  Matrix* pp[] = {&p};
  const Matrix* gp[] = {&zero};
  CHECK(numerics::finite_difference_check(loss_fn, pp, gp, 1e-5) == 0.0);
}

TEST_CASE("sgd step without momentum") {
  Matrix p(1, 1);
  p.values[0] = 1.0;
  Matrix g(1, 1);
  g.values[0] = 2.0;
  numerics::SgdOptimizer opt(0.1, 0.0);
  Matrix* pp[] = {&p};
  const Matrix* gp[] = {&g};
  REQUIRE(opt.try_step(pp, gp));
  CHECK(p.values[0] == doctest::Approx(0.8));
}

TEST_CASE("sgd with zero gradient leaves parameters unchanged") {
  Matrix p(2, 2);
  p.fill(0.25);
  Matrix g(2, 2);
  numerics::SgdOptimizer opt(0.5, 0.9);
  Matrix* pp[] = {&p};
  const Matrix* gp[] = {&g};
  REQUIRE(opt.try_step(pp, gp));
  for (double v : p.values) CHECK(v == 0.25);
}

TEST_CASE("two momentum steps match the hand-unrolled update") {
  // v1 = 1, p1 = -0.1; v2 = 1.9, p2 = -0.29
  Matrix p(1, 1);
  Matrix g(1, 1);
  g.values[0] = 1.0;
  numerics::SgdOptimizer opt(0.1, 0.9);
  Matrix* pp[] = {&p};
  const Matrix* gp[] = {&g};
  REQUIRE(opt.try_step(pp, gp));
  CHECK(p.values[0] == doctest::Approx(-0.1));
  REQUIRE(opt.try_step(pp, gp));
  CHECK(p.values[0] == doctest::Approx(-0.29));
}

TEST_CASE("sgd rejects non-finite gradients and skips the step") {
  Matrix p(1, 2);
  p.fill(1.0);
  Matrix g(1, 2);
  g.values[0] = std::numeric_limits<double>::quiet_NaN();
  numerics::SgdOptimizer opt(0.1, 0.0);
  Matrix* pp[] = {&p};
  const Matrix* gp[] = {&g};
  std::string err;
  CHECK_FALSE(opt.try_step(pp, gp, &err));
  CHECK(err.find("non-finite") != std::string::npos);
  for (double v : p.values) CHECK(v == 1.0);
}

TEST_CASE("softmax sums to one and ignores constant shifts") {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 2 + rng.next_below(6);
    Vec logits(n);
    for (auto& v : logits) v = rng.uniform(-4, 4);
    const double temperature = rng.uniform(0.1, 3.0);
    const Vec probs = numerics::softmax(logits, temperature);
    double sum = 0.0;
    for (double p : probs) sum += p;
    CHECK(std::abs(sum - 1.0) <= 1e-9);

    Vec shifted = logits;
    for (auto& v : shifted) v += 17.5;
    const Vec probs2 = numerics::softmax(shifted, temperature);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(std::abs(probs[i] - probs2[i]) <= 1e-12);
  }
}

TEST_CASE("softmax survives extreme logits via max subtraction") {
  const Vec probs = numerics::softmax(Vec{1000.0, 999.0}, 1.0);
  CHECK(std::isfinite(probs[0]));
  CHECK(probs[0] > probs[1]);
  CHECK(std::abs(probs[0] + probs[1] - 1.0) <= 1e-9);
}

TEST_CASE("checkpoint round trip is exact") {
  Rng rng(21);
  Matrix a(3, 4), b(1, 5);
  for (auto& v : a.values) v = rng.normal() * 1e-7;
  for (auto& v : b.values) v = rng.normal() * 1e3;
  const std::string path = "checkpoint_test.json";
  numerics::save_checkpoint(path, {{"mod", {&a, &b}}}, 1234);

  Matrix a2(3, 4), b2(1, 5);
  const std::uint64_t seed = numerics::load_checkpoint(path, {{"mod", {&a2, &b2}}});
  CHECK(seed == 1234);
  for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == a2.values[i]);
  for (std::size_t i = 0; i < b.values.size(); ++i) CHECK(b.values[i] == b2.values[i]);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint load rejects shape mismatches") {
  Matrix a(2, 2);
  const std::string path = "checkpoint_shape_test.json";
  numerics::save_checkpoint(path, {{"mod", {&a}}}, 1);
  Matrix wrong(3, 2);
  CHECK_THROWS(numerics::load_checkpoint(path, {{"mod", {&wrong}}}));
  std::remove(path.c_str());
}
