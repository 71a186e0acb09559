#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"
#include "tge/tensor.hpp"

using namespace tge;
using tge::test::check_gradients;
using tge::test::grad_mismatch;

namespace {

Parameter random_param(const std::string& name, std::size_t r, std::size_t c,
                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Parameter p = Parameter::zeros(name, r, c);
  for (double& x : p.value) x = dist(rng);
  return p;
}

// FD oracle for a single op: loss = sum(op(A)) or sum(op(A, B))
void check_unary_op(const char* name, std::size_t r, std::size_t c,
                    const std::function<Tensor(Graph&, Tensor)>& op, std::uint64_t seed,
                    double shift = 0.0) {
  Parameter a = random_param("a", r, c, seed);
  if (shift != 0.0)
    for (double& x : a.value) x += shift;
  Parameter* params[] = {&a};
  auto loss = [&](bool back) {
    Graph g;
    Tensor out = op(g, g.param(a));
    Tensor l = g.sum_all(out);
    if (back) g.backward(l);
    return l.scalar();
  };
  auto result = check_gradients(params, loss);
  INFO(name << ": " << result.worst);
  CHECK(result.max_mismatch < 1e-6);
}

void check_binary_op(const char* name, std::size_t ar, std::size_t ac, std::size_t br,
                     std::size_t bc, const std::function<Tensor(Graph&, Tensor, Tensor)>& op,
                     std::uint64_t seed, double b_shift = 0.0) {
  Parameter a = random_param("a", ar, ac, seed);
  Parameter b = random_param("b", br, bc, seed + 1);
  if (b_shift != 0.0)
    for (double& x : b.value) x += b_shift;
  Parameter* params[] = {&a, &b};
  auto loss = [&](bool back) {
    Graph g;
    Tensor out = op(g, g.param(a), g.param(b));
    Tensor l = g.sum_all(out);
    if (back) g.backward(l);
    return l.scalar();
  };
  auto result = check_gradients(params, loss);
  INFO(name << ": " << result.worst);
  CHECK(result.max_mismatch < 1e-6);
}

}  // namespace

TEST_CASE("row softmax of zeros is uniform") {
  Graph g;
  Tensor s = g.row_softmax(g.constant(1, 2, {0.0, 0.0}));
  CHECK(s.value()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.value()[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("row softmax rows sum to one and stay in (0,1)") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dist(-10.0, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> vals(24);
    for (double& v : vals) v = dist(rng);
    Graph g;
    Tensor s = g.row_softmax(g.constant(4, 6, vals));
    for (std::size_t i = 0; i < 4; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 6; ++j) {
        const double w = s.value()[i * 6 + j];
        CHECK(w > 0.0);
        CHECK(w < 1.0);
        sum += w;
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("dropout with training off is the identity") {
  std::mt19937_64 rng(1);
  Graph g;
  Tensor a = g.constant(2, 3, {1, 2, 3, 4, 5, 6});
  Tensor d = g.dropout(a, 0.5, false, rng);
  CHECK(d.value() == a.value());
}

TEST_CASE("dropout scaling preserves the expectation within 1%") {
  std::mt19937_64 rng(99);
  const double p = 0.3;
  double sum = 0.0;
  std::size_t n = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Graph g;
    Tensor ones = g.constant(1, 1000, std::vector<double>(1000, 1.0));
    Tensor d = g.dropout(ones, p, true, rng);
    for (double x : d.value()) sum += x;
    n += 1000;
  }
  CHECK(std::abs(sum / static_cast<double>(n) - 1.0) < 0.01);
}

TEST_CASE("matmul gradient matches central differences on random 4x4") {
  check_binary_op("matmul", 4, 4, 4, 4,
                  [](Graph& g, Tensor a, Tensor b) { return g.matmul(a, b); }, 11);
}

TEST_CASE("every op passes its finite-difference check") {
  check_unary_op("transpose", 3, 5, [](Graph& g, Tensor a) { return g.transpose(a); }, 21);
  check_unary_op("scale", 3, 4, [](Graph& g, Tensor a) { return g.scale(a, -2.5); }, 22);
  check_unary_op("add_scalar", 3, 4, [](Graph& g, Tensor a) { return g.add_scalar(a, 0.7); },
                 23);
  check_unary_op("row_softmax", 3, 6,
                 [](Graph& g, Tensor a) {
                   // weight the rows so the check sees the full softmax Jacobian
                   Tensor s = g.row_softmax(a);
                   return g.mul(s, g.constant(3, 6, {1, 2, 3, 4, 5, 6, 6, 5, 4, 3, 2, 1, 1, 3,
                                                     5, 2, 4, 6}));
                 },
                 24);
  check_unary_op("row_mean", 4, 5, [](Graph& g, Tensor a) { return g.row_mean(a); }, 25);
  check_unary_op("row_var", 4, 5, [](Graph& g, Tensor a) { return g.row_var(a); }, 26);
  check_unary_op("broadcast_cols", 4, 1,
                 [](Graph& g, Tensor a) {
                   Tensor b = g.broadcast_cols(a, 3);
                   return g.mul(b, g.constant(4, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}));
                 },
                 27);
  check_unary_op("sqrt", 2, 4, [](Graph& g, Tensor a) { return g.sqrt(a); }, 28, 2.0);
  check_unary_op("sigmoid", 2, 4, [](Graph& g, Tensor a) { return g.sigmoid(a); }, 29);
  check_unary_op("relu", 2, 4, [](Graph& g, Tensor a) { return g.relu(a); }, 30, 0.3);
  check_unary_op("softplus", 2, 4, [](Graph& g, Tensor a) { return g.softplus(a); }, 31);
  check_unary_op("mean_all", 3, 3, [](Graph& g, Tensor a) { return g.mean_all(a); }, 32);
  check_binary_op("add", 3, 4, 3, 4, [](Graph& g, Tensor a, Tensor b) { return g.add(a, b); },
                  33);
  check_binary_op("sub", 3, 4, 3, 4, [](Graph& g, Tensor a, Tensor b) { return g.sub(a, b); },
                  34);
  check_binary_op("mul", 3, 4, 3, 4, [](Graph& g, Tensor a, Tensor b) { return g.mul(a, b); },
                  35);
  check_binary_op("div", 3, 4, 3, 4, [](Graph& g, Tensor a, Tensor b) { return g.div(a, b); },
                  36, 3.0);
  check_binary_op("concat_cols", 2, 3, 2, 4,
                  [](Graph& g, Tensor a, Tensor b) {
                    const Tensor parts[] = {a, b};
                    return g.concat_cols(parts);
                  },
                  37);
}

TEST_CASE("dropout gradient respects the sampled mask") {
  Parameter a = random_param("a", 2, 8, 41);
  Parameter* params[] = {&a};
  auto loss = [&](bool back) {
    std::mt19937_64 rng(5);  // same mask on every evaluation
    Graph g;
    Tensor out = g.dropout(g.param(a), 0.4, true, rng);
    Tensor l = g.sum_all(out);
    if (back) g.backward(l);
    return l.scalar();
  };
  auto result = check_gradients(params, loss);
  INFO(result.worst);
  CHECK(result.max_mismatch < 1e-6);
}

TEST_CASE("backward of sum gives all-ones gradient") {
  Parameter w = random_param("w", 3, 3, 51);
  Graph g;
  Tensor l = g.sum_all(g.param(w));
  g.backward(l);
  REQUIRE(w.grad.size() == 9);
  for (double x : w.grad) CHECK(x == 1.0);
}

TEST_CASE("sigmoid gradient at zero is a quarter") {
  Parameter x = Parameter::zeros("x", 1, 1);
  Graph g;
  Tensor l = g.sigmoid(g.param(x));
  g.backward(l);
  CHECK(x.grad[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("backward requires a scalar") {
  Parameter w = random_param("w", 2, 2, 52);
  Graph g;
  Tensor t = g.param(w);
  CHECK_THROWS_AS(g.backward(t), std::invalid_argument);
}

TEST_CASE("repeated backward calls accumulate into parameter gradients") {
  Parameter w = random_param("w", 2, 2, 53);
  Graph g;
  Tensor l = g.sum_all(g.param(w));
  g.backward(l);
  g.backward(l);
  for (double x : w.grad) CHECK(x == 2.0);
}

TEST_CASE("shape mismatches name the op") {
  Graph g;
  Tensor a = g.constant(2, 3, {1, 2, 3, 4, 5, 6});
  Tensor b = g.constant(2, 2, {1, 2, 3, 4});
  CHECK_THROWS_WITH_AS(g.add(a, b), doctest::Contains("add"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(g.matmul(a, b), doctest::Contains("matmul"), std::invalid_argument);
}

TEST_CASE("adam first step moves a unit-gradient scalar by about lr") {
  Parameter x = Parameter::zeros("x", 1, 1);
  x.value[0] = 1.0;
  x.grad = {1.0};
  AdamState adam(0.01);
  Parameter* params[] = {&x};
  adam.step(params);
  CHECK(x.value[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
  CHECK(x.grad[0] == 0.0);  // zeroed after the step
}

TEST_CASE("adam leaves a zero-gradient parameter unchanged") {
  Parameter x = Parameter::zeros("x", 1, 1);
  x.value[0] = 3.5;
  x.grad = {0.0};
  AdamState adam(0.1);
  Parameter* params[] = {&x};
  adam.step(params);
  CHECK(x.value[0] == 3.5);
}

TEST_CASE("adam converges on x^2 from x=1 within 100 steps at lr 0.1") {
  Parameter x = Parameter::zeros("x", 1, 1);
  x.value[0] = 1.0;
  AdamState adam(0.1);
  Parameter* params[] = {&x};
  for (int i = 0; i < 100; ++i) {
    Graph g;
    Tensor xt = g.param(x);
    Tensor l = g.mul(xt, xt);
    g.backward(g.sum_all(l));
    adam.step(params);
  }
  CHECK(std::abs(x.value[0]) < 0.1);
}

TEST_CASE("adam refuses a parameter that never saw a backward pass") {
  Parameter x = Parameter::zeros("x", 1, 1);
  AdamState adam(0.1);
  Parameter* params[] = {&x};
  CHECK_THROWS_AS(adam.step(params), std::runtime_error);
}
