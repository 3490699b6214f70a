#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "abip/error.hpp"
#include "abip/network.hpp"
#include "abip/rng.hpp"
#include "abip/train.hpp"
#include "support/oracles.hpp"

using namespace abip;

namespace {

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0,
                     double hi = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = rng.uniform(lo, hi);
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  REQUIRE(a.same_shape(b));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.flat()[i] - b.flat()[i]));
  return m;
}

}  // namespace

TEST_CASE("activation derivatives match central differences") {
  Rng rng(21);
  const double h = 1e-4;  // balances truncation against cancellation
  for (Activation act : {Activation::sigmoid(), Activation::identity()}) {
    for (int i = 0; i < 100; ++i) {
      double z = rng.uniform(-6.0, 6.0);
      double fd = (act.apply(z + h) - act.apply(z - h)) / (2.0 * h);
      double an = act.derivative(z);
      double rel = std::abs(fd - an) / std::max(1e-8, std::abs(fd) + std::abs(an));
      REQUIRE(rel < 1e-8);
    }
  }
}

TEST_CASE("init_network is deterministic and shaped correctly") {
  auto circ3 = builtin_product(ProductKind::circular, 3);
  Network a = init_network({2, 3, 2}, circ3, Activation::sigmoid(), Activation::sigmoid(), 42);
  Network b = init_network({2, 3, 2}, circ3, Activation::sigmoid(), Activation::sigmoid(), 42);
  Network c = init_network({2, 3, 2}, circ3, Activation::sigmoid(), Activation::sigmoid(), 43);

  REQUIRE(a.layers.size() == 2);
  CHECK(a.layers[0].weights.dim0() == 3);
  CHECK(a.layers[0].weights.dim1() == 2);
  CHECK(a.layers[0].weights.dim2() == 3);
  CHECK(a.layers[0].biases.rows() == 3);
  CHECK(a.layers[0].biases.cols() == 3);
  CHECK(a.layers[1].weights.dim0() == 2);
  CHECK(a.layers[1].weights.dim1() == 3);

  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    CHECK(a.layers[l].weights == b.layers[l].weights);
    CHECK(a.layers[l].biases == b.layers[l].biases);
    for (double v : a.layers[l].biases.flat()) CHECK(v == 0.0);
  }
  CHECK(!(a.layers[0].weights == c.layers[0].weights));

  // Uniform support bound r = sqrt(6 / (N (fan_in + fan_out))).
  double r0 = std::sqrt(6.0 / (3 * (2 + 3)));
  for (double v : a.layers[0].weights.flat()) CHECK(std::abs(v) <= r0);

  CHECK(a.parameter_count() == (3 * 2 * 3 + 3 * 3) + (2 * 3 * 3 + 2 * 3));
}

TEST_CASE("all-zero parameters with sigmoid produce 0.5 everywhere") {
  auto circ = builtin_product(ProductKind::circular, 4);
  Network net = init_network({3, 4, 2}, circ, Activation::sigmoid(), Activation::sigmoid(), 1);
  for (Layer& l : net.layers) {
    l.weights.fill(0.0);
    l.biases.fill(0.0);
  }
  Rng rng(2);
  ForwardTrace t = forward(net, random_matrix(rng, 3, 4));
  for (const Matrix& z : t.pre_activations)
    for (double v : z.flat()) CHECK(v == 0.0);
  for (std::size_t l = 1; l < t.activations.size(); ++l)
    for (double v : t.activations[l].flat()) CHECK(v == 0.5);
}

TEST_CASE("scalar product degenerates to a conventional DNN") {
  auto scalar = builtin_product(ProductKind::scalar);
  for (std::vector<int> topo : {std::vector<int>{2, 3, 2}, std::vector<int>{8, 16, 16, 8}}) {
    for (auto out_act : {Activation::sigmoid(), Activation::identity()}) {
      Network net = init_network(topo, scalar, Activation::sigmoid(), out_act,
                                 derive_seed(7, topo.size()));
      test::ScalarDnnOracle oracle = test::ScalarDnnOracle::from_network(net);
      Rng rng(11);
      for (int trial = 0; trial < 5; ++trial) {
        Matrix input = random_matrix(rng, topo.front(), 1);
        std::vector<double> flat(input.flat().begin(), input.flat().end());
        ForwardTrace t = forward(net, input);
        auto ot = oracle.forward(flat);
        for (std::size_t i = 0; i < t.output().size(); ++i)
          REQUIRE(std::abs(t.output().flat()[i] - ot.a.back()[i]) < 1e-12);
      }
    }
  }
}

TEST_CASE("circular identity element passes the input through one neuron") {
  auto circ3 = builtin_product(ProductKind::circular, 3);
  Network net = init_network({1, 1}, circ3, Activation::identity(), Activation::identity(), 5);
  Matrix input(1, 3);
  input(0, 0) = 1.0;  // the circular identity e_1
  net.layers[0].biases.fill(0.0);
  ForwardTrace t = forward(net, input);
  for (int k = 0; k < 3; ++k) CHECK(t.output()(0, k) == doctest::Approx(net.layers[0].weights(0, 0, k)).epsilon(1e-15));
}

TEST_CASE("skew_circular(2) is complex multiplication, circular(2) hyperbolic") {
  Rng rng(31);
  auto check = [&](ProductKind kind, auto multiply) {
    Network net = init_network({1, 1}, builtin_product(kind, 2), Activation::identity(),
                               Activation::identity(), 3);
    net.layers[0].biases.fill(0.0);
    for (int trial = 0; trial < 100; ++trial) {
      double w1 = rng.uniform(-2.0, 2.0), w2 = rng.uniform(-2.0, 2.0);
      double a1 = rng.uniform(-2.0, 2.0), a2 = rng.uniform(-2.0, 2.0);
      net.layers[0].weights(0, 0, 0) = w1;
      net.layers[0].weights(0, 0, 1) = w2;
      Matrix input(1, 2);
      input(0, 0) = a1;
      input(0, 1) = a2;
      auto [re, im] = multiply(w1, w2, a1, a2);
      ForwardTrace t = forward(net, input);
      REQUIRE(std::abs(t.output()(0, 0) - re) < 1e-12);
      REQUIRE(std::abs(t.output()(0, 1) - im) < 1e-12);
    }
  };
  check(ProductKind::skew_circular, test::complex_multiply);
  check(ProductKind::circular, test::hyperbolic_multiply);
}

TEST_CASE("permuting hidden neurons leaves the output unchanged") {
  auto quat = builtin_product(ProductKind::quaternion);
  Network net = init_network({3, 5, 4}, quat, Activation::sigmoid(), Activation::sigmoid(), 17);
  Rng rng(18);
  Matrix input = random_matrix(rng, 3, 4);
  Matrix base = forward(net, input).output();

  // Rotate the hidden ordering: rows of layer 0, columns of layer 1.
  std::vector<std::size_t> perm{2, 0, 4, 1, 3};
  Network permuted = net;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 4; ++k)
        permuted.layers[0].weights(i, j, k) = net.layers[0].weights(perm[i], j, k);
    for (std::size_t k = 0; k < 4; ++k)
      permuted.layers[0].biases(i, k) = net.layers[0].biases(perm[i], k);
    for (std::size_t o = 0; o < 4; ++o)
      for (std::size_t k = 0; k < 4; ++k)
        permuted.layers[1].weights(o, i, k) = net.layers[1].weights(o, perm[i], k);
  }
  Matrix out = forward(permuted, input).output();
  CHECK(max_abs_diff(base, out) < 1e-12);
}

TEST_CASE("traces record activations consistent with their pre-activations") {
  auto rev = builtin_product(ProductKind::reverse_time_circular, 5);
  Network net = init_network({4, 6, 3}, rev, Activation::sigmoid(), Activation::identity(), 23);
  Rng rng(24);
  ForwardTrace t = forward(net, random_matrix(rng, 4, 5));
  REQUIRE(t.pre_activations.size() == 2);
  REQUIRE(t.activations.size() == 3);
  for (std::size_t l = 0; l < t.pre_activations.size(); ++l) {
    const Activation& act = net.activation(l);
    for (std::size_t i = 0; i < t.pre_activations[l].size(); ++i)
      CHECK(t.activations[l + 1].flat()[i] == act.apply(t.pre_activations[l].flat()[i]));
  }
}

TEST_CASE("forward reports non-finite values naming the layer") {
  auto scalar = builtin_product(ProductKind::scalar);
  Network net = init_network({1, 1, 1}, scalar, Activation::identity(), Activation::identity(), 2);
  net.layers[0].weights(0, 0, 0) = 1e308;
  net.layers[1].weights(0, 0, 0) = 1e308;
  Matrix input(1, 1);
  input(0, 0) = 1e308;
  try {
    forward(net, input);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("layer") != std::string::npos);
  }
}

TEST_CASE("forward validates the input shape") {
  auto circ = builtin_product(ProductKind::circular, 3);
  Network net = init_network({2, 2}, circ, Activation::sigmoid(), Activation::sigmoid(), 3);
  CHECK_THROWS_AS(forward(net, Matrix(3, 3)), DimensionError);
  CHECK_THROWS_AS(forward(net, Matrix(2, 4)), DimensionError);
}

TEST_CASE("mse_loss matches the stated examples") {
  Matrix a(2, 2), b(2, 2);
  a.fill(0.7);
  b.fill(0.7);
  CHECK(mse_loss(a, b) == 0.0);

  b.fill(0.4);  // uniform difference c = 0.3
  CHECK(mse_loss(a, b) == doctest::Approx(0.09).epsilon(1e-12));

  Matrix p(1, 2), t(1, 2);
  p(0, 0) = 1.0;
  p(0, 1) = 0.0;
  t(0, 0) = 0.0;
  t(0, 1) = 1.0;
  CHECK(mse_loss(p, t) == 1.0);

  CHECK_THROWS_AS(mse_loss(Matrix(1, 2), Matrix(2, 1)), DimensionError);
}

TEST_CASE("batched prediction matches the canonical forward pass") {
  for (auto [kind, dim] : {std::pair{ProductKind::circular, 5},
                           std::pair{ProductKind::quaternion, 0},
                           std::pair{ProductKind::seven_dim_vector, 0}}) {
    BilinearProduct b = builtin_product(kind, dim);
    Network net = init_network({3, 6, 2}, b, Activation::sigmoid(), Activation::sigmoid(),
                               derive_seed(55, static_cast<std::uint64_t>(kind)));
    Rng rng(56);
    std::vector<Matrix> inputs;
    for (int s = 0; s < 7; ++s) inputs.push_back(random_matrix(rng, 3, net.dim()));
    std::vector<Matrix> batched = predict_batch(net, inputs);
    for (std::size_t s = 0; s < inputs.size(); ++s) {
      Matrix single = forward(net, inputs[s]).output();
      REQUIRE(max_abs_diff(single, batched[s]) < 1e-12);
    }
  }
}
