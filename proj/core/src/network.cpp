#include "abip/network.hpp"

#include <cmath>
#include <string>

#include "abip/error.hpp"
#include "abip/rng.hpp"

namespace abip {

double Activation::apply(double z) const {
  switch (kind) {
    case ActivationKind::sigmoid: return 1.0 / (1.0 + std::exp(-z));
    case ActivationKind::identity: return z;
  }
  return z;
}

double Activation::derivative(double z) const {
  switch (kind) {
    case ActivationKind::sigmoid: {
      double s = 1.0 / (1.0 + std::exp(-z));
      return s * (1.0 - s);
    }
    case ActivationKind::identity: return 1.0;
  }
  return 1.0;
}

const char* Activation::name() const {
  switch (kind) {
    case ActivationKind::sigmoid: return "sigmoid";
    case ActivationKind::identity: return "identity";
  }
  return "?";
}

Activation Activation::parse(std::string_view name) {
  if (name == "sigmoid") return sigmoid();
  if (name == "identity") return identity();
  throw ConfigError("unknown activation: " + std::string(name));
}

std::size_t Network::parameter_count() const {
  std::size_t count = 0;
  for (const Layer& l : layers) count += l.parameter_count();
  return count;
}

Network init_network(std::vector<int> topology, BilinearProduct product, Activation hidden,
                     Activation output, std::uint64_t seed) {
  if (topology.size() < 2) throw DimensionError("topology needs at least input and output widths");
  for (int w : topology)
    if (w < 1) throw DimensionError("topology widths must be >= 1");

  const int n = product.dim();
  Rng rng(seed);
  Network net{std::move(product), std::move(topology), {}, hidden, output};
  net.layers.reserve(net.topology.size() - 1);
  for (std::size_t l = 0; l + 1 < net.topology.size(); ++l) {
    const int fan_in = net.topology[l];
    const int fan_out = net.topology[l + 1];
    const double r = std::sqrt(6.0 / (n * (fan_in + fan_out)));
    Layer layer{Tensor3(fan_out, fan_in, n), Matrix(fan_out, n)};
    for (double& w : layer.weights.flat()) w = rng.uniform(-r, r);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

ForwardTrace forward(const Network& net, const Matrix& input) {
  const int n = net.dim();
  if (input.rows() != static_cast<std::size_t>(net.input_width()) ||
      input.cols() != static_cast<std::size_t>(n))
    throw DimensionError("forward: input must be " + std::to_string(net.input_width()) + " x " +
                         std::to_string(n));

  ForwardTrace trace;
  trace.pre_activations.reserve(net.layers.size());
  trace.activations.reserve(net.layers.size() + 1);
  trace.activations.push_back(input);

  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const Layer& layer = net.layers[l];
    const Matrix& prev = trace.activations.back();
    const Activation& act = net.activation(l);
    const std::size_t out_w = layer.out_width(), in_w = layer.in_width();

    Matrix z = layer.biases;
    for (std::size_t i = 0; i < out_w; ++i) {
      std::span<double> zi = z.row(i);
      for (std::size_t j = 0; j < in_w; ++j) {
        Matrix rep = matrix_rep(layer.weights.fiber(i, j), net.product);
        std::span<const double> aj = prev.row(j);
        for (int k = 0; k < n; ++k) {
          double acc = 0.0;
          for (int col = 0; col < n; ++col) acc += rep(k, col) * aj[col];
          zi[k] += acc;
        }
      }
    }

    for (double v : z.flat())
      if (!std::isfinite(v))
        throw NumericError("forward: non-finite value in layer " + std::to_string(l + 1));

    Matrix a(out_w, n);
    for (std::size_t i = 0; i < z.size(); ++i) a.flat()[i] = act.apply(z.flat()[i]);

    trace.pre_activations.push_back(std::move(z));
    trace.activations.push_back(std::move(a));
  }
  return trace;
}

double mse_loss(const Matrix& pred, const Matrix& target) {
  if (!pred.same_shape(target))
    throw DimensionError("mse_loss: prediction and target shapes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double d = pred.flat()[i] - target.flat()[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

}  // namespace abip
