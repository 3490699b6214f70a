#pragma once

// Independent reference implementations used to cross-check the engine.
// Everything here works on plain scalars and nested vectors; none of it
// touches structure tensors, matrix representations, or the batched
// kernels it is meant to verify.

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "abip/network.hpp"

namespace abip::test {

/// Conventional real-valued MLP: dense matrix multiply + bias + elementwise
/// activation, with textbook backpropagation and Adam.
struct ScalarDnnOracle {
  std::vector<std::vector<std::vector<double>>> weights;  // [layer][out][in]
  std::vector<std::vector<double>> biases;                // [layer][out]
  bool sigmoid_hidden = true;
  bool sigmoid_output = true;

  static double act(double z, bool sigmoid) { return sigmoid ? 1.0 / (1.0 + std::exp(-z)) : z; }
  static double act_dot(double z, bool sigmoid) {
    if (!sigmoid) return 1.0;
    double s = 1.0 / (1.0 + std::exp(-z));
    return s * (1.0 - s);
  }

  bool layer_sigmoid(std::size_t l) const {
    return l + 1 == weights.size() ? sigmoid_output : sigmoid_hidden;
  }

  /// Copies parameters out of an N = 1 network.
  static ScalarDnnOracle from_network(const Network& net) {
    ScalarDnnOracle o;
    o.sigmoid_hidden = net.hidden_activation.kind == ActivationKind::sigmoid;
    o.sigmoid_output = net.output_activation.kind == ActivationKind::sigmoid;
    for (const Layer& layer : net.layers) {
      std::vector<std::vector<double>> w(layer.out_width(),
                                         std::vector<double>(layer.in_width()));
      std::vector<double> b(layer.out_width());
      for (std::size_t i = 0; i < layer.out_width(); ++i) {
        for (std::size_t j = 0; j < layer.in_width(); ++j) w[i][j] = layer.weights(i, j, 0);
        b[i] = layer.biases(i, 0);
      }
      o.weights.push_back(std::move(w));
      o.biases.push_back(std::move(b));
    }
    return o;
  }

  struct Trace {
    std::vector<std::vector<double>> z;  // per layer
    std::vector<std::vector<double>> a;  // layer count + 1
  };

  Trace forward(const std::vector<double>& input) const {
    Trace t;
    t.a.push_back(input);
    for (std::size_t l = 0; l < weights.size(); ++l) {
      const auto& prev = t.a.back();
      std::vector<double> z(weights[l].size());
      for (std::size_t i = 0; i < z.size(); ++i) {
        double acc = biases[l][i];
        for (std::size_t j = 0; j < prev.size(); ++j) acc += weights[l][i][j] * prev[j];
        z[i] = acc;
      }
      std::vector<double> a(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) a[i] = act(z[i], layer_sigmoid(l));
      t.z.push_back(std::move(z));
      t.a.push_back(std::move(a));
    }
    return t;
  }

  double loss(const std::vector<double>& pred, const std::vector<double>& target) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      double d = pred[i] - target[i];
      acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
  }

  struct Grads {
    std::vector<std::vector<std::vector<double>>> d_weights;
    std::vector<std::vector<double>> d_biases;
  };

  Grads backward(const Trace& t, const std::vector<double>& target) const {
    const std::size_t layers = weights.size();
    Grads g;
    g.d_weights.resize(layers);
    g.d_biases.resize(layers);

    const auto& y = t.a.back();
    std::vector<double> delta(y.size());
    double scale = 2.0 / static_cast<double>(y.size());
    for (std::size_t i = 0; i < y.size(); ++i)
      delta[i] = scale * (y[i] - target[i]) * act_dot(t.z.back()[i], layer_sigmoid(layers - 1));

    for (std::size_t l = layers; l-- > 0;) {
      const auto& prev = t.a[l];
      g.d_weights[l].assign(weights[l].size(), std::vector<double>(prev.size()));
      for (std::size_t i = 0; i < weights[l].size(); ++i)
        for (std::size_t j = 0; j < prev.size(); ++j) g.d_weights[l][i][j] = delta[i] * prev[j];
      g.d_biases[l] = delta;
      if (l == 0) break;
      std::vector<double> next(t.a[l].size(), 0.0);
      for (std::size_t j = 0; j < next.size(); ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < weights[l].size(); ++i) acc += weights[l][i][j] * delta[i];
        next[j] = acc * act_dot(t.z[l - 1][j], layer_sigmoid(l - 1));
      }
      delta = std::move(next);
    }
    return g;
  }

  /// Mean gradients over a batch (textbook minibatch rule).
  Grads batch_backward(const std::vector<std::vector<double>>& inputs,
                       const std::vector<std::vector<double>>& targets, double& mean_loss) const {
    Grads sum;
    mean_loss = 0.0;
    for (std::size_t s = 0; s < inputs.size(); ++s) {
      Trace t = forward(inputs[s]);
      mean_loss += loss(t.a.back(), targets[s]);
      Grads g = backward(t, targets[s]);
      if (s == 0) {
        sum = std::move(g);
        continue;
      }
      for (std::size_t l = 0; l < sum.d_weights.size(); ++l) {
        for (std::size_t i = 0; i < sum.d_weights[l].size(); ++i)
          for (std::size_t j = 0; j < sum.d_weights[l][i].size(); ++j)
            sum.d_weights[l][i][j] += g.d_weights[l][i][j];
        for (std::size_t i = 0; i < sum.d_biases[l].size(); ++i)
          sum.d_biases[l][i] += g.d_biases[l][i];
      }
    }
    double inv = 1.0 / static_cast<double>(inputs.size());
    mean_loss *= inv;
    for (auto& lw : sum.d_weights)
      for (auto& row : lw)
        for (double& v : row) v *= inv;
    for (auto& lb : sum.d_biases)
      for (double& v : lb) v *= inv;
    return sum;
  }

  struct Adam {
    double lr = 5e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long t = 0;
    std::vector<std::vector<std::vector<double>>> mw, vw;
    std::vector<std::vector<double>> mb, vb;
  };

  Adam make_adam(double lr) const {
    Adam a;
    a.lr = lr;
    a.mw = weights;
    a.vw = weights;
    a.mb = biases;
    a.vb = biases;
    for (auto& lw : a.mw)
      for (auto& row : lw)
        for (double& v : row) v = 0.0;
    for (auto& lw : a.vw)
      for (auto& row : lw)
        for (double& v : row) v = 0.0;
    for (auto& lb : a.mb)
      for (double& v : lb) v = 0.0;
    for (auto& lb : a.vb)
      for (double& v : lb) v = 0.0;
    return a;
  }

  void adam_step(const Grads& g, Adam& s) {
    s.t += 1;
    double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
    double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
    auto update = [&](double& p, double grad, double& m, double& v) {
      m = s.beta1 * m + (1.0 - s.beta1) * grad;
      v = s.beta2 * v + (1.0 - s.beta2) * grad * grad;
      p -= s.lr * (m / c1) / (std::sqrt(v / c2) + s.eps);
    };
    for (std::size_t l = 0; l < weights.size(); ++l) {
      for (std::size_t i = 0; i < weights[l].size(); ++i)
        for (std::size_t j = 0; j < weights[l][i].size(); ++j)
          update(weights[l][i][j], g.d_weights[l][i][j], s.mw[l][i][j], s.vw[l][i][j]);
      for (std::size_t i = 0; i < biases[l].size(); ++i)
        update(biases[l][i], g.d_biases[l][i], s.mb[l][i], s.vb[l][i]);
    }
  }
};

/// Complex multiplication (w1 + i w2)(a1 + i a2).
inline std::pair<double, double> complex_multiply(double w1, double w2, double a1, double a2) {
  std::complex<double> r = std::complex<double>(w1, w2) * std::complex<double>(a1, a2);
  return {r.real(), r.imag()};
}

/// Hyperbolic-number multiplication (w1 + j w2)(a1 + j a2) with j^2 = +1.
inline std::pair<double, double> hyperbolic_multiply(double w1, double w2, double a1, double a2) {
  return {w1 * a1 + w2 * a2, w1 * a2 + w2 * a1};
}

}  // namespace abip::test
