#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "abip/bilinear.hpp"
#include "abip/matrix.hpp"

namespace abip {

enum class ActivationKind { sigmoid, identity };

/// Elementwise activation with its derivative, evaluated at the
/// pre-activation value.
struct Activation {
  ActivationKind kind = ActivationKind::sigmoid;

  double apply(double z) const;
  double derivative(double z) const;

  const char* name() const;
  static Activation sigmoid() { return {ActivationKind::sigmoid}; }
  static Activation identity() { return {ActivationKind::identity}; }
  static Activation parse(std::string_view name);
};

/// One fully connected layer of vector neurons: weights(i, j, :) is the
/// N-vector connecting input neuron j to output neuron i, biases row i is
/// the bias vector of output neuron i.
struct Layer {
  Tensor3 weights;  // out_width x in_width x N
  Matrix biases;    // out_width x N

  std::size_t out_width() const { return weights.dim0(); }
  std::size_t in_width() const { return weights.dim1(); }
  std::size_t dim() const { return weights.dim2(); }
  std::size_t parameter_count() const { return weights.size() + biases.size(); }
};

/// Multilayer network of N-dimensional vector neurons connected through a
/// bilinear product.
struct Network {
  BilinearProduct product;
  std::vector<int> topology;  // widths, input through output
  std::vector<Layer> layers;  // topology.size() - 1 entries
  Activation hidden_activation;
  Activation output_activation;

  int dim() const { return product.dim(); }
  int input_width() const { return topology.front(); }
  int output_width() const { return topology.back(); }
  std::size_t layer_count() const { return layers.size(); }
  const Activation& activation(std::size_t layer) const {
    return layer + 1 == layers.size() ? output_activation : hidden_activation;
  }
  std::size_t parameter_count() const;
};

/// Initializes weights i.i.d. uniform on [-r, r] with
/// r = sqrt(6 / (N * (fan_in + fan_out))) and zero biases. The same seed
/// always yields a bit-identical network.
Network init_network(std::vector<int> topology, BilinearProduct product, Activation hidden,
                     Activation output, std::uint64_t seed);

/// Per-layer pre-activations and activations kept for backpropagation.
/// activations[0] is the input; activations[l + 1] applies the layer-l
/// activation to pre_activations[l].
struct ForwardTrace {
  std::vector<Matrix> pre_activations;  // z, one per layer
  std::vector<Matrix> activations;      // a, layer count + 1

  const Matrix& output() const { return activations.back(); }
};

/// Feedforward: z_i = sum_j w_ij (bullet) a_j + b_i per neuron, then the
/// elementwise activation. Each product is applied through the cached
/// matrix representation of the weight vector. Throws NumericError naming
/// the layer if non-finite values appear.
ForwardTrace forward(const Network& net, const Matrix& input);

/// Mean squared error averaged over all output scalars.
double mse_loss(const Matrix& pred, const Matrix& target);

/// One training pair: input R x N, target G x N.
struct Sample {
  Matrix input;
  Matrix target;
};

using Dataset = std::vector<Sample>;

}  // namespace abip
