#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "abip/network.hpp"

namespace abip {

/// Per-layer gradients, shape-matched to the network parameters. The bias
/// gradient of every layer is the layer's local gradient vector, so
/// d_biases[l] and deltas[l] hold bit-identical values.
struct GradientSet {
  std::vector<Tensor3> d_weights;  // out x in x N per layer
  std::vector<Matrix> d_biases;    // out x N per layer
  std::vector<Matrix> deltas;      // out x N per layer (local gradients)

  static GradientSet zeros_like(const Network& net);
};

/// Local gradient at the output layer: d[g][n] = dC/dy_gn * phi'(z_gn)
/// with dC/dy = 2 (y - t) / (G * N) for the mean squared error.
Matrix output_delta(const ForwardTrace& trace, const Matrix& target, const Network& net);

/// Propagates local gradients from layer l+1 to layer l:
/// d_i = (sum_k d_k [w_ki]) .* phi'(z_i), a vector-matrix product with the
/// matrix representation of each connecting weight vector.
Matrix backprop_delta(const Matrix& delta_next, const Layer& layer_next, const Matrix& z_cur,
                      const Activation& act, const BilinearProduct& b);

/// Weight gradient dC/dw_ij = d_i * transmuted_rep(a_j), a vector-matrix
/// product with the transmuted representation of the incoming activation.
std::vector<double> weight_grad(std::span<const double> delta, std::span<const double> a_prev,
                                const BilinearProduct& b);

/// Full backward pass for one sample: output delta, per-layer delta
/// backpropagation, weight gradients, bias gradient = delta.
GradientSet backward(const Network& net, const ForwardTrace& trace, const Matrix& target);

/// Adam accumulators, shape-matched to the parameters.
struct AdamState {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<Tensor3> m_weights, v_weights;
  std::vector<Matrix> m_biases, v_biases;

  static AdamState init(const Network& net, double learning_rate = 5e-4);
};

/// One bias-corrected Adam update over every weight and bias.
/// Throws NumericError naming the layer on non-finite gradients.
void adam_step(Network& net, const GradientSet& grads, AdamState& state);

struct TrainConfig {
  int max_epochs = 3000;
  int patience = 100;  // stop when no new strict validation minimum for this many epochs
  int minibatch_size = 128;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;
  double learning_rate = 5e-4;
  int threads = 1;
};

struct EpochStats {
  int epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
  double elapsed_seconds = 0.0;  // wall clock; excluded from reproducible artifacts
};

enum class TrainStatus { early_stopped, reached_max_epochs, diverged };

const char* train_status_name(TrainStatus s);

struct TrainResult {
  Network network;  // parameters achieving the best validation MSE
  std::vector<EpochStats> history;
  TrainStatus status = TrainStatus::reached_max_epochs;
  int best_epoch = 0;
  double best_val_mse = 0.0;
};

/// Minibatch training with Adam: shuffles per epoch with config.seed,
/// splits off the validation set up front, early-stops on patience, and
/// returns the best-validation parameters. Divergence (non-finite loss)
/// aborts with the history intact.
TrainResult train(const Network& initial, const Dataset& dataset, const TrainConfig& config);

struct GradCheckReport {
  double max_rel_err = 0.0;
  int layer = 0;           // 1-based layer of the worst coordinate
  std::string kind;        // "weight" or "bias"
  std::vector<std::size_t> index;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Central-difference verification of backward() on one sample: perturbs
/// every parameter by +-eps and compares. Relative error is
/// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
/// `corrupt_analytic` damages one analytic entry before the comparison --
/// a negative control for callers that gate on the report.
GradCheckReport grad_check(const Network& net, const Sample& sample, double eps = 1e-5,
                           bool corrupt_analytic = false);

// Batched fast path. Numerically equivalent to forward()/backward()
// (validated by cross-check tests); used by the trainer and bulk
// evaluation. Samples are processed in fixed order, so results do not
// depend on the thread count.

/// Predictions for many inputs at once; returns one G x N matrix each.
std::vector<Matrix> predict_batch(const Network& net, std::span<const Matrix> inputs,
                                  int threads = 1);

struct BatchGradients {
  GradientSet mean_grads;  // mean over the batch
  double mean_loss = 0.0;
};

/// Mean gradients and loss over a batch of samples (by index into the
/// dataset), computed with the expanded-representation kernels.
BatchGradients backward_batch(const Network& net, const Dataset& dataset,
                              std::span<const std::size_t> indices, int threads = 1);

/// Mean MSE of the network over the indexed samples.
double evaluate_mse(const Network& net, const Dataset& dataset,
                    std::span<const std::size_t> indices, int threads = 1);

}  // namespace abip
