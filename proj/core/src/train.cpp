#include "abip/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "abip/error.hpp"
#include "abip/rng.hpp"

namespace abip {
namespace {

// Horizontal/vertical stack of the matrix representations of every weight
// vector in a layer: block (i, j) of the (out*N) x (in*N) result is
// matrix_rep(w_ij). Turns the layer's bilinear feedforward into one dense
// matrix product.
Matrix expand_layer_rep(const Layer& layer, const BilinearProduct& b) {
  const std::size_t out_w = layer.out_width(), in_w = layer.in_width(), n = layer.dim();
  const Tensor3& c = b.structure().coeffs;
  Matrix rep(out_w * n, in_w * n);
  for (std::size_t i = 0; i < out_w; ++i)
    for (std::size_t j = 0; j < in_w; ++j) {
      std::span<const double> w = layer.weights.fiber(i, j);
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t col = 0; col < n; ++col) {
          double acc = 0.0;
          for (std::size_t m = 0; m < n; ++m) acc += c(m, col, k) * w[m];
          rep(i * n + k, j * n + col) = acc;
        }
    }
  return rep;
}

// Columns are flattened samples.
Matrix stack_columns(const Dataset& dataset, std::span<const std::size_t> indices,
                     bool targets) {
  const Matrix& first = targets ? dataset[indices[0]].target : dataset[indices[0]].input;
  Matrix out(first.size(), indices.size());
  for (std::size_t s = 0; s < indices.size(); ++s) {
    const Matrix& m = targets ? dataset[indices[s]].target : dataset[indices[s]].input;
    for (std::size_t r = 0; r < m.size(); ++r) out(r, s) = m.flat()[r];
  }
  return out;
}

struct BatchTrace {
  std::vector<Matrix> z;  // per layer, (width*N) x S
  std::vector<Matrix> a;  // layer count + 1, a[0] is the input stack
};

BatchTrace forward_stack(const Network& net, const std::vector<Matrix>& reps, Matrix input_stack,
                         int threads) {
  BatchTrace trace;
  const std::size_t batch = input_stack.cols();
  trace.a.reserve(net.layers.size() + 1);
  trace.z.reserve(net.layers.size());
  trace.a.push_back(std::move(input_stack));
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const Layer& layer = net.layers[l];
    const Activation& act = net.activation(l);
    const std::size_t n = layer.dim();
    Matrix z(layer.out_width() * n, batch);
    for (std::size_t i = 0; i < layer.out_width(); ++i)
      for (std::size_t k = 0; k < n; ++k) {
        std::span<double> row = z.row(i * n + k);
        std::fill(row.begin(), row.end(), layer.biases(i, k));
      }
    gemm_nn(reps[l], trace.a.back(), z, /*accumulate=*/true, threads);
    Matrix a(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.size(); ++i) a.flat()[i] = act.apply(z.flat()[i]);
    trace.z.push_back(std::move(z));
    trace.a.push_back(std::move(a));
  }
  return trace;
}

std::vector<Matrix> all_layer_reps(const Network& net) {
  std::vector<Matrix> reps;
  reps.reserve(net.layers.size());
  for (const Layer& layer : net.layers) reps.push_back(expand_layer_rep(layer, net.product));
  return reps;
}

void check_sample_shapes(const Network& net, const Sample& s) {
  const std::size_t n = static_cast<std::size_t>(net.dim());
  if (s.input.rows() != static_cast<std::size_t>(net.input_width()) || s.input.cols() != n)
    throw DimensionError("sample input shape does not match the network");
  if (s.target.rows() != static_cast<std::size_t>(net.output_width()) || s.target.cols() != n)
    throw DimensionError("sample target shape does not match the network");
}

}  // namespace

GradientSet GradientSet::zeros_like(const Network& net) {
  GradientSet g;
  g.d_weights.reserve(net.layers.size());
  g.d_biases.reserve(net.layers.size());
  g.deltas.reserve(net.layers.size());
  for (const Layer& l : net.layers) {
    g.d_weights.emplace_back(l.weights.dim0(), l.weights.dim1(), l.weights.dim2());
    g.d_biases.emplace_back(l.biases.rows(), l.biases.cols());
    g.deltas.emplace_back(l.biases.rows(), l.biases.cols());
  }
  return g;
}

Matrix output_delta(const ForwardTrace& trace, const Matrix& target, const Network& net) {
  const Matrix& pred = trace.output();
  if (!pred.same_shape(target)) throw DimensionError("output_delta: target shape mismatch");
  const Matrix& z = trace.pre_activations.back();
  const Activation& act = net.output_activation;
  const double scale = 2.0 / static_cast<double>(target.size());
  Matrix delta(target.rows(), target.cols());
  for (std::size_t i = 0; i < delta.size(); ++i)
    delta.flat()[i] = scale * (pred.flat()[i] - target.flat()[i]) * act.derivative(z.flat()[i]);
  return delta;
}

Matrix backprop_delta(const Matrix& delta_next, const Layer& layer_next, const Matrix& z_cur,
                      const Activation& act, const BilinearProduct& b) {
  const std::size_t n = static_cast<std::size_t>(b.dim());
  const std::size_t next_w = layer_next.out_width(), cur_w = layer_next.in_width();
  if (delta_next.rows() != next_w || delta_next.cols() != n)
    throw DimensionError("backprop_delta: delta shape mismatch");
  if (z_cur.rows() != cur_w || z_cur.cols() != n)
    throw DimensionError("backprop_delta: pre-activation shape mismatch");

  Matrix delta(cur_w, n);
  for (std::size_t i = 0; i < cur_w; ++i) {
    std::span<double> di = delta.row(i);
    for (std::size_t k = 0; k < next_w; ++k) {
      Matrix rep = matrix_rep(layer_next.weights.fiber(k, i), b);
      std::span<const double> dk = delta_next.row(k);
      for (std::size_t col = 0; col < n; ++col) {
        double acc = 0.0;
        for (std::size_t r = 0; r < n; ++r) acc += dk[r] * rep(r, col);
        di[col] += acc;
      }
    }
    for (std::size_t col = 0; col < n; ++col) di[col] *= act.derivative(z_cur(i, col));
  }
  return delta;
}

std::vector<double> weight_grad(std::span<const double> delta, std::span<const double> a_prev,
                                const BilinearProduct& b) {
  const std::size_t n = static_cast<std::size_t>(b.dim());
  if (delta.size() != n || a_prev.size() != n)
    throw DimensionError("weight_grad: vector length mismatch");
  Matrix rep = transmuted_rep(a_prev, b);
  std::vector<double> grad(n, 0.0);
  for (std::size_t col = 0; col < n; ++col) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) acc += delta[k] * rep(k, col);
    grad[col] = acc;
  }
  return grad;
}

GradientSet backward(const Network& net, const ForwardTrace& trace, const Matrix& target) {
  const std::size_t layer_count = net.layers.size();
  if (trace.pre_activations.size() != layer_count || trace.activations.size() != layer_count + 1)
    throw DimensionError("backward: trace does not match the network");

  GradientSet grads = GradientSet::zeros_like(net);
  grads.deltas[layer_count - 1] = output_delta(trace, target, net);
  for (std::size_t l = layer_count - 1; l-- > 0;)
    grads.deltas[l] = backprop_delta(grads.deltas[l + 1], net.layers[l + 1],
                                     trace.pre_activations[l], net.activation(l), net.product);

  for (std::size_t l = 0; l < layer_count; ++l) {
    const Layer& layer = net.layers[l];
    const Matrix& delta = grads.deltas[l];
    const Matrix& a_prev = trace.activations[l];
    for (std::size_t i = 0; i < layer.out_width(); ++i)
      for (std::size_t j = 0; j < layer.in_width(); ++j) {
        std::vector<double> g = weight_grad(delta.row(i), a_prev.row(j), net.product);
        std::span<double> dst = grads.d_weights[l].fiber(i, j);
        std::copy(g.begin(), g.end(), dst.begin());
      }
    grads.d_biases[l] = delta;  // the bias gradient is exactly the local gradient
  }
  return grads;
}

AdamState AdamState::init(const Network& net, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  for (const Layer& l : net.layers) {
    s.m_weights.emplace_back(l.weights.dim0(), l.weights.dim1(), l.weights.dim2());
    s.v_weights.emplace_back(l.weights.dim0(), l.weights.dim1(), l.weights.dim2());
    s.m_biases.emplace_back(l.biases.rows(), l.biases.cols());
    s.v_biases.emplace_back(l.biases.rows(), l.biases.cols());
  }
  return s;
}

namespace {

void adam_update_span(std::span<double> param, std::span<const double> grad,
                      std::span<double> m, std::span<double> v, const AdamState& s,
                      double bias1, double bias2, std::size_t layer, const char* kind) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    double g = grad[i];
    if (!std::isfinite(g))
      throw NumericError("adam_step: non-finite " + std::string(kind) + " gradient in layer " +
                         std::to_string(layer + 1));
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g;
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g * g;
    double m_hat = m[i] / bias1;
    double v_hat = v[i] / bias2;
    param[i] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
  }
}

}  // namespace

void adam_step(Network& net, const GradientSet& grads, AdamState& state) {
  if (grads.d_weights.size() != net.layers.size())
    throw DimensionError("adam_step: gradient set does not match the network");
  state.step += 1;
  const double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    if (!grads.d_weights[l].same_shape(net.layers[l].weights) ||
        !grads.d_biases[l].same_shape(net.layers[l].biases))
      throw DimensionError("adam_step: gradient shapes do not match layer " + std::to_string(l + 1));
    adam_update_span(net.layers[l].weights.flat(), grads.d_weights[l].flat(),
                     state.m_weights[l].flat(), state.v_weights[l].flat(), state, bias1, bias2, l,
                     "weight");
    adam_update_span(net.layers[l].biases.flat(), grads.d_biases[l].flat(),
                     state.m_biases[l].flat(), state.v_biases[l].flat(), state, bias1, bias2, l,
                     "bias");
  }
}

std::vector<Matrix> predict_batch(const Network& net, std::span<const Matrix> inputs,
                                  int threads) {
  const std::size_t n = static_cast<std::size_t>(net.dim());
  const std::size_t in_w = static_cast<std::size_t>(net.input_width());
  Matrix stack(in_w * n, inputs.size());
  for (std::size_t s = 0; s < inputs.size(); ++s) {
    if (inputs[s].rows() != in_w || inputs[s].cols() != n)
      throw DimensionError("predict_batch: input shape mismatch");
    for (std::size_t r = 0; r < inputs[s].size(); ++r) stack(r, s) = inputs[s].flat()[r];
  }
  BatchTrace trace = forward_stack(net, all_layer_reps(net), std::move(stack), threads);
  const Matrix& out = trace.a.back();
  const std::size_t out_w = static_cast<std::size_t>(net.output_width());
  std::vector<Matrix> preds(inputs.size(), Matrix(out_w, n));
  for (std::size_t s = 0; s < inputs.size(); ++s)
    for (std::size_t r = 0; r < out_w * n; ++r) preds[s].flat()[r] = out(r, s);
  return preds;
}

BatchGradients backward_batch(const Network& net, const Dataset& dataset,
                              std::span<const std::size_t> indices, int threads) {
  if (indices.empty()) throw DimensionError("backward_batch: empty batch");
  for (std::size_t idx : indices) check_sample_shapes(net, dataset[idx]);

  const std::size_t n = static_cast<std::size_t>(net.dim());
  const std::size_t batch = indices.size();
  const std::size_t layer_count = net.layers.size();
  const double inv_batch = 1.0 / static_cast<double>(batch);

  std::vector<Matrix> reps = all_layer_reps(net);
  BatchTrace trace = forward_stack(net, reps, stack_columns(dataset, indices, false), threads);
  Matrix targets = stack_columns(dataset, indices, true);

  // Output deltas and the mean per-sample MSE. The loss is accumulated per
  // sample first, so duplicated samples average out bit-exactly.
  const Matrix& y = trace.a.back();
  const Matrix& z_out = trace.z.back();
  const double scale = 2.0 / static_cast<double>(y.rows());
  const Activation& out_act = net.output_activation;
  Matrix delta(y.rows(), batch);
  std::vector<double> per_sample_loss(batch, 0.0);
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t s = 0; s < batch; ++s) {
      double diff = y(r, s) - targets(r, s);
      per_sample_loss[s] += diff * diff;
      delta(r, s) = scale * diff * out_act.derivative(z_out(r, s));
    }
  double loss_acc = 0.0;
  for (double v : per_sample_loss) loss_acc += v / static_cast<double>(y.rows());
  double mean_loss = loss_acc * inv_batch;

  BatchGradients result;
  result.mean_loss = mean_loss;
  result.mean_grads = GradientSet::zeros_like(net);
  const Tensor3& c = net.product.structure().coeffs;

  for (std::size_t l = layer_count; l-- > 0;) {
    const Layer& layer = net.layers[l];
    const std::size_t out_w = layer.out_width(), in_w = layer.in_width();

    // dC/dW in the expanded representation, then contracted back through
    // the structure tensor to per-weight-vector gradients.
    Matrix d_rep(out_w * n, in_w * n);
    gemm_nt(delta, trace.a[l], d_rep, /*accumulate=*/false, threads);
    Tensor3& dw = result.mean_grads.d_weights[l];
    for (std::size_t i = 0; i < out_w; ++i)
      for (std::size_t j = 0; j < in_w; ++j) {
        std::span<double> g = dw.fiber(i, j);
        for (std::size_t m = 0; m < n; ++m) {
          double acc = 0.0;
          for (std::size_t col = 0; col < n; ++col)
            for (std::size_t k = 0; k < n; ++k)
              if (double cv = c(m, col, k); cv != 0.0) acc += cv * d_rep(i * n + k, j * n + col);
          g[m] = acc * inv_batch;
        }
      }

    Matrix& d_bias = result.mean_grads.d_biases[l];
    for (std::size_t i = 0; i < out_w; ++i)
      for (std::size_t k = 0; k < n; ++k) {
        double acc = 0.0;
        std::span<const double> row = delta.row(i * n + k);
        for (double v : row) acc += v;
        d_bias(i, k) = acc * inv_batch;
      }
    result.mean_grads.deltas[l] = d_bias;

    if (l == 0) break;
    Matrix next_delta(in_w * n, batch);
    gemm_tn(reps[l], delta, next_delta, /*accumulate=*/false, threads);
    const Matrix& z_prev = trace.z[l - 1];
    const Activation& act = net.activation(l - 1);
    for (std::size_t i = 0; i < next_delta.size(); ++i)
      next_delta.flat()[i] *= act.derivative(z_prev.flat()[i]);
    delta = std::move(next_delta);
  }
  return result;
}

double evaluate_mse(const Network& net, const Dataset& dataset,
                    std::span<const std::size_t> indices, int threads) {
  if (indices.empty()) throw DimensionError("evaluate_mse: empty index set");
  Matrix stack = stack_columns(dataset, indices, false);
  BatchTrace trace = forward_stack(net, all_layer_reps(net), std::move(stack), threads);
  Matrix targets = stack_columns(dataset, indices, true);
  const Matrix& y = trace.a.back();
  double acc = 0.0;
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t s = 0; s < indices.size(); ++s) {
      double d = y(r, s) - targets(r, s);
      acc += d * d;
    }
  return acc / static_cast<double>(y.rows()) / static_cast<double>(indices.size());
}

const char* train_status_name(TrainStatus s) {
  switch (s) {
    case TrainStatus::early_stopped: return "early_stopped";
    case TrainStatus::reached_max_epochs: return "reached_max_epochs";
    case TrainStatus::diverged: return "diverged";
  }
  return "?";
}

TrainResult train(const Network& initial, const Dataset& dataset, const TrainConfig& config) {
  if (dataset.empty()) throw DataError("train: empty dataset");
  if (config.minibatch_size < 1) throw ConfigError("train: minibatch_size must be >= 1");
  if (config.patience > config.max_epochs)
    throw ConfigError("train: patience must not exceed max_epochs");
  if (!(config.validation_fraction > 0.0 && config.validation_fraction < 1.0))
    throw ConfigError("train: validation_fraction must lie in (0, 1)");
  for (const Sample& s : dataset) {
    check_sample_shapes(initial, s);
    if (initial.output_activation.kind == ActivationKind::sigmoid)
      for (double t : s.target.flat())
        if (t < 0.0 || t > 1.0)
          throw DataError("train: sigmoid output requires targets in [0, 1]");
  }

  const std::size_t total = dataset.size();
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng(derive_seed(config.seed, 0));
  split_rng.shuffle(order);
  std::size_t val_count = static_cast<std::size_t>(
      std::llround(config.validation_fraction * static_cast<double>(total)));
  val_count = std::min(val_count, total - 1);
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + val_count);
  std::vector<std::size_t> train_idx(order.begin() + val_count, order.end());
  // A degenerate split (everything in training) validates on the training
  // set itself so that early stopping still has a signal.
  std::span<const std::size_t> val_view = val_idx.empty() ? train_idx : val_idx;

  TrainResult result;
  result.network = initial;
  result.best_val_mse = std::numeric_limits<double>::infinity();
  Network net = initial;
  AdamState adam = AdamState::init(net, config.learning_rate);

  Network best = net;
  int epochs_since_best = 0;
  const auto start = std::chrono::steady_clock::now();

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng epoch_rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    epoch_rng.shuffle(train_idx);

    double loss_sum = 0.0;
    bool finite = true;
    try {
      for (std::size_t begin = 0; begin < train_idx.size();
           begin += static_cast<std::size_t>(config.minibatch_size)) {
        std::size_t end =
            std::min(train_idx.size(), begin + static_cast<std::size_t>(config.minibatch_size));
        std::span<const std::size_t> batch(train_idx.data() + begin, end - begin);
        BatchGradients bg = backward_batch(net, dataset, batch, config.threads);
        if (!std::isfinite(bg.mean_loss)) {
          finite = false;
          break;
        }
        loss_sum += bg.mean_loss * static_cast<double>(batch.size());
        adam_step(net, bg.mean_grads, adam);
      }
    } catch (const NumericError&) {
      finite = false;
    }
    if (!finite) {
      result.status = TrainStatus::diverged;
      break;
    }

    double train_mse = loss_sum / static_cast<double>(train_idx.size());
    double val_mse = evaluate_mse(net, dataset, val_view, config.threads);
    double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(EpochStats{epoch, train_mse, val_mse, elapsed});

    if (!std::isfinite(val_mse)) {
      result.status = TrainStatus::diverged;
      break;
    }
    if (val_mse < result.best_val_mse) {
      result.best_val_mse = val_mse;
      result.best_epoch = epoch;
      best = net;
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
    }
    if (epochs_since_best >= config.patience) {
      result.status = TrainStatus::early_stopped;
      break;
    }
    if (epoch == config.max_epochs) result.status = TrainStatus::reached_max_epochs;
  }

  result.network = std::move(best);
  return result;
}

GradCheckReport grad_check(const Network& net, const Sample& sample, double eps,
                           bool corrupt_analytic) {
  check_sample_shapes(net, sample);
  GradientSet analytic = backward(net, forward(net, sample.input), sample.target);
  if (corrupt_analytic) analytic.d_weights[0](0, 0, 0) += 0.5;

  Network probe = net;
  GradCheckReport report;
  auto loss_at = [&]() { return mse_loss(forward(probe, sample.input).output(), sample.target); };

  auto consider = [&](double a, double g, int layer, const char* kind,
                      std::vector<std::size_t> index) {
    double rel = std::abs(a - g) / std::max(1e-8, std::abs(a) + std::abs(g));
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.layer = layer;
      report.kind = kind;
      report.index = std::move(index);
      report.analytic = a;
      report.numeric = g;
    }
  };

  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    Tensor3& w = probe.layers[l].weights;
    for (std::size_t i = 0; i < w.dim0(); ++i)
      for (std::size_t j = 0; j < w.dim1(); ++j)
        for (std::size_t m = 0; m < w.dim2(); ++m) {
          double saved = w(i, j, m);
          w(i, j, m) = saved + eps;
          double up = loss_at();
          w(i, j, m) = saved - eps;
          double down = loss_at();
          w(i, j, m) = saved;
          consider(analytic.d_weights[l](i, j, m), (up - down) / (2.0 * eps),
                   static_cast<int>(l + 1), "weight", {i, j, m});
        }
    Matrix& b = probe.layers[l].biases;
    for (std::size_t i = 0; i < b.rows(); ++i)
      for (std::size_t k = 0; k < b.cols(); ++k) {
        double saved = b(i, k);
        b(i, k) = saved + eps;
        double up = loss_at();
        b(i, k) = saved - eps;
        double down = loss_at();
        b(i, k) = saved;
        consider(analytic.d_biases[l](i, k), (up - down) / (2.0 * eps), static_cast<int>(l + 1),
                 "bias", {i, k});
      }
  }
  return report;
}

}  // namespace abip
