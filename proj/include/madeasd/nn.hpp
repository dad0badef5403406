#pragma once

// Dense feed-forward networks shared by the autoencoders and the classifier: forward pass
// with inverted dropout and an optional side-input concatenated after one hidden layer,
// exact backpropagation, losses, optimizers and a finite-difference gradient checker.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "madeasd/error.hpp"
#include "madeasd/random.hpp"
#include "madeasd/types.hpp"

namespace madeasd::nn {

enum class Activation { Tanh, Softmax, Identity };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Softmax: return "softmax";
    case Activation::Identity: return "identity";
  }
  return "?";
}

inline Activation activation_from_string(std::string_view s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "softmax") return Activation::Softmax;
  if (s == "identity") return Activation::Identity;
  throw ValidationError("unknown activation '" + std::string(s) + "'");
}

struct DenseLayer {
  Matrix weights;  // fan_in x fan_out
  Vector biases;   // fan_out
  Activation activation = Activation::Tanh;

  Index fan_in() const { return weights.rows(); }
  Index fan_out() const { return weights.cols(); }

  bool operator==(const DenseLayer& o) const {
    return activation == o.activation && weights.rows() == o.weights.rows() &&
           weights.cols() == o.weights.cols() && biases.size() == o.biases.size() &&
           weights == o.weights && biases == o.biases;
  }
};

/// Extra inputs appended to the (post-dropout) output of hidden layer `after_layer`.
struct AuxInput {
  std::size_t after_layer = 0;
  Index dim = 0;
  bool operator==(const AuxInput&) const = default;
};

struct DenseNetwork {
  Index input_dim = 0;
  std::vector<DenseLayer> layers;
  std::optional<AuxInput> aux;

  Index output_dim() const { return layers.empty() ? input_dim : layers.back().fan_out(); }

  void validate() const {
    if (layers.empty()) throw ValidationError("network has no layers");
    if (aux && aux->after_layer + 1 >= layers.size())
      throw ValidationError("aux input must follow a hidden layer");
    Index expected = input_dim;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (l.fan_in() != expected)
        throw ValidationError("layer " + std::to_string(i) + " fan_in " + std::to_string(l.fan_in()) +
                              " != " + std::to_string(expected));
      if (l.biases.size() != l.fan_out())
        throw ValidationError("layer " + std::to_string(i) + " bias length mismatch");
      expected = l.fan_out() + ((aux && aux->after_layer == i) ? aux->dim : 0);
    }
  }

  bool all_finite() const {
    for (const auto& l : layers)
      if (!l.weights.allFinite() || !l.biases.allFinite()) return false;
    return true;
  }

  bool operator==(const DenseNetwork&) const = default;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)), zero biases.
inline DenseLayer init_layer(Index fan_in, Index fan_out, Activation act, Rng& rng) {
  DenseLayer l;
  l.activation = act;
  l.weights.resize(fan_in, fan_out);
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (Index c = 0; c < fan_out; ++c)
    for (Index r = 0; r < fan_in; ++r) l.weights(r, c) = uniform(rng, -bound, bound);
  l.biases = Vector::Zero(fan_out);
  return l;
}

inline void softmax_rows(Matrix& z) {
  for (Index r = 0; r < z.rows(); ++r) {
    const double m = z.row(r).maxCoeff();
    z.row(r) = (z.row(r).array() - m).exp();
    z.row(r) /= z.row(r).sum();
  }
}

inline void apply_activation(Activation a, Matrix& z) {
  switch (a) {
    case Activation::Tanh: z = z.array().tanh(); break;
    case Activation::Softmax: softmax_rows(z); break;
    case Activation::Identity: break;
  }
}

enum class Mode { Train, Infer };

struct ForwardCache {
  /// Input seen by each layer (after dropout and aux concatenation).
  std::vector<Matrix> inputs;
  /// Post-activation output of each layer, before dropout.
  std::vector<Matrix> activations;
  /// Inverted-dropout multipliers per layer; empty where no dropout was applied.
  std::vector<Matrix> keep;
};

struct ForwardResult {
  Matrix output;
  ForwardCache cache;
};

/// Batched forward pass, rows = samples. In Train mode with dropout_rate > 0 every hidden
/// layer's activations are dropped and rescaled by 1/(1-rate); the output layer never is.
inline ForwardResult forward(const DenseNetwork& net, const Matrix& input, Mode mode = Mode::Infer,
                             double dropout_rate = 0.0, Rng* rng = nullptr, const Matrix* aux = nullptr) {
  if (input.cols() != net.input_dim)
    throw ValidationError("forward: input has " + std::to_string(input.cols()) + " columns, network expects " +
                          std::to_string(net.input_dim));
  if (!input.allFinite()) throw ValidationError("forward: non-finite input");
  if (net.aux) {
    if (!aux || aux->cols() != net.aux->dim || aux->rows() != input.rows())
      throw ValidationError("forward: aux input shape mismatch");
    if (!aux->allFinite()) throw ValidationError("forward: non-finite aux input");
  }
  const bool drop = mode == Mode::Train && dropout_rate > 0.0;
  if (drop && !rng) throw ValidationError("forward: dropout requires an rng");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ValidationError("forward: dropout rate must lie in [0, 1)");

  const std::size_t n_layers = net.layers.size();
  ForwardResult res;
  res.cache.inputs.resize(n_layers);
  res.cache.activations.resize(n_layers);
  res.cache.keep.resize(n_layers);
  Matrix x = input;
  for (std::size_t i = 0; i < n_layers; ++i) {
    const auto& layer = net.layers[i];
    Matrix z = x * layer.weights;
    z.rowwise() += layer.biases.transpose();
    apply_activation(layer.activation, z);
    res.cache.inputs[i] = std::move(x);
    res.cache.activations[i] = z;
    if (i + 1 == n_layers) {
      res.output = std::move(z);
      break;
    }
    if (drop) {
      const double scale = 1.0 / (1.0 - dropout_rate);
      Matrix keep(z.rows(), z.cols());
      for (Index c = 0; c < keep.cols(); ++c)
        for (Index r = 0; r < keep.rows(); ++r) keep(r, c) = uniform01(*rng) >= dropout_rate ? scale : 0.0;
      z.array() *= keep.array();
      res.cache.keep[i] = std::move(keep);
    }
    if (net.aux && net.aux->after_layer == i) {
      Matrix joined(z.rows(), z.cols() + aux->cols());
      joined << z, *aux;
      x = std::move(joined);
    } else {
      x = std::move(z);
    }
  }
  return res;
}

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static Gradients zeros_like(const DenseNetwork& net) {
    Gradients g;
    for (const auto& l : net.layers) {
      g.weights.push_back(Matrix::Zero(l.fan_in(), l.fan_out()));
      g.biases.push_back(Vector::Zero(l.fan_out()));
    }
    return g;
  }

  bool all_finite() const {
    for (const auto& w : weights)
      if (!w.allFinite()) return false;
    for (const auto& b : biases)
      if (!b.allFinite()) return false;
    return true;
  }
};

/// Exact gradients given dLoss/dOutput (output = post-activation of the last layer).
/// `extra[i]`, when non-empty, is an additional gradient with respect to layer i's
/// activations before dropout (e.g. a sparsity penalty on hidden units).
inline Gradients backward(const DenseNetwork& net, const ForwardCache& cache, const Matrix& output_grad,
                          const std::vector<Matrix>& extra = {}) {
  const std::size_t n_layers = net.layers.size();
  if (cache.inputs.size() != n_layers || cache.activations.size() != n_layers)
    throw ValidationError("backward: cache does not match network depth");
  const Index batch = cache.activations.back().rows();
  if (output_grad.rows() != batch || output_grad.cols() != net.output_dim())
    throw ValidationError("backward: output gradient shape mismatch");
  for (std::size_t i = 0; i < n_layers; ++i)
    if (cache.activations[i].cols() != net.layers[i].fan_out() || cache.inputs[i].cols() != net.layers[i].fan_in())
      throw ValidationError("backward: stale cache for layer " + std::to_string(i));

  Gradients g;
  g.weights.resize(n_layers);
  g.biases.resize(n_layers);
  Matrix grad = output_grad;
  for (std::size_t li = n_layers; li-- > 0;) {
    const auto& layer = net.layers[li];
    const Matrix& a = cache.activations[li];
    if (li < extra.size() && extra[li].size() != 0) {
      if (extra[li].rows() != a.rows() || extra[li].cols() != a.cols())
        throw ValidationError("backward: extra gradient shape mismatch at layer " + std::to_string(li));
      grad += extra[li];
    }
    Matrix dz;
    switch (layer.activation) {
      case Activation::Tanh: dz = grad.array() * (1.0 - a.array().square()); break;
      case Activation::Identity: dz = grad; break;
      case Activation::Softmax: {
        const Vector dot = (grad.array() * a.array()).rowwise().sum();
        dz = a.array() * (grad.colwise() - dot).array();
        break;
      }
    }
    g.weights[li] = cache.inputs[li].transpose() * dz;
    g.biases[li] = dz.colwise().sum().transpose();
    if (li == 0) break;
    Matrix gin = dz * layer.weights.transpose();
    const std::size_t prev = li - 1;
    if (net.aux && net.aux->after_layer == prev) gin = gin.leftCols(gin.cols() - net.aux->dim).eval();
    if (cache.keep[prev].size() != 0) gin.array() *= cache.keep[prev].array();
    grad = std::move(gin);
  }
  return g;
}

// ---------------------------------------------------------------------------------------------
// Losses. Batched versions average over rows.

inline constexpr double kLogEpsilon = 1e-12;

inline double mse(const Matrix& target, const Matrix& prediction) {
  if (target.rows() != prediction.rows() || target.cols() != prediction.cols())
    throw ValidationError("mse: shape mismatch");
  if (target.size() == 0) return 0.0;
  return (prediction - target).squaredNorm() / static_cast<double>(target.size());
}

inline Matrix mse_grad(const Matrix& target, const Matrix& prediction) {
  return 2.0 * (prediction - target) / static_cast<double>(target.size());
}

inline void check_probabilities(const Matrix& p) {
  for (Index r = 0; r < p.rows(); ++r) {
    if ((p.row(r).array() < 0.0).any() || std::abs(p.row(r).sum() - 1.0) > 1e-6)
      throw ValidationError("cross_entropy: row " + std::to_string(r) + " is not a probability vector");
  }
}

/// Mean over rows of -sum_j y_j log(max(p_j, eps)); y one-hot.
inline double cross_entropy(const Matrix& p, const Matrix& y) {
  if (p.rows() != y.rows() || p.cols() != y.cols()) throw ValidationError("cross_entropy: shape mismatch");
  check_probabilities(p);
  double s = 0.0;
  for (Index r = 0; r < p.rows(); ++r)
    for (Index c = 0; c < p.cols(); ++c)
      if (y(r, c) != 0.0) s -= y(r, c) * std::log(std::max(p(r, c), kLogEpsilon));
  return p.rows() ? s / static_cast<double>(p.rows()) : 0.0;
}

inline Matrix cross_entropy_grad(const Matrix& p, const Matrix& y) {
  Matrix g = Matrix::Zero(p.rows(), p.cols());
  const double inv_m = 1.0 / static_cast<double>(std::max<Index>(1, p.rows()));
  for (Index r = 0; r < p.rows(); ++r)
    for (Index c = 0; c < p.cols(); ++c)
      if (y(r, c) != 0.0 && p(r, c) > kLogEpsilon) g(r, c) = -y(r, c) / p(r, c) * inv_m;
  return g;
}

inline double cross_entropy(const Vector& p, int cls) {
  Matrix pm = p.transpose();
  Matrix y = Matrix::Zero(1, p.size());
  y(0, cls) = 1.0;
  return cross_entropy(pm, y);
}

inline Matrix one_hot(const std::vector<int>& classes, int n_classes) {
  Matrix y = Matrix::Zero(static_cast<Index>(classes.size()), n_classes);
  for (std::size_t i = 0; i < classes.size(); ++i) y(static_cast<Index>(i), classes[i]) = 1.0;
  return y;
}

// ---------------------------------------------------------------------------------------------
// Optimizers

enum class OptimizerKind { BatchGd, SgdMomentum };

inline std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::BatchGd ? "batch-gd" : "sgd-momentum"; }

inline OptimizerKind optimizer_from_string(std::string_view s) {
  if (s == "batch-gd" || s == "gd") return OptimizerKind::BatchGd;
  if (s == "sgd-momentum" || s == "sgd") return OptimizerKind::SgdMomentum;
  throw ValidationError("unknown optimizer '" + std::string(s) + "'");
}

/// `iterations` counts epochs: full shuffled passes over the training rows in mini-batches
/// of `batch_size`. The momentum ramp advances once per epoch.
struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::BatchGd;
  double learning_rate = 0.001;
  double momentum_start = 0.0;
  double momentum_end = 0.0;
  Index batch_size = 100;
  Index iterations = 100;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw ValidationError("learning_rate must be finite and >= 0");
    if (!(momentum_start >= 0.0 && momentum_start <= momentum_end && momentum_end < 1.0))
      throw ValidationError("momentum must satisfy 0 <= start <= end < 1");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (iterations < 0) throw ValidationError("iterations must be >= 0");
  }

  bool operator==(const OptimizerConfig&) const = default;
};

/// Linear ramp from momentum_start (t = 0) to momentum_end (t = iterations - 1).
inline double momentum_at(const OptimizerConfig& opt, Index t) {
  if (opt.kind == OptimizerKind::BatchGd) return 0.0;
  if (opt.iterations <= 1) return opt.momentum_start;
  const double frac = std::clamp(static_cast<double>(t) / static_cast<double>(opt.iterations - 1), 0.0, 1.0);
  return opt.momentum_start + (opt.momentum_end - opt.momentum_start) * frac;
}

struct OptimizerState {
  std::vector<Matrix> velocity_w;
  std::vector<Vector> velocity_b;

  static OptimizerState for_network(const DenseNetwork& net) {
    OptimizerState s;
    for (const auto& l : net.layers) {
      s.velocity_w.push_back(Matrix::Zero(l.fan_in(), l.fan_out()));
      s.velocity_b.push_back(Vector::Zero(l.fan_out()));
    }
    return s;
  }
};

/// batch-gd: p <- p - lr g.  sgd-momentum: v <- mu(t) v - lr g; p <- p + v.
inline void step(DenseNetwork& net, const Gradients& g, const OptimizerConfig& opt, OptimizerState& state, Index t) {
  if (g.weights.size() != net.layers.size() || g.biases.size() != net.layers.size())
    throw ValidationError("step: gradient count does not match network depth");
  if (!g.all_finite()) throw NumericalError("step: non-finite gradient at iteration " + std::to_string(t));
  if (opt.kind == OptimizerKind::SgdMomentum && state.velocity_w.size() != net.layers.size())
    state = OptimizerState::for_network(net);
  const double lr = opt.learning_rate;
  const double mu = momentum_at(opt, t);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    auto& l = net.layers[i];
    if (g.weights[i].rows() != l.fan_in() || g.weights[i].cols() != l.fan_out() || g.biases[i].size() != l.fan_out())
      throw ValidationError("step: gradient shape mismatch at layer " + std::to_string(i));
    if (opt.kind == OptimizerKind::BatchGd) {
      l.weights -= lr * g.weights[i];
      l.biases -= lr * g.biases[i];
    } else {
      state.velocity_w[i] = mu * state.velocity_w[i] - lr * g.weights[i];
      state.velocity_b[i] = mu * state.velocity_b[i] - lr * g.biases[i];
      l.weights += state.velocity_w[i];
      l.biases += state.velocity_b[i];
    }
  }
  if (!net.all_finite()) throw NumericalError("step: parameters became non-finite at iteration " + std::to_string(t));
}

/// Row indices of one shuffled epoch split into mini-batches.
inline std::vector<std::vector<Index>> epoch_batches(Index n_rows, Index batch_size, Rng& rng) {
  std::vector<Index> order(static_cast<std::size_t>(n_rows));
  for (Index i = 0; i < n_rows; ++i) order[static_cast<std::size_t>(i)] = i;
  shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<Index>> batches;
  for (Index start = 0; start < n_rows; start += batch_size) {
    const Index end = std::min(n_rows, start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

inline Matrix gather_rows(const Matrix& m, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

// ---------------------------------------------------------------------------------------------
// Gradient checking

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t probes = 0;
  /// Location of the worst probe.
  std::size_t worst_layer = 0;
  bool worst_is_bias = false;
  Index worst_row = 0, worst_col = 0;
  double worst_analytic = 0.0, worst_numeric = 0.0;
};

/// |a - n| / max(|a|, |n|), with the denominator floored at `floor` so that gradients which
/// are zero up to round-off compare by absolute error.
inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
  const double den = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / den;
}

/// Compares `analytic` against central differences of `loss(net)` at randomly chosen
/// parameters. `loss` must be deterministic in the network (replay any noise from a copied rng).
template <class LossFn>
GradCheckResult gradient_check(const DenseNetwork& net, const Gradients& analytic, LossFn&& loss,
                               std::size_t probes, Rng& rng, double h = 1e-5) {
  GradCheckResult res;
  DenseNetwork probe = net;
  std::size_t total = 0;
  for (const auto& l : net.layers) total += static_cast<std::size_t>(l.weights.size() + l.biases.size());
  for (std::size_t p = 0; p < probes; ++p) {
    auto k = uniform_index(rng, total);
    std::size_t li = 0;
    while (k >= static_cast<std::size_t>(net.layers[li].weights.size() + net.layers[li].biases.size())) {
      k -= static_cast<std::size_t>(net.layers[li].weights.size() + net.layers[li].biases.size());
      ++li;
    }
    const bool is_bias = k >= static_cast<std::size_t>(net.layers[li].weights.size());
    Index r = 0, c = 0;
    double* param;
    double a;
    if (is_bias) {
      r = static_cast<Index>(k - static_cast<std::size_t>(net.layers[li].weights.size()));
      param = &probe.layers[li].biases(r);
      a = analytic.biases[li](r);
    } else {
      r = static_cast<Index>(k) % net.layers[li].fan_in();
      c = static_cast<Index>(k) / net.layers[li].fan_in();
      param = &probe.layers[li].weights(r, c);
      a = analytic.weights[li](r, c);
    }
    const double orig = *param;
    *param = orig + h;
    const double up = loss(static_cast<const DenseNetwork&>(probe));
    *param = orig - h;
    const double down = loss(static_cast<const DenseNetwork&>(probe));
    *param = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double err = relative_error(a, numeric);
    ++res.probes;
    if (err > res.max_relative_error || res.probes == 1) {
      res.max_relative_error = std::max(res.max_relative_error, err);
      if (err >= res.max_relative_error) {
        res.worst_layer = li;
        res.worst_is_bias = is_bias;
        res.worst_row = r;
        res.worst_col = c;
        res.worst_analytic = a;
        res.worst_numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace madeasd::nn
