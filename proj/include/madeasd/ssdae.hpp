#pragma once

// Sparse denoising autoencoders and their greedy two-level stack.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "madeasd/log.hpp"
#include "madeasd/nn.hpp"
#include "madeasd/random.hpp"
#include "madeasd/types.hpp"

namespace madeasd {

enum class ReconstructionLoss { Mse, CrossEntropy };

struct AutoencoderConfig {
  Index hidden_dim = 1000;
  double noise_proportion = 0.3;
  double sparsity_target = 0.5;  // rho
  double sparsity_weight = 0.2;  // beta
  double dropout_rate = 0.5;
  ReconstructionLoss loss = ReconstructionLoss::Mse;
  nn::OptimizerConfig optimizer{nn::OptimizerKind::BatchGd, 0.001, 0.0, 0.0, 100, 700, 0};

  void validate() const {
    if (hidden_dim < 1) throw ValidationError("autoencoder hidden_dim must be >= 1");
    if (!(noise_proportion >= 0.0 && noise_proportion <= 1.0))
      throw ValidationError("noise_proportion must lie in [0, 1]");
    if (!(sparsity_target > 0.0 && sparsity_target < 1.0))
      throw ValidationError("sparsity_target must lie in (0, 1)");
    if (!(sparsity_weight >= 0.0)) throw ValidationError("sparsity_weight must be >= 0");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ValidationError("dropout_rate must lie in [0, 1)");
    optimizer.validate();
  }

  /// First level: n-1000-n, noise 0.3, batch 100, 700 iterations.
  static AutoencoderConfig first_level() { return {}; }

  /// Second level: 1000-500-1000, noise 0.1, batch 10, 1000 iterations.
  static AutoencoderConfig second_level() {
    AutoencoderConfig c;
    c.hidden_dim = 500;
    c.noise_proportion = 0.1;
    c.optimizer.batch_size = 10;
    c.optimizer.iterations = 1000;
    return c;
  }

  bool operator==(const AutoencoderConfig&) const = default;
};

/// Zeroes a uniformly random subset of floor(proportion * dim) coordinates.
inline Vector corrupt(const Vector& input, double proportion, Rng& rng) {
  if (!(proportion >= 0.0 && proportion <= 1.0)) throw ValidationError("corrupt: proportion must lie in [0, 1]");
  const Index dim = input.size();
  const auto k = static_cast<Index>(std::floor(proportion * static_cast<double>(dim)));
  Vector out = input;
  if (k == 0) return out;
  std::vector<Index> idx(static_cast<std::size_t>(dim));
  for (Index i = 0; i < dim; ++i) idx[static_cast<std::size_t>(i)] = i;
  // Partial Fisher-Yates: the first k slots become a uniform k-subset.
  for (Index i = 0; i < k; ++i) {
    const auto j = i + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(dim - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    out(idx[static_cast<std::size_t>(i)]) = 0.0;
  }
  return out;
}

inline Matrix corrupt_rows(const Matrix& input, double proportion, Rng& rng) {
  Matrix out(input.rows(), input.cols());
  for (Index r = 0; r < input.rows(); ++r) out.row(r) = corrupt(input.row(r).transpose(), proportion, rng).transpose();
  return out;
}

struct SparsityPenalty {
  double value = 0.0;
  /// d value / d activations, same shape as the activations.
  Matrix grad;
};

inline constexpr double kSparsityEpsilon = 1e-12;

/// KL(rho || rho_hat_j) summed over hidden units. Activations are tanh outputs; the mean
/// activation is taken after mapping a -> (a + 1) / 2 onto (0, 1).
inline SparsityPenalty sparsity_penalty(const Matrix& hidden, double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw ValidationError("sparsity target must lie in (0, 1)");
  const Index m = hidden.rows(), s = hidden.cols();
  SparsityPenalty out{0.0, Matrix::Zero(m, s)};
  if (m == 0) return out;
  for (Index j = 0; j < s; ++j) {
    const double raw = ((hidden.col(j).array() + 1.0) * 0.5).mean();
    const double rho_hat = std::clamp(raw, kSparsityEpsilon, 1.0 - kSparsityEpsilon);
    out.value += rho * std::log(rho / rho_hat) + (1.0 - rho) * std::log((1.0 - rho) / (1.0 - rho_hat));
    if (raw == rho_hat) {
      const double d_rho_hat = -rho / rho_hat + (1.0 - rho) / (1.0 - rho_hat);
      out.grad.col(j).setConstant(d_rho_hat * 0.5 / static_cast<double>(m));
    }
  }
  return out;
}

/// Reconstruction term for tanh outputs. Cross-entropy maps both sides onto (0, 1) first.
inline double reconstruction_loss(ReconstructionLoss kind, const Matrix& target, const Matrix& output) {
  if (kind == ReconstructionLoss::Mse) return nn::mse(target, output);
  double s = 0.0;
  for (Index c = 0; c < target.cols(); ++c)
    for (Index r = 0; r < target.rows(); ++r) {
      const double t = (target(r, c) + 1.0) * 0.5;
      const double p = std::clamp((output(r, c) + 1.0) * 0.5, nn::kLogEpsilon, 1.0 - nn::kLogEpsilon);
      s -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    }
  return s / static_cast<double>(std::max<Index>(1, target.size()));
}

inline Matrix reconstruction_grad(ReconstructionLoss kind, const Matrix& target, const Matrix& output) {
  if (kind == ReconstructionLoss::Mse) return nn::mse_grad(target, output);
  Matrix g(output.rows(), output.cols());
  const double inv = 1.0 / static_cast<double>(std::max<Index>(1, target.size()));
  for (Index c = 0; c < target.cols(); ++c)
    for (Index r = 0; r < target.rows(); ++r) {
      const double t = (target(r, c) + 1.0) * 0.5;
      const double raw = (output(r, c) + 1.0) * 0.5;
      const double p = std::clamp(raw, nn::kLogEpsilon, 1.0 - nn::kLogEpsilon);
      g(r, c) = raw == p ? (p - t) / (p * (1.0 - p)) * 0.5 * inv : 0.0;
    }
  return g;
}

struct AutoencoderLosses {
  double reconstruction = 0.0;
  /// Unweighted sum of KL terms; the objective adds sparsity_weight times this.
  double sparsity = 0.0;
  double total = 0.0;
};

struct TrainedAutoencoder {
  nn::DenseLayer encoder;
  nn::DenseLayer decoder;
  AutoencoderConfig config;
  AutoencoderLosses final_losses;
  /// Mean training objective per iteration.
  std::vector<double> history;

  Index input_dim() const { return encoder.fan_in(); }
  Index hidden_dim() const { return encoder.fan_out(); }

  nn::DenseNetwork network() const { return {encoder.fan_in(), {encoder, decoder}, std::nullopt}; }
};

/// Hidden codes of clean inputs (no corruption, no dropout).
inline Matrix encode(const nn::DenseLayer& encoder, const Matrix& x) {
  nn::DenseNetwork net{encoder.fan_in(), {encoder}, std::nullopt};
  return nn::forward(net, x).output;
}

inline Matrix encode(const TrainedAutoencoder& ae, const Matrix& x) { return encode(ae.encoder, x); }

/// The objective on clean inputs in inference mode.
inline AutoencoderLosses autoencoder_objective(const nn::DenseNetwork& net, const Matrix& x,
                                               const AutoencoderConfig& cfg) {
  const auto fwd = nn::forward(net, x);
  AutoencoderLosses l;
  l.reconstruction = reconstruction_loss(cfg.loss, x, fwd.output);
  l.sparsity = sparsity_penalty(fwd.cache.activations[0], cfg.sparsity_target).value;
  l.total = l.reconstruction + cfg.sparsity_weight * l.sparsity;
  return l;
}

inline AutoencoderLosses autoencoder_objective(const TrainedAutoencoder& ae, const Matrix& x) {
  return autoencoder_objective(ae.network(), x, ae.config);
}

struct AutoencoderStep {
  double objective = 0.0;
  double reconstruction = 0.0;
  double sparsity = 0.0;
  nn::Gradients gradients;
};

/// One training evaluation: corrupt (already applied to `noisy`), forward with dropout,
/// reconstruct `clean`, add the weighted sparsity penalty on the pre-dropout hidden layer.
inline AutoencoderStep autoencoder_step(const nn::DenseNetwork& net, const Matrix& clean, const Matrix& noisy,
                                        const AutoencoderConfig& cfg, Rng& dropout_rng) {
  auto fwd = nn::forward(net, noisy, nn::Mode::Train, cfg.dropout_rate, &dropout_rng);
  AutoencoderStep s;
  s.reconstruction = reconstruction_loss(cfg.loss, clean, fwd.output);
  std::vector<Matrix> extra(2);
  if (cfg.sparsity_weight > 0.0) {
    auto sp = sparsity_penalty(fwd.cache.activations[0], cfg.sparsity_target);
    s.sparsity = sp.value;
    extra[0] = cfg.sparsity_weight * sp.grad;
  } else {
    s.sparsity = sparsity_penalty(fwd.cache.activations[0], cfg.sparsity_target).value;
  }
  s.objective = s.reconstruction + cfg.sparsity_weight * s.sparsity;
  s.gradients = nn::backward(net, fwd.cache, reconstruction_grad(cfg.loss, clean, fwd.output), extra);
  return s;
}

inline TrainedAutoencoder train_autoencoder(const Matrix& features, const AutoencoderConfig& cfg,
                                            std::uint64_t seed, std::string_view tag = "ae") {
  cfg.validate();
  if (features.cols() < 1 || features.rows() < 1)
    throw ValidationError("train_autoencoder: need at least one sample and one feature");
  if (!features.allFinite()) throw ValidationError("train_autoencoder: non-finite features");
  Rng rng(seed);
  nn::DenseNetwork net{features.cols(),
                       {nn::init_layer(features.cols(), cfg.hidden_dim, nn::Activation::Tanh, rng),
                        nn::init_layer(cfg.hidden_dim, features.cols(), nn::Activation::Tanh, rng)},
                       std::nullopt};
  auto state = nn::OptimizerState::for_network(net);
  TrainedAutoencoder out;
  out.config = cfg;
  for (Index epoch = 0; epoch < cfg.optimizer.iterations; ++epoch) {
    double sum = 0.0;
    const auto batches = nn::epoch_batches(features.rows(), cfg.optimizer.batch_size, rng);
    for (const auto& rows : batches) {
      const Matrix clean = nn::gather_rows(features, rows);
      const Matrix noisy = corrupt_rows(clean, cfg.noise_proportion, rng);
      auto s = autoencoder_step(net, clean, noisy, cfg, rng);
      if (!std::isfinite(s.objective))
        throw NumericalError(std::string(tag) + ": non-finite objective at iteration " + std::to_string(epoch));
      nn::step(net, s.gradients, cfg.optimizer, state, epoch);
      sum += s.objective;
    }
    out.history.push_back(sum / static_cast<double>(batches.size()));
    log::emit(log::Level::Debug, tag, "iteration", epoch, "objective", out.history.back());
  }
  out.encoder = net.layers[0];
  out.decoder = net.layers[1];
  out.final_losses = autoencoder_objective(net, features, cfg);
  return out;
}

/// Greedy layer-wise training: the first autoencoder on the features, the second on the
/// first one's clean-input codes.
inline std::array<TrainedAutoencoder, 2> stack(const Matrix& features, const AutoencoderConfig& first,
                                               const AutoencoderConfig& second, std::uint64_t seed) {
  auto ae1 = train_autoencoder(features, first, derive_seed(seed, {1}), "ssdae.ae1");
  const Matrix codes = encode(ae1, features);
  auto ae2 = train_autoencoder(codes, second, derive_seed(seed, {2}), "ssdae.ae2");
  return {std::move(ae1), std::move(ae2)};
}

}  // namespace madeasd
