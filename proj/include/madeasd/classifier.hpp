#pragma once

// MLP initialised from the autoencoder stack, with standardized demographics appended to
// the third hidden layer and a two-way softmax output (ASD, TC).

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "madeasd/feature_selection.hpp"
#include "madeasd/log.hpp"
#include "madeasd/nn.hpp"
#include "madeasd/ssdae.hpp"
#include "madeasd/types.hpp"

namespace madeasd {

struct MlpConfig {
  Index hidden1 = 1000;
  Index hidden2 = 500;
  /// Learned units of the third hidden layer; the demographic slots come on top (100 + 4).
  Index hidden3 = 100;
  double dropout_rate = 0.3;
  bool use_demographics = true;
  /// Keep the transferred layers fixed during fine-tuning.
  bool freeze_pretrained = false;
  /// Accept a second autoencoder whose width differs from hidden2 by inserting a randomly
  /// initialised projection layer.
  bool ae2_projection = false;
  nn::OptimizerConfig optimizer{nn::OptimizerKind::SgdMomentum, 0.0005, 0.1, 0.9, 10, 200, 0};

  void validate() const {
    if (hidden1 < 1 || hidden2 < 1 || hidden3 < 1) throw ValidationError("MLP hidden widths must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ValidationError("MLP dropout must lie in [0, 1)");
    optimizer.validate();
  }

  bool operator==(const MlpConfig&) const = default;
};

/// Z-scores demographics with statistics of the training subjects; a missing value maps
/// to the training mean (standardized 0).
struct DemographicScaler {
  std::array<double, kDemographicCount> mean{};
  std::array<double, kDemographicCount> scale{1.0, 1.0, 1.0, 1.0};
  bool fitted = false;

  static DemographicScaler fit(std::span<const Demographics> train) {
    DemographicScaler s;
    for (std::size_t f = 0; f < kDemographicCount; ++f) {
      double sum = 0.0, n = 0.0;
      for (const auto& d : train)
        if (d.values[f]) {
          sum += *d.values[f];
          n += 1.0;
        }
      if (n == 0.0)
        throw ValidationError("demographic field '" + std::string(kDemographicNames[f]) +
                              "' has no observed training values");
      const double mean = sum / n;
      double ss = 0.0;
      for (const auto& d : train)
        if (d.values[f]) ss += (*d.values[f] - mean) * (*d.values[f] - mean);
      const double sd = n > 1.0 ? std::sqrt(ss / (n - 1.0)) : 0.0;
      s.mean[f] = mean;
      s.scale[f] = sd > 0.0 ? sd : 1.0;
    }
    s.fitted = true;
    return s;
  }

  Vector transform(const Demographics& d) const {
    if (!fitted) throw ValidationError("demographic scaler used before fitting");
    Vector z(static_cast<Index>(kDemographicCount));
    for (std::size_t f = 0; f < kDemographicCount; ++f)
      z(static_cast<Index>(f)) = d.values[f] ? (*d.values[f] - mean[f]) / scale[f] : 0.0;
    return z;
  }

  Matrix transform(std::span<const Demographics> ds) const {
    Matrix out(static_cast<Index>(ds.size()), static_cast<Index>(kDemographicCount));
    for (std::size_t i = 0; i < ds.size(); ++i) out.row(static_cast<Index>(i)) = transform(ds[i]).transpose();
    return out;
  }

  bool operator==(const DemographicScaler&) const = default;
};

/// [hidden3 activations | age, sex, handedness, fiq standardized].
inline Vector fuse_demographics(const Vector& hidden3, const Demographics& d, const DemographicScaler& scaler) {
  Vector out(hidden3.size() + static_cast<Index>(kDemographicCount));
  out << hidden3, scaler.transform(d);
  return out;
}

struct MlpModel {
  std::string atlas_id;
  nn::DenseNetwork net;
  FeatureMask mask;
  DemographicScaler scaler;
  bool use_demographics = true;
  /// Number of leading layers copied from the autoencoders.
  std::size_t pretrained_layers = 2;
  MlpConfig config;
  std::uint64_t seed = 0;
  std::vector<double> loss_history;

  Index input_dim() const { return net.input_dim; }

  /// Side input for a batch: standardized demographics, or zeros when fusion is disabled.
  Matrix demographic_input(std::span<const Demographics> ds) const {
    if (!use_demographics) return Matrix::Zero(static_cast<Index>(ds.size()), static_cast<Index>(kDemographicCount));
    return scaler.transform(ds);
  }
};

inline MlpModel build_from_ssdae(const std::array<TrainedAutoencoder, 2>& ssdae, FeatureMask mask,
                                 const MlpConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto& ae1 = ssdae[0];
  const auto& ae2 = ssdae[1];
  if (ae1.input_dim() != mask.size())
    throw ValidationError("build_from_ssdae: first autoencoder expects " + std::to_string(ae1.input_dim()) +
                          " inputs, mask retains " + std::to_string(mask.size()));
  if (ae1.hidden_dim() != cfg.hidden1)
    throw ValidationError("build_from_ssdae: first autoencoder width " + std::to_string(ae1.hidden_dim()) +
                          " != hidden1 " + std::to_string(cfg.hidden1));
  if (ae2.input_dim() != cfg.hidden1)
    throw ValidationError("build_from_ssdae: second autoencoder input " + std::to_string(ae2.input_dim()) +
                          " != hidden1 " + std::to_string(cfg.hidden1));
  if (ae2.hidden_dim() != cfg.hidden2 && !cfg.ae2_projection)
    throw ValidationError("build_from_ssdae: second autoencoder width " + std::to_string(ae2.hidden_dim()) +
                          " != hidden2 " + std::to_string(cfg.hidden2) + " (enable ae2_projection to bridge)");

  Rng rng(seed);
  MlpModel m;
  m.atlas_id = mask.atlas_id;
  m.mask = std::move(mask);
  m.use_demographics = cfg.use_demographics;
  m.config = cfg;
  m.seed = seed;
  m.net.input_dim = ae1.input_dim();
  m.net.layers.push_back(ae1.encoder);
  m.net.layers.push_back(ae2.encoder);
  if (ae2.hidden_dim() != cfg.hidden2)
    m.net.layers.push_back(nn::init_layer(ae2.hidden_dim(), cfg.hidden2, nn::Activation::Tanh, rng));
  m.pretrained_layers = 2;
  m.net.layers.push_back(nn::init_layer(cfg.hidden2, cfg.hidden3, nn::Activation::Tanh, rng));
  m.net.aux = nn::AuxInput{m.net.layers.size() - 1, static_cast<Index>(kDemographicCount)};
  m.net.layers.push_back(nn::init_layer(cfg.hidden3 + static_cast<Index>(kDemographicCount), kNumClasses,
                                        nn::Activation::Softmax, rng));
  m.net.validate();
  return m;
}

inline std::vector<int> class_indices(std::span<const Label> labels) {
  std::vector<int> out;
  out.reserve(labels.size());
  for (auto l : labels) out.push_back(class_index(l));
  return out;
}

struct MlpStep {
  double loss = 0.0;
  nn::Gradients gradients;
};

/// Mean cross-entropy of one batch in training mode and its exact gradient.
inline MlpStep mlp_step(const nn::DenseNetwork& net, const Matrix& x, const Matrix& side, const Matrix& targets,
                        double dropout_rate, Rng& rng) {
  auto fwd = nn::forward(net, x, nn::Mode::Train, dropout_rate, &rng, &side);
  MlpStep s;
  s.loss = nn::cross_entropy(fwd.output, targets);
  s.gradients = nn::backward(net, fwd.cache, nn::cross_entropy_grad(fwd.output, targets));
  return s;
}

/// End-to-end supervised training on masked features. Fits the demographic scaler on the
/// training subjects first.
inline MlpModel fine_tune(MlpModel model, const Matrix& features, std::span<const Demographics> demographics,
                          std::span<const Label> labels, std::uint64_t seed) {
  const auto& cfg = model.config;
  if (features.rows() != static_cast<Index>(labels.size()) || demographics.size() != labels.size())
    throw ValidationError("fine_tune: features, demographics and labels disagree in length");
  if (features.cols() != model.input_dim())
    throw ValidationError("fine_tune: features have " + std::to_string(features.cols()) + " columns, model expects " +
                          std::to_string(model.input_dim()));
  if (labels.empty()) throw ValidationError("fine_tune: no training samples");
  model.scaler = DemographicScaler::fit(demographics);
  const Matrix side = model.demographic_input(demographics);
  const Matrix targets = nn::one_hot(class_indices(labels), kNumClasses);

  Rng rng(seed);
  auto state = nn::OptimizerState::for_network(model.net);
  model.loss_history.clear();
  for (Index epoch = 0; epoch < cfg.optimizer.iterations; ++epoch) {
    double sum = 0.0;
    const auto batches = nn::epoch_batches(features.rows(), cfg.optimizer.batch_size, rng);
    for (const auto& rows : batches) {
      const Matrix x = nn::gather_rows(features, rows);
      const Matrix a = nn::gather_rows(side, rows);
      const Matrix y = nn::gather_rows(targets, rows);
      auto [loss, grads] = mlp_step(model.net, x, a, y, cfg.dropout_rate, rng);
      if (!std::isfinite(loss))
        throw NumericalError("fine_tune " + model.atlas_id + ": non-finite loss at iteration " + std::to_string(epoch));
      if (cfg.freeze_pretrained)
        for (std::size_t i = 0; i < model.pretrained_layers; ++i) {
          grads.weights[i].setZero();
          grads.biases[i].setZero();
        }
      nn::step(model.net, grads, cfg.optimizer, state, epoch);
      sum += loss;
    }
    model.loss_history.push_back(sum / static_cast<double>(batches.size()));
    log::emit(log::Level::Debug, "mlp", "atlas", model.atlas_id, "iteration", epoch, "loss", model.loss_history.back());
  }
  return model;
}

/// Rows of [P(ASD), P(TC)] for masked feature rows. No dropout.
inline Matrix predict_proba(const MlpModel& model, const Matrix& masked_features,
                            std::span<const Demographics> demographics) {
  if (masked_features.cols() != model.input_dim())
    throw ValidationError("predict_proba: " + std::to_string(masked_features.cols()) + " features, model " +
                          model.atlas_id + " expects " + std::to_string(model.input_dim()));
  if (static_cast<std::size_t>(masked_features.rows()) != demographics.size())
    throw ValidationError("predict_proba: feature rows and demographics disagree in length");
  const Matrix side = model.demographic_input(demographics);
  return nn::forward(model.net, masked_features, nn::Mode::Infer, 0.0, nullptr, &side).output;
}

inline Vector predict_proba(const MlpModel& model, const Vector& masked_row, const Demographics& d) {
  const Matrix x = masked_row.transpose();
  return predict_proba(model, x, std::span<const Demographics>(&d, 1)).row(0).transpose();
}

/// Exact ties go to ASD.
inline Label argmax_label(double p_asd, double p_tc) { return p_asd >= p_tc ? Label::ASD : Label::TC; }

inline std::vector<Label> predict_labels(const MlpModel& model, const Matrix& masked_features,
                                         std::span<const Demographics> demographics) {
  const Matrix p = predict_proba(model, masked_features, demographics);
  std::vector<Label> out;
  for (Index r = 0; r < p.rows(); ++r) out.push_back(argmax_label(p(r, 0), p(r, 1)));
  return out;
}

inline double accuracy(std::span<const Label> predicted, std::span<const Label> truth) {
  if (predicted.size() != truth.size() || truth.empty()) throw ValidationError("accuracy: length mismatch or empty");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

}  // namespace madeasd
