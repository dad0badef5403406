#pragma once

#include <filesystem>
#include <random>
#include <set>
#include <string>

#include "madeasd/madeasd.hpp"

namespace testing_support {

using madeasd::Index;
using madeasd::Matrix;
using madeasd::Vector;

inline Matrix random_matrix(Index rows, Index cols, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  madeasd::Rng rng(seed);
  Matrix m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = madeasd::uniform(rng, lo, hi);
  return m;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("madeasd_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing_support

namespace testing_support {

/// Quarter-integer features for two balanced classes (first half ASD). Each class sum is a
/// multiple of the class size, so every class mean in the F-score is exactly representable and
/// shifting a column by a dyadic constant changes no rounding.
inline std::pair<Matrix, std::vector<madeasd::Label>> dyadic_features(Index n_features, Index per_class,
                                                                       std::uint64_t seed) {
  madeasd::Rng rng(seed);
  Matrix x(2 * per_class, n_features);
  for (Index j = 0; j < n_features; ++j)
    for (Index cls = 0; cls < 2; ++cls) {
      const Index base = cls * per_class;
      const auto offset = static_cast<long>(madeasd::uniform_index(rng, 9)) - 4;
      long sum = 0;
      for (Index i = 0; i < per_class; ++i) {
        const long v = static_cast<long>(madeasd::uniform_index(rng, 41)) - 20 + offset;
        x(base + i, j) = static_cast<double>(v) / 4.0;
        sum += v;
      }
      const long rem = ((sum % per_class) + per_class) % per_class;
      x(base + per_class - 1, j) -= static_cast<double>(rem) / 4.0;
    }
  std::vector<madeasd::Label> labels(static_cast<std::size_t>(2 * per_class), madeasd::Label::TC);
  for (Index i = 0; i < per_class; ++i) labels[static_cast<std::size_t>(i)] = madeasd::Label::ASD;
  return {x, labels};
}

/// F-score evaluated directly from its definition, one feature at a time.
inline double brute_force_fscore(const Matrix& x, const std::vector<madeasd::Label>& y, Index j) {
  std::vector<double> pos, neg, all;
  for (Index i = 0; i < x.rows(); ++i) {
    (y[static_cast<std::size_t>(i)] == madeasd::Label::ASD ? pos : neg).push_back(x(i, j));
    all.push_back(x(i, j));
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double a : v) s += a;
    return s / static_cast<double>(v.size());
  };
  const double m = mean(all), mp = mean(pos), mn = mean(neg);
  double vp = 0, vn = 0;
  for (double a : pos) vp += (a - mp) * (a - mp);
  for (double a : neg) vn += (a - mn) * (a - mn);
  vp /= static_cast<double>(pos.size() - 1);
  vn /= static_cast<double>(neg.size() - 1);
  return ((mp - m) * (mp - m) + (mn - m) * (mn - m)) / (vp + vn);
}

}  // namespace testing_support

namespace testing_support {

/// Finite-difference check of the full autoencoder training objective (reconstruction +
/// beta * KL) on one corrupted batch, with the dropout masks replayed for every evaluation.
inline madeasd::nn::GradCheckResult check_autoencoder_gradients(const madeasd::AutoencoderConfig& cfg, Index input_dim,
                                                                Index batch, std::size_t probes, std::uint64_t seed) {
  using namespace madeasd;
  Rng rng(seed);
  const nn::DenseNetwork net{input_dim,
                             {nn::init_layer(input_dim, cfg.hidden_dim, nn::Activation::Tanh, rng),
                              nn::init_layer(cfg.hidden_dim, input_dim, nn::Activation::Tanh, rng)},
                             std::nullopt};
  const Matrix clean = random_matrix(batch, input_dim, seed + 1, -0.9, 0.9);
  const Matrix noisy = corrupt_rows(clean, cfg.noise_proportion, rng);
  const Rng dropout_rng = rng;
  Rng replay = dropout_rng;
  const auto analytic = autoencoder_step(net, clean, noisy, cfg, replay).gradients;
  auto objective = [&](const nn::DenseNetwork& n) {
    Rng r = dropout_rng;
    return autoencoder_step(n, clean, noisy, cfg, r).objective;
  };
  Rng probe_rng(seed + 2);
  return nn::gradient_check(net, analytic, objective, probes, probe_rng);
}

/// Same check for the classifier: dims = {input, hidden1, hidden2, hidden3}, with the four
/// demographic inputs joined after hidden3 and a two-way softmax output.
inline madeasd::nn::GradCheckResult check_mlp_gradients(std::array<Index, 4> dims, double dropout, Index batch,
                                                        std::size_t probes, std::uint64_t seed) {
  using namespace madeasd;
  Rng rng(seed);
  const auto aux_dim = static_cast<Index>(kDemographicCount);
  nn::DenseNetwork net{dims[0],
                       {nn::init_layer(dims[0], dims[1], nn::Activation::Tanh, rng),
                        nn::init_layer(dims[1], dims[2], nn::Activation::Tanh, rng),
                        nn::init_layer(dims[2], dims[3], nn::Activation::Tanh, rng),
                        nn::init_layer(dims[3] + aux_dim, 2, nn::Activation::Softmax, rng)},
                       nn::AuxInput{2, aux_dim}};
  for (auto& l : net.layers) l.biases = random_matrix(l.fan_out(), 1, seed + 7, -0.2, 0.2);
  const Matrix x = random_matrix(batch, dims[0], seed + 1);
  const Matrix side = random_matrix(batch, aux_dim, seed + 3, -1.5, 1.5);
  std::vector<int> cls;
  for (Index i = 0; i < batch; ++i) cls.push_back(static_cast<int>(i % 2));
  const Matrix y = nn::one_hot(cls, 2);
  const Rng dropout_rng = rng;
  Rng replay = dropout_rng;
  const auto analytic = mlp_step(net, x, side, y, dropout, replay).gradients;
  auto loss = [&](const nn::DenseNetwork& n) {
    Rng r = dropout_rng;
    return mlp_step(n, x, side, y, dropout, r).loss;
  };
  Rng probe_rng(seed + 2);
  return nn::gradient_check(net, analytic, loss, probes, probe_rng);
}

/// Synthetic cohort over small atlases (8/6/6 ROIs), ready for the pipeline.
inline madeasd::Dataset tiny_dataset(Index subjects, double effect, std::uint64_t seed) {
  using namespace madeasd;
  SyntheticOptions o;
  o.n_subjects = subjects;
  o.atlases = {reduced_atlas("CC", 8), reduced_atlas("AAL", 6), reduced_atlas("EZ", 6)};
  o.effect = effect;
  o.seed = seed;
  const auto ds = generate_synthetic(o);
  return build_dataset(ds.records, o.atlases);
}

/// Few-second pipeline over the tiny_dataset atlases.
inline madeasd::PipelineConfig tiny_pipeline(Index folds = 4, std::uint64_t seed = 1) {
  using namespace madeasd;
  PipelineConfig c;
  for (auto [id, n] : {std::pair{"CC", 8}, {"AAL", 6}, {"EZ", 6}}) c.atlases.push_back({reduced_atlas(id, n), std::nullopt});
  c.atlases[0].retain_percent = 50.0;
  c.ae1.hidden_dim = c.mlp.hidden1 = 8;
  c.ae2.hidden_dim = c.mlp.hidden2 = 6;
  c.mlp.hidden3 = 4;
  c.ae1.optimizer.iterations = c.ae2.optimizer.iterations = 3;
  c.ae1.optimizer.batch_size = c.ae2.optimizer.batch_size = 10;
  c.mlp.optimizer.iterations = 15;
  c.mlp.optimizer.learning_rate = 0.01;
  c.folds = folds;
  c.seed = seed;
  return c;
}

}  // namespace testing_support
