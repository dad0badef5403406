#pragma once

// Versioned JSON model files. Parameter blocks are stored as base64 of the raw IEEE-754
// doubles (little-endian, row-major) so a load reproduces them bit for bit.

#include <bit>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>
#include <nlohmann/json.hpp>

#include "madeasd/classifier.hpp"
#include "madeasd/ensemble.hpp"
#include "madeasd/nn.hpp"
#include "madeasd/ssdae.hpp"
#include "madeasd/text_io.hpp"

namespace madeasd {

inline constexpr int kModelFormatVersion = 1;

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

inline std::string base64_encode(const std::string& bytes) {
  namespace it = boost::archive::iterators;
  using Enc = it::base64_from_binary<it::transform_width<std::string::const_iterator, 6, 8>>;
  std::string out(Enc(bytes.begin()), Enc(bytes.end()));
  out.append((3 - bytes.size() % 3) % 3, '=');
  return out;
}

inline std::string base64_decode(std::string s) {
  namespace it = boost::archive::iterators;
  using Dec = it::transform_width<it::binary_from_base64<std::string::const_iterator>, 8, 6>;
  std::size_t pad = 0;
  while (!s.empty() && s.back() == '=') {
    s.pop_back();
    ++pad;
  }
  if (pad > 2 || (s.size() + pad) % 4 != 0) throw ValidationError("malformed base64 block");
  try {
    std::string out(Dec(s.begin()), Dec(s.end()));
    // The decoder emits whole bytes only; trailing partial bits belong to the padding.
    out.resize(s.size() * 3 / 4);
    return out;
  } catch (const std::exception&) {
    throw ValidationError("malformed base64 block");
  }
}

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline nlohmann::json matrix_to_json(const Matrix& m) {
  const RowMajorMatrix rm = m;
  std::string bytes(static_cast<std::size_t>(m.size()) * sizeof(double), '\0');
  if (m.size()) std::memcpy(bytes.data(), rm.data(), bytes.size());
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", base64_encode(bytes)}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Index>(), cols = j.at("cols").get<Index>();
  if (rows < 0 || cols < 0) throw ValidationError("matrix block has negative dimensions");
  const auto bytes = base64_decode(j.at("data").get<std::string>());
  if (bytes.size() != static_cast<std::size_t>(rows * cols) * sizeof(double))
    throw ValidationError("matrix block holds " + std::to_string(bytes.size()) + " bytes, expected " +
                          std::to_string(rows * cols * static_cast<Index>(sizeof(double))));
  RowMajorMatrix m(rows, cols);
  if (m.size()) std::memcpy(m.data(), bytes.data(), bytes.size());
  return Matrix(m);
}

inline nlohmann::json vector_to_json(const Vector& v) { return matrix_to_json(Matrix(v)); }

inline Vector vector_from_json(const nlohmann::json& j) {
  const Matrix m = matrix_from_json(j);
  if (m.cols() != 1 && m.size() != 0) throw ValidationError("vector block must have one column");
  return m.size() ? Vector(m.col(0)) : Vector();
}

// --- networks ---------------------------------------------------------------------------------

inline nlohmann::json to_json(const nn::DenseLayer& l) {
  return {{"activation", nn::to_string(l.activation)}, {"weights", matrix_to_json(l.weights)},
          {"biases", vector_to_json(l.biases)}};
}

inline nn::DenseLayer layer_from_json(const nlohmann::json& j) {
  return {matrix_from_json(j.at("weights")), vector_from_json(j.at("biases")),
          nn::activation_from_string(j.at("activation").get<std::string>())};
}

inline nlohmann::json to_json(const nn::DenseNetwork& n) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : n.layers) layers.push_back(to_json(l));
  nlohmann::json j{{"input_dim", n.input_dim}, {"layers", std::move(layers)}};
  j["aux"] = n.aux ? nlohmann::json{{"after_layer", n.aux->after_layer}, {"dim", n.aux->dim}} : nlohmann::json(nullptr);
  return j;
}

inline nn::DenseNetwork network_from_json(const nlohmann::json& j) {
  nn::DenseNetwork n;
  n.input_dim = j.at("input_dim").get<Index>();
  for (const auto& l : j.at("layers")) n.layers.push_back(layer_from_json(l));
  if (j.contains("aux") && !j["aux"].is_null())
    n.aux = nn::AuxInput{j["aux"].at("after_layer").get<std::size_t>(), j["aux"].at("dim").get<Index>()};
  n.validate();
  return n;
}

inline nlohmann::json to_json(const nn::OptimizerConfig& o) {
  return {{"kind", nn::to_string(o.kind)},     {"learning_rate", o.learning_rate},
          {"momentum_start", o.momentum_start}, {"momentum_end", o.momentum_end},
          {"batch_size", o.batch_size},         {"iterations", o.iterations},
          {"seed", o.seed}};
}

inline nn::OptimizerConfig optimizer_from_json(const nlohmann::json& j) {
  nn::OptimizerConfig o;
  o.kind = nn::optimizer_from_string(j.at("kind").get<std::string>());
  o.learning_rate = j.at("learning_rate").get<double>();
  o.momentum_start = j.at("momentum_start").get<double>();
  o.momentum_end = j.at("momentum_end").get<double>();
  o.batch_size = j.at("batch_size").get<Index>();
  o.iterations = j.at("iterations").get<Index>();
  o.seed = j.value("seed", std::uint64_t{0});
  return o;
}

// --- autoencoders -----------------------------------------------------------------------------

inline nlohmann::json to_json(const AutoencoderConfig& c) {
  return {{"hidden_dim", c.hidden_dim},
          {"noise_proportion", c.noise_proportion},
          {"sparsity_target", c.sparsity_target},
          {"sparsity_weight", c.sparsity_weight},
          {"dropout_rate", c.dropout_rate},
          {"loss", c.loss == ReconstructionLoss::Mse ? "mse" : "cross-entropy"},
          {"optimizer", to_json(c.optimizer)}};
}

inline AutoencoderConfig autoencoder_config_from_json(const nlohmann::json& j) {
  AutoencoderConfig c;
  c.hidden_dim = j.at("hidden_dim").get<Index>();
  c.noise_proportion = j.at("noise_proportion").get<double>();
  c.sparsity_target = j.at("sparsity_target").get<double>();
  c.sparsity_weight = j.at("sparsity_weight").get<double>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  const auto loss = j.at("loss").get<std::string>();
  if (loss != "mse" && loss != "cross-entropy") throw ValidationError("unknown autoencoder loss '" + loss + "'");
  c.loss = loss == "mse" ? ReconstructionLoss::Mse : ReconstructionLoss::CrossEntropy;
  c.optimizer = optimizer_from_json(j.at("optimizer"));
  return c;
}

inline nlohmann::json to_json(const TrainedAutoencoder& ae) {
  return {{"config", to_json(ae.config)},
          {"encoder", to_json(ae.encoder)},
          {"decoder", to_json(ae.decoder)},
          {"final_losses",
           {{"reconstruction", ae.final_losses.reconstruction},
            {"sparsity", ae.final_losses.sparsity},
            {"total", ae.final_losses.total}}},
          {"history", ae.history}};
}

inline TrainedAutoencoder autoencoder_from_json(const nlohmann::json& j) {
  TrainedAutoencoder ae;
  ae.config = autoencoder_config_from_json(j.at("config"));
  ae.encoder = layer_from_json(j.at("encoder"));
  ae.decoder = layer_from_json(j.at("decoder"));
  const auto& fl = j.at("final_losses");
  ae.final_losses = {fl.at("reconstruction").get<double>(), fl.at("sparsity").get<double>(), fl.at("total").get<double>()};
  ae.history = j.value("history", std::vector<double>{});
  if (ae.encoder.fan_out() != ae.decoder.fan_in() || ae.encoder.fan_in() != ae.decoder.fan_out())
    throw ValidationError("autoencoder encoder/decoder shapes disagree");
  return ae;
}

inline nlohmann::json envelope(std::string_view role) { return {{"format_version", kModelFormatVersion}, {"role", role}}; }

inline void check_envelope(const nlohmann::json& j, std::string_view role) {
  if (!j.contains("format_version") || j["format_version"].get<int>() != kModelFormatVersion)
    throw ValidationError("unsupported model file version");
  if (j.value("role", std::string{}) != role)
    throw ValidationError("model file role is '" + j.value("role", std::string{}) + "', expected '" + std::string(role) + "'");
}

/// Stack file: both levels, AE2 recorded as trained on AE1's codes.
inline nlohmann::json ssdae_to_json(const std::array<TrainedAutoencoder, 2>& s, std::string_view atlas_id = {}) {
  auto j = envelope("ssdae");
  j["atlas_id"] = atlas_id;
  j["ae1"] = to_json(s[0]);
  j["ae1"]["trained_on"] = "features";
  j["ae2"] = to_json(s[1]);
  j["ae2"]["trained_on"] = "ae1_codes";
  return j;
}

inline std::array<TrainedAutoencoder, 2> ssdae_from_json(const nlohmann::json& j) {
  check_envelope(j, "ssdae");
  std::array<TrainedAutoencoder, 2> s{autoencoder_from_json(j.at("ae1")), autoencoder_from_json(j.at("ae2"))};
  if (s[1].input_dim() != s[0].hidden_dim()) throw ValidationError("ssdae: second level does not consume first-level codes");
  return s;
}

// --- classifier and ensemble ------------------------------------------------------------------

inline nlohmann::json to_json(const MlpConfig& c) {
  return {{"hidden1", c.hidden1},
          {"hidden2", c.hidden2},
          {"hidden3", c.hidden3},
          {"dropout_rate", c.dropout_rate},
          {"use_demographics", c.use_demographics},
          {"freeze_pretrained", c.freeze_pretrained},
          {"ae2_projection", c.ae2_projection},
          {"optimizer", to_json(c.optimizer)}};
}

inline MlpConfig mlp_config_from_json(const nlohmann::json& j) {
  MlpConfig c;
  c.hidden1 = j.at("hidden1").get<Index>();
  c.hidden2 = j.at("hidden2").get<Index>();
  c.hidden3 = j.at("hidden3").get<Index>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.use_demographics = j.at("use_demographics").get<bool>();
  c.freeze_pretrained = j.value("freeze_pretrained", false);
  c.ae2_projection = j.value("ae2_projection", false);
  c.optimizer = optimizer_from_json(j.at("optimizer"));
  return c;
}

inline nlohmann::json to_json(const DemographicScaler& s) {
  return {{"mean", s.mean}, {"scale", s.scale}, {"fitted", s.fitted}};
}

inline DemographicScaler scaler_from_json(const nlohmann::json& j) {
  DemographicScaler s;
  s.mean = j.at("mean").get<std::array<double, kDemographicCount>>();
  s.scale = j.at("scale").get<std::array<double, kDemographicCount>>();
  s.fitted = j.at("fitted").get<bool>();
  return s;
}

inline nlohmann::json mlp_body(const MlpModel& m) {
  return {{"atlas_id", m.atlas_id},
          {"network", to_json(m.net)},
          {"mask", to_json(m.mask)},
          {"scaler", to_json(m.scaler)},
          {"use_demographics", m.use_demographics},
          {"pretrained_layers", m.pretrained_layers},
          {"config", to_json(m.config)},
          {"seed", m.seed},
          {"loss_history", m.loss_history}};
}

inline MlpModel mlp_from_body(const nlohmann::json& j) {
  MlpModel m;
  m.atlas_id = j.at("atlas_id").get<std::string>();
  m.net = network_from_json(j.at("network"));
  m.mask = mask_from_json(j.at("mask"));
  m.scaler = scaler_from_json(j.at("scaler"));
  m.use_demographics = j.at("use_demographics").get<bool>();
  m.pretrained_layers = j.at("pretrained_layers").get<std::size_t>();
  m.config = mlp_config_from_json(j.at("config"));
  m.seed = j.value("seed", std::uint64_t{0});
  m.loss_history = j.value("loss_history", std::vector<double>{});
  if (m.net.input_dim != m.mask.size())
    throw ValidationError("mlp: network input " + std::to_string(m.net.input_dim) + " != mask size " +
                          std::to_string(m.mask.size()));
  return m;
}

inline nlohmann::json mlp_to_json(const MlpModel& m) {
  auto j = envelope("mlp");
  j.update(mlp_body(m));
  return j;
}

inline MlpModel mlp_from_json(const nlohmann::json& j) {
  check_envelope(j, "mlp");
  return mlp_from_body(j);
}

inline nlohmann::json ensemble_to_json(const EnsembleModel& e) {
  auto j = envelope("ensemble");
  j["voting"] = e.voting == VotingMode::Soft ? "soft" : "hard";
  j["weights"] = e.weights;
  j["members"] = nlohmann::json::array();
  for (const auto& m : e.members) {
    auto body = mlp_body(m.model);
    body["accuracy"] = m.accuracy;
    j["members"].push_back(std::move(body));
  }
  return j;
}

inline EnsembleModel ensemble_from_json(const nlohmann::json& j) {
  check_envelope(j, "ensemble");
  EnsembleModel e;
  const auto voting = j.at("voting").get<std::string>();
  if (voting != "soft" && voting != "hard") throw ValidationError("unknown voting mode '" + voting + "'");
  e.voting = voting == "soft" ? VotingMode::Soft : VotingMode::Hard;
  for (const auto& jm : j.at("members")) e.members.push_back({mlp_from_body(jm), jm.at("accuracy").get<double>()});
  e.weights = j.at("weights").get<std::vector<double>>();
  if (e.weights.size() != e.members.size()) throw ValidationError("ensemble: weight count != member count");
  return e;
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  const auto text = text::read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  text::write_file(path, j.dump(2) + "\n");
}

}  // namespace madeasd
