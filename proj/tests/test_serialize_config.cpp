#include <gtest/gtest.h>

#include <cstring>
#include <limits>

#include "support.hpp"

using namespace madeasd;
using testing_support::random_matrix;
using testing_support::TempDir;

namespace {

bool bit_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
}

EnsembleTraining small_training() {
  const auto d = testing_support::tiny_dataset(40, 0.8, 3);
  std::vector<Index> rows(40);
  std::iota(rows.begin(), rows.end(), Index{0});
  return train_ensemble(prepare_for_cv(d, testing_support::tiny_pipeline()), rows, testing_support::tiny_pipeline(), 5);
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Base64, RoundTripsEveryPaddingLength) {
  for (std::size_t n = 0; n < 12; ++n) {
    std::string bytes;
    for (std::size_t i = 0; i < n; ++i) bytes.push_back(static_cast<char>(37 * i + 200));
    const auto enc = base64_encode(bytes);
    EXPECT_EQ(enc.size() % 4, 0u);
    EXPECT_EQ(base64_decode(enc), bytes);
  }
  EXPECT_EQ(base64_encode("Man"), "TWFu");
  EXPECT_EQ(base64_encode("Ma"), "TWE=");
  EXPECT_THROW(base64_decode("TWF"), ValidationError);
  EXPECT_THROW(base64_decode("TW!u"), ValidationError);
}

TEST(MatrixBlock, BitExactIncludingSpecialValues) {
  Matrix m = random_matrix(3, 5, 1);
  m(0, 0) = -0.0;
  m(1, 1) = std::numeric_limits<double>::denorm_min();
  m(2, 2) = 1e308;
  m(0, 4) = 0.1;
  const auto j = nlohmann::json::parse(matrix_to_json(m).dump());
  EXPECT_TRUE(bit_equal(matrix_from_json(j), m));
  EXPECT_TRUE(bit_equal(matrix_from_json(matrix_to_json(Matrix(0, 3))), Matrix(0, 3)));

  // Row-major layout: the first two doubles are m(0,0), m(0,1).
  const auto bytes = base64_decode(j["data"].get<std::string>());
  double first[2];
  std::memcpy(first, bytes.data(), sizeof(first));
  EXPECT_EQ(first[1], m(0, 1));

  auto bad = j;
  bad["rows"] = 4;
  EXPECT_THROW(matrix_from_json(bad), ValidationError);
}

TEST(ModelFiles, EnsembleReloadPredictsBitExactly) {
  const auto t = small_training();
  TempDir dir("model");
  write_json(dir / "e.json", ensemble_to_json(t.ensemble));
  const auto back = ensemble_from_json(read_json(dir / "e.json"));
  ASSERT_EQ(back.members.size(), t.ensemble.members.size());
  EXPECT_EQ(back.weights, t.ensemble.weights);
  const auto d = prepare_for_cv(testing_support::tiny_dataset(12, 0.8, 9), testing_support::tiny_pipeline());
  std::vector<Index> rows(12);
  std::iota(rows.begin(), rows.end(), Index{0});
  const auto a = score_rows(t.ensemble, d, rows), b = score_rows(back, d, rows);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].scores, b[i].scores);
    EXPECT_EQ(a[i].label, b[i].label);
  }
  for (std::size_t i = 0; i < back.members.size(); ++i) {
    EXPECT_EQ(back.members[i].model.net, t.ensemble.members[i].model.net);
    EXPECT_EQ(back.members[i].model.mask, t.ensemble.members[i].model.mask);
    EXPECT_EQ(back.members[i].model.scaler, t.ensemble.members[i].model.scaler);
  }

  const auto& m = t.ensemble.members[0].model;
  const auto single = mlp_from_json(nlohmann::json::parse(mlp_to_json(m).dump()));
  EXPECT_EQ(single.net, m.net);
  EXPECT_EQ(single.config, m.config);
}

TEST(ModelFiles, StackReloadKeepsObjective) {
  const auto t = small_training();
  const auto& s = t.ssdae[0];
  const auto back = ssdae_from_json(nlohmann::json::parse(ssdae_to_json(s, "CC").dump()));
  EXPECT_EQ(back[0].encoder, s[0].encoder);
  EXPECT_EQ(back[1].decoder, s[1].decoder);
  EXPECT_EQ(back[0].config, s[0].config);
  const Matrix x = random_matrix(6, s[0].input_dim(), 3);
  EXPECT_NEAR(autoencoder_objective(back[0], x).total, autoencoder_objective(s[0], x).total, 1e-9);
}

TEST(ModelFiles, VersionAndRoleChecked) {
  const auto t = small_training();
  auto j = ensemble_to_json(t.ensemble);
  auto future = j;
  future["format_version"] = kModelFormatVersion + 1;
  EXPECT_NE(error_of([&] { ensemble_from_json(future); }).find("version"), std::string::npos);
  EXPECT_NE(error_of([&] { mlp_from_json(j); }).find("role"), std::string::npos);
  EXPECT_THROW(ssdae_from_json(j), ValidationError);
  TempDir dir("broken");
  text::write_file(dir / "x.json", "{not json");
  EXPECT_THROW(read_json(dir / "x.json"), ValidationError);
}

TEST(Config, PresetsHoldTheirHyperparameters) {
  const auto p = paper_defaults();
  ASSERT_EQ(p.atlases.size(), 3u);
  EXPECT_EQ(p.atlases[0].plan.atlas.n_rois, 200);
  EXPECT_EQ(p.atlases[0].plan.retain_count(), 3000);
  EXPECT_EQ(p.atlases[1].plan.retain_count(), 1000);
  EXPECT_EQ(p.pipeline.mlp.hidden1, 1000);
  EXPECT_EQ(p.pipeline.mlp.hidden3, 100);
  EXPECT_DOUBLE_EQ(p.pipeline.mlp.optimizer.learning_rate, 0.0005);
  EXPECT_DOUBLE_EQ(p.pipeline.mlp.optimizer.momentum_start, 0.1);
  EXPECT_DOUBLE_EQ(p.pipeline.mlp.optimizer.momentum_end, 0.9);
  EXPECT_NO_THROW(p.validate());
  const auto d = desk_defaults();
  EXPECT_EQ(d.atlases[0].plan.atlas.n_rois, 30);
  EXPECT_NO_THROW(d.validate());
  EXPECT_THROW(preset_config("huge"), ValidationError);
}

TEST(Config, SerializeParseRoundTripAndHash) {
  for (const auto& base : {paper_defaults(), desk_defaults()}) {
    const auto text = serialize_config(base);
    const auto back = parse_config(text, preset_config(base.preset));
    EXPECT_EQ(serialize_config(back), text);
    EXPECT_EQ(config_hash(back), config_hash(base));
    EXPECT_EQ(config_hash(base).size(), 16u);
  }
  auto changed = desk_defaults();
  changed.pipeline.ae1.sparsity_weight = 0.25;
  EXPECT_NE(config_hash(changed), config_hash(desk_defaults()));
  const auto reparsed = parse_config(serialize_config(changed), paper_defaults());
  EXPECT_DOUBLE_EQ(reparsed.pipeline.ae1.sparsity_weight, 0.25);
  EXPECT_EQ(reparsed.atlases[0].plan.atlas.n_rois, 30);
}

TEST(Config, OverridesAndPaths) {
  const auto c = parse_config(
      "[run]\nseed = 42\ndata_dir = inputs\n[atlases]\nenabled = CC, EZ\n[atlas:CC]\nretain_percent = 10\n"
      "[ae1]\nsparsity_weight = 0\n[ensemble]\nvoting = hard\n[cv]\nfolds = 5\n",
      desk_defaults(), "/base");
  EXPECT_EQ(c.pipeline.seed, 42u);
  EXPECT_EQ(c.data_dir, std::filesystem::path("/base/inputs"));
  ASSERT_EQ(c.pipeline.atlases.size(), 2u);
  EXPECT_EQ(c.pipeline.atlases[1].atlas.atlas_id, "EZ");
  EXPECT_EQ(c.pipeline.atlases[0].retain_count(), retain_count_for_percent(10.0, 435));
  EXPECT_EQ(c.pipeline.ae1.sparsity_weight, 0.0);
  EXPECT_EQ(c.pipeline.voting, VotingMode::Hard);
  EXPECT_EQ(c.pipeline.folds, 5);

  TempDir dir("cfg");
  text::write_file(dir / "c.toml", "[run]\npreset = desk\n[cv]\nfolds = 3\n");
  const auto loaded = load_config(dir / "c.toml");
  EXPECT_EQ(loaded.preset, "desk");
  EXPECT_EQ(loaded.pipeline.mlp.hidden1, 128);
  EXPECT_EQ(loaded.data_dir, std::filesystem::path("data"));  // not in the file: stays cwd-relative
}

TEST(Config, ErrorsNameTheOffendingKey) {
  const auto base = desk_defaults();
  EXPECT_NE(error_of([&] { parse_config("[ae1]\nhiden = 3\n", base); }).find("ae1.hiden"), std::string::npos);
  EXPECT_NE(error_of([&] { parse_config("[nonsense]\nx = 1\n", base); }).find("nonsense"), std::string::npos);
  EXPECT_NE(error_of([&] { parse_config("[ae1]\nlearning_rate = fast\n", base); }).find("ae1.learning_rate"),
            std::string::npos);
  EXPECT_NE(error_of([&] { parse_config("[ensemble]\nvoting = loud\n", base); }).find("ensemble.voting"),
            std::string::npos);
  EXPECT_THROW(parse_config("[ae1]\nhidden = 7\n", base).validate(), ValidationError);
  EXPECT_THROW(parse_config("[ae1]\nmomentum_start = 0.9\nmomentum_end = 0.5\n", base).validate(), ValidationError);
  EXPECT_THROW(parse_config("[atlases]\nenabled = XX\n", base), ValidationError);
}
