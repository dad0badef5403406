#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "support.hpp"

using namespace madeasd;
using testing_support::brute_force_fscore;
using testing_support::dyadic_features;
using testing_support::random_matrix;

TEST(FScore, HandExample) {
  Matrix x(4, 1);
  x << 1, 3, -1, -3;
  const std::vector<Label> y{Label::ASD, Label::ASD, Label::TC, Label::TC};
  EXPECT_DOUBLE_EQ(fscore(x, y).scores(0), 2.0);
}

TEST(FScore, MatchesBruteForceOracle) {
  const Matrix x = random_matrix(60, 200, 5, -2.0, 2.0);
  std::vector<Label> y(60);
  Rng rng(9);
  for (auto& l : y) l = uniform01(rng) < 0.45 ? Label::ASD : Label::TC;
  const auto r = fscore(x, y);
  for (Index j = 0; j < 200; ++j) EXPECT_NEAR(r.scores(j), brute_force_fscore(x, y, j), 1e-10);
}

TEST(FScore, ShiftInvarianceIsExact) {
  auto [x, y] = dyadic_features(50, 30, 4);
  const auto before = fscore(x, y);
  x.array() += 8.0;
  const auto after = fscore(x, y);
  for (Index j = 0; j < 50; ++j) EXPECT_EQ(before.scores(j), after.scores(j));
}

TEST(FScore, ZeroSeparationAndDegenerateDenominator) {
  Matrix x(6, 3);
  // Column 0: same values in both classes. Column 1: constant per class, separated.
  // Column 2: constant everywhere.
  x << 1, 5, 2,
       2, 5, 2,
       4, 5, 2,
       4, 7, 2,
       1, 7, 2,
       2, 7, 2;
  const std::vector<Label> y{Label::ASD, Label::ASD, Label::ASD, Label::TC, Label::TC, Label::TC};
  const auto r = fscore(x, y);
  EXPECT_EQ(r.scores(0), 0.0);
  EXPECT_EQ(r.scores(1), std::numeric_limits<double>::infinity());
  EXPECT_EQ(r.scores(2), 0.0);
  EXPECT_EQ(r.order, (std::vector<Index>{1, 0, 2}));
}

TEST(FScore, Preconditions) {
  const Matrix x = random_matrix(4, 2, 1);
  EXPECT_THROW(fscore(x, std::vector<Label>(4, Label::ASD)), ValidationError);
  EXPECT_THROW(fscore(x, std::vector<Label>{Label::ASD, Label::TC, Label::TC, Label::TC}), ValidationError);
  EXPECT_THROW(fscore(x, std::vector<Label>{Label::ASD, Label::TC}), ValidationError);
}

TEST(FScore, TiesBrokenByAscendingIndex) {
  Matrix x(4, 4);
  x << 1, 0, 1, 1,
       3, 0, 3, 3,
      -1, 0, -1, -1,
      -3, 0, -3, -3;
  const auto r = fscore(x, std::vector<Label>{Label::ASD, Label::ASD, Label::TC, Label::TC});
  EXPECT_EQ(r.order, (std::vector<Index>{0, 2, 3, 1}));
}

TEST(FScore, PermutedLabelsScoreLower) {
  SyntheticOptions o;
  o.n_subjects = 80;
  o.atlases = {reduced_atlas("CC", 20)};
  o.seed = 2;
  const auto ds = generate_synthetic(o);
  const Matrix x = feature_matrix(ds.records, "CC");
  std::vector<Label> y;
  for (const auto& r : ds.records) y.push_back(r.label);
  auto perm = y;
  Rng rng(1);
  shuffle(perm.begin(), perm.end(), rng);
  const double true_top = fscore(x, y).scores.maxCoeff();
  const double perm_top = fscore(x, perm).scores.maxCoeff();
  EXPECT_GT(true_top, 5.0 * perm_top);
  // The discriminative pairs rank first.
  const auto mask = select_top(fscore(x, y), static_cast<Index>(ds.discriminative_pairs.at("CC").size()));
  std::set<Index> expected;
  for (const auto& [u, v] : ds.discriminative_pairs.at("CC")) expected.insert(pair_to_index(u, v, 20));
  EXPECT_EQ(std::set<Index>(mask.retained.begin(), mask.retained.end()), expected);
}

TEST(Selection, TopKAndMasking) {
  const Matrix x = random_matrix(10, 6, 3);
  std::vector<Label> y(10, Label::TC);
  for (int i = 0; i < 5; ++i) y[static_cast<std::size_t>(i)] = Label::ASD;
  const auto r = fscore(x, y);
  const auto full = select_top(r, 6);
  EXPECT_EQ(full.retained, r.order);
  const auto one = select_top(r, 1);
  const Matrix m1 = apply_mask(x, one);
  ASSERT_EQ(m1.cols(), 1);
  EXPECT_EQ(Vector(m1.col(0)), Vector(x.col(r.order[0])));
  EXPECT_EQ(apply_mask(x, FeatureMask::identity("", 6)), x);
  EXPECT_THROW(select_top(r, 0), ValidationError);
  EXPECT_THROW(select_top(r, 7), ValidationError);
  EXPECT_THROW(apply_mask(random_matrix(2, 5, 1), full), ValidationError);

  const auto three = select_top(r, 3);
  const Matrix m3 = apply_mask(x, three);
  for (Index c = 0; c < 3; ++c) EXPECT_EQ(Vector(m3.col(c)), Vector(x.col(three.retained[static_cast<std::size_t>(c)])));
}

TEST(Selection, ReferencePresetCounts) {
  const Matrix x = random_matrix(8, 19900, 1);
  std::vector<Label> y{Label::ASD, Label::ASD, Label::ASD, Label::ASD, Label::TC, Label::TC, Label::TC, Label::TC};
  EXPECT_EQ(select_top(fscore(x, y), AtlasSpec::cc200().retain_count).size(), 3000);
  EXPECT_EQ(select_top(fscore(random_matrix(8, 6670, 2), y), AtlasSpec::aal().retain_count).size(), 1000);
}

TEST(Selection, MaskJsonRoundTrip) {
  FeatureMask m{"CC", 10, {4, 2, 7}, {std::numeric_limits<double>::infinity(), 1.5, 0.25}};
  EXPECT_EQ(mask_from_json(nlohmann::json::parse(to_json(m).dump())), m);
  auto j = to_json(m);
  j["retained"] = {4, 4, 7};
  EXPECT_THROW(mask_from_json(j), ValidationError);
  j["retained"] = {4, 2, 10};
  EXPECT_THROW(mask_from_json(j), ValidationError);
}

TEST(Sweep, OneRowPerPercent) {
  const std::vector<double> pct{5, 10, 15, 20, 25, 30, 35, 40, 45, 50};
  const auto rows = retention_sweep(pct, [](double p) { return p / 100.0; });
  ASSERT_EQ(rows.size(), 10u);
  EXPECT_DOUBLE_EQ(rows[2].mean_accuracy, 0.15);
  const std::vector<double> bad{0.0};
  EXPECT_THROW(retention_sweep(bad, [](double) { return 0.0; }), ValidationError);
}
