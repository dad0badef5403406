#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "madeasd/types.hpp"

namespace madeasd {

struct FScoreRanking {
  std::string atlas_id;
  Vector scores;
  /// Feature indices by descending score; ties by ascending index.
  std::vector<Index> order;
};

struct FeatureMask {
  std::string atlas_id;
  /// Dimension of the unmasked feature space.
  Index feature_dim = 0;
  std::vector<Index> retained;
  std::vector<double> fscores;

  Index size() const { return static_cast<Index>(retained.size()); }
  bool operator==(const FeatureMask&) const = default;

  static FeatureMask identity(std::string atlas_id, Index feature_dim) {
    FeatureMask m{std::move(atlas_id), feature_dim, {}, {}};
    m.retained.resize(static_cast<std::size_t>(feature_dim));
    std::iota(m.retained.begin(), m.retained.end(), Index{0});
    m.fscores.assign(m.retained.size(), 0.0);
    return m;
  }
};

/// Between-class over within-class dispersion per feature (rows = subjects):
///   F = ((m+ - m)^2 + (m- - m)^2) / (s+^2 + s-^2)
/// with s±^2 the unbiased within-class variances. A zero denominator gives +inf when the
/// class means differ and 0 otherwise.
inline FScoreRanking fscore(const Matrix& features, std::span<const Label> labels, std::string atlas_id = {}) {
  if (static_cast<Index>(labels.size()) != features.rows())
    throw ValidationError("fscore: " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(features.rows()) + " rows");
  std::vector<Index> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i)
    (labels[i] == Label::ASD ? pos : neg).push_back(static_cast<Index>(i));
  if (pos.empty() || neg.empty()) throw ValidationError("fscore: both classes must be present");
  if (pos.size() < 2 || neg.size() < 2)
    throw ValidationError("fscore: each class needs at least 2 subjects");

  const Index d = features.cols();
  const double np = static_cast<double>(pos.size()), nn = static_cast<double>(neg.size());
  FScoreRanking r{std::move(atlas_id), Vector(d), {}};
  for (Index j = 0; j < d; ++j) {
    const auto col = features.col(j);
    double sum_p = 0.0, sum_n = 0.0;
    for (auto i : pos) sum_p += col(i);
    for (auto i : neg) sum_n += col(i);
    const double mean_p = sum_p / np, mean_n = sum_n / nn;
    const double mean_all = (sum_p + sum_n) / (np + nn);
    double ss_p = 0.0, ss_n = 0.0;
    for (auto i : pos) ss_p += (col(i) - mean_p) * (col(i) - mean_p);
    for (auto i : neg) ss_n += (col(i) - mean_n) * (col(i) - mean_n);
    const double num = (mean_p - mean_all) * (mean_p - mean_all) + (mean_n - mean_all) * (mean_n - mean_all);
    const double den = ss_p / (np - 1.0) + ss_n / (nn - 1.0);
    double f;
    if (den > 0.0)
      f = num / den;
    else
      f = num > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    r.scores(j) = f;
  }
  r.order.resize(static_cast<std::size_t>(d));
  std::iota(r.order.begin(), r.order.end(), Index{0});
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](Index a, Index b) { return r.scores(a) > r.scores(b); });
  return r;
}

inline FeatureMask select_top(const FScoreRanking& ranking, Index k) {
  const Index s = ranking.scores.size();
  if (k < 1 || k > s)
    throw ValidationError("select_top: k = " + std::to_string(k) + " outside [1, " + std::to_string(s) + "]");
  FeatureMask m{ranking.atlas_id, s, {}, {}};
  m.retained.assign(ranking.order.begin(), ranking.order.begin() + k);
  m.fscores.reserve(static_cast<std::size_t>(k));
  for (auto idx : m.retained) m.fscores.push_back(ranking.scores(idx));
  return m;
}

inline Matrix apply_mask(const Matrix& features, const FeatureMask& mask) {
  if (features.cols() != mask.feature_dim)
    throw ValidationError("apply_mask: matrix has " + std::to_string(features.cols()) +
                          " columns, mask expects " + std::to_string(mask.feature_dim));
  Matrix out(features.rows(), mask.size());
  for (Index c = 0; c < mask.size(); ++c) out.col(c) = features.col(mask.retained[static_cast<std::size_t>(c)]);
  return out;
}

struct SweepRow {
  double percent = 0.0;
  double mean_accuracy = 0.0;
};

/// Re-runs evaluation once per retention percentage. `evaluate(percent)` returns the
/// mean accuracy of the full pipeline at that retention.
inline std::vector<SweepRow> retention_sweep(std::span<const double> percents,
                                             const std::function<double(double)>& evaluate) {
  for (double p : percents)
    if (!(p > 0.0 && p <= 100.0)) throw ValidationError("retention percentages must lie in (0, 100]");
  std::vector<SweepRow> rows;
  for (double p : percents) rows.push_back({p, evaluate(p)});
  return rows;
}

// JSON has no infinity; perfectly separating features are written as the string "inf".
inline nlohmann::json to_json(const FeatureMask& m) {
  nlohmann::json scores = nlohmann::json::array();
  for (double f : m.fscores) {
    if (std::isinf(f))
      scores.push_back("inf");
    else
      scores.push_back(f);
  }
  return {{"atlas_id", m.atlas_id}, {"feature_dim", m.feature_dim}, {"retained", m.retained}, {"fscores", scores}};
}

inline FeatureMask mask_from_json(const nlohmann::json& j) {
  FeatureMask m;
  m.atlas_id = j.at("atlas_id").get<std::string>();
  m.feature_dim = j.at("feature_dim").get<Index>();
  m.retained = j.at("retained").get<std::vector<Index>>();
  for (const auto& f : j.at("fscores"))
    m.fscores.push_back(f.is_string() ? std::numeric_limits<double>::infinity() : f.get<double>());
  if (m.fscores.size() != m.retained.size())
    throw ValidationError("mask: retained and fscores lengths differ");
  std::vector<Index> sorted = m.retained;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ValidationError("mask: duplicate retained index");
  for (auto i : m.retained)
    if (i < 0 || i >= m.feature_dim) throw ValidationError("mask: retained index out of range");
  return m;
}

}  // namespace madeasd
