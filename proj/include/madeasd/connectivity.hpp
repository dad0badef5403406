#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "madeasd/log.hpp"
#include "madeasd/types.hpp"

namespace madeasd {

/// Symmetric Pearson correlation matrix with a unit diagonal.
struct ConnectivityMatrix {
  std::string atlas_id;
  Matrix values;
  /// ROIs whose series were constant; their off-diagonal correlations are 0.
  std::vector<Index> zero_variance_rois;

  Index n_rois() const { return values.rows(); }
};

/// Strict upper triangle in row-major order: (0,1), (0,2), ..., (0,N-1), (1,2), ...
struct FeatureVector {
  std::string atlas_id;
  std::string subject_id;
  Vector values;
};

inline ConnectivityMatrix pearson_matrix(const RoiTimeSeries& series, std::string atlas_id = {}) {
  series.validate();
  const Index n = series.n_rois();

  // Centered form; algebraically the same as E(uv) - E(u)E(v) over the product of deviations.
  Matrix centered = series.values.rowwise() - series.values.colwise().mean();
  std::vector<Index> constant;
  Vector inv_norm(n);
  for (Index c = 0; c < n; ++c) {
    const auto col = series.values.col(c);
    const bool is_constant = (col.array() == col(0)).all();
    if (is_constant) {
      constant.push_back(c);
      inv_norm(c) = 0.0;
      centered.col(c).setZero();
    } else {
      inv_norm(c) = 1.0 / centered.col(c).norm();
    }
  }
  if (static_cast<Index>(constant.size()) == n)
    throw ValidationError("every ROI series is constant; no usable signal");

  Matrix corr = centered.transpose() * centered;
  for (Index u = 0; u < n; ++u) {
    corr(u, u) = 1.0;
    for (Index v = u + 1; v < n; ++v) {
      const double r = std::clamp(corr(u, v) * inv_norm(u) * inv_norm(v), -1.0, 1.0);
      corr(u, v) = r;
      corr(v, u) = r;
    }
  }
  if (!constant.empty())
    log::warn("connectivity", std::to_string(constant.size()) +
                                  " constant ROI series; their correlations are set to 0");
  return {std::move(atlas_id), std::move(corr), std::move(constant)};
}

/// Canonical position of the pair (u, v), u < v, among N ROIs.
inline Index pair_to_index(Index u, Index v, Index n_rois) {
  if (u > v) std::swap(u, v);
  if (u < 0 || v >= n_rois || u == v)
    throw ValidationError("invalid ROI pair (" + std::to_string(u) + ", " + std::to_string(v) + ")");
  return u * n_rois - u * (u + 1) / 2 + (v - u - 1);
}

inline std::pair<Index, Index> index_to_pair(Index index, Index n_rois) {
  const Index s = upper_triangle_size(n_rois);
  if (index < 0 || index >= s)
    throw ValidationError("feature index " + std::to_string(index) + " outside [0, " +
                          std::to_string(s) + ")");
  // Row u starts at u*N - u(u+1)/2; estimate u from the quadratic, then correct by one step.
  const double nn = static_cast<double>(2 * n_rois - 1);
  auto u = static_cast<Index>(std::floor((nn - std::sqrt(nn * nn - 8.0 * static_cast<double>(index))) / 2.0));
  auto row_start = [n_rois](Index r) { return r * n_rois - r * (r + 1) / 2; };
  u = std::clamp<Index>(u, 0, n_rois - 2);
  while (u > 0 && row_start(u) > index) --u;
  while (u + 1 <= n_rois - 2 && row_start(u + 1) <= index) ++u;
  return {u, u + 1 + (index - row_start(u))};
}

inline FeatureVector flatten_upper(const ConnectivityMatrix& m, std::string subject_id = {}) {
  const Index n = m.n_rois();
  Vector out(upper_triangle_size(n));
  Index k = 0;
  for (Index u = 0; u < n; ++u)
    for (Index v = u + 1; v < n; ++v) out(k++) = m.values(u, v);
  return {m.atlas_id, std::move(subject_id), std::move(out)};
}

/// Rows = records (in order), columns = canonical feature indices for one atlas.
inline Matrix feature_matrix(std::span<const SubjectRecord> records, const std::string& atlas_id) {
  if (records.empty()) return Matrix(0, 0);
  Matrix out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto it = records[i].series.find(atlas_id);
    if (it == records[i].series.end())
      throw ValidationError("subject " + records[i].subject_id + " has no " + atlas_id + " series");
    const auto fv = flatten_upper(pearson_matrix(it->second, atlas_id), records[i].subject_id);
    if (i == 0) out.resize(static_cast<Index>(records.size()), fv.values.size());
    if (fv.values.size() != out.cols())
      throw ValidationError("subject " + records[i].subject_id + " has a different " + atlas_id +
                            " ROI count than the first subject");
    out.row(static_cast<Index>(i)) = fv.values.transpose();
  }
  return out;
}

}  // namespace madeasd
