#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "madeasd/error.hpp"

namespace madeasd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Class labels in output order. ASD is the positive class.
enum class Label : int { ASD = 0, TC = 1 };

inline constexpr int kNumClasses = 2;

inline std::string_view to_string(Label l) { return l == Label::ASD ? "ASD" : "TC"; }

inline Label label_from_string(std::string_view s) {
  if (s == "ASD") return Label::ASD;
  if (s == "TC") return Label::TC;
  throw ValidationError("unknown label '" + std::string(s) + "'");
}

inline int class_index(Label l) { return static_cast<int>(l); }

enum class DemographicField : std::size_t { Age = 0, Sex = 1, Handedness = 2, Fiq = 3 };

inline constexpr std::size_t kDemographicCount = 4;
inline constexpr std::array<std::string_view, kDemographicCount> kDemographicNames = {
    "age", "sex", "handedness", "fiq"};

/// Age in years; sex {male: 1, female: 2}; handedness {left: 1, ambiguous: 2, right: 3};
/// full-scale IQ. Missing until imputed.
struct Demographics {
  std::array<std::optional<double>, kDemographicCount> values{};

  std::optional<double>& operator[](DemographicField f) { return values[static_cast<std::size_t>(f)]; }
  const std::optional<double>& operator[](DemographicField f) const {
    return values[static_cast<std::size_t>(f)];
  }

  bool complete() const {
    for (const auto& v : values)
      if (!v) return false;
    return true;
  }

  bool operator==(const Demographics&) const = default;
};

/// Mean ROI signals, rows = time points, columns = ROIs.
struct RoiTimeSeries {
  Matrix values;

  Index n_timepoints() const { return values.rows(); }
  Index n_rois() const { return values.cols(); }

  void validate() const {
    if (values.rows() < 2) throw ValidationError("time series needs at least 2 time points");
    if (values.cols() < 1) throw ValidationError("time series has no ROI columns");
    if (!values.allFinite()) throw ValidationError("time series contains non-finite values");
  }

  bool operator==(const RoiTimeSeries& o) const {
    return values.rows() == o.values.rows() && values.cols() == o.values.cols() && values == o.values;
  }
};

struct SubjectRecord {
  std::string subject_id;
  Label label = Label::TC;
  std::string site;
  Demographics demographics;
  std::map<std::string, RoiTimeSeries> series;

  bool operator==(const SubjectRecord&) const = default;
};

/// Number of strict upper-triangle entries of an N x N matrix.
constexpr Index upper_triangle_size(Index n_rois) { return n_rois * (n_rois - 1) / 2; }

}  // namespace madeasd
