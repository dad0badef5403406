#pragma once

// ROI appearance frequencies over the retained connectivity features of one atlas.

#include <algorithm>
#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "madeasd/atlas.hpp"
#include "madeasd/connectivity.hpp"
#include "madeasd/feature_selection.hpp"
#include "madeasd/text_io.hpp"

namespace madeasd {

struct RoiEntry {
  Index roi_index = 0;
  Index frequency = 0;
  std::optional<std::array<double, 3>> center_mm;
  std::optional<std::string> name;
  bool operator==(const RoiEntry&) const = default;
};

struct RoiRanking {
  std::string atlas_id;
  /// Number of features the counts were taken over.
  Index features_considered = 0;
  std::vector<RoiEntry> entries;
  bool operator==(const RoiRanking&) const = default;
};

/// Full per-ROI counts, index-aligned.
inline std::vector<Index> roi_counts(const FeatureMask& mask, const AtlasSpec& atlas) {
  if (!mask.atlas_id.empty() && !atlas.atlas_id.empty() && mask.atlas_id != atlas.atlas_id)
    throw ValidationError("roi report: mask belongs to atlas " + mask.atlas_id + ", not " + atlas.atlas_id);
  const Index s = atlas.feature_dim();
  std::vector<Index> counts(static_cast<std::size_t>(atlas.n_rois), 0);
  for (auto idx : mask.retained) {
    if (idx < 0 || idx >= s)
      throw ValidationError("roi report: feature index " + std::to_string(idx) + " outside atlas " + atlas.atlas_id +
                            " range [0, " + std::to_string(s) + ")");
    const auto [u, v] = index_to_pair(idx, atlas.n_rois);
    ++counts[static_cast<std::size_t>(u)];
    ++counts[static_cast<std::size_t>(v)];
  }
  return counts;
}

/// The top_n most frequent ROIs, ties by ascending ROI index. ROIs with zero count are
/// never listed.
inline RoiRanking roi_frequencies(const FeatureMask& mask, const AtlasSpec& atlas, Index top_n = 10) {
  if (top_n < 0) throw ValidationError("roi report: top_n must be >= 0");
  const auto counts = roi_counts(mask, atlas);
  std::vector<Index> order;
  for (Index r = 0; r < atlas.n_rois; ++r)
    if (counts[static_cast<std::size_t>(r)] > 0) order.push_back(r);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return counts[static_cast<std::size_t>(a)] > counts[static_cast<std::size_t>(b)];
  });
  if (static_cast<Index>(order.size()) > top_n) order.resize(static_cast<std::size_t>(top_n));

  RoiRanking out{atlas.atlas_id.empty() ? mask.atlas_id : atlas.atlas_id, mask.size(), {}};
  for (auto r : order) {
    RoiEntry e{r, counts[static_cast<std::size_t>(r)], std::nullopt, std::nullopt};
    if (static_cast<Index>(atlas.rois.size()) == atlas.n_rois) {
      const auto& info = atlas.rois[static_cast<std::size_t>(r)];
      e.center_mm = info.center_mm;
      if (!info.name.empty()) e.name = info.name;
    }
    out.entries.push_back(std::move(e));
  }
  return out;
}

inline nlohmann::json to_json(const RoiRanking& r) {
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    const auto& e = r.entries[i];
    nlohmann::json j{{"rank", i + 1}, {"roi_index", e.roi_index}, {"frequency", e.frequency}};
    j["name"] = e.name ? nlohmann::json(*e.name) : nlohmann::json(nullptr);
    j["center_mm"] = e.center_mm ? nlohmann::json(*e.center_mm) : nlohmann::json(nullptr);
    entries.push_back(std::move(j));
  }
  return {{"atlas_id", r.atlas_id}, {"features_considered", r.features_considered}, {"entries", std::move(entries)}};
}

inline RoiRanking ranking_from_json(const nlohmann::json& j) try {
  RoiRanking r;
  r.atlas_id = j.at("atlas_id").get<std::string>();
  r.features_considered = j.at("features_considered").get<Index>();
  for (const auto& je : j.at("entries")) {
    RoiEntry e;
    e.roi_index = je.at("roi_index").get<Index>();
    e.frequency = je.at("frequency").get<Index>();
    if (je.contains("name") && !je["name"].is_null()) e.name = je["name"].get<std::string>();
    if (je.contains("center_mm") && !je["center_mm"].is_null()) e.center_mm = je["center_mm"].get<std::array<double, 3>>();
    r.entries.push_back(std::move(e));
  }
  for (std::size_t i = 1; i < r.entries.size(); ++i)
    if (r.entries[i].frequency > r.entries[i - 1].frequency)
      throw ValidationError("roi report: frequencies must be non-increasing");
  return r;
} catch (const nlohmann::json::exception& e) {
  throw ValidationError(std::string("roi report: malformed ranking: ") + e.what());
}

inline std::string to_csv(const RoiRanking& r) {
  std::string s = "rank,roi_index,name,frequency,x,y,z\n";
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    const auto& e = r.entries[i];
    s += std::to_string(i + 1) + "," + std::to_string(e.roi_index) + "," + (e.name ? text::quote_if_needed(*e.name) : "") +
         "," + std::to_string(e.frequency);
    for (int k = 0; k < 3; ++k) s += "," + (e.center_mm ? text::format_double((*e.center_mm)[static_cast<std::size_t>(k)]) : "");
    s += "\n";
  }
  return s;
}

enum class ReportFormat { Json, Csv };

inline void export_report(const RoiRanking& r, ReportFormat format, const std::filesystem::path& path) {
  text::write_file(path, format == ReportFormat::Json ? to_json(r).dump(2) + "\n" : to_csv(r));
}

}  // namespace madeasd
