#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "madeasd/text_io.hpp"
#include "madeasd/types.hpp"

namespace madeasd {

struct RoiInfo {
  std::string name;
  std::optional<std::array<double, 3>> center_mm;
};

struct AtlasSpec {
  std::string atlas_id;
  Index n_rois = 0;
  Index retain_count = 0;
  /// Optional per-ROI metadata from a sidecar; empty or exactly n_rois entries.
  std::vector<RoiInfo> rois;

  Index feature_dim() const { return upper_triangle_size(n_rois); }

  void validate() const {
    if (atlas_id.empty()) throw ValidationError("atlas id is empty");
    if (n_rois < 2) throw ValidationError("atlas " + atlas_id + " needs at least 2 ROIs");
    if (retain_count < 1 || retain_count > feature_dim())
      throw ValidationError("atlas " + atlas_id + ": retain_count " + std::to_string(retain_count) +
                            " outside [1, " + std::to_string(feature_dim()) + "]");
    if (!rois.empty() && static_cast<Index>(rois.size()) != n_rois)
      throw ValidationError("atlas " + atlas_id + ": sidecar lists " + std::to_string(rois.size()) +
                            " ROIs, atlas has " + std::to_string(n_rois));
  }

  static AtlasSpec cc200() { return {"CC", 200, 3000, {}}; }
  static AtlasSpec aal() { return {"AAL", 116, 1000, {}}; }
  static AtlasSpec ez() { return {"EZ", 116, 1000, {}}; }

  /// Known atlas by id at its native size.
  static AtlasSpec named(const std::string& id) {
    if (id == "CC" || id == "CC200") return cc200();
    if (id == "AAL") return aal();
    if (id == "EZ") return ez();
    throw ValidationError("unknown atlas '" + id + "' (expected CC, AAL or EZ)");
  }
};

/// ceil(percent * S / 100), clamped to [1, S].
inline Index retain_count_for_percent(double percent, Index feature_dim) {
  if (!(percent > 0.0 && percent <= 100.0))
    throw ValidationError("retention percentage must lie in (0, 100]");
  // The small slack keeps exact products such as 15 * 19900 / 100 from rounding up.
  auto k = static_cast<Index>(std::ceil(percent * static_cast<double>(feature_dim) / 100.0 - 1e-9));
  if (k < 1) k = 1;
  if (k > feature_dim) k = feature_dim;
  return k;
}

/// Atlas with a non-native ROI count (desk-scale runs); retention defaults to 15%.
inline AtlasSpec reduced_atlas(const std::string& id, Index n_rois) {
  AtlasSpec a{id, n_rois, 0, {}};
  a.retain_count = retain_count_for_percent(15.0, a.feature_dim());
  return a;
}

/// Sidecar CSV with columns roi_index, name, x, y, z (header required).
/// roi_index is 0-based; every ROI 0..n_rois-1 must appear once.
inline std::vector<RoiInfo> read_atlas_sidecar(const std::filesystem::path& path, Index n_rois) {
  const auto lines = text::read_lines(path);
  if (lines.empty()) throw ValidationError("atlas sidecar " + path.string() + " is empty");
  const auto header = text::split(lines[0], ',');
  auto column = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  };
  const auto c_idx = column("roi_index");
  if (!c_idx) throw ValidationError("atlas sidecar " + path.string() + " lacks a roi_index column");
  const auto c_name = column("name");
  const auto c_x = column("x"), c_y = column("y"), c_z = column("z");

  std::vector<RoiInfo> rois(static_cast<std::size_t>(n_rois));
  std::vector<bool> seen(rois.size(), false);
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (text::trim(lines[li]).empty()) continue;
    const auto f = text::split(lines[li], ',');
    auto field = [&](std::optional<std::size_t> c) -> std::string {
      return (c && *c < f.size()) ? f[*c] : std::string{};
    };
    const auto idx = text::parse_double(field(c_idx));
    if (!idx || *idx < 0 || *idx >= static_cast<double>(n_rois) || *idx != std::floor(*idx))
      throw ValidationError("atlas sidecar line " + std::to_string(li + 1) + ": bad roi_index");
    const auto i = static_cast<std::size_t>(*idx);
    if (seen[i]) throw ValidationError("atlas sidecar lists ROI " + std::to_string(i) + " twice");
    seen[i] = true;
    rois[i].name = field(c_name);
    const auto x = text::parse_double(field(c_x));
    const auto y = text::parse_double(field(c_y));
    const auto z = text::parse_double(field(c_z));
    if (x && y && z) rois[i].center_mm = std::array<double, 3>{*x, *y, *z};
  }
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (!seen[i]) throw ValidationError("atlas sidecar is missing ROI " + std::to_string(i));
  return rois;
}

}  // namespace madeasd
