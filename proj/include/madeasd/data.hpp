#pragma once

// Phenotype/time-series ingest, demographic imputation, and the synthetic cohort generator.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "madeasd/atlas.hpp"
#include "madeasd/connectivity.hpp"
#include "madeasd/log.hpp"
#include "madeasd/random.hpp"
#include "madeasd/text_io.hpp"
#include "madeasd/types.hpp"

namespace madeasd {

namespace fs = std::filesystem;

struct PhenotypeSchema {
  std::string subject_id = "SUB_ID";
  std::string label = "DX_GROUP";
  std::string age = "AGE_AT_SCAN";
  std::string sex = "SEX";
  std::string handedness = "HANDEDNESS_CATEGORY";
  std::string fiq = "FIQ";
  /// Optional; blank when the table has no site column.
  std::string site = "SITE_ID";
  /// Raw label code -> class. ABIDE DX_GROUP: 1 = ASD, 2 = TC.
  std::map<std::string, Label> label_codes{{"1", Label::ASD}, {"2", Label::TC}};
};

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

// ABIDE marks missing numeric cells with -9999.
inline std::optional<double> numeric_cell(std::string_view cell) {
  const auto v = text::parse_double(cell);
  if (!v || !std::isfinite(*v) || *v == -9999.0) return std::nullopt;
  return v;
}

}  // namespace detail

/// male -> 1, female -> 2. Numeric codes 1/2 pass through.
inline std::optional<double> encode_sex(std::string_view cell) {
  if (const auto v = detail::numeric_cell(cell)) {
    if (*v == 1.0 || *v == 2.0) return v;
    return std::nullopt;
  }
  const auto s = detail::lower(text::trim(cell));
  if (s == "m" || s == "male") return 1.0;
  if (s == "f" || s == "female") return 2.0;
  return std::nullopt;
}

/// left -> 1, ambiguous -> 2, right -> 3. Numeric codes 1..3 pass through.
inline std::optional<double> encode_handedness(std::string_view cell) {
  if (const auto v = detail::numeric_cell(cell)) {
    if (*v == 1.0 || *v == 2.0 || *v == 3.0) return v;
    return std::nullopt;
  }
  const auto s = detail::lower(text::trim(cell));
  if (s == "l" || s == "left") return 1.0;
  if (s == "ambi" || s == "ambiguous" || s == "mixed" || s == "l->r" || s == "r->l") return 2.0;
  if (s == "r" || s == "right") return 3.0;
  return std::nullopt;
}

/// One record per data row; demographic cells that do not parse become missing.
inline std::vector<SubjectRecord> ingest_phenotype(const fs::path& path,
                                                   const PhenotypeSchema& schema = {}) {
  if (!fs::exists(path)) throw ValidationError("phenotype file not found: " + path.string());
  const auto lines = text::read_lines(path);
  if (lines.empty()) throw ValidationError("phenotype file is empty: " + path.string());
  const char delim = text::detect_delimiter(lines[0]);
  const auto header = text::split(lines[0], delim);
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    if (name.empty()) return std::nullopt;
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  };
  const auto c_id = column(schema.subject_id);
  const auto c_label = column(schema.label);
  if (!c_id || !c_label) {
    std::string missing;
    if (!c_id) missing += schema.subject_id;
    if (!c_label) missing += (missing.empty() ? "" : ", ") + schema.label;
    throw ValidationError("phenotype file " + path.string() + " lacks mandatory column(s): " + missing);
  }
  const auto c_age = column(schema.age), c_sex = column(schema.sex),
             c_hand = column(schema.handedness), c_fiq = column(schema.fiq), c_site = column(schema.site);

  std::vector<SubjectRecord> out;
  std::map<std::string, int> id_count;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (text::trim(lines[li]).empty()) continue;
    const auto f = text::split(lines[li], delim);
    auto cell = [&](std::optional<std::size_t> c) -> std::string_view {
      return (c && *c < f.size()) ? std::string_view(f[*c]) : std::string_view{};
    };
    SubjectRecord r;
    r.subject_id = std::string(text::trim(cell(c_id)));
    if (r.subject_id.empty()) throw ValidationError("phenotype line " + std::to_string(li + 1) + ": empty subject id");
    const auto code = std::string(text::trim(cell(c_label)));
    const auto lit = schema.label_codes.find(code);
    if (lit == schema.label_codes.end())
      throw ValidationError("phenotype line " + std::to_string(li + 1) + ": unknown label code '" + code + "'");
    r.label = lit->second;
    r.site = std::string(text::trim(cell(c_site)));
    r.demographics[DemographicField::Age] = detail::numeric_cell(cell(c_age));
    r.demographics[DemographicField::Sex] = encode_sex(cell(c_sex));
    r.demographics[DemographicField::Handedness] = encode_handedness(cell(c_hand));
    r.demographics[DemographicField::Fiq] = detail::numeric_cell(cell(c_fiq));
    ++id_count[r.subject_id];
    out.push_back(std::move(r));
  }
  std::string dups;
  for (const auto& [id, n] : id_count)
    if (n > 1) dups += (dups.empty() ? "" : ", ") + id;
  if (!dups.empty()) throw ValidationError("duplicate subject ids in " + path.string() + ": " + dups);
  return out;
}

/// Per-field means over the observed values of the given records.
struct DemographicMeans {
  std::array<double, kDemographicCount> mean{};
};

inline DemographicMeans fit_demographic_means(std::span<const SubjectRecord> records) {
  DemographicMeans m;
  for (std::size_t f = 0; f < kDemographicCount; ++f) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : records)
      if (const auto& v = r.demographics.values[f]) {
        sum += *v;
        ++n;
      }
    if (n == 0)
      throw ValidationError("demographic field '" + std::string(kDemographicNames[f]) +
                            "' is missing for every subject; mean imputation is undefined");
    m.mean[f] = sum / static_cast<double>(n);
  }
  return m;
}

inline Demographics fill_missing(Demographics d, const DemographicMeans& means) {
  for (std::size_t f = 0; f < kDemographicCount; ++f)
    if (!d.values[f]) d.values[f] = means.mean[f];
  return d;
}

/// Replaces each missing field by the cohort mean of its observed values.
inline std::vector<SubjectRecord> impute_demographics(std::vector<SubjectRecord> records) {
  if (records.empty()) return records;
  const auto means = fit_demographic_means(records);
  for (auto& r : records) r.demographics = fill_missing(r.demographics, means);
  return records;
}

/// Rows = time points, columns = ROIs. Comma, tab or whitespace delimited; a non-numeric
/// first row is treated as a header.
inline RoiTimeSeries read_timeseries(const fs::path& path, Index expected_rois) {
  const auto lines = text::read_lines(path);
  std::vector<std::vector<double>> rows;
  bool first = true;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const auto line = text::trim(lines[li]);
    if (line.empty() || line.front() == '#') continue;
    const auto cells = text::split(line, text::detect_delimiter(line));
    std::vector<double> row;
    row.reserve(cells.size());
    bool numeric = true;
    for (const auto& c : cells) {
      const auto v = text::parse_double(c);
      if (!v) {
        numeric = false;
        break;
      }
      row.push_back(*v);
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;
      }
      throw ValidationError(path.string() + " line " + std::to_string(li + 1) + ": non-numeric cell");
    }
    first = false;
    if (static_cast<Index>(row.size()) != expected_rois)
      throw ValidationError(path.string() + " line " + std::to_string(li + 1) + ": " +
                            std::to_string(row.size()) + " columns, atlas has " +
                            std::to_string(expected_rois) + " ROIs");
    rows.push_back(std::move(row));
  }
  RoiTimeSeries ts;
  ts.values.resize(static_cast<Index>(rows.size()), expected_rois);
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (Index c = 0; c < expected_rois; ++c) ts.values(static_cast<Index>(t), c) = rows[t][static_cast<std::size_t>(c)];
  try {
    ts.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return ts;
}

struct DroppedSubject {
  std::string subject_id;
  std::string reason;
};

struct TimeseriesIngest {
  std::vector<SubjectRecord> records;
  std::vector<DroppedSubject> dropped;
};

/// Attaches `<root>/<atlas>/<subject_id>.csv` to each record; subjects whose file is missing
/// or invalid are dropped and reported.
inline TimeseriesIngest ingest_timeseries(const fs::path& root, const AtlasSpec& atlas,
                                          std::vector<SubjectRecord> records) {
  TimeseriesIngest out;
  const auto dir = root / atlas.atlas_id;
  for (auto& r : records) {
    const auto file = dir / (r.subject_id + ".csv");
    if (!fs::exists(file)) {
      out.dropped.push_back({r.subject_id, "missing " + file.string()});
      continue;
    }
    try {
      r.series[atlas.atlas_id] = read_timeseries(file, atlas.n_rois);
      out.records.push_back(std::move(r));
    } catch (const std::exception& e) {
      out.dropped.push_back({r.subject_id, e.what()});
    }
  }
  for (const auto& d : out.dropped)
    log::emit(log::Level::Info, "data", "atlas", atlas.atlas_id, "dropped", d.subject_id, "reason", '"' + d.reason + '"');
  return out;
}

// ---------------------------------------------------------------------------------------------
// Synthetic cohorts

struct SyntheticSite {
  std::string name;
  Index timepoints = 120;
  /// Spread of the per-subject global (motion-like) artifact amplitude.
  double artifact_sd = 0.3;
};

struct SyntheticOptions {
  Index n_subjects = 200;
  std::vector<AtlasSpec> atlases;
  double effect = 0.8;
  std::uint64_t seed = 0;
  std::vector<SyntheticSite> sites{{"NYU", 160, 0.1}, {"SITE_B", 100, 0.6}, {"SITE_C", 100, 0.6},
                                   {"SITE_D", 90, 0.8}};
  double missing_rate = 0.05;
  /// Subject-to-subject spread of the discriminative coupling.
  double coupling_jitter = 0.08;
};

struct SyntheticDataset {
  SyntheticOptions options;
  std::vector<SubjectRecord> records;
  /// atlas id -> discriminative ROI pairs (u < v).
  std::map<std::string, std::vector<std::pair<Index, Index>>> discriminative_pairs;

  nlohmann::json manifest() const;
};

/// Balanced ASD/TC cohort. In every atlas a block of disjoint ROI pairs is coupled with
/// correlation about +effect/2 for ASD and -effect/2 for TC; all other ROIs are independent
/// noise plus a shared per-subject artifact. Demographics carry a weak label signal that
/// also scales with effect, so effect = 0 is a true null.
inline SyntheticDataset generate_synthetic(const SyntheticOptions& opt) {
  if (opt.n_subjects < 2) throw ValidationError("synthetic cohort needs at least 2 subjects");
  if (!(opt.effect >= 0.0 && opt.effect <= 1.0)) throw ValidationError("effect must lie in [0, 1]");
  if (opt.atlases.empty()) throw ValidationError("synthetic cohort needs at least one atlas");
  if (opt.sites.empty()) throw ValidationError("synthetic cohort needs at least one site");
  for (const auto& a : opt.atlases) a.validate();

  SyntheticDataset ds;
  ds.options = opt;
  Rng master(derive_seed(opt.seed, {0}));

  for (const auto& a : opt.atlases) {
    std::vector<Index> perm(static_cast<std::size_t>(a.n_rois));
    for (Index i = 0; i < a.n_rois; ++i) perm[static_cast<std::size_t>(i)] = i;
    shuffle(perm.begin(), perm.end(), master);
    const Index n_pairs = std::max<Index>(1, a.n_rois / 5);
    auto& pairs = ds.discriminative_pairs[a.atlas_id];
    for (Index k = 0; k < n_pairs; ++k) {
      auto u = perm[static_cast<std::size_t>(2 * k)], v = perm[static_cast<std::size_t>(2 * k + 1)];
      pairs.emplace_back(std::min(u, v), std::max(u, v));
    }
    std::sort(pairs.begin(), pairs.end());
  }

  std::vector<Label> labels(static_cast<std::size_t>(opt.n_subjects));
  for (Index i = 0; i < opt.n_subjects; ++i)
    labels[static_cast<std::size_t>(i)] = (i < (opt.n_subjects + 1) / 2) ? Label::ASD : Label::TC;
  shuffle(labels.begin(), labels.end(), master);

  const int width = static_cast<int>(std::to_string(opt.n_subjects).size());
  for (Index i = 0; i < opt.n_subjects; ++i) {
    Rng rng(derive_seed(opt.seed, {1, static_cast<std::uint64_t>(i)}));
    SubjectRecord r;
    std::string num = std::to_string(i + 1);
    r.subject_id = "SYN" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(num.size()))), '0') + num;
    r.label = labels[static_cast<std::size_t>(i)];
    const auto& site = opt.sites[uniform_index(rng, opt.sites.size())];
    r.site = site.name;
    const bool asd = r.label == Label::ASD;
    const double e = opt.effect;

    auto& d = r.demographics;
    d[DemographicField::Age] = std::round(uniform(rng, 6.5, 40.0) * 100.0) / 100.0;
    d[DemographicField::Sex] = uniform01(rng) < (asd ? 0.80 + 0.12 * e : 0.80) ? 1.0 : 2.0;
    const double p_right = asd ? 0.85 - 0.08 * e : 0.85;
    const double u_hand = uniform01(rng);
    d[DemographicField::Handedness] = u_hand < p_right ? 3.0 : (u_hand < p_right + 0.10 ? 1.0 : 2.0);
    d[DemographicField::Fiq] = std::round(normal(rng, asd ? 110.0 - 10.0 * e : 110.0, 14.0));
    if (uniform01(rng) < opt.missing_rate) d[DemographicField::Fiq].reset();
    if (uniform01(rng) < opt.missing_rate) d[DemographicField::Handedness].reset();

    const double artifact = std::abs(normal(rng, 0.0, site.artifact_sd));
    for (std::size_t ai = 0; ai < opt.atlases.size(); ++ai) {
      const auto& a = opt.atlases[ai];
      Rng arng(derive_seed(opt.seed, {2, static_cast<std::uint64_t>(i), ai}));
      const Index t = site.timepoints, n = a.n_rois;
      Matrix noise(t, n);
      for (Index c = 0; c < n; ++c)
        for (Index s = 0; s < t; ++s) noise(s, c) = normal(arng);
      for (const auto& [u, v] : ds.discriminative_pairs.at(a.atlas_id)) {
        const double base = (asd ? 0.5 : -0.5) * e;
        const double c = std::clamp(base + normal(arng, 0.0, opt.coupling_jitter), -0.95, 0.95);
        noise.col(v) = c * noise.col(u) + std::sqrt(1.0 - c * c) * noise.col(v);
      }
      Vector global(t);
      for (Index s = 0; s < t; ++s) global(s) = normal(arng);
      RoiTimeSeries ts;
      ts.values.resize(t, n);
      for (Index c = 0; c < n; ++c) {
        const double offset = uniform(arng, -50.0, 50.0);
        const double scale = uniform(arng, 0.5, 2.0);
        for (Index s = 0; s < t; ++s)
          ts.values(s, c) = offset + scale * (noise(s, c) + artifact * global(s));
      }
      r.series[a.atlas_id] = std::move(ts);
    }
    ds.records.push_back(std::move(r));
  }
  return ds;
}

inline nlohmann::json SyntheticDataset::manifest() const {
  nlohmann::json j;
  j["generator"] = "madeasd-synth";
  j["version"] = 1;
  j["seed"] = options.seed;
  j["effect"] = options.effect;
  j["n_subjects"] = options.n_subjects;
  j["missing_rate"] = options.missing_rate;
  j["coupling_jitter"] = options.coupling_jitter;
  for (const auto& s : options.sites)
    j["sites"].push_back({{"name", s.name}, {"timepoints", s.timepoints}, {"artifact_sd", s.artifact_sd}});
  for (const auto& a : options.atlases) {
    nlohmann::json ja{{"id", a.atlas_id}, {"n_rois", a.n_rois}, {"retain_count", a.retain_count}};
    const auto& pairs = discriminative_pairs.at(a.atlas_id);
    for (const auto& [u, v] : pairs) {
      ja["discriminative_pairs"].push_back({u, v});
      ja["discriminative_features"].push_back(pair_to_index(u, v, a.n_rois));
    }
    j["atlases"].push_back(std::move(ja));
  }
  return j;
}

inline std::string handedness_code(double v) {
  if (v == 1.0) return "L";
  if (v == 2.0) return "Ambi";
  return "R";
}

/// Writes phenotype.csv, `<atlas>/<subject_id>.csv` and manifest.json under `dir`.
inline void write_dataset(const fs::path& dir, const SyntheticDataset& ds) {
  const PhenotypeSchema schema;
  std::string pheno = schema.subject_id + "," + schema.site + "," + schema.label + "," + schema.age + "," +
                      schema.sex + "," + schema.handedness + "," + schema.fiq + "\n";
  for (const auto& r : ds.records) {
    const auto& d = r.demographics;
    auto num = [](const std::optional<double>& v) { return v ? text::format_double(*v) : std::string{}; };
    pheno += r.subject_id + "," + r.site + "," + (r.label == Label::ASD ? "1" : "2") + "," +
             num(d[DemographicField::Age]) + "," + num(d[DemographicField::Sex]) + "," +
             (d[DemographicField::Handedness] ? handedness_code(*d[DemographicField::Handedness]) : "") + "," +
             num(d[DemographicField::Fiq]) + "\n";
    for (const auto& [atlas, ts] : r.series) {
      std::string body;
      for (Index c = 0; c < ts.n_rois(); ++c) body += (c ? ",roi_" : "roi_") + std::to_string(c);
      body += "\n";
      for (Index t = 0; t < ts.n_timepoints(); ++t) {
        for (Index c = 0; c < ts.n_rois(); ++c) {
          if (c) body += ',';
          body += text::format_double(ts.values(t, c));
        }
        body += '\n';
      }
      text::write_file(dir / atlas / (r.subject_id + ".csv"), body);
    }
  }
  text::write_file(dir / "phenotype.csv", pheno);
  text::write_file(dir / "manifest.json", ds.manifest().dump(2) + "\n");
}

struct LoadedDataset {
  std::vector<SubjectRecord> records;
  std::vector<DroppedSubject> dropped;
};

/// Phenotype plus every atlas's series; subjects missing any atlas are excluded.
/// Demographics are left unimputed.
inline LoadedDataset load_dataset(const fs::path& dir, std::span<const AtlasSpec> atlases,
                                  const PhenotypeSchema& schema = {},
                                  const fs::path& phenotype_file = "phenotype.csv") {
  LoadedDataset out;
  auto records = ingest_phenotype(phenotype_file.is_absolute() ? phenotype_file : dir / phenotype_file, schema);
  for (const auto& a : atlases) {
    auto ingest = ingest_timeseries(dir, a, std::move(records));
    records = std::move(ingest.records);
    for (auto& d : ingest.dropped) out.dropped.push_back(std::move(d));
  }
  out.records = std::move(records);
  return out;
}

}  // namespace madeasd
