#pragma once

// Run configuration: an INI/TOML-style key-value file with one section per module.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "madeasd/atlas.hpp"
#include "madeasd/data.hpp"
#include "madeasd/evaluation.hpp"
#include "madeasd/text_io.hpp"

namespace madeasd {

struct AtlasEntry {
  AtlasPlan plan;
  std::filesystem::path sidecar;
};

struct RunConfig {
  std::string preset = "paper-defaults";
  std::filesystem::path data_dir = "data";
  std::filesystem::path output_dir = "out";
  std::filesystem::path phenotype = "phenotype.csv";
  std::vector<AtlasEntry> atlases;
  PipelineConfig pipeline;
  // synth
  Index synth_subjects = 200;
  double synth_effect = 0.8;
  double synth_missing_rate = 0.05;
  double synth_coupling_jitter = 0.08;
  // selector / reporting / sweep
  std::string selector_site = "NYU";
  std::string selector_atlas = "CC";
  Index roi_top_n = 10;
  std::string roi_atlas = "CC";
  std::vector<double> sweep_percents{1.0, 2.0, 5.0, 10.0, 15.0, 20.0, 30.0, 50.0};

  /// Atlases (with any sidecar names and centers) in pipeline order.
  std::vector<AtlasSpec> atlas_specs() const {
    std::vector<AtlasSpec> out;
    for (const auto& a : atlases) out.push_back(a.plan.atlas);
    return out;
  }

  void sync_pipeline() {
    pipeline.atlases.clear();
    for (const auto& a : atlases) pipeline.atlases.push_back(a.plan);
  }

  void validate() const {
    pipeline.validate();
    if (synth_subjects < 2) throw ValidationError("synth.subjects must be >= 2");
    if (!(synth_effect >= 0.0 && synth_effect <= 1.0)) throw ValidationError("synth.effect must lie in [0, 1]");
    if (!(synth_missing_rate >= 0.0 && synth_missing_rate < 1.0))
      throw ValidationError("synth.missing_rate must lie in [0, 1)");
    if (roi_top_n < 0) throw ValidationError("roi_report.top_n must be >= 0");
    for (double p : sweep_percents)
      if (!(p > 0.0 && p <= 100.0)) throw ValidationError("sweep.percents entries must lie in (0, 100]");
  }
};

/// Reference hyperparameters with the full-size atlases.
inline RunConfig paper_defaults() {
  RunConfig c;
  c.preset = "paper-defaults";
  for (const auto& a : {AtlasSpec::cc200(), AtlasSpec::aal(), AtlasSpec::ez()}) c.atlases.push_back({{a, std::nullopt}, {}});
  c.sync_pipeline();
  return c;
}

/// Single-core scale: 30/20/20 ROIs, narrower layers, fewer iterations; optimizer
/// settings otherwise as in the reference preset.
inline RunConfig desk_defaults() {
  RunConfig c;
  c.preset = "desk";
  for (const auto& a : {reduced_atlas("CC", 30), reduced_atlas("AAL", 20), reduced_atlas("EZ", 20)})
    c.atlases.push_back({{a, std::nullopt}, {}});
  auto& p = c.pipeline;
  p.ae1.hidden_dim = p.mlp.hidden1 = 128;
  p.ae2.hidden_dim = p.mlp.hidden2 = 64;
  p.mlp.hidden3 = 32;
  p.ae1.optimizer.iterations = 100;
  p.ae2.optimizer.iterations = 100;
  p.mlp.optimizer.iterations = 100;
  c.sync_pipeline();
  return c;
}

inline SyntheticOptions synthetic_options(const RunConfig& c) {
  SyntheticOptions so;
  so.n_subjects = c.synth_subjects;
  so.atlases = c.atlas_specs();
  so.effect = c.synth_effect;
  so.seed = c.pipeline.seed;
  so.missing_rate = c.synth_missing_rate;
  so.coupling_jitter = c.synth_coupling_jitter;
  return so;
}

inline RunConfig preset_config(const std::string& name) {
  if (name == "paper-defaults" || name == "paper") return paper_defaults();
  if (name == "desk") return desk_defaults();
  throw ValidationError("unknown preset '" + name + "' (expected paper-defaults or desk)");
}

namespace config_detail {

using Ptree = boost::property_tree::ptree;

inline std::string fmt(double v) { return text::format_double(v); }
inline std::string fmt(bool v) { return v ? "true" : "false"; }
inline std::string fmt(Index v) { return std::to_string(v); }
inline std::string fmt(std::uint64_t v) { return std::to_string(v); }
inline std::string fmt(const std::string& v) { return v; }

inline std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
  return s;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (const auto& part : text::split(s, ',')) {
    const auto t = std::string(text::trim(part));
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

/// Reads one section; every key must be consumed, so typos are reported by name.
class Section {
 public:
  Section(const Ptree* tree, std::string name) : tree_(tree), name_(std::move(name)) {}

  template <class Fn>
  void field(const std::string& key, Fn&& assign) {
    seen_.insert(key);
    if (!tree_) return;
    const auto v = tree_->get_optional<std::string>(Ptree::path_type(key, '\0'));
    if (!v) return;
    try {
      assign(std::string(text::trim(*v)));
    } catch (const ValidationError& e) {
      throw ValidationError(name_ + "." + key + ": " + e.what());
    }
  }

  void number(const std::string& key, double& out) {
    field(key, [&](const std::string& v) {
      const auto d = text::parse_double(v);
      if (!d) throw ValidationError("expected a number, got '" + v + "'");
      out = *d;
    });
  }
  void integer(const std::string& key, Index& out) {
    field(key, [&](const std::string& v) {
      const auto d = text::parse_double(v);
      if (!d || *d != std::floor(*d)) throw ValidationError("expected an integer, got '" + v + "'");
      out = static_cast<Index>(*d);
    });
  }
  void unsigned_integer(const std::string& key, std::uint64_t& out) {
    field(key, [&](const std::string& v) {
      try {
        std::size_t pos = 0;
        out = std::stoull(v, &pos);
        if (pos != v.size() || v.front() == '-') throw std::invalid_argument(v);
      } catch (const std::exception&) {
        throw ValidationError("expected a non-negative integer, got '" + v + "'");
      }
    });
  }
  void boolean(const std::string& key, bool& out) {
    field(key, [&](const std::string& v) {
      if (v == "true" || v == "1" || v == "yes") out = true;
      else if (v == "false" || v == "0" || v == "no") out = false;
      else throw ValidationError("expected true/false, got '" + v + "'");
    });
  }
  void string(const std::string& key, std::string& out) {
    field(key, [&](const std::string& v) { out = v; });
  }

  void finish() const {
    if (!tree_) return;
    for (const auto& [k, _] : *tree_)
      if (!seen_.count(k)) throw ValidationError("unknown config key " + name_ + "." + k);
  }

 private:
  const Ptree* tree_;
  std::string name_;
  std::set<std::string> seen_;
};

inline void read_optimizer(Section& s, nn::OptimizerConfig& o) {
  s.field("optimizer", [&](const std::string& v) {
    try {
      o.kind = nn::optimizer_from_string(v);
    } catch (const std::exception& e) {
      throw ValidationError(e.what());
    }
  });
  s.number("learning_rate", o.learning_rate);
  s.number("momentum_start", o.momentum_start);
  s.number("momentum_end", o.momentum_end);
  s.integer("batch_size", o.batch_size);
  s.integer("iterations", o.iterations);
}

inline void read_autoencoder(Section& s, AutoencoderConfig& c) {
  s.integer("hidden", c.hidden_dim);
  s.number("noise", c.noise_proportion);
  s.number("sparsity_target", c.sparsity_target);
  s.number("sparsity_weight", c.sparsity_weight);
  s.number("dropout", c.dropout_rate);
  s.field("loss", [&](const std::string& v) {
    if (v == "mse") c.loss = ReconstructionLoss::Mse;
    else if (v == "cross-entropy") c.loss = ReconstructionLoss::CrossEntropy;
    else throw ValidationError("expected mse or cross-entropy, got '" + v + "'");
  });
  read_optimizer(s, c.optimizer);
}

template <class E>
void read_enum(Section& s, const std::string& key, E& out, const std::vector<std::pair<std::string, E>>& options) {
  s.field(key, [&](const std::string& v) {
    std::string names;
    for (const auto& [n, e] : options) {
      if (n == v) {
        out = e;
        return;
      }
      names += (names.empty() ? "" : ", ") + n;
    }
    throw ValidationError("expected one of " + names + ", got '" + v + "'");
  });
}

template <class E>
std::string enum_name(E value, const std::vector<std::pair<std::string, E>>& options) {
  for (const auto& [n, e] : options)
    if (e == value) return n;
  return "?";
}

inline const std::vector<std::pair<std::string, FScoreScope>> kFScoreScopes{{"per_fold", FScoreScope::PerFold},
                                                                            {"whole_dataset", FScoreScope::WholeDataset}};
inline const std::vector<std::pair<std::string, PretrainScope>> kPretrainScopes{
    {"per_fold", PretrainScope::PerFold}, {"all_subjects", PretrainScope::AllSubjects}};
inline const std::vector<std::pair<std::string, ImputationMode>> kImputation{{"cohort", ImputationMode::Cohort},
                                                                              {"strict", ImputationMode::Strict}};
inline const std::vector<std::pair<std::string, WeightSource>> kWeightSources{{"holdout", WeightSource::Holdout},
                                                                               {"train", WeightSource::Train}};
inline const std::vector<std::pair<std::string, VotingMode>> kVoting{{"soft", VotingMode::Soft},
                                                                      {"hard", VotingMode::Hard}};

}  // namespace config_detail

/// Applies a config text over `base` (a preset). Relative paths resolve against `base_dir`.
inline RunConfig parse_config(const std::string& ini_text, RunConfig base, const std::filesystem::path& base_dir = {}) {
  using namespace config_detail;
  Ptree tree;
  std::istringstream in(ini_text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  auto section = [&](const std::string& name) {
    const auto it = tree.find(name);
    return Section(it == tree.not_found() ? nullptr : &it->second, name);
  };
  std::set<std::string> known{"run", "atlases", "feature_selection", "ae1", "ae2", "ssdae", "mlp",
                              "ensemble", "cv", "synth", "selector", "roi_report", "sweep"};
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };

  RunConfig& c = base;
  auto& p = c.pipeline;
  {
    auto s = section("run");
    s.string("preset", c.preset);
    s.unsigned_integer("seed", p.seed);
    s.field("jobs", [&](const std::string& v) {
      const auto d = text::parse_double(v);
      if (!d || *d < 1 || *d != std::floor(*d)) throw ValidationError("expected an integer >= 1, got '" + v + "'");
      p.jobs = static_cast<unsigned>(*d);
    });
    s.field("data_dir", [&](const std::string& v) { c.data_dir = resolve(v); });
    s.field("output_dir", [&](const std::string& v) { c.output_dir = resolve(v); });
    s.field("phenotype", [&](const std::string& v) { c.phenotype = v; });
    s.finish();
  }
  {
    auto s = section("atlases");
    s.field("enabled", [&](const std::string& v) {
      std::vector<AtlasEntry> kept;
      for (const auto& id : split_list(v)) {
        const auto it = std::find_if(c.atlases.begin(), c.atlases.end(),
                                     [&](const AtlasEntry& a) { return a.plan.atlas.atlas_id == id; });
        if (it != c.atlases.end()) kept.push_back(*it);
        else kept.push_back({{AtlasSpec{id, 0, 0, {}}, std::nullopt}, {}});
      }
      if (kept.empty()) throw ValidationError("at least one atlas must be enabled");
      c.atlases = std::move(kept);
    });
    s.finish();
  }
  for (auto& a : c.atlases) {
    const std::string name = "atlas:" + a.plan.atlas.atlas_id;
    known.insert(name);
    auto s = section(name);
    s.integer("n_rois", a.plan.atlas.n_rois);
    s.integer("retain_count", a.plan.atlas.retain_count);
    s.field("retain_percent", [&](const std::string& v) {
      if (v.empty()) {
        a.plan.retain_percent.reset();
        return;
      }
      const auto d = text::parse_double(v);
      if (!d) throw ValidationError("expected a number, got '" + v + "'");
      a.plan.retain_percent = *d;
    });
    s.field("sidecar", [&](const std::string& v) { a.sidecar = v.empty() ? std::filesystem::path{} : resolve(v); });
    s.finish();
  }
  {
    auto s = section("feature_selection");
    s.boolean("enabled", p.feature_selection);
    read_enum(s, "scope", p.fscore_scope, kFScoreScopes);
    s.finish();
  }
  {
    auto s = section("ae1");
    read_autoencoder(s, p.ae1);
    s.finish();
  }
  {
    auto s = section("ae2");
    read_autoencoder(s, p.ae2);
    s.finish();
  }
  {
    auto s = section("ssdae");
    read_enum(s, "scope", p.pretrain_scope, kPretrainScopes);
    s.finish();
  }
  {
    auto s = section("mlp");
    s.integer("hidden1", p.mlp.hidden1);
    s.integer("hidden2", p.mlp.hidden2);
    s.integer("hidden3", p.mlp.hidden3);
    s.number("dropout", p.mlp.dropout_rate);
    s.boolean("use_demographics", p.mlp.use_demographics);
    s.boolean("freeze_pretrained", p.mlp.freeze_pretrained);
    s.boolean("ae2_projection", p.mlp.ae2_projection);
    read_optimizer(s, p.mlp.optimizer);
    s.finish();
  }
  {
    auto s = section("ensemble");
    read_enum(s, "weight_source", p.weight_source, kWeightSources);
    s.number("holdout_fraction", p.holdout_fraction);
    read_enum(s, "voting", p.voting, kVoting);
    s.finish();
  }
  {
    auto s = section("cv");
    s.integer("folds", p.folds);
    s.boolean("stratified", p.stratified);
    s.boolean("fold_size_weighted", p.fold_size_weighted);
    read_enum(s, "imputation", p.imputation, kImputation);
    s.finish();
  }
  {
    auto s = section("synth");
    s.integer("subjects", c.synth_subjects);
    s.number("effect", c.synth_effect);
    s.number("missing_rate", c.synth_missing_rate);
    s.number("coupling_jitter", c.synth_coupling_jitter);
    s.finish();
  }
  {
    auto s = section("selector");
    s.string("site", c.selector_site);
    s.string("atlas", c.selector_atlas);
    s.finish();
  }
  {
    auto s = section("roi_report");
    s.integer("top_n", c.roi_top_n);
    s.string("atlas", c.roi_atlas);
    s.finish();
  }
  {
    auto s = section("sweep");
    s.field("percents", [&](const std::string& v) {
      c.sweep_percents.clear();
      for (const auto& part : split_list(v)) {
        const auto d = text::parse_double(part);
        if (!d) throw ValidationError("expected a number, got '" + part + "'");
        c.sweep_percents.push_back(*d);
      }
    });
    s.finish();
  }
  for (const auto& [name, _] : tree)
    if (!known.count(name)) throw ValidationError("unknown config section [" + name + "]");

  for (const auto& a : c.atlases)
    if (a.plan.atlas.n_rois < 2)
      throw ValidationError("atlas:" + a.plan.atlas.atlas_id + ".n_rois must be set (>= 2)");
  c.sync_pipeline();
  return c;
}

/// A config file may name its own base preset in [run] preset; otherwise `fallback`.
inline RunConfig load_config(const std::filesystem::path& path, const std::string& fallback_preset = "paper-defaults") {
  const auto text = text::read_file(path);
  std::string preset = fallback_preset;
  {
    boost::property_tree::ptree tree;
    std::istringstream in(text);
    try {
      boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ValidationError(path.string() + ": " + e.what());
    }
    if (auto v = tree.get_optional<std::string>("run.preset")) preset = std::string(text::trim(*v));
  }
  return parse_config(text, preset_config(preset), path.parent_path());
}

/// Canonical text: every key, fixed order, shortest round-trip numbers.
inline std::string serialize_config(const RunConfig& c) {
  using namespace config_detail;
  const auto& p = c.pipeline;
  std::string s;
  auto section = [&](const std::string& name) { s += (s.empty() ? "[" : "\n[") + name + "]\n"; };
  auto kv = [&](const std::string& k, const std::string& v) { s += k + " = " + v + "\n"; };
  auto optimizer = [&](const nn::OptimizerConfig& o) {
    kv("optimizer", std::string(nn::to_string(o.kind)));
    kv("learning_rate", fmt(o.learning_rate));
    kv("momentum_start", fmt(o.momentum_start));
    kv("momentum_end", fmt(o.momentum_end));
    kv("batch_size", fmt(o.batch_size));
    kv("iterations", fmt(o.iterations));
  };
  auto autoencoder = [&](const AutoencoderConfig& a) {
    kv("hidden", fmt(a.hidden_dim));
    kv("noise", fmt(a.noise_proportion));
    kv("sparsity_target", fmt(a.sparsity_target));
    kv("sparsity_weight", fmt(a.sparsity_weight));
    kv("dropout", fmt(a.dropout_rate));
    kv("loss", a.loss == ReconstructionLoss::Mse ? "mse" : "cross-entropy");
    optimizer(a.optimizer);
  };

  section("run");
  kv("preset", c.preset);
  kv("seed", fmt(p.seed));
  kv("jobs", std::to_string(p.jobs));
  kv("data_dir", c.data_dir.generic_string());
  kv("output_dir", c.output_dir.generic_string());
  kv("phenotype", c.phenotype.generic_string());
  section("atlases");
  std::vector<std::string> ids;
  for (const auto& a : c.atlases) ids.push_back(a.plan.atlas.atlas_id);
  kv("enabled", join(ids));
  for (const auto& a : c.atlases) {
    section("atlas:" + a.plan.atlas.atlas_id);
    kv("n_rois", fmt(a.plan.atlas.n_rois));
    kv("retain_count", fmt(a.plan.atlas.retain_count));
    kv("retain_percent", a.plan.retain_percent ? fmt(*a.plan.retain_percent) : "");
    kv("sidecar", a.sidecar.generic_string());
  }
  section("feature_selection");
  kv("enabled", fmt(p.feature_selection));
  kv("scope", enum_name(p.fscore_scope, kFScoreScopes));
  section("ae1");
  autoencoder(p.ae1);
  section("ae2");
  autoencoder(p.ae2);
  section("ssdae");
  kv("scope", enum_name(p.pretrain_scope, kPretrainScopes));
  section("mlp");
  kv("hidden1", fmt(p.mlp.hidden1));
  kv("hidden2", fmt(p.mlp.hidden2));
  kv("hidden3", fmt(p.mlp.hidden3));
  kv("dropout", fmt(p.mlp.dropout_rate));
  kv("use_demographics", fmt(p.mlp.use_demographics));
  kv("freeze_pretrained", fmt(p.mlp.freeze_pretrained));
  kv("ae2_projection", fmt(p.mlp.ae2_projection));
  optimizer(p.mlp.optimizer);
  section("ensemble");
  kv("weight_source", enum_name(p.weight_source, kWeightSources));
  kv("holdout_fraction", fmt(p.holdout_fraction));
  kv("voting", enum_name(p.voting, kVoting));
  section("cv");
  kv("folds", fmt(p.folds));
  kv("stratified", fmt(p.stratified));
  kv("fold_size_weighted", fmt(p.fold_size_weighted));
  kv("imputation", enum_name(p.imputation, kImputation));
  section("synth");
  kv("subjects", fmt(c.synth_subjects));
  kv("effect", fmt(c.synth_effect));
  kv("missing_rate", fmt(c.synth_missing_rate));
  kv("coupling_jitter", fmt(c.synth_coupling_jitter));
  section("selector");
  kv("site", c.selector_site);
  kv("atlas", c.selector_atlas);
  section("roi_report");
  kv("top_n", fmt(c.roi_top_n));
  kv("atlas", c.roi_atlas);
  section("sweep");
  std::vector<std::string> pct;
  for (double v : c.sweep_percents) pct.push_back(fmt(v));
  kv("percents", join(pct));
  return s;
}

/// FNV-1a over the canonical text.
inline std::string config_hash(const RunConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : serialize_config(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Loads ROI names/centers from the sidecars named in the config.
inline void attach_sidecars(RunConfig& c) {
  for (auto& a : c.atlases)
    if (!a.sidecar.empty()) a.plan.atlas.rois = read_atlas_sidecar(a.sidecar, a.plan.atlas.n_rois);
  c.sync_pipeline();
}

}  // namespace madeasd
