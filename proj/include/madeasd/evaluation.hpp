#pragma once

// Cross-validated training and scoring of the multi-atlas ensemble, metrics, ablations,
// the high-quality subset selector, and per-feature variance summaries.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <future>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "madeasd/atlas.hpp"
#include "madeasd/classifier.hpp"
#include "madeasd/connectivity.hpp"
#include "madeasd/data.hpp"
#include "madeasd/ensemble.hpp"
#include "madeasd/feature_selection.hpp"
#include "madeasd/log.hpp"
#include "madeasd/random.hpp"
#include "madeasd/ssdae.hpp"
#include "madeasd/text_io.hpp"

namespace madeasd {

// ---------------------------------------------------------------------------------------------
// Dataset view used by the pipeline

/// Rows aligned across ids, labels, demographics and every atlas's feature matrix.
struct Dataset {
  std::vector<std::string> ids;
  std::vector<Label> labels;
  std::vector<std::string> sites;
  std::vector<Demographics> demographics;
  std::map<std::string, Matrix> features;

  Index size() const { return static_cast<Index>(ids.size()); }

  Dataset subset(std::span<const Index> rows) const {
    Dataset d;
    for (auto r : rows) {
      const auto i = static_cast<std::size_t>(r);
      d.ids.push_back(ids[i]);
      d.labels.push_back(labels[i]);
      d.sites.push_back(sites[i]);
      d.demographics.push_back(demographics[i]);
    }
    for (const auto& [atlas, m] : features) {
      Matrix sub(static_cast<Index>(rows.size()), m.cols());
      for (std::size_t k = 0; k < rows.size(); ++k) sub.row(static_cast<Index>(k)) = m.row(rows[k]);
      d.features.emplace(atlas, std::move(sub));
    }
    return d;
  }
};

inline Dataset build_dataset(std::span<const SubjectRecord> records, std::span<const AtlasSpec> atlases) {
  Dataset d;
  for (const auto& r : records) {
    d.ids.push_back(r.subject_id);
    d.labels.push_back(r.label);
    d.sites.push_back(r.site);
    d.demographics.push_back(r.demographics);
  }
  for (const auto& a : atlases) {
    Matrix f = feature_matrix(records, a.atlas_id);
    if (!records.empty() && f.cols() != a.feature_dim())
      throw ValidationError("atlas " + a.atlas_id + ": features have " + std::to_string(f.cols()) +
                            " columns, expected " + std::to_string(a.feature_dim()));
    d.features.emplace(a.atlas_id, std::move(f));
  }
  return d;
}

/// Mean imputation over every subject of the dataset.
inline void impute_cohort(Dataset& d) {
  std::vector<SubjectRecord> tmp(d.demographics.size());
  for (std::size_t i = 0; i < tmp.size(); ++i) tmp[i].demographics = d.demographics[i];
  tmp = impute_demographics(std::move(tmp));
  for (std::size_t i = 0; i < tmp.size(); ++i) d.demographics[i] = tmp[i].demographics;
}

// ---------------------------------------------------------------------------------------------
// Configuration

enum class FScoreScope { PerFold, WholeDataset };
enum class PretrainScope { PerFold, AllSubjects };
enum class ImputationMode { Cohort, Strict };
enum class WeightSource { Holdout, Train };

struct AtlasPlan {
  AtlasSpec atlas;
  /// When set, overrides atlas.retain_count with ceil(percent * S / 100).
  std::optional<double> retain_percent;

  Index retain_count() const {
    return retain_percent ? retain_count_for_percent(*retain_percent, atlas.feature_dim()) : atlas.retain_count;
  }
};

struct PipelineConfig {
  std::vector<AtlasPlan> atlases;
  bool feature_selection = true;
  FScoreScope fscore_scope = FScoreScope::PerFold;
  AutoencoderConfig ae1 = AutoencoderConfig::first_level();
  AutoencoderConfig ae2 = AutoencoderConfig::second_level();
  PretrainScope pretrain_scope = PretrainScope::PerFold;
  MlpConfig mlp;
  WeightSource weight_source = WeightSource::Holdout;
  double holdout_fraction = 0.1;
  VotingMode voting = VotingMode::Soft;
  ImputationMode imputation = ImputationMode::Cohort;
  Index folds = 10;
  bool stratified = true;
  bool fold_size_weighted = false;
  std::uint64_t seed = 0;
  unsigned jobs = 1;

  void validate() const {
    if (atlases.empty()) throw ValidationError("at least one atlas must be enabled");
    for (const auto& a : atlases) {
      if (a.retain_percent && !(*a.retain_percent > 0.0 && *a.retain_percent <= 100.0))
        throw ValidationError("atlas " + a.atlas.atlas_id + ": retain_percent must lie in (0, 100]");
      if (!a.retain_percent) a.atlas.validate();
    }
    ae1.validate();
    ae2.validate();
    mlp.validate();
    if (ae1.hidden_dim != mlp.hidden1)
      throw ValidationError("ae1.hidden (" + std::to_string(ae1.hidden_dim) + ") must equal mlp.hidden1 (" +
                            std::to_string(mlp.hidden1) + ")");
    if (ae2.hidden_dim != mlp.hidden2 && !mlp.ae2_projection)
      throw ValidationError("ae2.hidden (" + std::to_string(ae2.hidden_dim) + ") must equal mlp.hidden2 (" +
                            std::to_string(mlp.hidden2) + ") unless mlp.ae2_projection is on");
    if (weight_source == WeightSource::Holdout && !(holdout_fraction > 0.0 && holdout_fraction < 0.5))
      throw ValidationError("ensemble.holdout_fraction must lie in (0, 0.5)");
    if (folds < 1) throw ValidationError("cv.folds must be >= 1");
    if (jobs < 1) throw ValidationError("jobs must be >= 1");
  }
};

// ---------------------------------------------------------------------------------------------
// Folds and metrics

struct FoldAssignment {
  Index k = 0;
  std::uint64_t seed = 0;
  /// Fold index per dataset row.
  std::vector<Index> fold_of;

  std::vector<Index> test_rows(Index fold) const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] == fold) out.push_back(static_cast<Index>(i));
    return out;
  }
  std::vector<Index> train_rows(Index fold) const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] != fold) out.push_back(static_cast<Index>(i));
    return out;
  }
};

/// Seeded partition. Stratified mode deals each class's shuffled members round-robin,
/// continuing the rotation across classes, so fold sizes and per-class counts each differ
/// by at most one.
inline FoldAssignment make_folds(std::span<const Label> labels, Index k, std::uint64_t seed, bool stratified = true) {
  if (k < 1) throw ValidationError("make_folds: k must be >= 1");
  std::array<std::vector<Index>, kNumClasses> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i)
    by_class[static_cast<std::size_t>(class_index(labels[i]))].push_back(static_cast<Index>(i));
  const auto minority = static_cast<Index>(std::min(by_class[0].size(), by_class[1].size()));
  if (k > minority)
    throw ValidationError("make_folds: k = " + std::to_string(k) + " exceeds the minority class size " +
                          std::to_string(minority));
  FoldAssignment f{k, seed, std::vector<Index>(labels.size(), 0)};
  Rng rng(derive_seed(seed, {0xF01D}));
  Index next = 0;
  if (stratified) {
    for (auto& members : by_class) {
      shuffle(members.begin(), members.end(), rng);
      for (auto i : members) f.fold_of[static_cast<std::size_t>(i)] = next++ % k;
    }
  } else {
    std::vector<Index> all(labels.size());
    std::iota(all.begin(), all.end(), Index{0});
    shuffle(all.begin(), all.end(), rng);
    for (auto i : all) f.fold_of[static_cast<std::size_t>(i)] = next++ % k;
  }
  return f;
}

/// ASD is the positive class.
struct Confusion {
  Index tp = 0, fn = 0, tn = 0, fp = 0;
  Index total() const { return tp + fn + tn + fp; }
  Confusion& operator+=(const Confusion& o) {
    tp += o.tp;
    fn += o.fn;
    tn += o.tn;
    fp += o.fp;
    return *this;
  }
  bool operator==(const Confusion&) const = default;
};

inline Confusion confusion_from(std::span<const Label> predicted, std::span<const Label> truth) {
  if (predicted.size() != truth.size()) throw ValidationError("confusion: length mismatch");
  Confusion c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool pos = truth[i] == Label::ASD, hit = predicted[i] == truth[i];
    if (pos) (hit ? c.tp : c.fn)++;
    else (hit ? c.tn : c.fp)++;
  }
  return c;
}

/// Ratios with an empty denominator are absent, never NaN.
struct Metrics {
  Confusion confusion;
  std::optional<double> accuracy, sensitivity, specificity;

  static Metrics from(const Confusion& c) {
    Metrics m;
    m.confusion = c;
    auto ratio = [](Index num, Index den) -> std::optional<double> {
      if (den == 0) return std::nullopt;
      return static_cast<double>(num) / static_cast<double>(den);
    };
    m.accuracy = ratio(c.tp + c.tn, c.total());
    m.sensitivity = ratio(c.tp, c.tp + c.fn);
    m.specificity = ratio(c.tn, c.tn + c.fp);
    if (!m.sensitivity) log::warn("evaluation", "sensitivity undefined (no ASD subjects); reported as absent");
    if (!m.specificity) log::warn("evaluation", "specificity undefined (no TC subjects); reported as absent");
    return m;
  }
};

struct MeanMetrics {
  std::optional<double> accuracy, sensitivity, specificity;
};

/// Unweighted mean over folds where each ratio is defined; optionally weighted by fold size.
inline MeanMetrics mean_metrics(std::span<const Metrics> folds, bool size_weighted = false) {
  auto avg = [&](auto getter) -> std::optional<double> {
    double sum = 0.0, w = 0.0;
    for (const auto& m : folds)
      if (const auto v = getter(m)) {
        const double wi = size_weighted ? static_cast<double>(m.confusion.total()) : 1.0;
        sum += wi * *v;
        w += wi;
      }
    if (w == 0.0) return std::nullopt;
    return sum / w;
  };
  return {avg([](const Metrics& m) { return m.accuracy; }), avg([](const Metrics& m) { return m.sensitivity; }),
          avg([](const Metrics& m) { return m.specificity; })};
}

// ---------------------------------------------------------------------------------------------
// Training one ensemble

/// Artifacts fitted once on the whole dataset, for the protocol-mirroring scopes.
struct GlobalArtifacts {
  std::map<std::string, FeatureMask> masks;
  std::map<std::string, std::array<TrainedAutoencoder, 2>> ssdae;
};

struct EnsembleTraining {
  EnsembleModel ensemble;
  std::vector<std::array<TrainedAutoencoder, 2>> ssdae;
  std::vector<Index> fit_rows;
  std::vector<Index> holdout_rows;
};

inline std::vector<Label> labels_of(const Dataset& d, std::span<const Index> rows) {
  std::vector<Label> out;
  for (auto r : rows) out.push_back(d.labels[static_cast<std::size_t>(r)]);
  return out;
}

inline std::vector<Demographics> demographics_of(const Dataset& d, std::span<const Index> rows) {
  std::vector<Demographics> out;
  for (auto r : rows) out.push_back(d.demographics[static_cast<std::size_t>(r)]);
  return out;
}

inline Matrix rows_of(const Matrix& m, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

inline const Matrix& atlas_features(const Dataset& d, const std::string& atlas_id) {
  const auto it = d.features.find(atlas_id);
  if (it == d.features.end()) throw ValidationError("dataset has no features for atlas " + atlas_id);
  return it->second;
}

/// Stratified split of `rows` into (fit, holdout).
inline std::pair<std::vector<Index>, std::vector<Index>> split_holdout(const Dataset& d, std::span<const Index> rows,
                                                                       double fraction, std::uint64_t seed) {
  std::array<std::vector<Index>, kNumClasses> by_class;
  for (auto r : rows) by_class[static_cast<std::size_t>(class_index(d.labels[static_cast<std::size_t>(r)]))].push_back(r);
  Rng rng(seed);
  std::vector<Index> fit, hold;
  for (auto& members : by_class) {
    shuffle(members.begin(), members.end(), rng);
    Index n_hold = 0;
    if (members.size() >= 3)
      n_hold = std::clamp<Index>(static_cast<Index>(std::llround(fraction * static_cast<double>(members.size()))), 1,
                                 static_cast<Index>(members.size()) - 2);
    for (std::size_t i = 0; i < members.size(); ++i)
      (static_cast<Index>(i) < n_hold ? hold : fit).push_back(members[i]);
  }
  std::sort(fit.begin(), fit.end());
  std::sort(hold.begin(), hold.end());
  return {fit, hold};
}

/// Mask for one atlas from the given rows (identity when selection is off).
inline FeatureMask fit_mask(const Dataset& d, const AtlasPlan& plan, std::span<const Index> rows, bool select) {
  const auto& x = atlas_features(d, plan.atlas.atlas_id);
  if (!select) return FeatureMask::identity(plan.atlas.atlas_id, x.cols());
  const auto ranking = fscore(rows_of(x, rows), labels_of(d, rows), plan.atlas.atlas_id);
  return select_top(ranking, plan.retain_count());
}

/// Fits one member per atlas on `train_rows` and weights them by their accuracy on an
/// inner stratified holdout (or on the training rows themselves).
inline EnsembleTraining train_ensemble(const Dataset& d, std::span<const Index> train_rows, const PipelineConfig& cfg,
                                       std::uint64_t seed, const GlobalArtifacts* global = nullptr) {
  EnsembleTraining out;
  if (cfg.weight_source == WeightSource::Holdout) {
    auto [fit, hold] = split_holdout(d, train_rows, cfg.holdout_fraction, derive_seed(seed, {0x401D}));
    if (hold.empty()) throw ValidationError("training side too small for an inner holdout");
    out.fit_rows = std::move(fit);
    out.holdout_rows = std::move(hold);
  } else {
    out.fit_rows.assign(train_rows.begin(), train_rows.end());
  }
  const auto fit_labels = labels_of(d, out.fit_rows);
  const auto fit_demo = demographics_of(d, out.fit_rows);
  const auto& eval_rows = cfg.weight_source == WeightSource::Holdout ? out.holdout_rows : out.fit_rows;
  const auto eval_labels = labels_of(d, eval_rows);
  const auto eval_demo = demographics_of(d, eval_rows);

  std::vector<EnsembleMember> members;
  for (std::size_t ai = 0; ai < cfg.atlases.size(); ++ai) {
    const auto& plan = cfg.atlases[ai];
    const auto& id = plan.atlas.atlas_id;
    const auto atlas_seed = derive_seed(seed, {ai + 1});
    const auto& x = atlas_features(d, id);

    FeatureMask mask = (global && global->masks.count(id)) ? global->masks.at(id)
                                                            : fit_mask(d, plan, out.fit_rows, cfg.feature_selection);
    const Matrix fit_x = apply_mask(rows_of(x, out.fit_rows), mask);

    std::array<TrainedAutoencoder, 2> ssdae;
    if (global && global->ssdae.count(id)) {
      ssdae = global->ssdae.at(id);
    } else if (cfg.pretrain_scope == PretrainScope::AllSubjects) {
      ssdae = stack(apply_mask(x, mask), cfg.ae1, cfg.ae2, derive_seed(atlas_seed, {1}));
    } else {
      ssdae = stack(fit_x, cfg.ae1, cfg.ae2, derive_seed(atlas_seed, {1}));
    }
    auto model = build_from_ssdae(ssdae, mask, cfg.mlp, derive_seed(atlas_seed, {2}));
    model = fine_tune(std::move(model), fit_x, fit_demo, fit_labels, derive_seed(atlas_seed, {3}));
    const auto pred = predict_labels(model, apply_mask(rows_of(x, eval_rows), model.mask), eval_demo);
    const double acc = accuracy(pred, eval_labels);
    log::emit(log::Level::Info, "ensemble", "atlas", id, "member_accuracy", acc);
    members.push_back({std::move(model), acc});
    out.ssdae.push_back(std::move(ssdae));
  }
  out.ensemble = EnsembleModel::from_members(std::move(members), cfg.voting);
  return out;
}

inline std::vector<Vote> score_rows(const EnsembleModel& e, const Dataset& d, std::span<const Index> rows) {
  std::vector<Matrix> full;
  for (const auto& m : e.members) full.push_back(rows_of(atlas_features(d, m.model.atlas_id), rows));
  return vote_batch(e, full, demographics_of(d, rows));
}

/// Masks (and autoencoders) fitted on every subject, for the whole-dataset scopes.
inline GlobalArtifacts fit_global_artifacts(const Dataset& d, const PipelineConfig& cfg) {
  GlobalArtifacts g;
  if (cfg.fscore_scope != FScoreScope::WholeDataset) return g;
  std::vector<Index> all(static_cast<std::size_t>(d.size()));
  std::iota(all.begin(), all.end(), Index{0});
  for (std::size_t ai = 0; ai < cfg.atlases.size(); ++ai) {
    const auto& plan = cfg.atlases[ai];
    auto mask = fit_mask(d, plan, all, cfg.feature_selection);
    if (cfg.pretrain_scope == PretrainScope::AllSubjects)
      g.ssdae.emplace(plan.atlas.atlas_id, stack(apply_mask(atlas_features(d, plan.atlas.atlas_id), mask), cfg.ae1,
                                                 cfg.ae2, derive_seed(cfg.seed, {0x610B, ai})));
    g.masks.emplace(plan.atlas.atlas_id, std::move(mask));
  }
  return g;
}

// ---------------------------------------------------------------------------------------------
// Cross-validation

struct FoldResult {
  Index fold = 0;
  Metrics metrics;
  std::vector<std::string> atlases;
  std::vector<double> member_accuracies;
  std::vector<double> weights;
  double seconds = 0.0;
};

struct Prediction {
  std::string subject_id;
  Index fold = 0;
  Label truth = Label::ASD;
  Label predicted = Label::ASD;
  double score_asd = 0.0;
  double score_tc = 0.0;
};

struct CvResult {
  FoldAssignment assignment;
  std::vector<FoldResult> folds;
  MeanMetrics mean;
  Confusion pooled;
  std::vector<Prediction> predictions;
  /// Filled when CvOptions::keep_models is set.
  std::vector<EnsembleTraining> models;
};

struct CvOptions {
  bool keep_models = false;
};

inline Dataset prepare_for_cv(Dataset d, const PipelineConfig& cfg) {
  if (cfg.imputation == ImputationMode::Cohort) impute_cohort(d);
  return d;
}

inline CvResult cross_validate(const Dataset& raw, const PipelineConfig& cfg, const CvOptions& options = {}) {
  cfg.validate();
  if (cfg.folds < 2) throw ValidationError("cross-validation needs at least 2 folds");
  const Dataset d = prepare_for_cv(raw, cfg);
  CvResult res;
  res.assignment = make_folds(d.labels, cfg.folds, derive_seed(cfg.seed, {0xC0}), cfg.stratified);
  const auto global = fit_global_artifacts(d, cfg);

  struct FoldOutput {
    FoldResult result;
    std::vector<Prediction> predictions;
    EnsembleTraining training;
  };
  auto run_fold = [&](Index fold) -> FoldOutput {
    const auto start = std::chrono::steady_clock::now();
    FoldOutput o;
    const auto train = res.assignment.train_rows(fold);
    const auto test = res.assignment.test_rows(fold);
    try {
      o.training = train_ensemble(d, train, cfg, derive_seed(cfg.seed, {0xF0, static_cast<std::uint64_t>(fold)}),
                                  global.masks.empty() ? nullptr : &global);
    } catch (const std::exception& e) {
      throw RuntimeFailure("fold " + std::to_string(fold) + " failed: " + e.what());
    }
    const auto votes = score_rows(o.training.ensemble, d, test);
    std::vector<Label> predicted;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const auto r = static_cast<std::size_t>(test[i]);
      predicted.push_back(votes[i].label);
      o.predictions.push_back({d.ids[r], fold, d.labels[r], votes[i].label, votes[i].scores[0], votes[i].scores[1]});
    }
    o.result.fold = fold;
    o.result.metrics = Metrics::from(confusion_from(predicted, labels_of(d, test)));
    for (const auto& m : o.training.ensemble.members) {
      o.result.atlases.push_back(m.model.atlas_id);
      o.result.member_accuracies.push_back(m.accuracy);
    }
    o.result.weights = o.training.ensemble.weights;
    o.result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log::emit(log::Level::Info, "cv", "fold", fold, "accuracy", o.result.metrics.accuracy.value_or(-1.0), "seconds",
              o.result.seconds);
    return o;
  };

  std::vector<FoldOutput> outputs(static_cast<std::size_t>(cfg.folds));
  if (cfg.jobs <= 1) {
    for (Index f = 0; f < cfg.folds; ++f) outputs[static_cast<std::size_t>(f)] = run_fold(f);
  } else {
    // Folds are independent; results are merged by fold index, not completion order.
    for (Index start = 0; start < cfg.folds; start += static_cast<Index>(cfg.jobs)) {
      std::vector<std::future<FoldOutput>> running;
      const Index end = std::min<Index>(cfg.folds, start + static_cast<Index>(cfg.jobs));
      for (Index f = start; f < end; ++f) running.push_back(std::async(std::launch::async, run_fold, f));
      for (Index f = start; f < end; ++f) outputs[static_cast<std::size_t>(f)] = running[static_cast<std::size_t>(f - start)].get();
    }
  }

  std::vector<Metrics> per_fold;
  for (auto& o : outputs) {
    res.pooled += o.result.metrics.confusion;
    per_fold.push_back(o.result.metrics);
    res.folds.push_back(std::move(o.result));
    for (auto& p : o.predictions) res.predictions.push_back(std::move(p));
    if (options.keep_models) res.models.push_back(std::move(o.training));
  }
  res.mean = mean_metrics(per_fold, cfg.fold_size_weighted);
  return res;
}

// ---------------------------------------------------------------------------------------------
// Ablations

struct AblationSwitches {
  std::string name;
  std::vector<std::string> atlases;  // empty: all configured
  bool feature_selection = true;
  bool demographics = true;
};

struct AblationRow {
  AblationSwitches switches;
  CvResult result;
};

/// The full configuration, each single atlas, each leave-one-out pair (three atlases),
/// and the configuration without feature selection / without demographics.
inline std::vector<AblationSwitches> standard_ablations(const PipelineConfig& cfg) {
  std::vector<std::string> ids;
  for (const auto& a : cfg.atlases) ids.push_back(a.atlas.atlas_id);
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
    return s;
  };
  std::vector<AblationSwitches> rows;
  rows.push_back({join(ids) + " + Feature Selection + Demographic", ids, true, true});
  if (ids.size() > 1) {
    for (const auto& keep : ids) {
      std::vector<std::string> removed;
      for (const auto& x : ids)
        if (x != keep) removed.push_back(x);
      rows.push_back({"- {" + join(removed) + "}", {keep}, true, true});
    }
    if (ids.size() > 2) {
      std::vector<std::string> kept(ids.begin(), ids.end() - 1);
      rows.push_back({"- " + ids.back(), kept, true, true});
    }
  }
  rows.push_back({"- Feature Selection", ids, false, true});
  rows.push_back({"- Demographic", ids, true, false});
  return rows;
}

inline PipelineConfig apply_switches(PipelineConfig cfg, const AblationSwitches& s) {
  if (!s.atlases.empty()) {
    std::vector<AtlasPlan> kept;
    for (const auto& id : s.atlases) {
      const auto it = std::find_if(cfg.atlases.begin(), cfg.atlases.end(),
                                   [&](const AtlasPlan& p) { return p.atlas.atlas_id == id; });
      if (it == cfg.atlases.end()) throw ValidationError("ablation names unknown atlas " + id);
      kept.push_back(*it);
    }
    cfg.atlases = std::move(kept);
  }
  if (cfg.atlases.empty()) throw ValidationError("ablation: at least one atlas must be enabled");
  cfg.feature_selection = cfg.feature_selection && s.feature_selection;
  cfg.mlp.use_demographics = cfg.mlp.use_demographics && s.demographics;
  return cfg;
}

inline std::vector<AblationRow> ablate(const Dataset& d, const PipelineConfig& cfg,
                                       std::vector<AblationSwitches> rows = {}) {
  if (rows.empty()) rows = standard_ablations(cfg);
  std::vector<AblationRow> out;
  for (auto& s : rows) {
    auto run_cfg = apply_switches(cfg, s);
    log::emit(log::Level::Info, "ablate", "row", '"' + s.name + '"');
    out.push_back({std::move(s), cross_validate(d, run_cfg)});
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// High-quality subset selection

/// Single-atlas pipeline (selection, pretraining, fine-tuning) fitted on one site's subjects.
inline MlpModel train_selector(const Dataset& raw, const std::string& site, const AtlasPlan& plan,
                               const PipelineConfig& cfg, std::uint64_t seed) {
  Dataset d = prepare_for_cv(raw, cfg);
  std::vector<Index> rows;
  for (Index i = 0; i < d.size(); ++i)
    if (d.sites[static_cast<std::size_t>(i)] == site) rows.push_back(i);
  if (rows.empty()) throw ValidationError("no subjects from site '" + site + "'");
  const auto mask = fit_mask(d, plan, rows, cfg.feature_selection);
  const Matrix x = apply_mask(rows_of(atlas_features(d, plan.atlas.atlas_id), rows), mask);
  const auto ssdae = stack(x, cfg.ae1, cfg.ae2, derive_seed(seed, {1}));
  auto model = build_from_ssdae(ssdae, mask, cfg.mlp, derive_seed(seed, {2}));
  return fine_tune(std::move(model), x, demographics_of(d, rows), labels_of(d, rows), derive_seed(seed, {3}));
}

struct SubsetReport {
  std::string selector_atlas;
  std::vector<std::string> retained_ids;
  std::vector<std::string> discarded_ids;
  /// Subjects the selector could not score (missing or non-finite features).
  std::vector<std::string> unevaluable_ids;
  std::array<Index, kNumClasses> retained_per_class{};
  std::array<Index, kNumClasses> evaluated_per_class{};

  double retention_rate() const {
    const auto n = retained_ids.size() + discarded_ids.size();
    return n ? static_cast<double>(retained_ids.size()) / static_cast<double>(n) : 0.0;
  }
};

/// Keeps exactly the subjects the selector classifies correctly.
inline SubsetReport select_subset(const MlpModel& selector, const Dataset& d) {
  SubsetReport rep;
  rep.selector_atlas = selector.atlas_id;
  const auto it = d.features.find(selector.atlas_id);
  if (it == d.features.end()) {
    rep.unevaluable_ids = d.ids;
    return rep;
  }
  std::vector<Index> rows;
  for (Index i = 0; i < d.size(); ++i) {
    if (it->second.row(i).allFinite())
      rows.push_back(i);
    else
      rep.unevaluable_ids.push_back(d.ids[static_cast<std::size_t>(i)]);
  }
  if (rows.empty()) return rep;
  const auto pred = predict_labels(selector, apply_mask(rows_of(it->second, rows), selector.mask), demographics_of(d, rows));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto r = static_cast<std::size_t>(rows[k]);
    const auto c = static_cast<std::size_t>(class_index(d.labels[r]));
    ++rep.evaluated_per_class[c];
    if (pred[k] == d.labels[r]) {
      rep.retained_ids.push_back(d.ids[r]);
      ++rep.retained_per_class[c];
    } else {
      rep.discarded_ids.push_back(d.ids[r]);
    }
  }
  return rep;
}

inline std::vector<Index> rows_for_ids(const Dataset& d, std::span<const std::string> ids) {
  std::map<std::string, Index> pos;
  for (Index i = 0; i < d.size(); ++i) pos.emplace(d.ids[static_cast<std::size_t>(i)], i);
  std::vector<Index> out;
  for (const auto& id : ids) {
    const auto it = pos.find(id);
    if (it == pos.end()) throw ValidationError("unknown subject id " + id);
    out.push_back(it->second);
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Variance report

struct VarianceSummary {
  std::string variant;
  Index n_subjects = 0;
  Vector variances;
  double mean = 0.0;
  double median = 0.0;
};

/// Unbiased per-feature variance (rows = subjects) with mean/median over features.
inline VarianceSummary variance_summary(const std::string& name, const Matrix& features) {
  if (features.rows() < 2) throw ValidationError("variance report: variant " + name + " needs >= 2 subjects");
  VarianceSummary s;
  s.variant = name;
  s.n_subjects = features.rows();
  const auto mean = features.colwise().mean();
  s.variances = ((features.rowwise() - mean).array().square().colwise().sum() /
                 static_cast<double>(features.rows() - 1))
                    .transpose();
  s.mean = s.variances.size() ? s.variances.mean() : 0.0;
  std::vector<double> v(s.variances.data(), s.variances.data() + s.variances.size());
  if (!v.empty()) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    s.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  }
  return s;
}

inline std::vector<VarianceSummary> variance_report(const std::vector<std::pair<std::string, Matrix>>& variants) {
  std::vector<VarianceSummary> out;
  for (const auto& [name, m] : variants) out.push_back(variance_summary(name, m));
  return out;
}

/// Long format: variant, feature_index, variance; followed by a summary file.
inline std::string variance_csv(const std::vector<VarianceSummary>& rows) {
  std::string s = "variant,feature_index,variance\n";
  for (const auto& r : rows)
    for (Index j = 0; j < r.variances.size(); ++j)
      s += text::quote_if_needed(r.variant) + "," + std::to_string(j) + "," + text::format_double(r.variances(j)) + "\n";
  return s;
}

inline std::string variance_summary_csv(const std::vector<VarianceSummary>& rows) {
  std::string s = "variant,n_subjects,mean_variance,median_variance\n";
  for (const auto& r : rows)
    s += text::quote_if_needed(r.variant) + "," + std::to_string(r.n_subjects) + "," + text::format_double(r.mean) +
         "," + text::format_double(r.median) + "\n";
  return s;
}

// ---------------------------------------------------------------------------------------------
// JSON / CSV views

inline nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json to_json(const Metrics& m) {
  return {{"accuracy", optional_json(m.accuracy)},
          {"sensitivity", optional_json(m.sensitivity)},
          {"specificity", optional_json(m.specificity)},
          {"confusion", {{"tp", m.confusion.tp}, {"fn", m.confusion.fn}, {"tn", m.confusion.tn}, {"fp", m.confusion.fp}}}};
}

inline nlohmann::json to_json(const MeanMetrics& m) {
  return {{"accuracy", optional_json(m.accuracy)},
          {"sensitivity", optional_json(m.sensitivity)},
          {"specificity", optional_json(m.specificity)}};
}

/// Deterministic content only (no timings), so identical runs give identical bytes.
inline nlohmann::json metrics_json(const CvResult& r) {
  nlohmann::json j;
  j["folds"] = r.assignment.k;
  j["mean"] = to_json(r.mean);
  j["pooled"] = to_json(Metrics::from(r.pooled));
  for (const auto& f : r.folds) {
    nlohmann::json jf = to_json(f.metrics);
    jf["fold"] = f.fold;
    jf["atlases"] = f.atlases;
    jf["member_accuracies"] = f.member_accuracies;
    jf["weights"] = f.weights;
    j["per_fold"].push_back(std::move(jf));
  }
  return j;
}

inline std::string percent_cell(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * *v);
  return buf;
}

/// Data, # of subjects, accuracy / sensitivity / specificity in percent.
inline std::string metrics_table_csv(const std::vector<std::pair<std::string, const CvResult*>>& rows) {
  std::string s = "data,subjects,accuracy,sensitivity,specificity\n";
  for (const auto& [name, r] : rows)
    s += text::quote_if_needed(name) + "," + std::to_string(r->pooled.total()) + "," + percent_cell(r->mean.accuracy) +
         "," + percent_cell(r->mean.sensitivity) + "," + percent_cell(r->mean.specificity) + "\n";
  return s;
}

inline std::string predictions_csv(const CvResult& r) {
  std::string s = "subject_id,fold,label,predicted,score_asd,score_tc\n";
  for (const auto& p : r.predictions)
    s += p.subject_id + "," + std::to_string(p.fold) + "," + std::string(to_string(p.truth)) + "," +
         std::string(to_string(p.predicted)) + "," + text::format_double(p.score_asd) + "," +
         text::format_double(p.score_tc) + "\n";
  return s;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string s = "component,accuracy,sensitivity,specificity\n";
  for (const auto& r : rows)
    s += text::quote_if_needed(r.switches.name) + "," + percent_cell(r.result.mean.accuracy) + "," +
         percent_cell(r.result.mean.sensitivity) + "," + percent_cell(r.result.mean.specificity) + "\n";
  return s;
}

inline nlohmann::json to_json(const SubsetReport& r) {
  return {{"selector_atlas", r.selector_atlas},
          {"retained_ids", r.retained_ids},
          {"discarded_ids", r.discarded_ids},
          {"unevaluable_ids", r.unevaluable_ids},
          {"retained", {{"ASD", r.retained_per_class[0]}, {"TC", r.retained_per_class[1]}}},
          {"evaluated", {{"ASD", r.evaluated_per_class[0]}, {"TC", r.evaluated_per_class[1]}}},
          {"retention_rate", r.retention_rate()}};
}

}  // namespace madeasd
