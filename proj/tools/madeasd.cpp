// madeasd command-line entry point.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "madeasd/madeasd.hpp"

namespace fs = std::filesystem;
using namespace madeasd;

namespace {

struct Options {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  std::string data_dir;
  std::string out_dir;
  bool dry_run = false;
  int verbosity = 0;
  // synth
  std::optional<double> effect;
  std::optional<Index> subjects;
  // roi-report
  std::string model_path;
  std::string mask_path;
  std::string atlas;
  std::optional<Index> top_n;
  std::string format = "both";
  // select-subset
  bool evaluate_subsets = false;
};

class Run {
 public:
  Run(std::string command, RunConfig cfg) : command_(std::move(command)), cfg_(std::move(cfg)) {}

  const RunConfig& config() const { return cfg_; }
  fs::path out(const std::string& name) {
    outputs_.push_back(name);
    return cfg_.output_dir / name;
  }
  void set_data_dir(const fs::path& p) { cfg_.data_dir = p; }
  void note(const std::string& key, nlohmann::json value) { extra_[key] = std::move(value); }

  void finish() {
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    // Paths are stored relative to the output directory, so the recorded config reloads
    // from where it was written and two runs into different directories stay identical.
    RunConfig recorded = cfg_;
    recorded.data_dir = fs::relative(cfg_.data_dir, cfg_.output_dir);
    recorded.output_dir = ".";
    for (auto& a : recorded.atlases)
      if (!a.sidecar.empty()) a.sidecar = fs::relative(a.sidecar, cfg_.output_dir);
    text::write_file(cfg_.output_dir / "config.toml", serialize_config(recorded));
    nlohmann::json m{{"command", command_},
                     {"preset", cfg_.preset},
                     {"config_hash", config_hash(recorded)},
                     {"master_seed", cfg_.pipeline.seed},
                     {"config_file", "config.toml"},
                     {"outputs", outputs_}};
    m.update(extra_);
    write_json(cfg_.output_dir / "run_manifest.json", m);
    std::cout << command_ << ": wrote " << outputs_.size() << " artifact(s) to " << cfg_.output_dir.string() << " in "
              << seconds << " s\n";
  }

 private:
  std::string command_;
  RunConfig cfg_;
  std::vector<std::string> outputs_;
  nlohmann::json extra_ = nlohmann::json::object();
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

RunConfig resolve_config(const Options& o) {
  RunConfig c = !o.config_path.empty() ? load_config(o.config_path, o.preset.empty() ? "paper-defaults" : o.preset)
                                       : preset_config(o.preset.empty() ? "desk" : o.preset);
  if (const char* env = std::getenv("MADEASD_DATA_DIR"); env && *env) c.data_dir = env;
  if (const char* env = std::getenv("MADEASD_OUTPUT_DIR"); env && *env) c.output_dir = env;
  if (!o.data_dir.empty()) c.data_dir = o.data_dir;
  if (!o.out_dir.empty()) c.output_dir = o.out_dir;
  if (o.seed) c.pipeline.seed = *o.seed;
  if (o.jobs) c.pipeline.jobs = *o.jobs;
  if (o.effect) c.synth_effect = *o.effect;
  if (o.subjects) c.synth_subjects = *o.subjects;
  if (o.top_n) c.roi_top_n = *o.top_n;
  if (!o.atlas.empty()) c.roi_atlas = c.selector_atlas = o.atlas;
  c.data_dir = fs::absolute(c.data_dir).lexically_normal();
  c.output_dir = fs::absolute(c.output_dir).lexically_normal();
  attach_sidecars(c);
  c.validate();
  return c;
}

void print_plan(const std::string& command, const RunConfig& c) {
  std::cout << "# plan: " << command << "\n";
  std::cout << "# data_dir: " << c.data_dir.string() << "\n# output_dir: " << c.output_dir.string() << "\n";
  for (const auto& a : c.atlases)
    std::cout << "# atlas " << a.plan.atlas.atlas_id << ": " << a.plan.atlas.n_rois << " ROIs, "
              << a.plan.atlas.feature_dim() << " features, retain " << a.plan.retain_count()
              << (c.pipeline.feature_selection ? "" : " (selection off)") << "\n";
  std::cout << "# cv: " << c.pipeline.folds << " folds, jobs " << c.pipeline.jobs << ", config hash "
            << config_hash(c) << "\n";
  std::cout << serialize_config(c);
}

struct Loaded {
  Dataset dataset;
  std::vector<DroppedSubject> dropped;
};

Loaded load(const RunConfig& c) {
  const auto specs = c.atlas_specs();
  auto ld = load_dataset(c.data_dir, specs, {}, c.phenotype);
  for (const auto& d : ld.dropped) log::warn("data", "dropped " + d.subject_id + ": " + d.reason);
  if (ld.records.empty()) throw ValidationError("no usable subjects under " + c.data_dir.string());
  return {build_dataset(ld.records, specs), std::move(ld.dropped)};
}

nlohmann::json dropped_json(const std::vector<DroppedSubject>& dropped) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& d : dropped) j.push_back({{"subject_id", d.subject_id}, {"reason", d.reason}});
  return j;
}

const AtlasEntry& find_atlas(const RunConfig& c, const std::string& id) {
  for (const auto& a : c.atlases)
    if (a.plan.atlas.atlas_id == id) return a;
  throw ValidationError("atlas '" + id + "' is not enabled in the config");
}

std::vector<Index> all_rows(const Dataset& d) {
  std::vector<Index> rows(static_cast<std::size_t>(d.size()));
  std::iota(rows.begin(), rows.end(), Index{0});
  return rows;
}

// --- subcommands --------------------------------------------------------------------------------

void cmd_synth(Run& run) {
  const auto& c = run.config();
  const auto so = synthetic_options(c);
  const auto ds = generate_synthetic(so);
  run.set_data_dir(c.output_dir);
  // The dataset itself goes to the output directory.
  write_dataset(c.output_dir, ds);
  run.out("phenotype.csv");
  run.out("manifest.json");
  for (const auto& a : so.atlases) run.out(a.atlas_id + "/");
}

void cmd_features(Run& run) {
  const auto& c = run.config();
  auto [d, dropped] = load(c);
  for (const auto& [atlas, m] : d.features) {
    std::string s = "subject_id,label";
    for (Index j = 0; j < m.cols(); ++j) s += ",f" + std::to_string(j);
    s += "\n";
    for (Index i = 0; i < m.rows(); ++i) {
      s += d.ids[static_cast<std::size_t>(i)] + "," + std::string(to_string(d.labels[static_cast<std::size_t>(i)]));
      for (Index j = 0; j < m.cols(); ++j) s += "," + text::format_double(m(i, j));
      s += "\n";
    }
    text::write_file(run.out("features_" + atlas + ".csv"), s);
  }
  run.note("subjects", d.size());
  run.note("dropped", dropped_json(dropped));
}

void cmd_train(Run& run) {
  const auto& c = run.config();
  auto [raw, dropped] = load(c);
  const Dataset d = prepare_for_cv(raw, c.pipeline);
  const auto rows = all_rows(d);
  const auto training = train_ensemble(d, rows, c.pipeline, derive_seed(c.pipeline.seed, {0x7A}));
  write_json(run.out("ensemble.json"), ensemble_to_json(training.ensemble));
  for (std::size_t i = 0; i < training.ssdae.size(); ++i) {
    const auto& id = training.ensemble.members[i].model.atlas_id;
    write_json(run.out("ssdae_" + id + ".json"), ssdae_to_json(training.ssdae[i], id));
    write_json(run.out("mask_" + id + ".json"), to_json(training.ensemble.members[i].model.mask));
  }
  run.note("subjects", d.size());
  run.note("dropped", dropped_json(dropped));
}

void cmd_evaluate(Run& run) {
  const auto& c = run.config();
  auto [d, dropped] = load(c);
  const auto r = cross_validate(d, c.pipeline);
  write_json(run.out("metrics.json"), metrics_json(r));
  text::write_file(run.out("metrics.csv"), metrics_table_csv({{"whole set", &r}}));
  text::write_file(run.out("predictions.csv"), predictions_csv(r));
  nlohmann::json timing = nlohmann::json::array();
  for (const auto& f : r.folds) timing.push_back({{"fold", f.fold}, {"seconds", f.seconds}});
  run.note("fold_seconds", timing);
  run.note("subjects", d.size());
  run.note("dropped", dropped_json(dropped));
  std::cout << "mean accuracy " << percent_cell(r.mean.accuracy) << "%, sensitivity "
            << percent_cell(r.mean.sensitivity) << "%, specificity " << percent_cell(r.mean.specificity) << "%\n";
}

void cmd_ablate(Run& run) {
  const auto& c = run.config();
  auto [d, dropped] = load(c);
  const auto rows = ablate(d, c.pipeline);
  text::write_file(run.out("ablation.csv"), ablation_csv(rows));
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) j.push_back({{"component", r.switches.name}, {"metrics", metrics_json(r.result)}});
  write_json(run.out("ablation.json"), j);
  run.note("dropped", dropped_json(dropped));
}

void cmd_select_subset(Run& run, bool evaluate_subsets) {
  const auto& c = run.config();
  auto [d, dropped] = load(c);
  const auto& plan = find_atlas(c, c.selector_atlas).plan;
  const auto selector = train_selector(d, c.selector_site, plan, c.pipeline, derive_seed(c.pipeline.seed, {0x5E1}));
  write_json(run.out("selector.json"), mlp_to_json(selector));
  const auto report = select_subset(selector, d);
  write_json(run.out("subset.json"), to_json(report));

  const auto& x = atlas_features(d, plan.atlas.atlas_id);
  std::vector<std::pair<std::string, Matrix>> variants{{"whole", x}};
  const auto kept = rows_for_ids(d, report.retained_ids);
  const auto lost = rows_for_ids(d, report.discarded_ids);
  if (kept.size() >= 2) variants.emplace_back("retained", rows_of(x, kept));
  if (lost.size() >= 2) variants.emplace_back("discarded", rows_of(x, lost));
  const auto var = variance_report(variants);
  text::write_file(run.out("variance.csv"), variance_csv(var));
  text::write_file(run.out("variance_summary.csv"), variance_summary_csv(var));
  std::cout << "retained " << report.retained_ids.size() << " of "
            << report.retained_ids.size() + report.discarded_ids.size() << " subjects\n";

  if (evaluate_subsets) {
    std::vector<Index> site_rows;
    for (Index i = 0; i < d.size(); ++i)
      if (d.sites[static_cast<std::size_t>(i)] == c.selector_site) site_rows.push_back(i);
    const auto whole = cross_validate(d, c.pipeline);
    const auto site = cross_validate(d.subset(site_rows), c.pipeline);
    const auto subset = cross_validate(d.subset(kept), c.pipeline);
    text::write_file(run.out("subset_metrics.csv"), metrics_table_csv({{"whole set", &whole},
                                                                        {c.selector_site + " subset", &site},
                                                                        {"selected subset", &subset}}));
  }
  run.note("dropped", dropped_json(dropped));
}

void cmd_roi_report(Run& run, const Options& o) {
  const auto& c = run.config();
  const auto& entry = find_atlas(c, c.roi_atlas);
  FeatureMask mask;
  if (!o.mask_path.empty()) {
    mask = mask_from_json(read_json(o.mask_path));
  } else if (!o.model_path.empty()) {
    const auto j = read_json(o.model_path);
    const auto role = j.value("role", std::string{});
    if (role == "ensemble") {
      const auto e = ensemble_from_json(j);
      bool found = false;
      for (const auto& m : e.members)
        if (m.model.atlas_id == c.roi_atlas) {
          mask = m.model.mask;
          found = true;
        }
      if (!found) throw ValidationError("model has no member for atlas " + c.roi_atlas);
    } else {
      mask = mlp_from_json(j).mask;
    }
  } else {
    auto [raw, dropped] = load(c);
    mask = fit_mask(raw, entry.plan, all_rows(raw), true);
  }
  const auto ranking = roi_frequencies(mask, entry.plan.atlas, c.roi_top_n);
  if (o.format == "json" || o.format == "both") export_report(ranking, ReportFormat::Json, run.out("roi_report.json"));
  if (o.format == "csv" || o.format == "both") export_report(ranking, ReportFormat::Csv, run.out("roi_report.csv"));
}

void cmd_sweep(Run& run) {
  const auto& c = run.config();
  auto [d, dropped] = load(c);
  const auto rows = retention_sweep(c.sweep_percents, [&](double pct) {
    PipelineConfig p = c.pipeline;
    for (auto& a : p.atlases) a.retain_percent = pct;
    return cross_validate(d, p).mean.accuracy.value_or(0.0);
  });
  std::string s = "percent,mean_accuracy\n";
  for (const auto& r : rows) s += text::format_double(r.percent) + "," + text::format_double(r.mean_accuracy) + "\n";
  text::write_file(run.out("sweep.csv"), s);
  run.note("dropped", dropped_json(dropped));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-atlas autoencoder ensemble for ASD classification from resting-state connectivity"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool needs_config) {
    auto* cfg = sub->add_option("--config", o.config_path, "Configuration file")->check(CLI::ExistingFile);
    auto* preset = sub->add_option("--preset", o.preset, "Base preset: paper-defaults or desk");
    if (needs_config) {
      // Either a config file or an explicit preset must be given.
      sub->callback([&, sub, cfg, preset] {
        if (cfg->count() == 0 && preset->count() == 0)
          throw CLI::RequiredError("--config or --preset");
      });
    }
    sub->add_option("--seed", o.seed, "Master seed");
    sub->add_option("--jobs", o.jobs, "Parallel folds")->check(CLI::PositiveNumber);
    sub->add_option("--data", o.data_dir, "Dataset directory");
    sub->add_option("--out", o.out_dir, "Output directory");
    sub->add_flag("--dry-run", o.dry_run, "Validate and print the resolved plan");
    sub->add_flag("-v,--verbose", o.verbosity, "Progress (-v) and per-iteration losses (-vv)");
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort");
  common(synth, false);
  synth->add_option("--effect", o.effect, "Discriminative coupling strength in [0, 1]");
  synth->add_option("--subjects", o.subjects, "Number of subjects");
  common(app.add_subcommand("features", "Write connectivity feature matrices"), false);
  common(app.add_subcommand("train", "Train the ensemble on all subjects"), true);
  common(app.add_subcommand("evaluate", "Cross-validated accuracy, sensitivity, specificity"), true);
  common(app.add_subcommand("ablate", "Component ablations"), true);
  auto* sel = app.add_subcommand("select-subset", "Train a site selector and keep correctly classified subjects");
  common(sel, true);
  sel->add_flag("--evaluate", o.evaluate_subsets, "Also cross-validate the whole set, the site and the subset");
  sel->add_option("--atlas", o.atlas, "Selector atlas");
  auto* roi = app.add_subcommand("roi-report", "Most frequent ROIs among the retained features");
  common(roi, false);
  roi->add_option("--model", o.model_path, "Ensemble or classifier file")->check(CLI::ExistingFile);
  roi->add_option("--mask", o.mask_path, "Feature mask file")->check(CLI::ExistingFile);
  roi->add_option("--atlas", o.atlas, "Atlas to report");
  roi->add_option("--top-n", o.top_n, "Number of ROIs");
  roi->add_option("--format", o.format, "json, csv or both")->check(CLI::IsMember({"json", "csv", "both"}));
  common(app.add_subcommand("sweep", "Accuracy against feature retention percentage"), true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }

  try {
    log::set_level(o.verbosity >= 2 ? log::Level::Debug : o.verbosity == 1 ? log::Level::Info : log::Level::Quiet);
    const auto* sub = app.get_subcommands().front();
    const auto name = sub->get_name();
    Run run(name, resolve_config(o));
    if (o.dry_run) {
      print_plan(name, run.config());
      return 0;
    }
    if (name == "synth") cmd_synth(run);
    else if (name == "features") cmd_features(run);
    else if (name == "train") cmd_train(run);
    else if (name == "evaluate") cmd_evaluate(run);
    else if (name == "ablate") cmd_ablate(run);
    else if (name == "select-subset") cmd_select_subset(run, o.evaluate_subsets);
    else if (name == "roi-report") cmd_roi_report(run, o);
    else if (name == "sweep") cmd_sweep(run);
    run.finish();
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 2;
  }
}
