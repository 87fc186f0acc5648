#include "cris/experiments.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <set>

#include "cris/persistence.hpp"
#include "cris/plots.hpp"
#include "cris/rng.hpp"
#include "serde.hpp"

namespace cris {

namespace fs = std::filesystem;

namespace {

constexpr BackboneKind kBackboneOrder[] = {
    BackboneKind::kUNet, BackboneKind::kUNetPP, BackboneKind::kSegNet};
constexpr const char* kStrategyOrder[] = {"backbone_only", "backbone_fcn_joint",
                                          "cris"};

std::string backbone_display(BackboneKind k) {
  switch (k) {
    case BackboneKind::kUNet: return "UNet";
    case BackboneKind::kUNetPP: return "UNet++";
    case BackboneKind::kSegNet: return "SegNet";
  }
  return "?";
}

std::string strategy_display(const std::string& s) {
  if (s == "backbone_only") return "Backbone";
  if (s == "backbone_fcn_joint") return "Backbone+FCN";
  if (s == "cris") return "Proposed";
  return s;
}

std::vector<MaskTensor> masks_of(const Dataset& d) {
  std::vector<MaskTensor> masks;
  masks.reserve(d.size());
  for (const auto& s : d.samples) masks.push_back(s.mask);
  return masks;
}

void notify(const GridHooks& hooks, const CellKey& key, CellPhase phase) {
  if (hooks.on_phase) hooks.on_phase(key, phase);
}

}  // namespace

void to_json(nlohmann::json& j, const DatasetSpec& d) {
  j = {{"name", d.name},
       {"root", d.root.string()},
       {"images_subdir", d.images_subdir},
       {"masks_subdir", d.masks_subdir},
       {"synthetic", d.synthetic},
       {"synth_count", d.synth_count},
       {"seed", d.seed}};
}

void from_json(const nlohmann::json& j, DatasetSpec& d) {
  d.name = j.at("name").get<std::string>();
  d.root = j.value("root", std::string{});
  d.images_subdir = j.value("images_subdir", std::string{"images"});
  d.masks_subdir = j.value("masks_subdir", std::string{"masks"});
  d.synthetic = j.value("synthetic", false);
  d.synth_count = j.value("synth_count", std::int64_t{240});
  d.seed = j.value("seed", std::uint64_t{1});
}

void to_json(nlohmann::json& j, const ExperimentSpec& s) {
  j = {{"datasets", s.datasets},
       {"backbones", nlohmann::json::array()},
       {"strategies", nlohmann::json::array()},
       {"tuning", s.tuning},
       {"output_dir", s.output_dir.string()},
       {"master_seed", s.master_seed},
       {"epochs", s.epochs},
       {"tune_epochs", s.tune_epochs},
       {"target_size", {s.target_size.first, s.target_size.second}},
       {"base_channels", s.base_channels},
       {"depth", s.depth},
       {"refinement", s.refinement}};
  for (const auto b : s.backbones) j["backbones"].push_back(to_string(b));
  for (const auto st : s.strategies) j["strategies"].push_back(to_string(st));
}

void from_json(const nlohmann::json& j, ExperimentSpec& s) {
  s.datasets = j.at("datasets").get<std::vector<DatasetSpec>>();
  s.backbones.clear();
  for (const auto& b : j.at("backbones")) {
    s.backbones.push_back(backbone_kind_from_string(b.get<std::string>()));
  }
  s.strategies.clear();
  for (const auto& st : j.at("strategies")) {
    s.strategies.push_back(strategy_from_string(st.get<std::string>()));
  }
  if (j.contains("tuning")) {
    s.tuning.trials = j.at("tuning").value("trials", std::int64_t{20});
  }
  s.output_dir = j.value("output_dir", std::string{"results"});
  s.master_seed = j.value("master_seed", std::uint64_t{0});
  s.epochs = j.value("epochs", std::int64_t{30});
  s.tune_epochs = j.value("tune_epochs", std::int64_t{8});
  if (j.contains("target_size")) {
    const auto ts = j.at("target_size").get<std::vector<std::int64_t>>();
    if (ts.size() != 2) {
      throw InvalidArgument("invalid-config", "target_size must be [H, W]");
    }
    s.target_size = {ts[0], ts[1]};
  }
  s.base_channels = j.value("base_channels", std::int64_t{16});
  s.depth = j.value("depth", std::int64_t{3});
  if (j.contains("refinement")) {
    s.refinement = j.at("refinement").get<RefinementConfig>();
  }
}

void ExperimentSpec::validate() const {
  if (datasets.empty() || backbones.empty() || strategies.empty()) {
    throw InvalidArgument("invalid-config",
                          "datasets, backbones and strategies must be nonempty");
  }
  std::set<std::string> names;
  for (const auto& d : datasets) {
    if (!names.insert(d.name).second) {
      throw InvalidArgument("invalid-config",
                            "duplicate dataset name '" + d.name + "'");
    }
    if (!d.synthetic && d.root.empty()) {
      throw InvalidArgument("invalid-config",
                            "dataset '" + d.name + "' needs a root directory");
    }
    if (d.synthetic && d.synth_count < 10) {
      throw InvalidArgument("invalid-config",
                            "synthetic datasets need at least 10 samples");
    }
  }
  if (std::set(backbones.begin(), backbones.end()).size() != backbones.size() ||
      std::set(strategies.begin(), strategies.end()).size() != strategies.size()) {
    throw InvalidArgument("invalid-config", "duplicate grid cells");
  }
  if (epochs < 1 || tune_epochs < 1) {
    throw InvalidArgument("invalid-config", "epoch budgets must be positive");
  }
  const auto divisor = std::int64_t{1} << depth;
  if (target_size.first < kMinImageSide || target_size.second < kMinImageSide ||
      target_size.first % divisor != 0 || target_size.second % divisor != 0) {
    throw InvalidArgument("invalid-config",
                          "target_size must be >= 16 and divisible by 2^depth");
  }
  BackboneConfig{backbones.front(), base_channels, depth, 0}.validate();
  refinement.validate();
  tuning.validate();
}

ExperimentSpec load_experiment_spec(const fs::path& json_file) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(json_file));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("invalid-config", "cannot parse " +
                                                json_file.string() + ": " +
                                                e.what());
  }
  auto spec = j.get<ExperimentSpec>();
  if (const char* env = std::getenv("CRIS_OUTPUT_DIR");
      env != nullptr && *env != '\0') {
    spec.output_dir = env;
  }
  spec.validate();
  return spec;
}

std::string CellKey::dir_name() const {
  return dataset + "__" + to_string(backbone) + "__" + to_string(strategy);
}

bool GridResult::all_ok() const {
  return std::all_of(cells.begin(), cells.end(),
                     [](const CellResult& c) { return c.ok; });
}

DatasetSplits prepare_dataset(const DatasetSpec& ds,
                              std::pair<std::int64_t, std::int64_t> target_size) {
  Dataset full;
  if (ds.synthetic) {
    full = synth_shapes(ds.synth_count, target_size, ds.seed);
    full.name = ds.name;
  } else {
    full = load_dataset({ds.root / ds.images_subdir, ds.root / ds.masks_subdir},
                        target_size, ds.name);
  }
  SplitSpec split;
  split.seed = ds.seed;
  return split_dataset(full, split);
}

CellResult run_cell(const CellKey& key, const ExperimentSpec& spec,
                    const Dataset& train_set, const Dataset& val_set,
                    const std::function<const Dataset&()>& test_access,
                    const std::string& manifest_hex,
                    const fs::path& cell_dir, const GridHooks& hooks) {
  fs::create_directories(cell_dir);
  const auto cell_seed = seed_mix(spec.master_seed, key.dir_name());

  ModelSpec model;
  model.backbone = BackboneConfig{key.backbone, spec.base_channels, spec.depth,
                                  seed_mix(cell_seed, "backbone")};
  model.refinement = spec.refinement;
  model.refinement.seed = seed_mix(cell_seed, "refine");

  TrainConfig base;
  base.strategy = key.strategy;
  base.seed = seed_mix(cell_seed, "train");
  base.epochs = spec.tune_epochs;

  notify(hooks, key, CellPhase::kTune);
  TuneOptions tune_opts;
  tune_opts.study_dir = cell_dir / "study";
  const auto tuned = tune(spec.tuning, train_set, val_set, model, base, tune_opts);

  auto cfg = tuned.best;
  cfg.epochs = spec.epochs;
  cfg.checkpoint_dir.clear();
  cfg.checkpoint_every = 0;

  notify(hooks, key, CellPhase::kTrain);
  auto trainer = make_trainer(model, cfg);
  trainer.set_manifest_hash(manifest_hex);
  const auto history = trainer.run(train_set, val_set);

  notify(hooks, key, CellPhase::kThresholdSearch);
  const auto train_probs = trainer.predict(train_set);
  const auto train_gts = masks_of(train_set);

  notify(hooks, key, CellPhase::kEvaluate);
  const auto& test_set = test_access();
  const auto test_probs = trainer.predict(test_set);
  const auto report =
      build_eval_report(train_probs, train_gts, test_probs, masks_of(test_set),
                        default_threshold_grid());

  trainer.save(cell_dir / "checkpoint.ckpt");
  write_history_csv(history, cell_dir / "history.csv", manifest_hex);
  write_report_csv(to_string(key.backbone), key.dataset, to_string(key.strategy),
                   report, cell_dir / "report.csv", manifest_hex);
  write_report_json(to_string(key.backbone), key.dataset,
                    to_string(key.strategy), report, manifest_hex,
                    cell_dir / "report.json");
  write_pr_csv(report.pr_curve, cell_dir / "pr_curve.csv", manifest_hex);

  CellResult result;
  result.key = key;
  result.ok = true;
  result.report = report;
  result.dir = cell_dir;
  return result;
}

GridResult run_grid(const ExperimentSpec& spec, const GridHooks& hooks) {
  spec.validate();
  fs::create_directories(spec.output_dir);
  atomic_write_file(spec.output_dir / "experiment.json",
                    nlohmann::json(spec).dump(2) + "\n");

  GridResult result;
  for (const auto& ds : spec.datasets) {
    auto splits = prepare_dataset(ds, spec.target_size);
    const auto entries = manifest_entries(splits);
    const auto hex = manifest_hash(entries);
    const auto manifest_path = spec.output_dir / (ds.name + "_manifest.txt");
    if (fs::exists(manifest_path)) {
      verify_manifest(manifest_path, entries);
    } else {
      write_manifest(entries, manifest_path);
    }

    for (const auto backbone : spec.backbones) {
      for (const auto strategy : spec.strategies) {
        const CellKey key{ds.name, backbone, strategy};
        const auto cell_dir = spec.output_dir / key.dir_name();
        try {
          result.cells.push_back(run_cell(
              key, spec, splits.train, splits.val,
              [&]() -> const Dataset& { return splits.test; }, hex, cell_dir,
              hooks));
        } catch (const std::exception& e) {
          CellResult failed;
          failed.key = key;
          failed.error = e.what();
          failed.dir = cell_dir;
          nlohmann::json ej;
          ej["error"]["message"] = e.what();
          const auto* known = dynamic_cast<const Error*>(&e);
          ej["error"]["code"] = known ? known->code() : "internal-error";
          fs::create_directories(cell_dir);
          atomic_write_file(cell_dir / "error.json", ej.dump(2) + "\n");
          result.cells.push_back(std::move(failed));
        }
      }
    }
  }
  return result;
}

namespace {

struct ParsedReport {
  std::string model;
  std::string dataset;
  std::string strategy;
  double dice = 0.0;
  double mse = 0.0;
};

std::vector<ParsedReport> scan_reports(const fs::path& results_dir) {
  if (!fs::is_directory(results_dir)) {
    throw IoError("io-error",
                  "results directory not found: " + results_dir.string());
  }
  std::vector<ParsedReport> reports;
  std::vector<fs::path> cell_dirs;
  for (const auto& entry : fs::directory_iterator(results_dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "report.csv")) {
      cell_dirs.push_back(entry.path());
    }
  }
  std::sort(cell_dirs.begin(), cell_dirs.end());
  for (const auto& dir : cell_dirs) {
    const auto content = read_file(dir / "report.csv");
    std::istringstream in(content);
    std::string line;
    std::vector<std::string> rows;
    while (std::getline(in, line)) {
      if (!line.empty() && line.front() != '#') rows.push_back(line);
    }
    if (rows.size() != 2) {
      throw IntegrityError("malformed report at " + dir.string());
    }
    std::istringstream row(rows[1]);
    ParsedReport r;
    std::string dice_s, mse_s, rest;
    std::getline(row, r.model, ',');
    std::getline(row, r.dataset, ',');
    std::getline(row, r.strategy, ',');
    std::getline(row, dice_s, ',');
    std::getline(row, mse_s, ',');
    r.dice = std::stod(dice_s);
    r.mse = std::stod(mse_s);
    reports.push_back(std::move(r));
  }
  if (reports.empty()) {
    throw InvalidArgument("empty-input",
                          "no cell reports under " + results_dir.string());
  }
  return reports;
}

}  // namespace

std::string render_table(const fs::path& results_dir) {
  const auto reports = scan_reports(results_dir);

  std::set<std::string> datasets;
  for (const auto& r : reports) datasets.insert(r.dataset);

  std::string out = "# Results\n";
  for (const auto& dataset : datasets) {
    // column backbones in canonical order, restricted to those present
    std::vector<std::string> columns;
    for (const auto kind : kBackboneOrder) {
      const auto name = to_string(kind);
      for (const auto& r : reports) {
        if (r.dataset == dataset && r.model == name) {
          columns.push_back(name);
          break;
        }
      }
    }
    // cell lookup and per-column best values
    std::map<std::string, std::map<std::string, ParsedReport>> by_strategy;
    for (const auto& r : reports) {
      if (r.dataset == dataset) by_strategy[r.strategy][r.model] = r;
    }
    std::map<std::string, std::pair<double, double>> best;  // col -> (max dice, min mse)
    for (const auto& col : columns) {
      double best_dice = -1.0, best_mse = 1e30;
      for (const auto& [strategy, cells] : by_strategy) {
        const auto it = cells.find(col);
        if (it == cells.end()) continue;
        best_dice = std::max(best_dice, it->second.dice);
        best_mse = std::min(best_mse, it->second.mse);
      }
      best[col] = {best_dice, best_mse};
    }

    out += "\n## " + dataset + "\n\n| Strategy |";
    for (const auto& col : columns) {
      const auto disp = backbone_display(backbone_kind_from_string(col));
      out += " " + disp + " DICE | " + disp + " MSE |";
    }
    out += "\n|---|";
    for (std::size_t i = 0; i < columns.size(); ++i) out += "---:|---:|";
    out += "\n";

    auto emit_row = [&](const std::string& strategy) {
      out += "| " + strategy_display(strategy) + " |";
      for (const auto& col : columns) {
        const auto it = by_strategy[strategy].find(col);
        if (it == by_strategy[strategy].end()) {
          out += " - | - |";
          continue;
        }
        char dice_buf[32], mse_buf[32];
        std::snprintf(dice_buf, sizeof(dice_buf), "%.2f", it->second.dice * 100.0);
        std::snprintf(mse_buf, sizeof(mse_buf), "%.3f", it->second.mse);
        const bool dice_best = it->second.dice == best[col].first;
        const bool mse_best = it->second.mse == best[col].second;
        out += dice_best ? " **" + std::string(dice_buf) + "** |"
                         : " " + std::string(dice_buf) + " |";
        out += mse_best ? " **" + std::string(mse_buf) + "** |"
                        : " " + std::string(mse_buf) + " |";
      }
      out += "\n";
    };

    for (const auto* strategy : kStrategyOrder) {
      if (by_strategy.count(strategy)) emit_row(strategy);
      if (std::string(strategy) == "backbone_fcn_joint") {
        // CRF baseline is a prior method outside this framework; keep the
        // row for table-shape parity.
        out += "| Backbone+CRF |";
        for (std::size_t i = 0; i < columns.size(); ++i) out += " n/a [1] | n/a [1] |";
        out += "\n";
      }
    }
  }
  out += "\n[1] CRF refinement is a separately published method not trained "
         "by this framework; the row is kept so tables line up with the "
         "conventional four-strategy comparison.\n";
  return out;
}

void emit_table(const fs::path& results_dir, const fs::path& out_file) {
  atomic_write_file(out_file, render_table(results_dir));
}

void emit_pr_plots(const fs::path& results_dir, const fs::path& out_dir) {
  const auto reports = scan_reports(results_dir);
  std::set<std::string> datasets;
  for (const auto& r : reports) datasets.insert(r.dataset);

  for (const auto& dataset : datasets) {
    std::vector<PRPanel> panels;
    for (const auto kind : kBackboneOrder) {
      PRPanel panel;
      panel.title = backbone_display(kind);
      for (const auto* strategy : kStrategyOrder) {
        const CellKey key{dataset, kind, strategy_from_string(strategy)};
        const auto csv = results_dir / key.dir_name() / "pr_curve.csv";
        if (!fs::exists(csv)) continue;
        panel.curves.push_back({strategy, read_pr_csv(csv)});
      }
      if (!panel.curves.empty()) panels.push_back(std::move(panel));
    }
    if (!panels.empty()) {
      render_pr_panels_png(panels, out_dir / ("pr_curves_" + dataset + ".png"));
    }
  }
}

void emit_prob_map_grids(const fs::path& results_dir, const fs::path& out_dir,
                         std::int64_t samples_per_dataset) {
  const auto spec_path = results_dir / "experiment.json";
  const auto spec =
      nlohmann::json::parse(read_file(spec_path)).get<ExperimentSpec>();

  for (const auto& ds : spec.datasets) {
    const auto splits = prepare_dataset(ds, spec.target_size);
    const auto n_samples = std::min<std::int64_t>(
        samples_per_dataset, static_cast<std::int64_t>(splits.test.size()));
    if (n_samples == 0) continue;

    // cell predictions: [backbone][strategy] -> probs for the chosen samples
    std::vector<BackboneKind> row_kinds;
    for (const auto kind : kBackboneOrder) {
      if (std::find(spec.backbones.begin(), spec.backbones.end(), kind) !=
          spec.backbones.end()) {
        row_kinds.push_back(kind);
      }
    }
    std::vector<std::string> strategies;
    for (const auto* s : kStrategyOrder) {
      if (std::find(spec.strategies.begin(), spec.strategies.end(),
                    strategy_from_string(s)) != spec.strategies.end()) {
        strategies.push_back(s);
      }
    }

    Dataset chosen;
    chosen.name = ds.name;
    chosen.samples.assign(splits.test.samples.begin(),
                          splits.test.samples.begin() + n_samples);

    std::map<std::string, std::vector<ProbMap>> predictions;
    for (const auto kind : row_kinds) {
      for (const auto& strategy : strategies) {
        const CellKey key{ds.name, kind, strategy_from_string(strategy)};
        const auto ckpt = results_dir / key.dir_name() / "checkpoint.ckpt";
        if (!fs::exists(ckpt)) continue;
        auto trainer = Trainer::load(ckpt);
        predictions[key.dir_name()] = trainer.predict(chosen);
      }
    }

    for (std::int64_t i = 0; i < n_samples; ++i) {
      ProbMapGrid grid;
      grid.col_labels = {"input", "ground truth"};
      for (const auto& s : strategies) grid.col_labels.push_back(strategy_display(s));
      for (const auto kind : row_kinds) {
        grid.row_labels.push_back(backbone_display(kind));
        auto& row = grid.cells.emplace_back();
        const auto& sample = chosen.samples[static_cast<std::size_t>(i)];
        row.push_back(sample.image.tensor());
        row.push_back(sample.mask.tensor());
        for (const auto& strategy : strategies) {
          const CellKey key{ds.name, kind, strategy_from_string(strategy)};
          const auto it = predictions.find(key.dir_name());
          row.push_back(it != predictions.end()
                            ? it->second[static_cast<std::size_t>(i)].tensor()
                            : torch::full({1, spec.target_size.first,
                                           spec.target_size.second},
                                          0.5f));
        }
      }
      auto name = "prob_maps_" + ds.name +
                  (n_samples > 1 ? "_" + std::to_string(i) : "") + ".png";
      render_prob_map_grid_png(grid, out_dir / name);
    }
  }
}

}  // namespace cris
