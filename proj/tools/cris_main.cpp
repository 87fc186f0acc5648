// Command-line front end: data preparation, tuning, training, evaluation,
// grid orchestration and artifact emission.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <iostream>

#include "cris/data.hpp"
#include "cris/experiments.hpp"
#include "cris/metrics.hpp"
#include "cris/persistence.hpp"
#include "cris/runtime.hpp"
#include "cris/training.hpp"
#include "cris/tuning.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct DataOpts {
  std::string root;
  std::string images_subdir = "images";
  std::string masks_subdir = "masks";
  bool synth = false;
  std::int64_t count = 240;
  std::uint64_t seed = 1;
  std::int64_t height = 128;
  std::int64_t width = 128;

  void add_to(CLI::App& cmd, bool root_positional) {
    if (root_positional) {
      cmd.add_option("root", root, "dataset root (contains images/ and masks/)");
    } else {
      cmd.add_option("--root", root, "dataset root (contains images/ and masks/)");
    }
    cmd.add_option("--images", images_subdir, "images subdirectory name");
    cmd.add_option("--masks", masks_subdir, "masks subdirectory name");
    cmd.add_flag("--synth", synth, "use the synthetic shapes dataset");
    cmd.add_option("--count", count, "synthetic sample count");
    cmd.add_option("--seed", seed, "split (and synthetic generation) seed");
    cmd.add_option("--height", height, "target height");
    cmd.add_option("--width", width, "target width");
  }

  cris::Dataset load(const std::string& name) const {
    if (synth) return cris::synth_shapes(count, {height, width}, seed);
    if (root.empty()) {
      throw cris::InvalidArgument("invalid-config",
                                  "either --synth or a dataset root is required");
    }
    return cris::load_dataset(
        {fs::path(root) / images_subdir, fs::path(root) / masks_subdir},
        {height, width}, name);
  }

  cris::DatasetSplits splits(const std::string& name) const {
    cris::SplitSpec spec;
    spec.seed = seed;
    return cris::split_dataset(load(name), spec);
  }
};

struct ModelOpts {
  std::string backbone = "unet";
  std::int64_t base_channels = 16;
  std::int64_t depth = 3;
  std::int64_t expand_channels = 32;
  double dropout = 0.01;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--backbone", backbone, "unet | unetpp | segnet");
    cmd.add_option("--base-channels", base_channels, "backbone width");
    cmd.add_option("--depth", depth, "backbone pooling depth");
    cmd.add_option("--expand-channels", expand_channels,
                   "refinement channel expansion");
    cmd.add_option("--dropout", dropout, "refinement dropout probability");
  }

  cris::ModelSpec spec(std::uint64_t seed) const {
    cris::ModelSpec m;
    m.backbone = {cris::backbone_kind_from_string(backbone), base_channels,
                  depth, cris::seed_mix(seed, "backbone")};
    m.refinement.expand_channels = expand_channels;
    m.refinement.dropout_p = dropout;
    m.refinement.seed = cris::seed_mix(seed, "refine");
    return m;
  }
};

fs::path out_dir_or(const std::string& flag_value, const std::string& fallback) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("CRIS_OUTPUT_DIR");
      env != nullptr && *env != '\0') {
    return env;
  }
  return fallback;
}

std::vector<cris::MaskTensor> masks_of(const cris::Dataset& d) {
  std::vector<cris::MaskTensor> masks;
  masks.reserve(d.size());
  for (const auto& s : d.samples) masks.push_back(s.mask);
  return masks;
}

void evaluate_and_write(cris::Trainer& trainer, const cris::DatasetSplits& splits,
                        const std::string& dataset_name, const fs::path& out) {
  const auto entries = cris::manifest_entries(splits);
  const auto hex = cris::manifest_hash(entries);
  const auto train_probs = trainer.predict(splits.train);
  const auto test_probs = trainer.predict(splits.test);
  const auto report = cris::build_eval_report(
      train_probs, masks_of(splits.train), test_probs, masks_of(splits.test),
      cris::default_threshold_grid());

  fs::create_directories(out);
  cris::write_manifest(entries, out / "manifest.txt");
  const auto model = to_string(trainer.backbone_config().kind);
  const auto strategy = to_string(trainer.config().strategy);
  cris::write_report_csv(model, dataset_name, strategy, report,
                         out / "report.csv", hex);
  cris::write_report_json(model, dataset_name, strategy, report, hex,
                          out / "report.json");
  cris::write_pr_csv(report.pr_curve, out / "pr_curve.csv", hex);
  std::cout << "dice=" << cris::format_double(report.dice)
            << " mse=" << cris::format_double(report.mse)
            << " best_threshold=" << cris::format_double(report.best_threshold)
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collaborative refinement training framework for binary "
               "segmentation"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads,
                 "torch intra-op threads (1 = reproducible runs)");

  // prepare-data
  auto* prepare = app.add_subcommand(
      "prepare-data", "validate a dataset, fix its split, write the manifest");
  DataOpts prep_data;
  prep_data.add_to(*prepare, /*root_positional=*/true);
  std::string prep_kind = "synth";
  std::string prep_out;
  prepare->add_option("--dataset", prep_kind, "kvasir | cvc | synth");
  prepare->add_option("--out", prep_out, "output directory");

  // tune
  auto* tune_cmd = app.add_subcommand("tune", "learning-rate search with "
                                              "median pruning");
  DataOpts tune_data;
  ModelOpts tune_model;
  tune_data.add_to(*tune_cmd, false);
  tune_model.add_to(*tune_cmd);
  std::string tune_strategy = "cris";
  std::int64_t tune_trials = 20;
  std::int64_t tune_epochs = 8;
  std::uint64_t tune_seed = 0;
  std::string tune_out;
  bool tune_parallel = false;
  tune_cmd->add_option("--strategy", tune_strategy,
                       "backbone_only | backbone_fcn_joint | cris");
  tune_cmd->add_option("--trials", tune_trials, "trial count");
  tune_cmd->add_option("--epochs", tune_epochs, "epochs per trial");
  tune_cmd->add_option("--train-seed", tune_seed, "training seed");
  tune_cmd->add_option("--out", tune_out, "study directory");
  tune_cmd->add_flag("--parallel", tune_parallel,
                     "run trials on a thread pool (relaxes determinism)");

  // train
  auto* train_cmd = app.add_subcommand("train", "train one model");
  DataOpts train_data;
  ModelOpts train_model;
  train_data.add_to(*train_cmd, false);
  train_model.add_to(*train_cmd);
  std::string train_strategy = "cris";
  double train_lr = 1e-3;
  std::int64_t train_epochs = 30;
  std::int64_t train_batch = 4;
  std::uint64_t train_seed = 0;
  std::int64_t train_ckpt_every = 0;
  std::string train_out;
  std::string train_resume;
  train_cmd->add_option("--strategy", train_strategy,
                        "backbone_only | backbone_fcn_joint | cris");
  train_cmd->add_option("--lr", train_lr, "learning rate");
  train_cmd->add_option("--epochs", train_epochs, "epoch budget");
  train_cmd->add_option("--batch-size", train_batch, "batch size");
  train_cmd->add_option("--train-seed", train_seed, "training seed");
  train_cmd->add_option("--checkpoint-every", train_ckpt_every,
                        "periodic checkpoint interval (epochs)");
  train_cmd->add_option("--out", train_out, "output directory");
  train_cmd->add_option("--resume", train_resume,
                        "checkpoint to resume from (model flags are ignored)");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint: "
                                                  "threshold from the train "
                                                  "split, metrics on test");
  DataOpts eval_data;
  eval_data.add_to(*eval_cmd, false);
  std::string eval_ckpt;
  std::string eval_out;
  std::string eval_name = "dataset";
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--out", eval_out, "output directory");
  eval_cmd->add_option("--name", eval_name, "dataset label for the report");

  // run-grid
  auto* grid_cmd = app.add_subcommand("run-grid", "run the full ablation grid "
                                                  "from a spec file");
  std::string grid_spec_path;
  std::string grid_out;
  bool dry_run = false;
  grid_cmd->add_option("spec", grid_spec_path, "experiment spec JSON")->required();
  grid_cmd->add_option("--out", grid_out, "override output directory");
  grid_cmd->add_flag("--dry-run", dry_run, "validate and print the grid only");

  // emit-table
  auto* table_cmd = app.add_subcommand("emit-table", "results table from "
                                                     "persisted cell reports");
  std::string table_dir;
  std::string table_out;
  table_cmd->add_option("results", table_dir, "results directory")->required();
  table_cmd->add_option("--out", table_out, "output file");

  // emit-plots
  auto* plots_cmd = app.add_subcommand("emit-plots", "PR curves and "
                                                     "probability-map grids");
  std::string plots_dir;
  std::string plots_out;
  std::int64_t plots_samples = 1;
  bool plots_skip_maps = false;
  plots_cmd->add_option("results", plots_dir, "results directory")->required();
  plots_cmd->add_option("--out", plots_out, "output directory");
  plots_cmd->add_option("--samples", plots_samples,
                        "probability-map samples per dataset");
  plots_cmd->add_flag("--no-prob-maps", plots_skip_maps,
                      "emit PR curves only");

  CLI11_PARSE(app, argc, argv);
  cris::configure_threading(threads);

  try {
    if (*prepare) {
      const auto out = out_dir_or(prep_out, "prepared-" + prep_kind);
      fs::create_directories(out);
      cris::Dataset dataset;
      if (prep_kind == "synth") {
        prep_data.synth = true;
        dataset = prep_data.load(prep_kind);
        cris::write_dataset_png(dataset, {out / "images", out / "masks"});
      } else if (prep_kind == "kvasir" || prep_kind == "cvc") {
        dataset = prep_data.load(prep_kind);
      } else {
        throw cris::InvalidArgument("invalid-config",
                                    "--dataset must be kvasir, cvc or synth");
      }
      cris::SplitSpec split;
      split.seed = prep_data.seed;
      const auto splits = cris::split_dataset(dataset, split);
      const auto entries = cris::manifest_entries(splits);
      cris::write_manifest(entries, out / "manifest.txt");
      json stats{{"dataset", prep_kind},
                 {"samples", dataset.size()},
                 {"train", splits.train.size()},
                 {"val", splits.val.size()},
                 {"test", splits.test.size()},
                 {"manifest_hash", cris::manifest_hash(entries)}};
      cris::atomic_write_file(out / "stats.json", stats.dump(2) + "\n");
      std::cout << stats.dump(2) << "\n";
    } else if (*tune_cmd) {
      const auto splits = tune_data.splits("dataset");
      cris::TrainConfig base;
      base.strategy = cris::strategy_from_string(tune_strategy);
      base.epochs = tune_epochs;
      base.seed = tune_seed;
      cris::SearchSpace space;
      space.trials = tune_trials;
      cris::TuneOptions opts;
      opts.study_dir = out_dir_or(tune_out, "study");
      opts.parallel = tune_parallel;
      const auto result = cris::tune(space, splits.train, splits.val,
                                     tune_model.spec(tune_seed), base, opts);
      std::cout << "best_trial=" << result.best_trial
                << " lr=" << cris::format_double(result.best.learning_rate)
                << (result.all_pruned ? " warning=all-trials-pruned" : "")
                << "\n";
    } else if (*train_cmd) {
      const auto out = out_dir_or(train_out, "train-out");
      fs::create_directories(out);
      const auto splits = train_data.splits("dataset");
      auto trainer = [&] {
        if (!train_resume.empty()) return cris::Trainer::load(train_resume);
        cris::TrainConfig cfg;
        cfg.strategy = cris::strategy_from_string(train_strategy);
        cfg.learning_rate = train_lr;
        cfg.epochs = train_epochs;
        cfg.batch_size = train_batch;
        cfg.seed = train_seed;
        cfg.checkpoint_every = train_ckpt_every;
        cfg.checkpoint_dir = train_ckpt_every > 0 ? out.string() : "";
        return cris::make_trainer(train_model.spec(train_seed), cfg);
      }();
      trainer.set_manifest_hash(
          cris::manifest_hash(cris::manifest_entries(splits)));
      const auto& history = trainer.run(splits.train, splits.val);
      trainer.save(out / "checkpoint.ckpt");
      cris::write_history_csv(history, out / "history.csv",
                              trainer.manifest_hash());
      if (!history.epochs.empty()) {
        const auto& last = history.epochs.back();
        std::cout << "epochs=" << history.epochs.size()
                  << " val_dice=" << cris::format_double(last.val_dice)
                  << " val_mse=" << cris::format_double(last.val_mse) << "\n";
      }
    } else if (*eval_cmd) {
      const auto out = out_dir_or(eval_out, "eval-out");
      auto trainer = cris::Trainer::load(eval_ckpt);
      const auto splits = eval_data.splits(eval_name);
      evaluate_and_write(trainer, splits, eval_name, out);
    } else if (*grid_cmd) {
      auto spec = cris::load_experiment_spec(grid_spec_path);
      if (!grid_out.empty()) spec.output_dir = grid_out;
      if (dry_run) {
        std::cout << "output_dir=" << spec.output_dir.string() << "\n";
        for (const auto& ds : spec.datasets) {
          for (const auto b : spec.backbones) {
            for (const auto s : spec.strategies) {
              std::cout << cris::CellKey{ds.name, b, s}.dir_name() << "\n";
            }
          }
        }
        return 0;
      }
      const auto result = cris::run_grid(spec);
      for (const auto& cell : result.cells) {
        std::cout << cell.key.dir_name() << " "
                  << (cell.ok ? "dice=" + cris::format_double(cell.report.dice)
                              : "FAILED: " + cell.error)
                  << "\n";
      }
      cris::emit_table(spec.output_dir, spec.output_dir / "results_table.md");
    } else if (*table_cmd) {
      const auto out = table_out.empty()
                           ? fs::path(table_dir) / "results_table.md"
                           : fs::path(table_out);
      cris::emit_table(table_dir, out);
      std::cout << cris::read_file(out);
    } else if (*plots_cmd) {
      const auto out = out_dir_or(plots_out, plots_dir + "/plots");
      cris::emit_pr_plots(plots_dir, out);
      if (!plots_skip_maps) {
        cris::emit_prob_map_grids(plots_dir, out, plots_samples);
      }
      std::cout << "plots written to " << out.string() << "\n";
    }
  } catch (const cris::Error& e) {
    json err{{"error", {{"code", e.code()}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    json err{{"error", {{"code", "internal-error"}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 2;
  }
  return 0;
}
