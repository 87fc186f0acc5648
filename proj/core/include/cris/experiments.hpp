#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cris/data.hpp"
#include "cris/metrics.hpp"
#include "cris/training.hpp"
#include "cris/tuning.hpp"

namespace cris {

/// One dataset entry of the experiment grid: a directory layout or a
/// synthetic dataset description.
struct DatasetSpec {
  std::string name;
  std::filesystem::path root;  // directory datasets only
  std::string images_subdir = "images";
  std::string masks_subdir = "masks";
  bool synthetic = false;
  std::int64_t synth_count = 240;
  /// Seeds both the split permutation and (for synthetic data) generation,
  /// so every cell of this dataset sees identical partitions.
  std::uint64_t seed = 1;
};

struct ExperimentSpec {
  std::vector<DatasetSpec> datasets;
  std::vector<BackboneKind> backbones;
  std::vector<Strategy> strategies;
  SearchSpace tuning;
  std::filesystem::path output_dir = "results";
  std::uint64_t master_seed = 0;
  std::int64_t epochs = 30;
  std::int64_t tune_epochs = 8;
  std::pair<std::int64_t, std::int64_t> target_size = {128, 128};
  std::int64_t base_channels = 16;
  std::int64_t depth = 3;
  RefinementConfig refinement;

  void validate() const;
};

/// Parses a spec JSON file. CRIS_OUTPUT_DIR, when set, overrides the file's
/// output_dir.
ExperimentSpec load_experiment_spec(const std::filesystem::path& json_file);

struct CellKey {
  std::string dataset;
  BackboneKind backbone;
  Strategy strategy;

  std::string dir_name() const;  // "<dataset>__<backbone>__<strategy>"
};

struct CellResult {
  CellKey key;
  bool ok = false;
  std::string error;
  EvalReport report;
  std::filesystem::path dir;
};

struct GridResult {
  std::vector<CellResult> cells;
  bool all_ok() const;
};

/// Observable phases of one cell, in execution order.
enum class CellPhase { kTune, kTrain, kThresholdSearch, kEvaluate };

inline std::ostream& operator<<(std::ostream& os, CellPhase phase) {
  switch (phase) {
    case CellPhase::kTune: return os << "tune";
    case CellPhase::kTrain: return os << "train";
    case CellPhase::kThresholdSearch: return os << "threshold-search";
    case CellPhase::kEvaluate: return os << "evaluate";
  }
  return os << "?";
}

struct GridHooks {
  std::function<void(const CellKey&, CellPhase)> on_phase;
};

/// Full protocol per cell: tune the learning rate, train with the winner,
/// pick the DICE-maximizing threshold on the TRAIN split, evaluate on the
/// TEST split, persist everything. Cells share split manifests per dataset;
/// cell failures are recorded and skipped, never aborting the grid.
GridResult run_grid(const ExperimentSpec& spec, const GridHooks& hooks = {});

/// One cell on pre-split data. The test split arrives through an accessor so
/// its first touch is observable (it must not happen before evaluation).
CellResult run_cell(const CellKey& key, const ExperimentSpec& spec,
                    const Dataset& train, const Dataset& val,
                    const std::function<const Dataset&()>& test_access,
                    const std::string& manifest_hex,
                    const std::filesystem::path& cell_dir,
                    const GridHooks& hooks = {});

/// Markdown results table from persisted cell reports: strategies as rows,
/// backbones as columns, DICE x100 (2 decimals) and MSE (3 decimals), best
/// DICE/MSE per column flagged in bold. The CRF strategy is rendered as an
/// n/a row with a footnote to keep the familiar table shape.
std::string render_table(const std::filesystem::path& results_dir);
void emit_table(const std::filesystem::path& results_dir,
                const std::filesystem::path& out_file);

/// One PR-curve figure per dataset (panel per backbone, line per strategy),
/// rendered from the persisted pr_curve.csv files.
void emit_pr_plots(const std::filesystem::path& results_dir,
                   const std::filesystem::path& out_dir);

/// Probability-map comparison grids: rows are backbones, columns are the
/// input image, the ground truth and each strategy's prediction. Models are
/// reloaded from cell checkpoints; datasets are rebuilt from the persisted
/// experiment spec.
void emit_prob_map_grids(const std::filesystem::path& results_dir,
                         const std::filesystem::path& out_dir,
                         std::int64_t samples_per_dataset = 1);

/// Loads (or synthesizes) and splits one grid dataset.
DatasetSplits prepare_dataset(const DatasetSpec& ds,
                              std::pair<std::int64_t, std::int64_t> target_size);

}  // namespace cris
