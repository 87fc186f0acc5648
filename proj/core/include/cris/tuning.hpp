#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cris/data.hpp"
#include "cris/rng.hpp"
#include "cris/training.hpp"

namespace cris {

/// Learning-rate search space: log-uniform over [1e-6, 1e-2], 20 trials per
/// combination. The bounds are part of the protocol and are validated, not
/// tunable.
struct SearchSpace {
  double lr_min = 1e-6;
  double lr_max = 1e-2;
  std::int64_t trials = 20;

  void validate() const;
};

struct TrialRecord {
  std::int64_t id = 0;
  TrainConfig config;
  std::vector<double> val_dice;  // one entry per completed epoch
  enum class Status { kComplete, kPruned };
  Status status = Status::kComplete;
  double final_score = 0.0;  // last recorded validation DICE
};

struct MedianPrunerOptions {
  /// Epoch index before which pruning never fires.
  std::int64_t warmup_epochs = 5;
  /// Minimum number of other trials with a value at the epoch.
  std::int64_t min_reference_trials = 3;
};

/// Draws a learning rate log-uniformly from the space; every other field is
/// copied from `base` (batch size 4, Adam betas (0.9, 0.999), seed).
TrainConfig sample_config(const SearchSpace& space, SplitMix64& rng,
                          const TrainConfig& base);

/// True iff the trial's validation DICE at `epoch` lies strictly below the
/// median of the other trials' values at the same epoch, subject to the
/// warmup and reference-count guards.
bool should_prune(const TrialRecord& current,
                  const std::vector<TrialRecord>& others, std::int64_t epoch,
                  const MedianPrunerOptions& opts = {});

struct TuneOptions {
  MedianPrunerOptions pruner;
  /// One JSON file per trial plus a study summary, when nonempty.
  std::filesystem::path study_dir;
  /// Runs trials on a small thread pool. Pruning then depends on completion
  /// order and dropout streams interleave, so exact replay determinism is
  /// relaxed; the default sequential mode is fully reproducible.
  bool parallel = false;
  std::int64_t workers = 2;
};

struct TuneResult {
  TrainConfig best;
  std::vector<TrialRecord> trials;
  std::int64_t best_trial = -1;
  bool all_pruned = false;
};

/// Runs the trial loop with median pruning and returns the best completed
/// trial's config (or the best partial when everything was pruned, flagged
/// via all_pruned).
TuneResult tune(const SearchSpace& space, const Dataset& train,
                const Dataset& val, const ModelSpec& model,
                const TrainConfig& base, const TuneOptions& opts = {});

}  // namespace cris
