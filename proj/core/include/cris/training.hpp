#pragma once

#include <torch/optim/adam.h>
#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cris/losses.hpp"
#include "cris/refinement.hpp"
#include "cris/types.hpp"

namespace cris {

enum class Strategy { kBackboneOnly, kBackboneFcnJoint, kCris };

Strategy strategy_from_string(std::string_view s);
std::string to_string(Strategy s);

inline std::ostream& operator<<(std::ostream& os, Strategy s) {
  return os << to_string(s);
}

/// Objective used by the backbone-only baseline. BCE is the default for
/// binary segmentation; MSE is exposed as an override.
enum class BaselineLoss { kBce, kMse };

struct TrainConfig {
  std::int64_t batch_size = 4;
  std::int64_t epochs = 30;
  double learning_rate = 1e-3;
  std::pair<double, double> adam_betas = {0.9, 0.999};
  Strategy strategy = Strategy::kCris;
  std::uint64_t seed = 0;
  BaselineLoss baseline_loss = BaselineLoss::kBce;
  /// Periodic checkpointing: every k epochs into checkpoint_dir. 0 disables
  /// periodic saves; an empty dir disables checkpointing entirely.
  std::int64_t checkpoint_every = 0;
  std::string checkpoint_dir;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Validation metrics are computed at this fixed threshold.
inline constexpr double kValThreshold = 0.5;

struct EpochRecord {
  std::int64_t epoch = 0;
  std::string active_loss;  // "L1" (backbone MSE) or "L2" (refined BCE)
  double train_loss = 0.0;
  double val_dice = 0.0;
  double val_mse = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

/// One Adam instance per parameter group so that moment state only advances
/// for parameters that actually received gradients in an epoch. `head` is
/// null for bare-backbone training and for parameterless head stubs.
struct AdamPair {
  std::unique_ptr<torch::optim::Adam> backbone;
  std::unique_ptr<torch::optim::Adam> head;
};

AdamPair make_optimizers(const FullModel& model, const TrainConfig& cfg);

/// One optimization step on one batch of the composed model. With w1 active
/// the step minimizes the batch-mean backbone MSE (refinement parameters are
/// untouched, including their Adam moments); with w2 active it minimizes the
/// batch-mean BCE of the refined output, updating both parameter groups.
/// Returns the optimized scalar.
double train_step(const FullModel& model, const std::vector<Sample>& batch,
                  EpochLossWeights weights, AdamPair& opt);

/// Drives a training run for one model/strategy pair. Epoch-level
/// reproducibility is guaranteed by deriving the shuffle and dropout streams
/// from (config seed, epoch index), so a run resumed from a checkpoint
/// follows the exact arithmetic of an uninterrupted one.
class Trainer {
 public:
  Trainer(FullModel model, TrainConfig cfg);
  Trainer(Backbone backbone, TrainConfig cfg);

  /// Called after each epoch's validation; return false to stop early.
  using EpochCallback = std::function<bool(const EpochRecord&)>;

  /// Trains epochs [next_epoch, cfg.epochs). Returns the accumulated history
  /// of this Trainer instance.
  const TrainHistory& run(const Dataset& train, const Dataset& val,
                          const EpochCallback& callback = {});

  /// Eval-mode probability maps (refined output when a head is present).
  std::vector<ProbMap> predict(const Dataset& data,
                               std::int64_t batch_size = 8) const;

  const TrainConfig& config() const { return cfg_; }
  const TrainHistory& history() const { return history_; }
  std::int64_t next_epoch() const { return next_epoch_; }
  double best_val_dice() const { return best_val_dice_; }

  /// Null unless the strategy trains the composed model.
  const FullModel& full_model() const { return full_; }
  /// Null unless the strategy is backbone_only.
  const Backbone& bare_backbone() const { return bare_; }
  const BackboneConfig& backbone_config() const;
  torch::nn::Module& trained_module() const;
  AdamPair& optimizers() { return opt_; }
  const AdamPair& optimizers() const { return opt_; }

  /// Checkpoint round trip (implemented on the persistence archive format).
  void save(const std::filesystem::path& path) const;
  static Trainer load(const std::filesystem::path& path);
  /// Like load, but into this Trainer; the checkpoint's model configs and
  /// trajectory-defining train fields must match (throws
  /// ConfigMismatchError).
  void restore(const std::filesystem::path& path);

  /// Split-manifest hash stamped into every checkpoint this Trainer writes.
  void set_manifest_hash(std::string hex) { manifest_hash_ = std::move(hex); }
  const std::string& manifest_hash() const { return manifest_hash_; }

 private:
  double step_bare(const std::vector<Sample>& batch, EpochLossWeights w);
  std::pair<double, double> validate_on(const Dataset& val) const;
  EpochLossWeights active_weights(std::int64_t epoch) const;
  void maybe_checkpoint(const EpochRecord& rec);
  void apply_checkpoint(const struct CheckpointData& data);

  TrainConfig cfg_;
  FullModel full_;
  Backbone bare_;
  AdamPair opt_;
  TrainHistory history_;
  std::int64_t next_epoch_ = 0;
  double best_val_dice_ = -1.0;
  std::string manifest_hash_;
};

/// Convenience wrappers matching the strategy contracts; the model is
/// trained in place.
TrainHistory train(const FullModel& model, const Dataset& train,
                   const Dataset& val, const TrainConfig& cfg);
TrainHistory train(const Backbone& backbone, const Dataset& train,
                   const Dataset& val, const TrainConfig& cfg);

/// Architecture half of a training cell; the strategy in TrainConfig decides
/// whether the refinement head is built at all.
struct ModelSpec {
  BackboneConfig backbone;
  RefinementConfig refinement;
};

/// Builds the model demanded by cfg.strategy and wraps it in a Trainer.
Trainer make_trainer(const ModelSpec& spec, const TrainConfig& cfg);

/// Stacks samples into contiguous NCHW image/mask batches; all samples must
/// share spatial dimensions.
std::pair<torch::Tensor, torch::Tensor> stack_batch(
    const std::vector<Sample>& batch);

}  // namespace cris
