#include "cris/training.hpp"

#include <algorithm>

#include "cris/metrics.hpp"
#include "cris/rng.hpp"

namespace cris {

namespace {

torch::optim::AdamOptions adam_options(const TrainConfig& cfg) {
  auto opts = torch::optim::AdamOptions(cfg.learning_rate);
  opts.betas({cfg.adam_betas.first, cfg.adam_betas.second});
  return opts;
}

std::vector<Sample> gather(const Dataset& data,
                           const std::vector<std::size_t>& order,
                           std::size_t begin, std::size_t end) {
  std::vector<Sample> batch;
  batch.reserve(end - begin);
  for (std::size_t k = begin; k < end; ++k) batch.push_back(data.samples[order[k]]);
  return batch;
}

}  // namespace

Strategy strategy_from_string(std::string_view s) {
  if (s == "backbone_only") return Strategy::kBackboneOnly;
  if (s == "backbone_fcn_joint") return Strategy::kBackboneFcnJoint;
  if (s == "cris") return Strategy::kCris;
  throw InvalidArgument("unsupported-strategy",
                        "unknown strategy '" + std::string(s) + "'");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kBackboneOnly: return "backbone_only";
    case Strategy::kBackboneFcnJoint: return "backbone_fcn_joint";
    case Strategy::kCris: return "cris";
  }
  throw InvalidArgument("unsupported-strategy", "invalid strategy value");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("invalid-config", "batch_size must be positive");
  if (epochs < 1) throw InvalidArgument("invalid-config", "epochs must be positive");
  if (!(learning_rate > 0.0)) throw InvalidArgument("invalid-config", "learning_rate must be positive");
  if (checkpoint_every < 0) throw InvalidArgument("invalid-config", "checkpoint_every must be >= 0");
}

AdamPair make_optimizers(const FullModel& model, const TrainConfig& cfg) {
  AdamPair pair;
  pair.backbone = std::make_unique<torch::optim::Adam>(
      model->backbone_parameters(), adam_options(cfg));
  auto head_params = model->head_parameters();
  if (!head_params.empty()) {
    pair.head = std::make_unique<torch::optim::Adam>(std::move(head_params),
                                                     adam_options(cfg));
  }
  return pair;
}

std::pair<torch::Tensor, torch::Tensor> stack_batch(
    const std::vector<Sample>& batch) {
  if (batch.empty()) {
    throw InvalidArgument("empty-batch", "cannot stack an empty batch");
  }
  const auto h = batch.front().image.height();
  const auto w = batch.front().image.width();
  std::vector<torch::Tensor> imgs, gts;
  imgs.reserve(batch.size());
  gts.reserve(batch.size());
  for (const auto& s : batch) {
    if (s.image.height() != h || s.image.width() != w) {
      throw ShapeError("batch samples must share spatial dimensions");
    }
    imgs.push_back(s.image.tensor());
    gts.push_back(s.mask.tensor());
  }
  return {torch::stack(imgs), torch::stack(gts)};
}

double train_step(const FullModel& model, const std::vector<Sample>& batch,
                  EpochLossWeights weights, AdamPair& opt) {
  if ((weights.w1 != 0) == (weights.w2 != 0)) {
    throw InvalidArgument("invalid-config",
                          "exactly one loss weight must be active");
  }
  model->train();
  auto [imgs, gts] = stack_batch(batch);
  auto out = model->forward(imgs);
  auto loss = weights.w1 ? cris::mse_loss(out.intermediate, gts)
                         : cris::bce_loss(out.refined, gts);
  opt.backbone->zero_grad();
  if (opt.head) opt.head->zero_grad();
  loss.backward();
  opt.backbone->step();
  if (weights.w2 && opt.head) opt.head->step();
  return loss.item<double>();
}

Trainer::Trainer(FullModel model, TrainConfig cfg)
    : cfg_(std::move(cfg)), full_(std::move(model)) {
  cfg_.validate();
  if (cfg_.strategy == Strategy::kBackboneOnly) {
    throw InvalidArgument("invalid-config",
                          "backbone_only takes a bare backbone, not a "
                          "composed model");
  }
  opt_ = make_optimizers(full_, cfg_);
}

Trainer::Trainer(Backbone backbone, TrainConfig cfg)
    : cfg_(std::move(cfg)), bare_(std::move(backbone)) {
  cfg_.validate();
  if (cfg_.strategy != Strategy::kBackboneOnly) {
    throw InvalidArgument("invalid-config",
                          "composed strategies need a FullModel");
  }
  opt_.backbone = std::make_unique<torch::optim::Adam>(bare_->parameters(),
                                                       adam_options(cfg_));
}

const BackboneConfig& Trainer::backbone_config() const {
  return bare_ ? bare_->config() : full_->backbone()->config();
}

torch::nn::Module& Trainer::trained_module() const {
  if (full_) return *full_;
  return *bare_;
}

EpochLossWeights Trainer::active_weights(std::int64_t epoch) const {
  switch (cfg_.strategy) {
    case Strategy::kCris: return epoch_weights(epoch);
    case Strategy::kBackboneFcnJoint: return EpochLossWeights{0, 1};
    case Strategy::kBackboneOnly:
      return cfg_.baseline_loss == BaselineLoss::kMse ? EpochLossWeights{1, 0}
                                                      : EpochLossWeights{0, 1};
  }
  throw InvalidArgument("unsupported-strategy", "invalid strategy value");
}

double Trainer::step_bare(const std::vector<Sample>& batch,
                          EpochLossWeights w) {
  bare_->train();
  auto [imgs, gts] = stack_batch(batch);
  auto out = bare_->forward(imgs);
  auto loss = w.w1 ? cris::mse_loss(out, gts) : cris::bce_loss(out, gts);
  opt_.backbone->zero_grad();
  loss.backward();
  opt_.backbone->step();
  return loss.item<double>();
}

const TrainHistory& Trainer::run(const Dataset& train, const Dataset& val,
                                 const EpochCallback& callback) {
  if (train.empty()) {
    throw InvalidArgument("empty-split", "training split is empty");
  }
  for (std::int64_t epoch = next_epoch_; epoch < cfg_.epochs; ++epoch) {
    const auto weights = active_weights(epoch);
    const std::uint64_t epoch_seed =
        seed_mix(cfg_.seed, static_cast<std::uint64_t>(epoch));
    // Dropout draws from the torch generator; reseeding it per epoch makes
    // each epoch's noise a function of (seed, epoch) alone, which is what
    // lets a resumed run replay an uninterrupted one exactly.
    torch::manual_seed(seed_mix(epoch_seed, "torch"));
    const auto order =
        seeded_permutation(train.size(), seed_mix(epoch_seed, "shuffle"));

    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(cfg_.batch_size)) {
      const auto end = std::min(order.size(),
                                begin + static_cast<std::size_t>(cfg_.batch_size));
      const auto batch = gather(train, order, begin, end);
      const double loss = full_ ? train_step(full_, batch, weights, opt_)
                                : step_bare(batch, weights);
      loss_sum += loss * static_cast<double>(batch.size());
    }

    const auto [val_dice, val_mse] = validate_on(val);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.active_loss = weights.w1 ? "L1" : "L2";
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    rec.val_dice = val_dice;
    rec.val_mse = val_mse;
    history_.epochs.push_back(rec);
    next_epoch_ = epoch + 1;
    maybe_checkpoint(rec);
    if (callback && !callback(rec)) break;
  }
  return history_;
}

std::pair<double, double> Trainer::validate_on(const Dataset& val) const {
  if (val.empty()) return {0.0, 0.0};
  const auto probs = predict(val);
  double dice_sum = 0.0;
  double mse_sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    dice_sum += dice(binarize(probs[i], kValThreshold), val.samples[i].mask);
    mse_sum += mse_metric(probs[i], val.samples[i].mask);
  }
  const auto n = static_cast<double>(probs.size());
  return {dice_sum / n, mse_sum / n};
}

std::vector<ProbMap> Trainer::predict(const Dataset& data,
                                      std::int64_t batch_size) const {
  torch::NoGradGuard no_grad;
  auto& module = trained_module();
  const bool was_training = module.is_training();
  module.eval();

  std::vector<ProbMap> probs;
  probs.reserve(data.size());
  for (std::size_t begin = 0; begin < data.size();
       begin += static_cast<std::size_t>(batch_size)) {
    const auto end =
        std::min(data.size(), begin + static_cast<std::size_t>(batch_size));
    std::vector<Sample> batch(data.samples.begin() + begin,
                              data.samples.begin() + end);
    auto [imgs, gts] = stack_batch(batch);
    (void)gts;
    const auto out = full_ ? full_->forward(imgs).refined : bare_->forward(imgs);
    for (std::int64_t i = 0; i < out.size(0); ++i) {
      probs.push_back(ProbMap::from_tensor(out[i]));
    }
  }
  if (was_training) module.train();
  return probs;
}

void Trainer::maybe_checkpoint(const EpochRecord& rec) {
  if (rec.val_dice > best_val_dice_) {
    best_val_dice_ = rec.val_dice;
    if (!cfg_.checkpoint_dir.empty()) {
      save(std::filesystem::path(cfg_.checkpoint_dir) / "best.ckpt");
    }
  }
  if (!cfg_.checkpoint_dir.empty() && cfg_.checkpoint_every > 0 &&
      (rec.epoch + 1) % cfg_.checkpoint_every == 0) {
    char name[32];
    std::snprintf(name, sizeof(name), "epoch_%04lld.ckpt",
                  static_cast<long long>(rec.epoch + 1));
    save(std::filesystem::path(cfg_.checkpoint_dir) / name);
  }
}

TrainHistory train(const FullModel& model, const Dataset& train_set,
                   const Dataset& val_set, const TrainConfig& cfg) {
  Trainer trainer(model, cfg);
  return trainer.run(train_set, val_set);
}

TrainHistory train(const Backbone& backbone, const Dataset& train_set,
                   const Dataset& val_set, const TrainConfig& cfg) {
  Trainer trainer(backbone, cfg);
  return trainer.run(train_set, val_set);
}

Trainer make_trainer(const ModelSpec& spec, const TrainConfig& cfg) {
  if (cfg.strategy == Strategy::kBackboneOnly) {
    return Trainer(build_backbone(spec.backbone), cfg);
  }
  auto backbone = build_backbone(spec.backbone);
  auto refinement = build_refinement(spec.refinement);
  return Trainer(compose(std::move(backbone), std::move(refinement)), cfg);
}

}  // namespace cris
