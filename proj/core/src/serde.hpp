#pragma once

// Internal JSON converters shared by persistence, tuning and experiments.

#include <json.hpp>

#include "cris/backbones.hpp"
#include "cris/refinement.hpp"
#include "cris/training.hpp"
#include "cris/tuning.hpp"

namespace cris {

inline void to_json(nlohmann::json& j, const BackboneConfig& c) {
  j = {{"kind", to_string(c.kind)},
       {"base_channels", c.base_channels},
       {"depth", c.depth},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, BackboneConfig& c) {
  c.kind = backbone_kind_from_string(j.at("kind").get<std::string>());
  c.base_channels = j.at("base_channels").get<std::int64_t>();
  c.depth = j.at("depth").get<std::int64_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

inline void to_json(nlohmann::json& j, const RefinementConfig& c) {
  j = {{"expand_channels", c.expand_channels},
       {"kernel_sizes", c.kernel_sizes},
       {"dropout_p", c.dropout_p},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, RefinementConfig& c) {
  c.expand_channels = j.at("expand_channels").get<std::int64_t>();
  c.kernel_sizes = j.at("kernel_sizes").get<std::vector<std::int64_t>>();
  c.dropout_p = j.at("dropout_p").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"learning_rate", c.learning_rate},
       {"adam_beta1", c.adam_betas.first},
       {"adam_beta2", c.adam_betas.second},
       {"strategy", to_string(c.strategy)},
       {"seed", c.seed},
       {"baseline_loss", c.baseline_loss == BaselineLoss::kMse ? "mse" : "bce"},
       {"checkpoint_every", c.checkpoint_every},
       {"checkpoint_dir", c.checkpoint_dir}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.batch_size = j.at("batch_size").get<std::int64_t>();
  c.epochs = j.at("epochs").get<std::int64_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.adam_betas = {j.at("adam_beta1").get<double>(),
                  j.at("adam_beta2").get<double>()};
  c.strategy = strategy_from_string(j.at("strategy").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  c.baseline_loss = j.at("baseline_loss").get<std::string>() == "mse"
                        ? BaselineLoss::kMse
                        : BaselineLoss::kBce;
  c.checkpoint_every = j.at("checkpoint_every").get<std::int64_t>();
  c.checkpoint_dir = j.at("checkpoint_dir").get<std::string>();
}

inline void to_json(nlohmann::json& j, const SearchSpace& s) {
  j = {{"lr_min", s.lr_min}, {"lr_max", s.lr_max}, {"trials", s.trials}};
}

inline void from_json(const nlohmann::json& j, SearchSpace& s) {
  s.lr_min = j.at("lr_min").get<double>();
  s.lr_max = j.at("lr_max").get<double>();
  s.trials = j.at("trials").get<std::int64_t>();
}

inline void to_json(nlohmann::json& j, const TrialRecord& t) {
  j = {{"id", t.id},
       {"config", t.config},
       {"val_dice", t.val_dice},
       {"status", t.status == TrialRecord::Status::kPruned ? "pruned" : "complete"},
       {"final_score", t.final_score}};
}

inline void from_json(const nlohmann::json& j, TrialRecord& t) {
  t.id = j.at("id").get<std::int64_t>();
  t.config = j.at("config").get<TrainConfig>();
  t.val_dice = j.at("val_dice").get<std::vector<double>>();
  t.status = j.at("status").get<std::string>() == "pruned"
                 ? TrialRecord::Status::kPruned
                 : TrialRecord::Status::kComplete;
  t.final_score = j.at("final_score").get<double>();
}

}  // namespace cris
