#include "cris/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <thread>

#include "cris/persistence.hpp"
#include "serde.hpp"

namespace cris {

namespace {

double median_of(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

void persist_trial(const std::filesystem::path& dir, const TrialRecord& rec) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  char name[32];
  std::snprintf(name, sizeof(name), "trial_%03lld.json",
                static_cast<long long>(rec.id));
  atomic_write_file(dir / name, nlohmann::json(rec).dump(2) + "\n");
}

void persist_study(const std::filesystem::path& dir, const TuneResult& result) {
  if (dir.empty()) return;
  nlohmann::json j{{"trials", result.trials},
                   {"best_trial", result.best_trial},
                   {"all_pruned", result.all_pruned},
                   {"best_config", result.best}};
  atomic_write_file(dir / "study.json", j.dump(2) + "\n");
}

}  // namespace

void SearchSpace::validate() const {
  if (lr_min != 1e-6 || lr_max != 1e-2) {
    throw InvalidArgument("invalid-config",
                          "learning-rate bounds are protocol constants "
                          "[1e-6, 1e-2]");
  }
  if (trials < 1) {
    throw InvalidArgument("invalid-config", "trial count must be positive");
  }
}

TrainConfig sample_config(const SearchSpace& space, SplitMix64& rng,
                          const TrainConfig& base) {
  space.validate();
  auto cfg = base;
  const double lo = std::log10(space.lr_min);
  const double hi = std::log10(space.lr_max);
  cfg.learning_rate = std::pow(10.0, rng.uniform(lo, hi));
  cfg.learning_rate = std::clamp(cfg.learning_rate, space.lr_min, space.lr_max);
  return cfg;
}

bool should_prune(const TrialRecord& current,
                  const std::vector<TrialRecord>& others, std::int64_t epoch,
                  const MedianPrunerOptions& opts) {
  if (epoch < opts.warmup_epochs) return false;
  if (current.val_dice.size() <= static_cast<std::size_t>(epoch)) return false;

  std::vector<double> reference;
  for (const auto& other : others) {
    if (other.id == current.id) continue;
    if (other.val_dice.size() > static_cast<std::size_t>(epoch)) {
      reference.push_back(other.val_dice[static_cast<std::size_t>(epoch)]);
    }
  }
  if (reference.size() < static_cast<std::size_t>(opts.min_reference_trials)) {
    return false;
  }
  return current.val_dice[static_cast<std::size_t>(epoch)] <
         median_of(std::move(reference));
}

TuneResult tune(const SearchSpace& space, const Dataset& train,
                const Dataset& val, const ModelSpec& model,
                const TrainConfig& base, const TuneOptions& opts) {
  space.validate();
  base.validate();

  // Learning rates are drawn up front so the sampled sequence is identical
  // regardless of execution mode.
  SplitMix64 rng(seed_mix(base.seed, "tune"));
  std::vector<TrainConfig> configs;
  configs.reserve(static_cast<std::size_t>(space.trials));
  for (std::int64_t t = 0; t < space.trials; ++t) {
    auto cfg = sample_config(space, rng, base);
    cfg.checkpoint_dir.clear();  // trials never checkpoint
    cfg.checkpoint_every = 0;
    configs.push_back(cfg);
  }

  std::vector<TrialRecord> records;
  records.reserve(configs.size());
  std::mutex mutex;  // guards records and seeded model construction

  auto run_trial = [&](std::int64_t id) {
    TrialRecord rec;
    rec.id = id;
    rec.config = configs[static_cast<std::size_t>(id)];

    std::unique_lock lock(mutex);
    auto trainer = make_trainer(model, rec.config);
    lock.unlock();

    trainer.run(train, val, [&](const EpochRecord& er) {
      rec.val_dice.push_back(er.val_dice);
      std::scoped_lock guard(mutex);
      if (should_prune(rec, records, er.epoch, opts.pruner)) {
        rec.status = TrialRecord::Status::kPruned;
        return false;
      }
      return true;
    });
    rec.final_score = rec.val_dice.empty() ? 0.0 : rec.val_dice.back();

    std::scoped_lock guard(mutex);
    records.push_back(rec);
    persist_trial(opts.study_dir, rec);
  };

  if (!opts.parallel || opts.workers <= 1) {
    for (std::int64_t t = 0; t < space.trials; ++t) run_trial(t);
  } else {
    std::atomic<std::int64_t> next{0};
    std::vector<std::thread> pool;
    const auto workers =
        std::min<std::int64_t>(opts.workers, space.trials);
    pool.reserve(static_cast<std::size_t>(workers));
    for (std::int64_t k = 0; k < workers; ++k) {
      pool.emplace_back([&] {
        for (;;) {
          const auto t = next.fetch_add(1);
          if (t >= space.trials) break;
          run_trial(t);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  std::sort(records.begin(), records.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });

  TuneResult result;
  result.trials = records;
  for (const auto& rec : records) {
    if (rec.status != TrialRecord::Status::kComplete) continue;
    if (result.best_trial < 0 ||
        rec.final_score > result.trials[static_cast<std::size_t>(
                              result.best_trial)].final_score) {
      result.best_trial = rec.id;
    }
  }
  if (result.best_trial < 0) {
    // Everything was pruned; surface the best partial with a warning flag.
    result.all_pruned = true;
    for (const auto& rec : records) {
      if (result.best_trial < 0 ||
          rec.final_score > result.trials[static_cast<std::size_t>(
                                result.best_trial)].final_score) {
        result.best_trial = rec.id;
      }
    }
  }
  result.best = result.trials[static_cast<std::size_t>(result.best_trial)].config;
  persist_study(opts.study_dir, result);
  return result;
}

}  // namespace cris
