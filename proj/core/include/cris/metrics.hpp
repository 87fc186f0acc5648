#pragma once

#include <cstdint>
#include <vector>

#include "cris/types.hpp"

namespace cris {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
};

/// Exact per-pixel counts between a predicted and a ground-truth mask.
ConfusionCounts confusion(const MaskTensor& pred, const MaskTensor& gt);

/// tp / (tp + fp); an empty prediction (tp + fp = 0) scores 1.0 so threshold
/// sweeps stay defined at the all-negative end.
double precision(const ConfusionCounts& c);

/// tp / (tp + fn); empty ground truth scores 1.0 by the same convention.
double recall(const ConfusionCounts& c);

/// 2tp / (2tp + fp + fn); two empty masks score 1.0.
double dice(const ConfusionCounts& c);
double dice(const MaskTensor& pred, const MaskTensor& gt);

/// Mean squared error of a probability map against a binary mask (per-image
/// value; callers average across a dataset).
double mse_metric(const ProbMap& p, const MaskTensor& g);

struct PRPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Precision/recall per threshold, micro-averaged: pixel counts are pooled
/// over all images before the ratios are taken. `thresholds` must be sorted
/// ascending within [0, 1]; `probs` and `gts` must be aligned and nonempty.
std::vector<PRPoint> pr_curve(const std::vector<ProbMap>& probs,
                              const std::vector<MaskTensor>& gts,
                              const std::vector<double>& thresholds);

/// 101 evenly spaced thresholds 0.00, 0.01, ..., 1.00.
std::vector<double> default_threshold_grid();

/// Grid value maximizing the mean per-image DICE (macro average); ties break
/// toward the smallest threshold.
double best_threshold(const std::vector<ProbMap>& probs,
                      const std::vector<MaskTensor>& gts,
                      const std::vector<double>& grid);

/// Per-model evaluation bundle: macro DICE at the selected threshold, macro
/// MSE, the threshold itself, the micro-averaged PR curve and the per-image
/// DICE values behind the headline number.
struct EvalReport {
  double dice = 0.0;
  double mse = 0.0;
  double best_threshold = 0.5;
  std::vector<PRPoint> pr_curve;
  std::vector<double> per_image_dice;
};

/// Assembles an EvalReport per the evaluation protocol: the threshold is
/// selected on the training outputs, all reported numbers come from the test
/// outputs.
EvalReport build_eval_report(const std::vector<ProbMap>& train_probs,
                             const std::vector<MaskTensor>& train_gts,
                             const std::vector<ProbMap>& test_probs,
                             const std::vector<MaskTensor>& test_gts,
                             const std::vector<double>& grid);

}  // namespace cris
