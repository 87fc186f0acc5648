#include "cris/metrics.hpp"

#include <algorithm>

namespace cris {

namespace {

void check_aligned(std::size_t n_probs, std::size_t n_gts) {
  if (n_probs == 0 || n_gts == 0) {
    throw InvalidArgument("empty-input", "metric inputs must be nonempty");
  }
  if (n_probs != n_gts) {
    throw InvalidArgument("misaligned-input",
                          "probability and ground-truth lists differ in length");
  }
}

ConfusionCounts counts_from_bool(const torch::Tensor& pred,
                                 const torch::Tensor& gt) {
  ConfusionCounts c;
  c.tp = (pred & gt).sum().item<std::int64_t>();
  c.fp = (pred & ~gt).sum().item<std::int64_t>();
  c.fn = (~pred & gt).sum().item<std::int64_t>();
  c.tn = (~pred & ~gt).sum().item<std::int64_t>();
  return c;
}

double ratio_or_one(std::int64_t num, std::int64_t den) {
  return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

// Per-image dice for every (threshold, image) pair. Counts are exact integer
// sums; the macro mean accumulates in image order so results match a naive
// per-pixel oracle bit for bit.
std::vector<double> macro_dice_per_threshold(
    const std::vector<ProbMap>& probs, const std::vector<MaskTensor>& gts,
    const std::vector<double>& thresholds) {
  std::vector<double> means(thresholds.size(), 0.0);
  std::vector<double> sums(thresholds.size(), 0.0);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto p = probs[i].tensor();
    const auto g = gts[i].tensor() > 0.5f;
    const std::int64_t gt_pos = g.sum().item<std::int64_t>();
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      const auto pred = p >= static_cast<float>(thresholds[t]);
      const std::int64_t tp = (pred & g).sum().item<std::int64_t>();
      const std::int64_t pred_pos = pred.sum().item<std::int64_t>();
      const std::int64_t den = pred_pos + gt_pos;
      sums[t] += den == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / den;
    }
  }
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    means[t] = sums[t] / static_cast<double>(probs.size());
  }
  return means;
}

}  // namespace

ConfusionCounts confusion(const MaskTensor& pred, const MaskTensor& gt) {
  if (pred.tensor().sizes() != gt.tensor().sizes()) {
    throw ShapeError("confusion: mask shapes differ, " +
                     c10::str(pred.tensor().sizes()) + " vs " +
                     c10::str(gt.tensor().sizes()));
  }
  return counts_from_bool(pred.tensor() > 0.5f, gt.tensor() > 0.5f);
}

double precision(const ConfusionCounts& c) { return ratio_or_one(c.tp, c.tp + c.fp); }

double recall(const ConfusionCounts& c) { return ratio_or_one(c.tp, c.tp + c.fn); }

double dice(const ConfusionCounts& c) {
  return ratio_or_one(2 * c.tp, 2 * c.tp + c.fp + c.fn);
}

double dice(const MaskTensor& pred, const MaskTensor& gt) {
  return dice(confusion(pred, gt));
}

double mse_metric(const ProbMap& p, const MaskTensor& g) {
  if (p.tensor().sizes() != g.tensor().sizes()) {
    throw ShapeError("mse_metric: shapes differ");
  }
  // Plain scanline accumulation in double, so reported values are exactly
  // reproducible by a per-pixel reference loop.
  const auto pa = p.tensor().accessor<float, 3>();
  const auto ga = g.tensor().accessor<float, 3>();
  double sum = 0.0;
  for (std::int64_t y = 0; y < p.height(); ++y) {
    for (std::int64_t x = 0; x < p.width(); ++x) {
      const double d = static_cast<double>(pa[0][y][x]) -
                       static_cast<double>(ga[0][y][x]);
      sum += d * d;
    }
  }
  return sum / static_cast<double>(p.height() * p.width());
}

std::vector<PRPoint> pr_curve(const std::vector<ProbMap>& probs,
                              const std::vector<MaskTensor>& gts,
                              const std::vector<double>& thresholds) {
  check_aligned(probs.size(), gts.size());
  if (thresholds.empty()) {
    throw InvalidArgument("empty-input", "threshold list must be nonempty");
  }
  if (!std::is_sorted(thresholds.begin(), thresholds.end()) ||
      thresholds.front() < 0.0 || thresholds.back() > 1.0) {
    throw InvalidArgument("invalid-threshold",
                          "thresholds must be ascending within [0, 1]");
  }

  std::vector<PRPoint> curve;
  curve.reserve(thresholds.size());
  for (const double t : thresholds) {
    ConfusionCounts pooled;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      const auto pred = probs[i].tensor() >= static_cast<float>(t);
      pooled += counts_from_bool(pred, gts[i].tensor() > 0.5f);
    }
    curve.push_back(PRPoint{t, precision(pooled), recall(pooled)});
  }
  return curve;
}

std::vector<double> default_threshold_grid() {
  std::vector<double> grid(101);
  for (int i = 0; i <= 100; ++i) grid[i] = i / 100.0;
  return grid;
}

double best_threshold(const std::vector<ProbMap>& probs,
                      const std::vector<MaskTensor>& gts,
                      const std::vector<double>& grid) {
  check_aligned(probs.size(), gts.size());
  if (grid.empty()) {
    throw InvalidArgument("empty-grid", "threshold grid must be nonempty");
  }
  auto sorted = grid;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() < 0.0 || sorted.back() > 1.0) {
    throw InvalidArgument("invalid-threshold",
                          "grid values must lie in [0, 1]");
  }

  const auto means = macro_dice_per_threshold(probs, gts, sorted);
  std::size_t best = 0;
  for (std::size_t t = 1; t < sorted.size(); ++t) {
    if (means[t] > means[best]) best = t;  // strict: ties keep the smallest
  }
  return sorted[best];
}

EvalReport build_eval_report(const std::vector<ProbMap>& train_probs,
                             const std::vector<MaskTensor>& train_gts,
                             const std::vector<ProbMap>& test_probs,
                             const std::vector<MaskTensor>& test_gts,
                             const std::vector<double>& grid) {
  check_aligned(test_probs.size(), test_gts.size());
  EvalReport report;
  report.best_threshold = best_threshold(train_probs, train_gts, grid);

  double dice_sum = 0.0;
  double mse_sum = 0.0;
  report.per_image_dice.reserve(test_probs.size());
  for (std::size_t i = 0; i < test_probs.size(); ++i) {
    const auto pred = binarize(test_probs[i], report.best_threshold);
    const double d = dice(pred, test_gts[i]);
    report.per_image_dice.push_back(d);
    dice_sum += d;
    mse_sum += mse_metric(test_probs[i], test_gts[i]);
  }
  report.dice = dice_sum / static_cast<double>(test_probs.size());
  report.mse = mse_sum / static_cast<double>(test_probs.size());
  report.pr_curve = pr_curve(test_probs, test_gts, grid);
  return report;
}

}  // namespace cris
