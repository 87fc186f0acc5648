#include <doctest.h>
#include <torch/torch.h>

#include <cmath>

#include "cris/metrics.hpp"
#include "helpers.hpp"

using namespace cris;

namespace {

MaskTensor mask_from(const std::vector<std::vector<float>>& rows) {
  std::vector<float> flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  const auto h = static_cast<std::int64_t>(rows.size());
  const auto w = static_cast<std::int64_t>(rows.front().size());
  return MaskTensor::unchecked(
      torch::tensor(flat).reshape({1, h, w}));
}

// pred has 3 positives, gt has 4, overlap 2 (the running fixture).
std::pair<MaskTensor, MaskTensor> overlap_fixture() {
  const auto pred = mask_from({{1, 1, 0, 0},
                               {1, 0, 0, 0},
                               {0, 0, 0, 0},
                               {0, 0, 0, 0}});
  const auto gt = mask_from({{1, 1, 0, 0},
                             {0, 0, 1, 0},
                             {0, 1, 0, 0},
                             {0, 0, 0, 0}});
  return {pred, gt};
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("confusion matches hand counts") {
  torch::manual_seed(2);
  auto gt = test::random_mask(4, 4);
  while (gt.positive_count() != 5) gt = test::random_mask(4, 4);
  const auto c = confusion(gt, gt);
  CHECK(c.tp == 5);
  CHECK(c.fp == 0);
  CHECK(c.fn == 0);
  CHECK(c.tn == 11);

  const auto empty = MaskTensor::unchecked(torch::zeros({1, 4, 4}));
  const auto c2 = confusion(empty, gt);
  CHECK(c2.tp == 0);
  CHECK(c2.fp == 0);
  CHECK(c2.fn == 5);

  const auto [pred, gt3] = overlap_fixture();
  const auto c3 = confusion(pred, gt3);
  CHECK(c3.tp == 2);
  CHECK(c3.fp == 1);
  CHECK(c3.fn == 2);
  CHECK(c3.tn == 11);
}

TEST_CASE("confusion equals the per-pixel oracle exactly") {
  torch::manual_seed(5);
  for (int rep = 0; rep < 50; ++rep) {
    const auto pred = test::random_mask(8, 8, 0.3 + 0.01 * rep);
    const auto gt = test::random_mask(8, 8);
    const auto fast = confusion(pred, gt);
    const auto slow = test::naive_confusion(pred, gt);
    CHECK(fast.tp == slow.tp);
    CHECK(fast.fp == slow.fp);
    CHECK(fast.fn == slow.fn);
    CHECK(fast.tn == slow.tn);
  }
}

TEST_CASE("confusion rejects mismatched shapes") {
  CHECK_THROWS_AS(confusion(test::random_mask(4, 4), test::random_mask(8, 8)),
                  ShapeError);
}

TEST_CASE("precision and recall conventions") {
  CHECK(precision({2, 1, 2, 11}) == doctest::Approx(2.0 / 3.0));
  CHECK(precision({0, 0, 3, 13}) == 1.0);  // empty prediction
  CHECK(precision({5, 0, 0, 11}) == 1.0);
  CHECK(recall({2, 1, 2, 11}) == 0.5);
  CHECK(recall({5, 0, 0, 11}) == 1.0);
  CHECK(recall({0, 3, 0, 13}) == 1.0);  // empty ground truth
}

TEST_CASE("dice on the fixtures") {
  torch::manual_seed(4);
  const auto gt = test::random_mask(8, 8);
  CHECK(dice(gt, gt) == 1.0);

  const auto [pred, gt2] = overlap_fixture();
  CHECK(dice(pred, gt2) == doctest::Approx(4.0 / 7.0));

  const auto left = mask_from({{1, 0}, {1, 0}});
  const auto right = mask_from({{0, 1}, {0, 1}});
  CHECK(dice(left, right) == 0.0);

  const auto empty = MaskTensor::unchecked(torch::zeros({1, 4, 4}));
  CHECK(dice(empty, empty) == 1.0);
}

TEST_CASE("dice is symmetric") {
  torch::manual_seed(6);
  for (int rep = 0; rep < 25; ++rep) {
    const auto a = test::random_mask(8, 8, 0.4);
    const auto b = test::random_mask(8, 8, 0.6);
    CHECK(dice(a, b) == dice(b, a));
  }
}

TEST_CASE("dice equals 2PR/(P+R) when defined") {
  torch::manual_seed(8);
  int checked = 0;
  while (checked < 100) {
    const auto pred = test::random_mask(8, 8, 0.4);
    const auto gt = test::random_mask(8, 8, 0.5);
    const auto c = confusion(pred, gt);
    const double p = precision(c);
    const double r = recall(c);
    if (p + r == 0.0) continue;
    CHECK(std::abs(dice(c) - 2.0 * p * r / (p + r)) < 1e-12);
    ++checked;
  }
}

TEST_CASE("mse_metric basics and per-image averaging rule") {
  torch::manual_seed(9);
  const auto gt = test::random_mask(8, 8);
  CHECK(mse_metric(ProbMap::unchecked(gt.tensor().clone()), gt) == 0.0);

  const auto half = ProbMap::unchecked(torch::full({1, 8, 8}, 0.5f));
  CHECK(mse_metric(half, gt) == doctest::Approx(0.25));

  // report-level MSE averages per-image values
  const auto zeros = MaskTensor::unchecked(torch::zeros({1, 8, 8}));
  const auto p1 = ProbMap::unchecked(torch::full({1, 8, 8}, 0.2f));
  const auto p2 = ProbMap::unchecked(torch::full({1, 8, 8}, 0.6f));
  const double m1 = mse_metric(p1, zeros);
  const double m2 = mse_metric(p2, zeros);
  const auto report = build_eval_report({p1, p2}, {zeros, zeros}, {p1, p2},
                                        {zeros, zeros},
                                        default_threshold_grid());
  CHECK(report.mse == doctest::Approx(0.5 * (m1 + m2)).epsilon(1e-12));
}

TEST_CASE("pr_curve endpoints, fixtures and monotonicity") {
  const auto [pred_mask, gt] = overlap_fixture();
  // probability map assigning 0.7 to the predicted positives
  const auto prob =
      ProbMap::unchecked(pred_mask.tensor() * 0.7f);

  const auto single = pr_curve({prob}, {gt}, {0.5});
  REQUIRE(single.size() == 1);
  CHECK(single[0].threshold == 0.5);
  CHECK(single[0].precision == doctest::Approx(2.0 / 3.0));
  CHECK(single[0].recall == 0.5);

  torch::manual_seed(12);
  for (int rep = 0; rep < 5; ++rep) {
    const std::vector<ProbMap> probs{test::random_prob(8, 8),
                                     test::random_prob(8, 8)};
    const std::vector<MaskTensor> gts{test::random_mask(8, 8),
                                      test::random_mask(8, 8)};
    const auto curve = pr_curve(probs, gts, default_threshold_grid());
    CHECK(curve.front().recall == 1.0);
    for (std::size_t i = 1; i < curve.size(); ++i) {
      CHECK(curve[i].recall <= curve[i - 1].recall);
      CHECK(curve[i].precision >= 0.0);
      CHECK(curve[i].precision <= 1.0);
      CHECK(curve[i].recall >= 0.0);
      CHECK(curve[i].recall <= 1.0);
    }
  }
}

TEST_CASE("pr_curve input validation") {
  CHECK_THROWS_AS(pr_curve({}, {}, {0.5}), InvalidArgument);
  const auto p = test::random_prob(8, 8);
  const auto g = test::random_mask(8, 8);
  CHECK_THROWS_AS(pr_curve({p}, {g}, {}), InvalidArgument);
  CHECK_THROWS_AS(pr_curve({p}, {g}, {0.9, 0.1}), InvalidArgument);
  CHECK_THROWS_AS(pr_curve({p}, {g}, {0.5, 1.5}), InvalidArgument);
}

TEST_CASE("best_threshold fixtures and tie-break") {
  // perfect prediction: every grid value in (0, 1] ties; smallest wins
  torch::manual_seed(14);
  const auto gt = test::random_mask(8, 8, 0.4);
  const auto as_prob = ProbMap::unchecked(gt.tensor().clone());
  CHECK(best_threshold({as_prob}, {gt}, default_threshold_grid()) == 0.01);

  const auto p = ProbMap::unchecked(torch::tensor({{{0.4f, 0.9f}}}));
  const auto g = mask_from({{0, 1}});
  CHECK(best_threshold({p}, {g}, {0.3, 0.5}) == 0.5);

  CHECK_THROWS_AS(best_threshold({p}, {g}, {}), InvalidArgument);
}

TEST_CASE("best_threshold equals the exhaustive oracle") {
  torch::manual_seed(15);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<ProbMap> probs;
    std::vector<MaskTensor> gts;
    for (int i = 0; i < 3; ++i) {
      probs.push_back(test::random_prob(8, 8));
      gts.push_back(test::random_mask(8, 8));
    }
    const auto grid = default_threshold_grid();
    CHECK(best_threshold(probs, gts, grid) ==
          test::naive_best_threshold(probs, gts, grid));
  }
}

TEST_CASE("eval report invariants") {
  torch::manual_seed(16);
  std::vector<ProbMap> probs;
  std::vector<MaskTensor> gts;
  for (int i = 0; i < 4; ++i) {
    probs.push_back(test::random_prob(16, 16));
    gts.push_back(test::random_mask(16, 16));
  }
  const auto report =
      build_eval_report(probs, gts, probs, gts, default_threshold_grid());
  REQUIRE(report.per_image_dice.size() == probs.size());
  double sum = 0.0;
  for (const double d : report.per_image_dice) sum += d;
  CHECK(report.dice == sum / static_cast<double>(probs.size()));
  CHECK(report.pr_curve.size() == 101);
  CHECK(report.mse >= 0.0);
  CHECK(report.mse <= 1.0);
}

}  // TEST_SUITE
