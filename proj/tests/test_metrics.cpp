#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "megalap/metrics.hpp"
#include "megalap/params.hpp"
#include "oracles.hpp"

using namespace megalap;

namespace {

Tensor random_pred(i64 h, i64 w, Rng& rng) {
  Tensor t({1, h, w});
  for (i64 i = 0; i < t.numel(); ++i) t[i] = rng.uniform();
  return t;
}

// Random binary mask with at least one foreground and one background pixel.
Tensor random_mask(i64 h, i64 w, Rng& rng) {
  while (true) {
    Tensor t({1, h, w});
    i64 fg = 0;
    for (i64 i = 0; i < t.numel(); ++i) {
      t[i] = rng.coin() ? 1.0 : 0.0;
      fg += t[i] != 0.0;
    }
    if (fg > 0 && fg < t.numel()) return t;
  }
}

}  // namespace

TEST_CASE("perfect binary prediction maxes every score") {
  Rng rng(1);
  const Tensor gt = random_mask(8, 8, rng);
  const MetricScores s = evaluate_pair(gt, gt);
  CHECK(s.mdice == 1.0);
  CHECK(s.miou == 1.0);
  CHECK(s.mae == 0.0);
  CHECK(std::fabs(s.f_beta_w - 1.0) < 1e-9);
  CHECK(std::fabs(s.s_alpha - 1.0) < 1e-9);
  CHECK(std::fabs(s.e_phi_max - 1.0) < 1e-9);
}

TEST_CASE("disjoint equal-area masks score zero overlap") {
  Tensor gt({1, 4, 4}), pred({1, 4, 4});
  for (i64 i = 0; i < 8; ++i) gt[i] = 1.0;
  for (i64 i = 8; i < 16; ++i) pred[i] = 1.0;
  CHECK(dice_score(pred, gt) == 0.0);
  CHECK(iou_score(pred, gt) == 0.0);
}

TEST_CASE("inverted prediction drives the alignment measure near zero") {
  Rng rng(2);
  const Tensor gt = random_mask(8, 8, rng);
  Tensor inverted({1, 8, 8});
  for (i64 i = 0; i < 64; ++i) inverted[i] = 1.0 - gt[i];
  CHECK(e_measure_max(inverted, gt) < 0.05);
}

TEST_CASE("overlap metrics equal brute-force counting on all 3x3 mask pairs") {
  for (int pa = 0; pa < 512; ++pa)
    for (int ga = 0; ga < 512; ga += 7) {  // full pred sweep, strided gt sweep (exhaustive pairing runs in acceptance)
      Tensor pred({1, 3, 3}), gt({1, 3, 3});
      for (int i = 0; i < 9; ++i) {
        pred[i] = (pa >> i) & 1 ? 1.0 : 0.0;
        gt[i] = (ga >> i) & 1 ? 1.0 : 0.0;
      }
      i64 inter = 0, a = 0, b = 0;
      double abs_sum = 0;
      for (int i = 0; i < 9; ++i) {
        inter += pred[i] != 0 && gt[i] != 0;
        a += pred[i] != 0;
        b += gt[i] != 0;
        abs_sum += std::fabs(pred[i] - gt[i]);
      }
      const double want_dice = (a + b) == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
      const double want_iou = (a + b - inter) == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(a + b - inter);
      REQUIRE(dice_score(pred, gt) == want_dice);
      REQUIRE(iou_score(pred, gt) == want_iou);
      REQUIRE(mae_score(pred, gt) == doctest::Approx(abs_sum / 9.0).epsilon(1e-15));
    }
}

TEST_CASE("distance transform matches brute force including tie-breaks") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const i64 h = 7, w = 9;
    std::vector<uint8_t> member(static_cast<size_t>(h * w));
    i64 count = 0;
    for (auto& m : member) {
      m = rng.uniform() < 0.15;
      count += m;
    }
    if (count == 0) member[5] = 1;
    std::vector<double> d1, d2;
    std::vector<i64> n1, n2;
    distance_to_set(member, h, w, d1, n1);
    oracles::nearest_brute(member, h, w, d2, n2);
    for (i64 i = 0; i < h * w; ++i) {
      CHECK(d1[static_cast<size_t>(i)] == doctest::Approx(d2[static_cast<size_t>(i)]).epsilon(1e-12));
      CHECK(n1[static_cast<size_t>(i)] == n2[static_cast<size_t>(i)]);
    }
  }
}

TEST_CASE("structural metrics match the straight-line references on random instances") {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const Tensor pred = random_pred(8, 8, rng);
    const Tensor gt = random_mask(8, 8, rng);
    CHECK(std::fabs(weighted_f_measure(pred, gt) - oracles::wfm_reference(pred, gt)) < 1e-9);
    CHECK(std::fabs(s_measure(pred, gt) - oracles::sm_reference(pred, gt)) < 1e-9);
    CHECK(std::fabs(e_measure_max(pred, gt) - oracles::em_reference(pred, gt)) < 1e-9);
  }
}

TEST_CASE("structural metrics stay in [0,1] on adversarial inputs") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor gt = random_mask(6, 6, rng);
    for (const Tensor& pred :
         {Tensor::full({1, 6, 6}, 1.0), Tensor({1, 6, 6}), Tensor::full({1, 6, 6}, 0.5), random_pred(6, 6, rng)}) {
      for (double v : {weighted_f_measure(pred, gt), s_measure(pred, gt), e_measure_max(pred, gt)}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }
}

TEST_CASE("degenerate ground truth follows the documented convention") {
  const Tensor empty_gt({1, 5, 5});
  const Tensor empty_pred({1, 5, 5});
  const Tensor some_pred = Tensor::full({1, 5, 5}, 0.9);

  CHECK(dice_score(empty_pred, empty_gt) == 1.0);
  CHECK(iou_score(empty_pred, empty_gt) == 1.0);
  CHECK(weighted_f_measure(empty_pred, empty_gt) == 1.0);
  CHECK(s_measure(empty_pred, empty_gt) == 1.0);
  CHECK(e_measure_max(empty_pred, empty_gt) == 1.0);
  CHECK(mae_score(empty_pred, empty_gt) == 0.0);

  CHECK(dice_score(some_pred, empty_gt) == 0.0);
  CHECK(iou_score(some_pred, empty_gt) == 0.0);
  CHECK(weighted_f_measure(some_pred, empty_gt) == 0.0);
  CHECK(s_measure(some_pred, empty_gt) == 0.0);
  CHECK(e_measure_max(some_pred, empty_gt) == 0.0);
}

TEST_CASE("moving the prediction toward the target never lowers the dice score") {
  Rng rng(6);
  const Tensor gt = random_mask(8, 8, rng);
  const Tensor noise = random_pred(8, 8, rng);
  double prev = -1.0;
  for (double t = 0.0; t <= 1.0001; t += 0.05) {
    Tensor blended({1, 8, 8});
    for (i64 i = 0; i < 64; ++i) blended[i] = t * gt[i] + (1.0 - t) * noise[i];
    const double d = dice_score(blended, gt);
    CHECK(d >= prev - 1e-12);
    prev = d;
  }
  CHECK(prev == 1.0);
}

TEST_CASE("metrics validate their inputs") {
  CHECK_THROWS_AS(dice_score(Tensor({1, 4, 4}), Tensor({1, 5, 5})), std::invalid_argument);
  CHECK_THROWS_AS(dice_score(Tensor({1, 4, 4}), Tensor::full({1, 4, 4}, 0.25)), std::invalid_argument);
}

TEST_CASE("dataset evaluation averages per-image scores") {
  Rng rng(7);
  const Tensor gt1 = random_mask(8, 8, rng), gt2 = random_mask(8, 8, rng);
  const MetricsReport report = evaluate_dataset({"a", "b"}, {gt1, random_pred(8, 8, rng)}, {gt1, gt2});
  REQUIRE(report.per_image.size() == 2);
  const double want =
      (report.per_image[0].second.mdice + report.per_image[1].second.mdice) / 2.0;
  CHECK(report.dataset_mean.mdice == doctest::Approx(want).epsilon(1e-15));
  CHECK(report.per_image[0].second.mdice == 1.0);
}
