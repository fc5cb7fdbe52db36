#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "megalap/loss.hpp"
#include "megalap/params.hpp"

using namespace megalap;

TEST_CASE("confident correct logits drive both losses to zero") {
  Tape tape;
  Var logit = tape.constant(Tensor::full({1, 1, 4, 4}, 50.0));
  const Tensor gt = Tensor::full({1, 1, 4, 4}, 1.0);
  CHECK(bce_loss(logit, gt).value()[0] < 1e-12);
  CHECK(dice_loss(logit, gt).value()[0] < 1e-6);
}

TEST_CASE("zero logits against a half-ones target give BCE = ln 2") {
  Tape tape;
  Var logit = tape.constant(Tensor({1, 1, 4, 4}));
  Tensor gt({1, 1, 4, 4});
  for (i64 i = 0; i < 8; ++i) gt[i] = 1.0;
  CHECK(bce_loss(logit, gt).value()[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("losses reject non-binary ground truth") {
  Tape tape;
  Var logit = tape.constant(Tensor({1, 1, 2, 2}));
  CHECK_THROWS_AS(bce_loss(logit, Tensor::full({1, 1, 2, 2}, 0.3)), std::invalid_argument);
  CHECK_THROWS_AS(dice_loss(logit, Tensor::full({1, 1, 2, 2}, 0.3)), std::invalid_argument);
}

TEST_CASE("single-level total equals bce + dice") {
  Rng rng(1);
  Tensor lv({1, 1, 4, 4});
  Tensor gt({1, 1, 4, 4});
  for (i64 i = 0; i < 16; ++i) {
    lv[i] = rng.uniform(-2, 2);
    gt[i] = rng.coin() ? 1.0 : 0.0;
  }
  Tape tape;
  Var logit = tape.constant(lv);
  const double total = total_loss({logit}, {gt}).value()[0];
  const double parts = bce_loss(logit, gt).value()[0] + dice_loss(logit, gt).value()[0];
  CHECK(total == doctest::Approx(parts).epsilon(1e-14));
}

TEST_CASE("total loss is permutation-invariant and matches per-level summation") {
  Rng rng(2);
  Tape tape;
  std::vector<Var> logits;
  std::vector<Tensor> gts;
  for (i64 extent : {8, 4, 2}) {
    Tensor lv({1, 1, extent, extent}), gt({1, 1, extent, extent});
    for (i64 i = 0; i < lv.numel(); ++i) {
      lv[i] = rng.uniform(-2, 2);
      gt[i] = rng.coin() ? 1.0 : 0.0;
    }
    logits.push_back(tape.constant(lv));
    gts.push_back(gt);
  }
  const double forward_order = total_loss(logits, gts).value()[0];

  std::vector<Var> rev_logits(logits.rbegin(), logits.rend());
  std::vector<Tensor> rev_gts(gts.rbegin(), gts.rend());
  CHECK(total_loss(rev_logits, rev_gts).value()[0] == doctest::Approx(forward_order).epsilon(1e-14));

  double manual = 0;
  for (size_t i = 0; i < logits.size(); ++i)
    manual += bce_loss(logits[i], gts[i]).value()[0] + dice_loss(logits[i], gts[i]).value()[0];
  CHECK(std::fabs(forward_order - manual) < 1e-12);

  CHECK(forward_order >= 0.0);
  CHECK_THROWS_AS(total_loss(logits, {gts[0]}), std::invalid_argument);
}

TEST_CASE("ground-truth pyramid: full masks stay full, checkerboard ties go to one") {
  const auto full = downscale_gt(Tensor::full({1, 16, 16}, 1.0), 3);
  REQUIRE(full.size() == 3);
  for (const Tensor& lv : full)
    for (i64 i = 0; i < lv.numel(); ++i) CHECK(lv[i] == 1.0);

  const auto empty = downscale_gt(Tensor({1, 16, 16}), 3);
  for (const Tensor& lv : empty)
    for (i64 i = 0; i < lv.numel(); ++i) CHECK(lv[i] == 0.0);

  Tensor checker({1, 16, 16});
  for (i64 y = 0; y < 16; ++y)
    for (i64 x = 0; x < 16; ++x) checker.at3(0, y, x) = static_cast<double>((x + y) % 2);
  for (const Tensor& lv : downscale_gt(checker, 3))
    for (i64 i = 0; i < lv.numel(); ++i) CHECK(lv[i] == 1.0);  // average 0.5, tie -> 1
}

TEST_CASE("ground-truth pyramid matches a brute-force block average") {
  Rng rng(3);
  Tensor mask({1, 32, 32});
  for (i64 i = 0; i < mask.numel(); ++i) mask[i] = rng.coin() ? 1.0 : 0.0;
  const auto levels = downscale_gt(mask, 4);
  for (int lv = 0; lv < 4; ++lv) {
    const i64 f = i64{1} << (lv + 1);
    const i64 oh = 32 / f;
    for (i64 y = 0; y < oh; ++y)
      for (i64 x = 0; x < oh; ++x) {
        double s = 0;
        for (i64 dy = 0; dy < f; ++dy)
          for (i64 dx = 0; dx < f; ++dx) s += mask.at3(0, y * f + dy, x * f + dx);
        const double want = s / static_cast<double>(f * f) >= 0.5 ? 1.0 : 0.0;
        CHECK(levels[static_cast<size_t>(lv)].at3(0, y, x) == want);
      }
  }
}

TEST_CASE("downscale_gt validates shape and divisibility") {
  CHECK_THROWS_AS(downscale_gt(Tensor({1, 20, 20}), 3), std::invalid_argument);
  CHECK_THROWS_AS(downscale_gt(Tensor({2, 16, 16}), 2), std::invalid_argument);
}

TEST_CASE("stacking masks preserves order and shape") {
  Tensor a = Tensor::full({1, 2, 2}, 1.0);
  Tensor b = Tensor({1, 2, 2});
  const Tensor stacked = stack_masks({a, b});
  CHECK(stacked.shape() == std::vector<i64>{2, 1, 2, 2});
  CHECK(stacked[0] == 1.0);
  CHECK(stacked[4] == 0.0);
}
