#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "megalap/params.hpp"
#include "megalap/pyramid.hpp"
#include "oracles.hpp"

using namespace megalap;

namespace {

Tensor random_image(i64 h, i64 w, Rng& rng) {
  Tensor t({1, h, w});
  for (i64 i = 0; i < t.numel(); ++i) t[i] = rng.uniform();
  return t;
}

// Sharp disc on a flat background, RGB.
Tensor disc_rgb(i64 h, i64 w, double cy, double cx, double r) {
  Tensor t({3, h, w});
  for (i64 y = 0; y < h; ++y)
    for (i64 x = 0; x < w; ++x) {
      const bool inside = std::hypot(static_cast<double>(y) - cy, static_cast<double>(x) - cx) <= r;
      for (i64 c = 0; c < 3; ++c) t.at3(c, y, x) = inside ? 0.8 : 0.3;
    }
  return t;
}

// Fraction of the top-decile mass (the highest 10% of pixels by value)
// lying where `near` is true.
double top_decile_mass_fraction(const Tensor& map, const std::vector<bool>& near) {
  std::vector<i64> idx(static_cast<size_t>(map.numel()));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](i64 a, i64 b) { return map[a] > map[b]; });
  const i64 top = std::max<i64>(map.numel() / 10, 1);
  double total = 0, inside = 0;
  for (i64 k = 0; k < top; ++k) {
    total += map[idx[static_cast<size_t>(k)]];
    if (near[static_cast<size_t>(idx[static_cast<size_t>(k)])]) inside += map[idx[static_cast<size_t>(k)]];
  }
  return total > 0 ? inside / total : 0.0;
}

}  // namespace

TEST_CASE("blur preserves constants exactly") {
  Tensor img = Tensor::full({1, 12, 9}, 0.37);
  Tensor out = gaussian_blur(img);
  for (i64 i = 0; i < out.numel(); ++i) CHECK(out[i] == doctest::Approx(0.37).epsilon(1e-15));
}

TEST_CASE("blur of a centered impulse is the separable binomial stencil") {
  Tensor img({1, 9, 9});
  img.at3(0, 4, 4) = 1.0;
  const Tensor out = gaussian_blur(img);
  const double k[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  for (i64 y = 0; y < 9; ++y)
    for (i64 x = 0; x < 9; ++x) {
      const double want =
          (std::abs(y - 4) <= 2 && std::abs(x - 4) <= 2) ? k[y - 4 + 2] * k[x - 4 + 2] : 0.0;
      CHECK(out.at3(0, y, x) == doctest::Approx(want).epsilon(1e-14));
    }
}

TEST_CASE("separable blur matches the brute-force 2-D convolution") {
  Rng rng(7);
  const Tensor img = random_image(16, 16, rng);
  const Tensor fast = gaussian_blur(img);
  const Tensor ref = oracles::blur5_naive(img);
  for (i64 i = 0; i < img.numel(); ++i) CHECK(std::fabs(fast[i] - ref[i]) < 1e-12);
}

TEST_CASE("blur rejects images smaller than the kernel") {
  CHECK_THROWS_AS(gaussian_blur(Tensor({1, 4, 9})), std::invalid_argument);
}

TEST_CASE("blur preserves the image mean under reflect borders") {
  Rng rng(9);
  const Tensor img = random_image(13, 17, rng);
  CHECK(std::fabs(mean(gaussian_blur(img)) - mean(img)) < 1e-12);
}

TEST_CASE("downsample keeps even indices and ceil-half extents") {
  Tensor c = Tensor::full({1, 4, 4}, 2.5);
  const Tensor dc = downsample(c);
  CHECK(dc.shape() == std::vector<i64>{1, 2, 2});
  for (i64 i = 0; i < dc.numel(); ++i) CHECK(dc[i] == 2.5);

  Tensor odd({1, 5, 5});
  for (i64 y = 0; y < 5; ++y)
    for (i64 x = 0; x < 5; ++x) odd.at3(0, y, x) = static_cast<double>(10 * y + x);
  const Tensor d = downsample(odd);
  CHECK(d.shape() == std::vector<i64>{1, 3, 3});
  for (i64 y = 0; y < 3; ++y)
    for (i64 x = 0; x < 3; ++x) CHECK(d.at3(0, y, x) == doctest::Approx(10.0 * (2 * y) + 2 * x));
}

TEST_CASE("upsample(downsample(ramp)) reproduces the ramp within 2% away from borders") {
  Tensor ramp({1, 64, 64});
  for (i64 y = 0; y < 64; ++y)
    for (i64 x = 0; x < 64; ++x) ramp.at3(0, y, x) = 1.0 + static_cast<double>(x);
  const Tensor rec = upsample(downsample(ramp), 64, 64);
  for (i64 y = 4; y < 60; ++y)
    for (i64 x = 4; x < 60; ++x) {
      const double want = ramp.at3(0, y, x);
      CHECK(std::fabs(rec.at3(0, y, x) - want) / want < 0.02);
    }
}

TEST_CASE("upsample refuses to shrink") {
  CHECK_THROWS_AS(upsample(Tensor({1, 8, 8}), 4, 4), std::invalid_argument);
}

TEST_CASE("pyramid of a constant image has exactly zero band-pass levels") {
  const PyramidStack stack = build_pyramid(Tensor::full({1, 40, 40}, 0.61), 3);
  for (const Tensor& band : stack.band_pass)
    for (i64 i = 0; i < band.numel(); ++i) CHECK(band[i] == 0.0);
}

TEST_CASE("reconstruction identity holds to 1e-12 for random images and depths") {
  Rng rng(21);
  for (int k = 2; k <= 4; ++k) {
    const Tensor img = random_image(80, 80, rng);
    const PyramidStack stack = build_pyramid(img, k);
    REQUIRE(stack.gaussian.size() == static_cast<size_t>(k + 1));
    REQUIRE(stack.band_pass.size() == static_cast<size_t>(k));
    for (int lv = 0; lv < k; ++lv) {
      const Tensor& cur = stack.gaussian[static_cast<size_t>(lv)];
      const Tensor up = upsample(stack.gaussian[static_cast<size_t>(lv + 1)], cur.extent(1), cur.extent(2));
      for (i64 i = 0; i < cur.numel(); ++i)
        CHECK(std::fabs(cur[i] - (stack.band_pass[static_cast<size_t>(lv)][i] + up[i])) < 1e-12);
    }
  }
}

TEST_CASE("pyramid depth limit errors out") {
  CHECK_THROWS_WITH_AS(build_pyramid(Tensor({1, 32, 32}), 5), doctest::Contains("too deep"),
                       std::invalid_argument);
  CHECK_NOTHROW(build_pyramid(Tensor({1, 32, 32}), 4));
}

TEST_CASE("step edge concentrates the level-1 band-pass response") {
  Tensor img({1, 64, 64});
  for (i64 y = 0; y < 64; ++y)
    for (i64 x = 0; x < 64; ++x) img.at3(0, y, x) = x < 32 ? 0.2 : 0.9;
  const PyramidStack stack = build_pyramid(img, 2);
  const Tensor& l1 = stack.band_pass[1];  // 32x32, edge near column 16
  double band_max = 0, far_max = 0;
  for (i64 y = 0; y < l1.extent(1); ++y)
    for (i64 x = 0; x < l1.extent(2); ++x) {
      const double v = std::fabs(l1.at3(0, y, x));
      if (std::abs(x - 16) <= 3)
        band_max = std::max(band_max, v);
      else if (std::abs(x - 16) >= 8)
        far_max = std::max(far_max, v);
    }
  CHECK(band_max > 10.0 * far_max);
}

TEST_CASE("shift covariance: a 2 px shift moves the downsampled level by 1 px") {
  Tensor a({1, 33, 33}), b({1, 33, 33});
  a.at3(0, 16, 14) = 1.0;
  b.at3(0, 16, 16) = 1.0;  // shifted +2 in x
  const Tensor da = downsample(gaussian_blur(a));
  const Tensor db = downsample(gaussian_blur(b));
  for (i64 y = 4; y < 13; ++y)
    for (i64 x = 4; x < 12; ++x) CHECK(db.at3(0, y, x) == doctest::Approx(da.at3(0, y, x - 1)).epsilon(1e-12));
}

TEST_CASE("high-frequency base map: constant image gives exact zeros, extents are ceil-half") {
  const Tensor hf = high_freq_base(Tensor::full({3, 64, 64}, 0.5));
  CHECK(hf.shape() == std::vector<i64>{1, 32, 32});
  for (i64 i = 0; i < hf.numel(); ++i) CHECK(hf[i] == 0.0);
  CHECK(high_freq_base(Tensor({3, 65, 65})).shape() == std::vector<i64>{1, 33, 33});
}

TEST_CASE("high-frequency map of a disc concentrates on the rim") {
  const double cy = 32, cx = 32, r = 20;
  const Tensor hf = high_freq_base(disc_rgb(64, 64, cy, cx, r));  // 32x32
  std::vector<bool> near(static_cast<size_t>(hf.numel()));
  for (i64 y = 0; y < 32; ++y)
    for (i64 x = 0; x < 32; ++x) {
      // level pixel (y,x) sits on original pixel (2y,2x)
      const double d = std::fabs(std::hypot(2.0 * y - cy, 2.0 * x - cx) - r) / 2.0;
      near[static_cast<size_t>(y * 32 + x)] = d <= 3.0;
    }
  CHECK(top_decile_mass_fraction(hf, near) >= 0.8);
}

TEST_CASE("high-frequency set: single level equals the base map, extents halve per level") {
  Rng rng(4);
  Tensor img({3, 64, 64});
  for (i64 i = 0; i < img.numel(); ++i) img[i] = rng.uniform();
  const Tensor base = high_freq_base(img);
  const HighFreqSet one = high_freq_set(img, 1, HfDerivation::BaseDownsample);
  REQUIRE(one.levels.size() == 1);
  for (i64 i = 0; i < base.numel(); ++i) CHECK(one.levels[0][i] == base[i]);

  const HighFreqSet three = high_freq_set(img, 3, HfDerivation::BaseDownsample);
  CHECK(three.levels[0].shape() == std::vector<i64>{1, 32, 32});
  CHECK(three.levels[1].shape() == std::vector<i64>{1, 16, 16});
  CHECK(three.levels[2].shape() == std::vector<i64>{1, 8, 8});

  const HighFreqSet per_level = high_freq_set(img, 3, HfDerivation::PerLevelBandPass);
  for (int lv = 0; lv < 3; ++lv) {
    CHECK(per_level.levels[static_cast<size_t>(lv)].shape() == three.levels[static_cast<size_t>(lv)].shape());
    for (i64 i = 0; i < per_level.levels[static_cast<size_t>(lv)].numel(); ++i) {
      CHECK(per_level.levels[static_cast<size_t>(lv)][i] >= 0.0);
      CHECK(per_level.levels[static_cast<size_t>(lv)][i] <= 1.0);
    }
  }
}

TEST_CASE("base-derived level 2 keeps more rim energy than the per-level band-pass") {
  // Measured on raw magnitudes (per-level min-max normalization would mask
  // the loss) and on a small disc: repeated filtering erodes fine detail,
  // which is what the base derivation is there to keep.
  auto top_decile_sum = [](const Tensor& map) {
    std::vector<double> vals(map.data(), map.data() + map.numel());
    std::sort(vals.begin(), vals.end(), std::greater<>());
    const size_t top = std::max<size_t>(vals.size() / 10, 1);
    double s = 0;
    for (size_t i = 0; i < top; ++i) s += vals[i];
    return s;
  };
  for (double r : {3.0, 4.0}) {
    const Tensor img = disc_rgb(64, 64, 32, 32, r);
    const HighFreqSet base = high_freq_set(img, 3, HfDerivation::BaseDownsample, /*normalize=*/false);
    const HighFreqSet per_level = high_freq_set(img, 3, HfDerivation::PerLevelBandPass, /*normalize=*/false);
    CHECK(top_decile_sum(base.levels[2]) > top_decile_sum(per_level.levels[2]));
  }
}

TEST_CASE("high-frequency values stay in [0,1] and vanish for constant inputs") {
  Rng rng(40);
  Tensor img({3, 64, 64});
  for (i64 i = 0; i < img.numel(); ++i) img[i] = rng.uniform();
  for (auto derivation : {HfDerivation::BaseDownsample, HfDerivation::PerLevelBandPass}) {
    const HighFreqSet set = high_freq_set(img, 4, derivation);
    for (const Tensor& lv : set.levels)
      for (i64 i = 0; i < lv.numel(); ++i) {
        CHECK(lv[i] >= 0.0);
        CHECK(lv[i] <= 1.0);
      }
  }
  const HighFreqSet flat = high_freq_set(Tensor::full({3, 64, 64}, 0.25), 4, HfDerivation::BaseDownsample);
  for (const Tensor& lv : flat.levels)
    for (i64 i = 0; i < lv.numel(); ++i) CHECK(lv[i] == 0.0);
}
