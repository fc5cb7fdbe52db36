#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "megalap/data.hpp"
#include "megalap/pyramid.hpp"

using namespace megalap;
namespace fs = std::filesystem;

namespace {

SynthConfig small_cfg(uint64_t seed, double softness = 0.0) {
  SynthConfig cfg;
  cfg.count = 3;
  cfg.height = 64;
  cfg.width = 64;
  cfg.seed = seed;
  cfg.boundary_softness = softness;
  return cfg;
}

// Mean gradient magnitude of the luma image over mask-boundary pixels.
double boundary_gradient(const Sample& s) {
  const Tensor luma = luminance(s.image);
  const i64 h = luma.extent(1), w = luma.extent(2);
  double acc = 0;
  i64 count = 0;
  for (i64 y = 1; y < h - 1; ++y)
    for (i64 x = 1; x < w - 1; ++x) {
      const bool edge = s.mask.at3(0, y, x) != s.mask.at3(0, y, x + 1) ||
                        s.mask.at3(0, y, x) != s.mask.at3(0, y + 1, x);
      if (!edge) continue;
      const double gx = (luma.at3(0, y, x + 1) - luma.at3(0, y, x - 1)) / 2.0;
      const double gy = (luma.at3(0, y + 1, x) - luma.at3(0, y - 1, x)) / 2.0;
      acc += std::hypot(gx, gy);
      ++count;
    }
  return count ? acc / static_cast<double>(count) : 0.0;
}

}  // namespace

TEST_CASE("generation is deterministic for a fixed seed") {
  const auto a = generate_samples(small_cfg(99));
  const auto b = generate_samples(small_cfg(99));
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == b[i].id);
    for (i64 j = 0; j < a[i].image.numel(); ++j) CHECK(a[i].image[j] == b[i].image[j]);
    for (i64 j = 0; j < a[i].mask.numel(); ++j) CHECK(a[i].mask[j] == b[i].mask[j]);
  }
  const auto c = generate_samples(small_cfg(100));
  bool any_diff = false;
  for (i64 j = 0; j < a[0].image.numel(); ++j) any_diff |= a[0].image[j] != c[0].image[j];
  CHECK(any_diff);
}

TEST_CASE("samples are well-formed: image in [0,1], binary mask, nonempty foreground") {
  for (const Sample& s : generate_samples(small_cfg(3))) {
    CHECK(s.image.shape() == std::vector<i64>{3, 64, 64});
    CHECK(s.mask.shape() == std::vector<i64>{1, 64, 64});
    for (i64 i = 0; i < s.image.numel(); ++i) {
      CHECK(s.image[i] >= 0.0);
      CHECK(s.image[i] <= 1.0);
    }
    double fg = 0;
    for (i64 i = 0; i < s.mask.numel(); ++i) {
      CHECK((s.mask[i] == 0.0 || s.mask[i] == 1.0));
      fg += s.mask[i];
    }
    CHECK(fg > 0);
  }
}

TEST_CASE("zero softness puts a hard step exactly on the mask boundary") {
  const auto samples = generate_samples(small_cfg(17, 0.0));
  const Sample& s = samples[0];
  const Tensor luma = luminance(s.image);
  // across every boundary edge, inside is brighter than outside by at least
  // half the configured contrast minus the texture amplitude
  i64 edges = 0;
  for (i64 y = 0; y < 64; ++y)
    for (i64 x = 0; x + 1 < 64; ++x) {
      if (s.mask.at3(0, y, x) == s.mask.at3(0, y, x + 1)) continue;
      ++edges;
      const double inside = s.mask.at3(0, y, x) == 1.0 ? luma.at3(0, y, x) : luma.at3(0, y, x + 1);
      const double outside = s.mask.at3(0, y, x) == 1.0 ? luma.at3(0, y, x + 1) : luma.at3(0, y, x);
      CHECK(inside - outside > 0.5 - 2 * 0.08);
    }
  CHECK(edges > 0);
}

TEST_CASE("boundary sharpness decreases monotonically with the softness parameter") {
  double prev = 1e9;
  for (double softness : {0.0, 2.0, 4.0, 8.0}) {
    const auto samples = generate_samples(small_cfg(23, softness));
    double g = 0;
    for (const Sample& s : samples) g += boundary_gradient(s);
    g /= static_cast<double>(samples.size());
    CHECK(g < prev);
    prev = g;
  }
}

TEST_CASE("an identity augmentation draw leaves the sample unchanged") {
  // find a seed whose first draws are (no flip, no flip, 0 turns, scale 1)
  uint64_t identity_seed = 0;
  bool found = false;
  for (uint64_t seed = 0; seed < 500 && !found; ++seed) {
    Rng probe(seed);
    const bool f1 = probe.coin(), f2 = probe.coin();
    const i64 turns = probe.uniform_int(0, 3);
    const i64 scale_idx = probe.uniform_int(0, 2);
    if (!f1 && !f2 && turns == 0 && scale_idx == 1) {
      identity_seed = seed;
      found = true;
    }
  }
  REQUIRE(found);
  const Sample s = generate_samples(small_cfg(31))[0];
  Rng rng(identity_seed);
  const Sample out = augment(s, rng);
  for (i64 i = 0; i < s.image.numel(); ++i) CHECK(out.image[i] == s.image[i]);
  for (i64 i = 0; i < s.mask.numel(); ++i) CHECK(out.mask[i] == s.mask[i]);
}

TEST_CASE("flips are involutions and quarter turns cycle back") {
  const Sample s = generate_samples(small_cfg(37))[0];
  const Tensor hh = flip_horizontal(flip_horizontal(s.image));
  for (i64 i = 0; i < s.image.numel(); ++i) CHECK(hh[i] == s.image[i]);
  const Tensor vv = flip_vertical(flip_vertical(s.image));
  for (i64 i = 0; i < s.image.numel(); ++i) CHECK(vv[i] == s.image[i]);
  Tensor r = s.image;
  for (int k = 0; k < 4; ++k) r = rotate_quarter(r);
  for (i64 i = 0; i < s.image.numel(); ++i) CHECK(r[i] == s.image[i]);
}

TEST_CASE("augmentation preserves binarity, range and mask/image co-location") {
  const Sample s = generate_samples(small_cfg(41, 0.0))[0];
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Sample out = augment(s, rng);
    CHECK(out.image.shape() == s.image.shape());
    CHECK(out.mask.shape() == s.mask.shape());
    for (i64 i = 0; i < out.image.numel(); ++i) {
      CHECK(out.image[i] >= 0.0);
      CHECK(out.image[i] <= 1.0);
    }
    for (i64 i = 0; i < out.mask.numel(); ++i) CHECK((out.mask[i] == 0.0 || out.mask[i] == 1.0));

    // the intensity step must stay on the transformed mask boundary
    double fg_sum = 0, bg_sum = 0;
    i64 fg_n = 0, bg_n = 0;
    const Tensor luma = luminance(out.image);
    for (i64 y = 0; y < 64; ++y)
      for (i64 x = 0; x + 1 < 64; ++x) {
        if (out.mask.at3(0, y, x) == out.mask.at3(0, y, x + 1)) continue;
        const bool left_fg = out.mask.at3(0, y, x) == 1.0;
        fg_sum += luma.at3(0, y, left_fg ? x : x + 1);
        bg_sum += luma.at3(0, y, left_fg ? x + 1 : x);
        ++fg_n;
        ++bg_n;
      }
    if (fg_n > 0) CHECK(fg_sum / fg_n - bg_sum / bg_n > 0.2);
  }
}

TEST_CASE("scaled mask area matches an independent nearest resampler within a boundary ring") {
  const Sample s = generate_samples(small_cfg(43, 0.0))[0];
  // force the scale-1.25 branch
  uint64_t seed = 0;
  for (uint64_t probe_seed = 0;; ++probe_seed) {
    Rng probe(probe_seed);
    probe.coin();
    probe.coin();
    probe.uniform_int(0, 3);
    if (probe.uniform_int(0, 2) == 2) {
      seed = probe_seed;
      break;
    }
  }
  Rng rng(seed);
  const bool f1 = rng.coin(), f2 = rng.coin();
  const i64 turns = rng.uniform_int(0, 3);
  (void)rng.uniform_int(0, 2);
  Rng rng2(seed);
  const Sample out = augment(s, rng2);

  // independent oracle: inverse-mapped nearest lookup at scale 1.25, then
  // center crop, applied to the same flipped/rotated mask
  Tensor base = s.mask;
  if (f1) base = flip_horizontal(base);
  if (f2) base = flip_vertical(base);
  for (i64 k = 0; k < turns; ++k) base = rotate_quarter(base);
  const i64 sh = 80, sw = 80;
  Tensor scaled({1, sh, sw});
  i64 ring = 0;
  for (i64 y = 0; y < sh; ++y)
    for (i64 x = 0; x < sw; ++x) {
      const i64 sy = std::clamp<i64>(static_cast<i64>(std::floor(static_cast<double>(y) / 1.25 + 0.5)), 0, 63);
      const i64 sx = std::clamp<i64>(static_cast<i64>(std::floor(static_cast<double>(x) / 1.25 + 0.5)), 0, 63);
      scaled.at3(0, y, x) = base.at3(0, sy, sx);
    }
  double oracle_area = 0, impl_area = 0;
  for (i64 y = 0; y < 64; ++y)
    for (i64 x = 0; x < 64; ++x) {
      oracle_area += scaled.at3(0, y + 8, x + 8);
      impl_area += out.mask.at3(0, y, x);
      const bool edge = x + 1 < 64 && out.mask.at3(0, y, x) != out.mask.at3(0, y, x + 1);
      ring += edge;
    }
  CHECK(std::fabs(oracle_area - impl_area) <= static_cast<double>(2 * ring));
}

TEST_CASE("dataset directory round-trip") {
  const std::string dir = (fs::temp_directory_path() / "megalap_ds_test").string();
  fs::remove_all(dir);
  const auto samples = generate_samples(small_cfg(51));
  write_dataset(dir, samples, 0.34);  // 3 samples -> 2 train, 1 val
  const Dataset ds = load_dataset(dir);
  CHECK(ds.train.size() == 2);
  CHECK(ds.val.size() == 1);
  // masks round-trip exactly; images are 8-bit quantized
  for (i64 i = 0; i < samples[0].mask.numel(); ++i) CHECK(ds.train[0].mask[i] == samples[0].mask[i]);
  for (i64 i = 0; i < samples[0].image.numel(); ++i) {
    const double quantized = std::lround(samples[0].image[i] * 255.0) / 255.0;
    CHECK(ds.train[0].image[i] == doctest::Approx(quantized).epsilon(1e-12));
  }
  fs::remove_all(dir);
}
