#include "megalap/pyramid.hpp"

#include <cmath>
#include <stdexcept>

#include "megalap/autodiff.hpp"  // reflect_index, lerp_taps

namespace megalap {

namespace {

void spatial_extents(const Tensor& t, i64& n, i64& h, i64& w) {
  if (t.rank() < 2) throw std::invalid_argument("expected an image tensor, got " + shape_string(t.shape()));
  h = t.extent(t.rank() - 2);
  w = t.extent(t.rank() - 1);
  n = 1;
  for (i64 i = 0; i < t.rank() - 2; ++i) n *= t.extent(i);
}

std::vector<i64> with_extents(const Tensor& t, i64 h, i64 w) {
  std::vector<i64> s = t.shape();
  s[s.size() - 2] = h;
  s[s.size() - 1] = w;
  return s;
}

}  // namespace

namespace {

// One [1,2,1]/4 pass along an axis; two passes per axis give the 5-tap
// binomial. The (outer+outer) + 2*center grouping uses only power-of-two
// factors and equal-magnitude adds, so constants pass through bit-exactly
// and band-pass levels of constant images are exact zeros.
void smooth121(const Tensor& src, Tensor& dst, i64 n, i64 h, i64 w, bool vertical) {
  for (i64 p = 0; p < n; ++p) {
    const double* s = src.data() + p * h * w;
    double* d = dst.data() + p * h * w;
    for (i64 y = 0; y < h; ++y)
      for (i64 x = 0; x < w; ++x) {
        double lo, hi;
        if (vertical) {
          lo = s[reflect_index(y - 1, h) * w + x];
          hi = s[reflect_index(y + 1, h) * w + x];
        } else {
          lo = s[y * w + reflect_index(x - 1, w)];
          hi = s[y * w + reflect_index(x + 1, w)];
        }
        d[y * w + x] = ((lo + hi) + 2.0 * s[y * w + x]) * 0.25;
      }
  }
}

// Size-unchecked core; symmetric reflection is total down to tiny extents.
Tensor blur_core(const Tensor& img, i64 n, i64 h, i64 w) {
  Tensor a(img.shape()), b(img.shape());
  smooth121(img, a, n, h, w, false);
  smooth121(a, b, n, h, w, false);
  smooth121(b, a, n, h, w, true);
  smooth121(a, b, n, h, w, true);
  return b;
}

}  // namespace

Tensor gaussian_blur(const Tensor& img) {
  i64 n, h, w;
  spatial_extents(img, n, h, w);
  if (h < 5 || w < 5)
    throw std::invalid_argument("gaussian_blur: image " + std::to_string(h) + "x" + std::to_string(w) +
                                " is smaller than the 5-tap kernel");
  return blur_core(img, n, h, w);
}

Tensor downsample(const Tensor& img) {
  i64 n, h, w;
  spatial_extents(img, n, h, w);
  const i64 oh = (h + 1) / 2, ow = (w + 1) / 2;
  Tensor out(with_extents(img, oh, ow));
  for (i64 p = 0; p < n; ++p)
    for (i64 y = 0; y < oh; ++y)
      for (i64 x = 0; x < ow; ++x)
        out[(p * oh + y) * ow + x] = img[(p * h + 2 * y) * w + 2 * x];
  return out;
}

Tensor resize_bilinear(const Tensor& img, i64 out_h, i64 out_w) {
  i64 n, h, w;
  spatial_extents(img, n, h, w);
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_bilinear: target extents must be positive");
  const auto ytaps = lerp_taps(h, out_h);
  const auto xtaps = lerp_taps(w, out_w);
  Tensor out(with_extents(img, out_h, out_w));
  for (i64 p = 0; p < n; ++p) {
    const double* plane = img.data() + p * h * w;
    double* dst = out.data() + p * out_h * out_w;
    for (i64 y = 0; y < out_h; ++y) {
      const LerpTap ty = ytaps[static_cast<size_t>(y)];
      const double* rlo = plane + ty.lo * w;
      const double* rhi = plane + ty.hi * w;
      for (i64 x = 0; x < out_w; ++x) {
        const LerpTap tx = xtaps[static_cast<size_t>(x)];
        // a + w*(b-a) form: equal endpoints interpolate bit-exactly
        const double top = rlo[tx.lo] + tx.w_hi * (rlo[tx.hi] - rlo[tx.lo]);
        const double bot = rhi[tx.lo] + tx.w_hi * (rhi[tx.hi] - rhi[tx.lo]);
        dst[y * out_w + x] = top + ty.w_hi * (bot - top);
      }
    }
  }
  return out;
}

Tensor upsample(const Tensor& img, i64 out_h, i64 out_w) {
  const i64 h = img.extent(img.rank() - 2), w = img.extent(img.rank() - 1);
  if (out_h < h || out_w < w)
    throw std::invalid_argument("upsample: target " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                                " is smaller than source " + std::to_string(h) + "x" + std::to_string(w));
  return resize_bilinear(img, out_h, out_w);
}

PyramidStack build_pyramid(const Tensor& img, int levels) {
  i64 n, h, w;
  spatial_extents(img, n, h, w);
  if (n != 1) throw std::invalid_argument("build_pyramid: expected a single-channel image, got " + shape_string(img.shape()));
  if (levels < 1) throw std::invalid_argument("build_pyramid: need at least one level");
  // every level that gets blurred (0..levels-1) must keep enough support for
  // the reflected 5-tap stencil
  {
    i64 hh = h, ww = w;
    for (int k = 0; k < levels; ++k) {
      if (hh < 3 || ww < 3)
        throw std::invalid_argument("build_pyramid: " + std::to_string(levels) + " levels too deep for a " +
                                    std::to_string(h) + "x" + std::to_string(w) + " image (level " +
                                    std::to_string(k) + " is " + std::to_string(hh) + "x" + std::to_string(ww) + ")");
      hh = (hh + 1) / 2;
      ww = (ww + 1) / 2;
    }
  }

  PyramidStack stack;
  stack.gaussian.push_back(img);
  for (int k = 0; k < levels; ++k) {
    const Tensor& cur = stack.gaussian.back();
    stack.gaussian.push_back(downsample(blur_core(cur, 1, cur.extent(1), cur.extent(2))));
  }
  for (int k = 0; k < levels; ++k) {
    const Tensor& cur = stack.gaussian[static_cast<size_t>(k)];
    const Tensor up = upsample(stack.gaussian[static_cast<size_t>(k + 1)], cur.extent(cur.rank() - 2),
                               cur.extent(cur.rank() - 1));
    Tensor band(cur.shape());
    for (i64 i = 0; i < cur.numel(); ++i) band[i] = cur[i] - up[i];
    stack.band_pass.push_back(std::move(band));
  }
  return stack;
}

Tensor luminance(const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.extent(0) != 3)
    throw std::invalid_argument("luminance: expected [3,H,W], got " + shape_string(rgb.shape()));
  const i64 h = rgb.extent(1), w = rgb.extent(2);
  Tensor out({1, h, w});
  for (i64 i = 0; i < h * w; ++i)
    out[i] = 0.299 * rgb[i] + 0.587 * rgb[h * w + i] + 0.114 * rgb[2 * h * w + i];
  return out;
}

Tensor abs_minmax_normalize(const Tensor& t) {
  Tensor out(t.shape());
  for (i64 i = 0; i < t.numel(); ++i) out[i] = std::fabs(t[i]);
  const double lo = min_value(out), hi = max_value(out);
  const double range = hi - lo;
  if (range <= 0) {
    out.fill(0.0);
    return out;
  }
  for (i64 i = 0; i < out.numel(); ++i) out[i] = (out[i] - lo) / range;
  return out;
}

Tensor high_freq_base(const Tensor& rgb, bool normalize) {
  const PyramidStack stack = build_pyramid(luminance(rgb), 2);
  const Tensor& l1 = stack.band_pass[1];
  if (normalize) return abs_minmax_normalize(l1);
  Tensor out(l1.shape());
  for (i64 i = 0; i < l1.numel(); ++i) out[i] = std::fabs(l1[i]);
  return out;
}

HighFreqSet high_freq_set(const Tensor& rgb, int num_levels, HfDerivation derivation, bool normalize) {
  if (num_levels < 1) throw std::invalid_argument("high_freq_set: need at least one level");
  HighFreqSet set;
  set.derivation = derivation;
  if (derivation == HfDerivation::BaseDownsample) {
    Tensor level = high_freq_base(rgb, normalize);
    set.levels.push_back(level);
    for (int i = 1; i < num_levels; ++i) {
      level = downsample(level);
      set.levels.push_back(level);
    }
  } else {
    // Level i consumes the (i+1)-th band-pass image, which already sits on
    // the level-i grid (the same ceil-half chain the base derivation walks).
    const PyramidStack stack = build_pyramid(luminance(rgb), num_levels + 1);
    for (int i = 0; i < num_levels; ++i) {
      const Tensor& band = stack.band_pass[static_cast<size_t>(i + 1)];
      if (normalize) {
        set.levels.push_back(abs_minmax_normalize(band));
      } else {
        Tensor a(band.shape());
        for (i64 j = 0; j < a.numel(); ++j) a[j] = std::fabs(band[j]);
        set.levels.push_back(std::move(a));
      }
    }
  }
  return set;
}

}  // namespace megalap
