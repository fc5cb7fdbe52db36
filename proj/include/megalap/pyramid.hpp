#pragma once

#include <vector>

#include "megalap/tensor.hpp"

namespace megalap {

/// Gaussian levels I_0..I_K and the band-pass levels L_0..L_{K-1} of one
/// single-channel image. By construction I_k = L_k + upsample(I_{k+1}) holds
/// exactly (the same interpolation is reapplied bit-for-bit).
struct PyramidStack {
  std::vector<Tensor> gaussian;   // K+1 entries, gaussian[0] is the input
  std::vector<Tensor> band_pass;  // K entries
};

enum class HfDerivation { BaseDownsample, PerLevelBandPass };

/// High-frequency attention maps, one per decoder level that consumes one.
struct HighFreqSet {
  std::vector<Tensor> levels;  // [1,H_i,W_i], values in [0,1] when normalized
  HfDerivation derivation = HfDerivation::BaseDownsample;
};

/// Separable 5-tap binomial filter [1,4,6,4,1]/16 with symmetric
/// (edge-inclusive) reflection. Preserves constants and the image mean
/// exactly. Requires extents of at least 5 (the kernel width).
Tensor gaussian_blur(const Tensor& img);

/// Keeps even-indexed rows/columns (ceil-half extents). No extra smoothing;
/// the blur belongs to the pyramid's filter step.
Tensor downsample(const Tensor& img);

/// Bilinear interpolation to exactly (out_h, out_w), endpoint-aligned.
/// Only enlargement is allowed here; see resize_bilinear for the general case.
Tensor upsample(const Tensor& img, i64 out_h, i64 out_w);

/// General bilinear resize (either direction), same sampling convention.
Tensor resize_bilinear(const Tensor& img, i64 out_h, i64 out_w);

/// Builds levels I_1..I_K by blur + 2x subsample and the band-pass levels
/// L_k = I_k - upsample(I_{k+1}). Every blurred level must keep at least
/// 3 px on its short side (the reflected stencil's support), i.e.
/// min(H,W) / 2^(K-1) >= 3.
PyramidStack build_pyramid(const Tensor& img, int levels);

/// Rec. 601 luma: 0.299 R + 0.587 G + 0.114 B. [3,H,W] -> [1,H,W].
Tensor luminance(const Tensor& rgb);

/// |x| then per-image min-max to [0,1]; constant inputs map to exact zeros.
Tensor abs_minmax_normalize(const Tensor& t);

/// Base high-frequency map: |L_1| of the luma image, optionally normalized.
/// Output extents are ceil(H/2) x ceil(W/2).
Tensor high_freq_base(const Tensor& rgb, bool normalize = true);

/// One map per level 0..num_levels-1, each at the extents of the matching
/// encoder feature (halving per level). BaseDownsample repeatedly subsamples
/// the base map; PerLevelBandPass normalizes |L_i| and resizes it down to the
/// level extents.
HighFreqSet high_freq_set(const Tensor& rgb, int num_levels, HfDerivation derivation, bool normalize = true);

}  // namespace megalap
