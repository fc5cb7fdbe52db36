#pragma once

#include <string>
#include <vector>

#include "megalap/tensor.hpp"

namespace megalap {

/// The six evaluation scores for one prediction/ground-truth pair. All six
/// live in [0,1]; mae is the only lower-is-better one.
struct MetricScores {
  double mdice = 0;
  double miou = 0;
  double f_beta_w = 0;
  double s_alpha = 0;
  double e_phi_max = 0;
  double mae = 0;
};

struct MetricsReport {
  std::vector<std::pair<std::string, MetricScores>> per_image;
  MetricScores dataset_mean;
};

// pred holds values in [0,1] (continuous), gt is binary {0,1}. Both are
// [H,W] or [1,H,W] with equal extents. Overlap metrics binarize pred at 0.5
// (>= 0.5 counts as foreground); mae uses the continuous map.
//
// Degenerate ground truth (no foreground at all) is scored by the documented
// convention: 1 when the binarized prediction is also empty, else 0. This
// applies to dice, iou, the weighted F-measure, the structure measure and
// the alignment measure; mae needs no convention.

double dice_score(const Tensor& pred, const Tensor& gt);
double iou_score(const Tensor& pred, const Tensor& gt);
double mae_score(const Tensor& pred, const Tensor& gt);

/// Weighted F-measure with beta^2 = 1: errors are propagated from the
/// nearest foreground pixel, smoothed with a 7x7 sigma-5 Gaussian
/// (zero-padded), and weighted by exp-decaying importance over the exact
/// Euclidean distance transform.
double weighted_f_measure(const Tensor& pred, const Tensor& gt);

/// Structure measure with alpha = 0.5: mean of the object-aware term
/// (foreground/background contrast statistics) and the region-aware term
/// (SSIM-style scores of the four quadrants around the foreground centroid).
/// A ground truth that is all foreground scores mean(pred), following the
/// original construction.
double s_measure(const Tensor& pred, const Tensor& gt);

/// Enhanced-alignment measure maximized over 256 binarization thresholds
/// (the midpoints (j+0.5)/256, so a binary prediction binarizes to itself at
/// every threshold). The per-threshold score is the mean of the enhanced
/// alignment matrix; normalizing by N rather than the customary N-1 keeps the
/// score in [0,1] and makes a perfect match score exactly 1 at small sizes.
double e_measure_max(const Tensor& pred, const Tensor& gt);

MetricScores evaluate_pair(const Tensor& pred, const Tensor& gt);
MetricsReport evaluate_dataset(const std::vector<std::string>& ids, const std::vector<Tensor>& preds,
                               const std::vector<Tensor>& gts);

/// Exact Euclidean distance transform with the index of the nearest member
/// pixel. Two passes (per-column then per-row scans). Ties resolve to the
/// smallest row-major index. Pixels in the set get distance 0 and themselves.
/// Members with value 0 everywhere yield infinite distances.
void distance_to_set(const std::vector<uint8_t>& member, i64 h, i64 w, std::vector<double>& dist,
                     std::vector<i64>& nearest);

}  // namespace megalap
