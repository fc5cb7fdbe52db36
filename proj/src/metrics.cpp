#include "megalap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace megalap {

namespace {

constexpr double kEps = 2.220446049250313e-16;

struct Pair {
  const double* pred;
  const double* gt;
  i64 h, w, n;
};

Pair check_pair(const Tensor& pred, const Tensor& gt) {
  if (pred.rank() < 2 || gt.rank() < 2)
    throw std::invalid_argument("metrics: expected [H,W] or [1,H,W] maps");
  require_same_shape(pred, gt, "metrics");
  for (i64 i = 0; i < pred.rank() - 2; ++i)
    if (pred.extent(i) != 1) throw std::invalid_argument("metrics: leading extents must be 1, got " + shape_string(pred.shape()));
  for (i64 i = 0; i < gt.numel(); ++i)
    if (gt[i] != 0.0 && gt[i] != 1.0)
      throw std::invalid_argument("metrics: ground truth must be binary, found " + std::to_string(gt[i]));
  Pair p;
  p.pred = pred.data();
  p.gt = gt.data();
  p.h = pred.extent(pred.rank() - 2);
  p.w = pred.extent(pred.rank() - 1);
  p.n = p.h * p.w;
  return p;
}

bool fg(double pred) { return pred >= 0.5; }

i64 gt_foreground(const Pair& p) {
  i64 c = 0;
  for (i64 i = 0; i < p.n; ++i) c += p.gt[i] != 0.0;
  return c;
}

// Convention for all-background ground truth: exact 1 when the binarized
// prediction is empty too, otherwise 0.
double empty_gt_score(const Pair& p) {
  for (i64 i = 0; i < p.n; ++i)
    if (fg(p.pred[i])) return 0.0;
  return 1.0;
}

}  // namespace

double dice_score(const Tensor& pred, const Tensor& gt) {
  const Pair p = check_pair(pred, gt);
  i64 inter = 0, a = 0, b = 0;
  for (i64 i = 0; i < p.n; ++i) {
    const bool pf = fg(p.pred[i]), gf = p.gt[i] != 0.0;
    inter += pf && gf;
    a += pf;
    b += gf;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

double iou_score(const Tensor& pred, const Tensor& gt) {
  const Pair p = check_pair(pred, gt);
  i64 inter = 0, uni = 0;
  for (i64 i = 0; i < p.n; ++i) {
    const bool pf = fg(p.pred[i]), gf = p.gt[i] != 0.0;
    inter += pf && gf;
    uni += pf || gf;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double mae_score(const Tensor& pred, const Tensor& gt) {
  const Pair p = check_pair(pred, gt);
  double s = 0;
  for (i64 i = 0; i < p.n; ++i) s += std::fabs(p.pred[i] - p.gt[i]);
  return s / static_cast<double>(p.n);
}

void distance_to_set(const std::vector<uint8_t>& member, i64 h, i64 w, std::vector<double>& dist,
                     std::vector<i64>& nearest) {
  const double inf = std::numeric_limits<double>::infinity();
  // pass 1: nearest member row within each column (ties -> smaller row)
  std::vector<double> col_d2(static_cast<size_t>(h * w), inf);
  std::vector<i64> col_row(static_cast<size_t>(h * w), -1);
  for (i64 x = 0; x < w; ++x) {
    for (i64 y = 0; y < h; ++y) {
      double best = inf;
      i64 best_row = -1;
      for (i64 yy = 0; yy < h; ++yy) {
        if (!member[static_cast<size_t>(yy * w + x)]) continue;
        const double d2 = static_cast<double>((y - yy) * (y - yy));
        if (d2 < best) {
          best = d2;
          best_row = yy;
        }
      }
      col_d2[static_cast<size_t>(y * w + x)] = best;
      col_row[static_cast<size_t>(y * w + x)] = best_row;
    }
  }
  // pass 2: fold in the horizontal offsets (ties -> smaller row-major index)
  dist.assign(static_cast<size_t>(h * w), inf);
  nearest.assign(static_cast<size_t>(h * w), -1);
  for (i64 y = 0; y < h; ++y)
    for (i64 x = 0; x < w; ++x) {
      double best = inf;
      i64 best_idx = -1;
      for (i64 xx = 0; xx < w; ++xx) {
        const double base = col_d2[static_cast<size_t>(y * w + xx)];
        if (base == inf) continue;
        const double d2 = base + static_cast<double>((x - xx) * (x - xx));
        const i64 idx = col_row[static_cast<size_t>(y * w + xx)] * w + xx;
        if (d2 < best || (d2 == best && idx < best_idx)) {
          best = d2;
          best_idx = idx;
        }
      }
      dist[static_cast<size_t>(y * w + x)] = best == inf ? inf : std::sqrt(best);
      nearest[static_cast<size_t>(y * w + x)] = best_idx;
    }
}

double weighted_f_measure(const Tensor& pred, const Tensor& gt) {
  const Pair p = check_pair(pred, gt);
  const i64 fg_count = gt_foreground(p);
  if (fg_count == 0) return empty_gt_score(p);

  std::vector<uint8_t> member(static_cast<size_t>(p.n));
  for (i64 i = 0; i < p.n; ++i) member[static_cast<size_t>(i)] = p.gt[i] != 0.0;
  std::vector<double> dist;
  std::vector<i64> nearest;
  distance_to_set(member, p.h, p.w, dist, nearest);

  std::vector<double> err(static_cast<size_t>(p.n));
  for (i64 i = 0; i < p.n; ++i) err[static_cast<size_t>(i)] = std::fabs(p.pred[i] - p.gt[i]);

  // propagate errors from the nearest foreground pixel into the background
  std::vector<double> err_t = err;
  for (i64 i = 0; i < p.n; ++i)
    if (!member[static_cast<size_t>(i)]) err_t[static_cast<size_t>(i)] = err[static_cast<size_t>(nearest[static_cast<size_t>(i)])];

  // 7x7 Gaussian, sigma 5, zero padding
  double kernel[7][7];
  double ksum = 0;
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) {
      kernel[i][j] = std::exp(-((i - 3) * (i - 3) + (j - 3) * (j - 3)) / 50.0);
      ksum += kernel[i][j];
    }
  for (auto& row : kernel)
    for (double& v : row) v /= ksum;

  std::vector<double> err_a(static_cast<size_t>(p.n), 0.0);
  for (i64 y = 0; y < p.h; ++y)
    for (i64 x = 0; x < p.w; ++x) {
      double acc = 0;
      for (int i = -3; i <= 3; ++i) {
        const i64 yy = y + i;
        if (yy < 0 || yy >= p.h) continue;
        for (int j = -3; j <= 3; ++j) {
          const i64 xx = x + j;
          if (xx < 0 || xx >= p.w) continue;
          acc += kernel[i + 3][j + 3] * err_t[static_cast<size_t>(yy * p.w + xx)];
        }
      }
      err_a[static_cast<size_t>(y * p.w + x)] = acc;
    }

  double fg_err_sum = 0, bg_weighted_sum = 0;
  for (i64 i = 0; i < p.n; ++i) {
    if (member[static_cast<size_t>(i)]) {
      const double e = std::min(err[static_cast<size_t>(i)], err_a[static_cast<size_t>(i)]);
      fg_err_sum += e;  // importance weight is 1 on the foreground
    } else {
      const double weight = 2.0 - std::exp(std::log(0.5) / 5.0 * dist[static_cast<size_t>(i)]);
      bg_weighted_sum += err[static_cast<size_t>(i)] * weight;
    }
  }

  const double tp_w = static_cast<double>(fg_count) - fg_err_sum;
  const double recall = 1.0 - fg_err_sum / static_cast<double>(fg_count);
  const double precision = tp_w / (kEps + tp_w + bg_weighted_sum);
  return 2.0 * precision * recall / (kEps + precision + recall);
}

namespace {

// SSIM-style score of one quadrant; sample statistics use n-1 normalization.
double region_ssim(const std::vector<double>& pv, const std::vector<double>& gv) {
  const i64 n = static_cast<i64>(pv.size());
  double mx = 0, my = 0;
  for (i64 i = 0; i < n; ++i) {
    mx += pv[static_cast<size_t>(i)];
    my += gv[static_cast<size_t>(i)];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sx = 0, sy = 0, sxy = 0;
  for (i64 i = 0; i < n; ++i) {
    const double dx = pv[static_cast<size_t>(i)] - mx, dy = gv[static_cast<size_t>(i)] - my;
    sx += dx * dx;
    sy += dy * dy;
    sxy += dx * dy;
  }
  const double norm = static_cast<double>(n - 1) + kEps;
  sx /= norm;
  sy /= norm;
  sxy /= norm;
  const double alpha = 4.0 * mx * my * sxy;
  const double beta = (mx * mx + my * my) * (sx + sy);
  if (alpha != 0.0) return alpha / (beta + kEps);
  return beta == 0.0 ? 1.0 : 0.0;
}

double object_score(const std::vector<double>& vals) {
  if (vals.empty()) return 0.0;
  double m = 0;
  for (double v : vals) m += v;
  m /= static_cast<double>(vals.size());
  double var = 0;
  for (double v : vals) var += (v - m) * (v - m);
  const double sd = vals.size() > 1 ? std::sqrt(var / static_cast<double>(vals.size() - 1)) : 0.0;
  return 2.0 * m / (m * m + 1.0 + sd + kEps);
}

}  // namespace

double s_measure(const Tensor& pred, const Tensor& gt) {
  const Pair p = check_pair(pred, gt);
  const i64 fg_count = gt_foreground(p);
  if (fg_count == 0) return empty_gt_score(p);
  if (fg_count == p.n) {  // all-foreground: score is the mean prediction
    double m = 0;
    for (i64 i = 0; i < p.n; ++i) m += p.pred[i];
    return m / static_cast<double>(p.n);
  }

  // object-aware term
  std::vector<double> fg_vals, bg_vals;
  for (i64 i = 0; i < p.n; ++i) {
    if (p.gt[i] != 0.0)
      fg_vals.push_back(p.pred[i]);
    else
      bg_vals.push_back(1.0 - p.pred[i]);
  }
  const double u = static_cast<double>(fg_count) / static_cast<double>(p.n);
  const double s_object = u * object_score(fg_vals) + (1.0 - u) * object_score(bg_vals);

  // region-aware term: split at the foreground centroid (1-based rounding,
  // matching the original construction) and SSIM each quadrant
  double sum_x = 0, sum_y = 0;
  for (i64 y = 0; y < p.h; ++y)
    for (i64 x = 0; x < p.w; ++x)
      if (p.gt[y * p.w + x] != 0.0) {
        sum_x += static_cast<double>(x + 1);
        sum_y += static_cast<double>(y + 1);
      }
  const i64 cx = static_cast<i64>(std::floor(sum_x / static_cast<double>(fg_count) + 0.5));
  const i64 cy = static_cast<i64>(std::floor(sum_y / static_cast<double>(fg_count) + 0.5));

  const double area = static_cast<double>(p.n);
  double weights[4] = {static_cast<double>(cx * cy) / area, static_cast<double>((p.w - cx) * cy) / area,
                       static_cast<double>(cx * (p.h - cy)) / area, 0.0};
  weights[3] = 1.0 - weights[0] - weights[1] - weights[2];

  const i64 y_ranges[4][2] = {{0, cy}, {0, cy}, {cy, p.h}, {cy, p.h}};
  const i64 x_ranges[4][2] = {{0, cx}, {cx, p.w}, {0, cx}, {cx, p.w}};
  double s_region = 0;
  for (int q = 0; q < 4; ++q) {
    std::vector<double> pv, gv;
    for (i64 y = y_ranges[q][0]; y < y_ranges[q][1]; ++y)
      for (i64 x = x_ranges[q][0]; x < x_ranges[q][1]; ++x) {
        pv.push_back(p.pred[y * p.w + x]);
        gv.push_back(p.gt[y * p.w + x]);
      }
    if (!pv.empty()) s_region += weights[q] * region_ssim(pv, gv);
  }

  const double s = 0.5 * s_object + 0.5 * s_region;
  return std::clamp(s, 0.0, 1.0);
}

double e_measure_max(const Tensor& pred, const Tensor& gt) {
  const Pair p = check_pair(pred, gt);
  const i64 fg_count = gt_foreground(p);
  if (fg_count == 0) return empty_gt_score(p);

  const double mu_gt = static_cast<double>(fg_count) / static_cast<double>(p.n);
  const bool gt_full = fg_count == p.n;

  double best = 0.0;
  std::vector<uint8_t> fm(static_cast<size_t>(p.n));
  for (int j = 0; j < 256; ++j) {
    const double thr = (static_cast<double>(j) + 0.5) / 256.0;
    i64 fm_count = 0;
    for (i64 i = 0; i < p.n; ++i) {
      fm[static_cast<size_t>(i)] = p.pred[i] >= thr;
      fm_count += fm[static_cast<size_t>(i)];
    }
    double score;
    if (gt_full) {
      score = static_cast<double>(fm_count) / static_cast<double>(p.n);
    } else {
      const double mu_fm = static_cast<double>(fm_count) / static_cast<double>(p.n);
      double acc = 0;
      for (i64 i = 0; i < p.n; ++i) {
        const double dgt = (p.gt[i] != 0.0 ? 1.0 : 0.0) - mu_gt;
        const double dfm = (fm[static_cast<size_t>(i)] ? 1.0 : 0.0) - mu_fm;
        const double align = 2.0 * dgt * dfm / (dgt * dgt + dfm * dfm + kEps);
        acc += (align + 1.0) * (align + 1.0) / 4.0;
      }
      score = acc / static_cast<double>(p.n);
    }
    best = std::max(best, score);
  }
  return best;
}

MetricScores evaluate_pair(const Tensor& pred, const Tensor& gt) {
  MetricScores s;
  s.mdice = dice_score(pred, gt);
  s.miou = iou_score(pred, gt);
  s.f_beta_w = weighted_f_measure(pred, gt);
  s.s_alpha = s_measure(pred, gt);
  s.e_phi_max = e_measure_max(pred, gt);
  s.mae = mae_score(pred, gt);
  return s;
}

MetricsReport evaluate_dataset(const std::vector<std::string>& ids, const std::vector<Tensor>& preds,
                               const std::vector<Tensor>& gts) {
  if (ids.size() != preds.size() || ids.size() != gts.size())
    throw std::invalid_argument("evaluate_dataset: ids/preds/gts lengths differ");
  if (ids.empty()) throw std::invalid_argument("evaluate_dataset: nothing to evaluate");
  MetricsReport report;
  MetricScores acc;
  for (size_t i = 0; i < ids.size(); ++i) {
    const MetricScores s = evaluate_pair(preds[i], gts[i]);
    report.per_image.emplace_back(ids[i], s);
    acc.mdice += s.mdice;
    acc.miou += s.miou;
    acc.f_beta_w += s.f_beta_w;
    acc.s_alpha += s.s_alpha;
    acc.e_phi_max += s.e_phi_max;
    acc.mae += s.mae;
  }
  const double n = static_cast<double>(ids.size());
  report.dataset_mean = {acc.mdice / n, acc.miou / n, acc.f_beta_w / n, acc.s_alpha / n, acc.e_phi_max / n,
                         acc.mae / n};
  return report;
}

}  // namespace megalap
