#include "megalap/loss.hpp"

#include <stdexcept>

namespace megalap {

namespace {

void require_binary(const Tensor& gt, const char* what) {
  for (i64 i = 0; i < gt.numel(); ++i)
    if (gt[i] != 0.0 && gt[i] != 1.0)
      throw std::invalid_argument(std::string(what) + ": ground truth must be binary, found " +
                                  std::to_string(gt[i]));
}

}  // namespace

Var bce_loss(const Var& logit, const Tensor& gt) { return bce_with_logits(logit, gt); }

Var dice_loss(const Var& logit, const Tensor& gt) {
  require_same_shape(logit.value(), gt, "dice_loss");
  require_binary(gt, "dice_loss");
  Tape& tape = *logit.tape();
  Var p = sigmoid(logit);
  Var g = tape.constant(gt, "gt");
  Var intersection = sum(mul(p, g));
  Var numerator = affine(intersection, 2.0, 1.0);
  Var denominator = affine(sum(p), 1.0, megalap::sum(gt) + 1.0);
  return affine(div(numerator, denominator), -1.0, 1.0);
}

Var total_loss(const std::vector<Var>& logits, const std::vector<Tensor>& gts) {
  if (logits.empty()) throw std::invalid_argument("total_loss: no prediction levels");
  if (logits.size() != gts.size())
    throw std::invalid_argument("total_loss: " + std::to_string(logits.size()) + " prediction levels but " +
                                std::to_string(gts.size()) + " ground-truth levels");
  Var acc;
  for (size_t i = 0; i < logits.size(); ++i) {
    Var level = add(bce_loss(logits[i], gts[i]), dice_loss(logits[i], gts[i]));
    acc = acc.defined() ? add(acc, level) : level;
  }
  return acc;
}

std::vector<Tensor> downscale_gt(const Tensor& mask, int depth) {
  if (mask.rank() != 3 || mask.extent(0) != 1)
    throw std::invalid_argument("downscale_gt: expected [1,H,W], got " + shape_string(mask.shape()));
  require_binary(mask, "downscale_gt");
  const i64 h = mask.extent(1), w = mask.extent(2);
  const i64 divisor = i64{1} << depth;
  if (h % divisor != 0 || w % divisor != 0)
    throw std::invalid_argument("downscale_gt: extents " + std::to_string(h) + "x" + std::to_string(w) +
                                " not divisible by 2^" + std::to_string(depth));
  std::vector<Tensor> levels;
  for (int lv = 0; lv < depth; ++lv) {
    const i64 f = i64{1} << (lv + 1);
    const i64 oh = h / f, ow = w / f;
    Tensor out({1, oh, ow});
    const double inv = 1.0 / static_cast<double>(f * f);
    for (i64 y = 0; y < oh; ++y)
      for (i64 x = 0; x < ow; ++x) {
        double s = 0;
        for (i64 dy = 0; dy < f; ++dy)
          for (i64 dx = 0; dx < f; ++dx) s += mask[(y * f + dy) * w + (x * f + dx)];
        out[y * ow + x] = (s * inv >= 0.5) ? 1.0 : 0.0;
      }
    levels.push_back(std::move(out));
  }
  return levels;
}

Tensor stack_masks(const std::vector<Tensor>& masks) {
  if (masks.empty()) throw std::invalid_argument("stack_masks: empty batch");
  const i64 h = masks[0].extent(1), w = masks[0].extent(2);
  Tensor out({static_cast<i64>(masks.size()), 1, h, w});
  for (size_t b = 0; b < masks.size(); ++b) {
    require_same_shape(masks[b], masks[0], "stack_masks");
    for (i64 i = 0; i < h * w; ++i) out[static_cast<i64>(b) * h * w + i] = masks[b][i];
  }
  return out;
}

}  // namespace megalap
