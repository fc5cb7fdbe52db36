#pragma once

#include <vector>

#include "megalap/autodiff.hpp"

namespace megalap {

/// Mean binary cross-entropy from logits (stable log-sum form).
Var bce_loss(const Var& logit, const Tensor& gt);

/// Soft dice loss on sigmoid(logit): 1 - (2*sum(p*g) + 1) / (sum(p) + sum(g) + 1).
/// The +1 keeps the ratio defined for empty masks.
Var dice_loss(const Var& logit, const Tensor& gt);

/// Deep-supervision objective: unweighted sum of (bce + dice) over all levels.
/// logits[i] and gts[i] must agree in shape level by level.
Var total_loss(const std::vector<Var>& logits, const std::vector<Tensor>& gts);

/// Per-level ground truth: level i is the 2^(i+1)-fold block average of the
/// full-resolution binary mask, thresholded at 0.5 with ties going to 1.
/// mask: [1,H,W] with H,W divisible by 2^depth. Returns depth tensors.
std::vector<Tensor> downscale_gt(const Tensor& mask, int depth);

/// Stacks per-image [1,h,w] masks into one [B,1,h,w] tensor.
Tensor stack_masks(const std::vector<Tensor>& masks);

}  // namespace megalap
