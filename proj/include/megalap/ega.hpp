#pragma once

#include <string>

#include "megalap/autodiff.hpp"
#include "megalap/params.hpp"

namespace megalap {

/// Per-block switches and hyperparameters of the edge-guided attention block.
/// Any subset of the three gating branches may be disabled; with all three
/// off the block degrades to a plain conv + learned mask + residual.
struct EgaConfig {
  bool use_reverse = true;
  bool use_boundary = true;
  bool use_hf = true;
  bool use_cbam = true;
  i64 channels = 8;
  i64 cbam_reduction = 4;
  i64 spatial_kernel = 7;
  bool signed_boundary = false;  // keep the band-pass sign instead of |.|

  int branch_count() const { return (use_reverse ? 1 : 0) + (use_boundary ? 1 : 0) + (use_hf ? 1 : 0); }
  void validate() const;
};

/// Parameter handles of one block. Created via make_ega_params; the CBAM
/// pointers stay null when use_cbam is off.
struct EgaParams {
  Parameter* comb_w = nullptr;
  Parameter* comb_b = nullptr;
  Parameter* mask_w = nullptr;
  Parameter* mask_b = nullptr;
  Parameter* mlp1_w = nullptr;
  Parameter* mlp1_b = nullptr;
  Parameter* mlp2_w = nullptr;
  Parameter* mlp2_b = nullptr;
  Parameter* spatial_w = nullptr;
  Parameter* spatial_b = nullptr;
};

EgaParams make_ega_params(ParamStore& store, const std::string& prefix, const EgaConfig& cfg, Rng& rng);

struct EgaOutput {
  Var decoded;  // refined decoding feature, same shape as enc
  Var mask;     // learned gate, [B,1,H,W], values in (0,1)
  // intermediates for debug dumps; undefined when the branch is disabled
  Var reverse;
  Var boundary;
  Var combined;
  Var attended;
};

/// 1 - pred. pred is expected in (0,1).
Var reverse_attention(const Var& pred);

/// Finest band-pass of the prediction map: pred - upsample(downsample(blur(pred))),
/// then |.| unless signed_output. Responds on the boundary of the predicted
/// region and vanishes on constant maps. Requires extents >= 2.
Var boundary_attention(const Var& pred, bool signed_output = false);

/// Channel attention (shared two-layer 1x1-conv MLP over avg- and max-pooled
/// descriptors) followed by spatial attention (k x k conv over the
/// channel-mean/max pair, zero padding). reduction must divide the channel
/// count and the spatial kernel must be odd.
Var cbam(const Var& x, const EgaParams& params, i64 reduction, i64 spatial_kernel);

/// The full block: gate the encoder feature with the enabled attention maps,
/// mix with a 3x3 reflect-padded conv, apply the learned mask residually and
/// optionally recalibrate with CBAM.
///   enc:        [B,N,H,W]
///   pred_above: [B,1,H,W] probabilities; may be undefined when neither the
///               reverse nor the boundary branch is enabled
///   hf:         [B,1,H,W] constant in [0,1]; may be undefined when use_hf off
EgaOutput ega_forward(const Var& enc, const Var& pred_above, const Var& hf, const EgaConfig& cfg,
                      const EgaParams& params);

}  // namespace megalap
