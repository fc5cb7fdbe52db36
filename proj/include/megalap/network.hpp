#pragma once

#include <vector>

#include "megalap/autodiff.hpp"
#include "megalap/ega.hpp"
#include "megalap/params.hpp"
#include "megalap/pyramid.hpp"

namespace megalap {

struct NetworkConfig {
  int depth = 5;
  i64 stem_channels = 8;
  std::vector<i64> channel_schedule;  // per encoder level; doubling when empty
  i64 input_h = 64;
  i64 input_w = 64;
  EgaConfig ega;
  HfDerivation hf_derivation = HfDerivation::BaseDownsample;
  bool hf_normalize = true;
  /// When true, high-frequency maps whose extents do not match a level are
  /// resized instead of rejected.
  bool hf_interpolate = false;

  /// Fills the channel schedule default and ties ega.channels to the decoder
  /// width (the stem channel count), then checks invariants.
  void finalize();
  i64 level_h(int level) const { return input_h >> (level + 1); }
  i64 level_w(int level) const { return input_w >> (level + 1); }
};

/// One forward pass. logits[i] is the pre-sigmoid prediction at level i;
/// level 0 is the finest. full_res_prob is sigmoid(upsample(logits[0])) at
/// the input extents.
struct ForwardResult {
  std::vector<Var> logits;
  Var full_res_prob;
  std::vector<Var> enc;        // encoder features per level
  std::vector<EgaOutput> ega;  // per level 0..depth-2
};

/// Encoder / attention-linked decoder / per-level prediction heads. The
/// encoder stage i applies two 3x3 conv+relu pairs then a stride-2 max pool,
/// so level-i features sit at input/2^(i+1); that places them on the same
/// grid as the i-fold-subsampled high-frequency map without interpolation.
/// Attention blocks run at levels 0..depth-2; the deepest prediction is a
/// 1x1 conv head on the deepest encoder feature.
class Meganet {
public:
  Meganet(NetworkConfig cfg, uint64_t seed);

  /// images: [B,3,H,W]; hf_levels: depth-1 maps [B,1,H_i,W_i] (leave empty
  /// when the hf branch is disabled).
  ForwardResult forward(Tape& tape, const Tensor& images, const std::vector<Tensor>& hf_levels);

  std::vector<Var> encode(Tape& tape, const Var& images);
  /// Channel reduction to the decoder width; level 0 passes through.
  Var reduce_level(Tape& tape, const Var& enc_i, int level);

  /// Builds the per-level high-frequency maps for a batch of [3,H,W] images
  /// and stacks them into [B,1,H_i,W_i] tensors.
  std::vector<Tensor> make_hf_batch(const std::vector<Tensor>& rgb_images) const;

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const NetworkConfig& config() const { return cfg_; }

private:
  NetworkConfig cfg_;
  ParamStore store_;
  struct Stage {
    Parameter *w1, *b1, *w2, *b2;
  };
  std::vector<Stage> stages_;
  std::vector<Parameter*> reduce_w_, reduce_b_;  // indexed by level; null where unused
  std::vector<EgaParams> ega_params_;            // levels 0..depth-2
  std::vector<Parameter*> head_w_, head_b_;      // per level
};

}  // namespace megalap
