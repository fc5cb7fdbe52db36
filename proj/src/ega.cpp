#include "megalap/ega.hpp"

#include <stdexcept>

namespace megalap {

namespace {

Tensor binomial5x5_kernel() {
  const double k[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  Tensor w({1, 1, 5, 5});
  for (i64 i = 0; i < 5; ++i)
    for (i64 j = 0; j < 5; ++j) w[i * 5 + j] = k[i] * k[j];
  return w;
}

}  // namespace

void EgaConfig::validate() const {
  if (channels < 1) throw std::invalid_argument("ega: channels must be positive");
  if (use_cbam) {
    if (cbam_reduction < 1 || channels % cbam_reduction != 0)
      throw std::invalid_argument("ega: cbam_reduction " + std::to_string(cbam_reduction) +
                                  " must divide channels " + std::to_string(channels));
    if (spatial_kernel % 2 == 0)
      throw std::invalid_argument("ega: spatial_kernel must be odd, got " + std::to_string(spatial_kernel));
  }
}

EgaParams make_ega_params(ParamStore& store, const std::string& prefix, const EgaConfig& cfg, Rng& rng) {
  cfg.validate();
  const i64 n = cfg.channels;
  const i64 in_ch = std::max(1, cfg.branch_count()) * n;
  EgaParams p;
  p.comb_w = &store.create(prefix + ".comb.w", {n, in_ch, 3, 3});
  p.comb_b = &store.create(prefix + ".comb.b", {n});
  p.mask_w = &store.create(prefix + ".mask.w", {1, n, 3, 3});
  p.mask_b = &store.create(prefix + ".mask.b", {1});
  kaiming_uniform(p.comb_w->value, rng);
  kaiming_uniform(p.mask_w->value, rng);
  p.mask_b->value.fill(2.0);  // the learned gate also starts near pass-through
  if (cfg.use_cbam) {
    const i64 hidden = n / cfg.cbam_reduction;
    const i64 k = cfg.spatial_kernel;
    p.mlp1_w = &store.create(prefix + ".cbam.mlp1.w", {hidden, n, 1, 1});
    p.mlp1_b = &store.create(prefix + ".cbam.mlp1.b", {hidden});
    p.mlp2_w = &store.create(prefix + ".cbam.mlp2.w", {n, hidden, 1, 1});
    p.mlp2_b = &store.create(prefix + ".cbam.mlp2.b", {n});
    p.spatial_w = &store.create(prefix + ".cbam.spatial.w", {1, 2, k, k});
    p.spatial_b = &store.create(prefix + ".cbam.spatial.b", {1});
    kaiming_uniform(p.mlp1_w->value, rng);
    kaiming_uniform(p.mlp2_w->value, rng);
    kaiming_uniform(p.spatial_w->value, rng);
    // Open-gate init: without normalization layers, two stacked sigmoid
    // gates starting at 0.5 scale the block output by 1/4 and the finest
    // decoder level never takes off within a short training budget. A
    // positive gate bias starts the gates near pass-through (~0.88 each).
    p.mlp2_b->value.fill(1.0);  // applied twice (avg + max path)
    p.spatial_b->value.fill(2.0);
  }
  return p;
}

Var reverse_attention(const Var& pred) { return affine(pred, -1.0, 1.0); }

Var boundary_attention(const Var& pred, bool signed_output) {
  const Tensor& v = pred.value();
  if (v.rank() != 4 || v.extent(1) != 1)
    throw std::invalid_argument("boundary_attention: expected [B,1,H,W], got " + shape_string(v.shape()));
  const i64 h = v.extent(2), w = v.extent(3);
  if (h < 2 || w < 2)
    throw std::invalid_argument("boundary_attention: extents " + std::to_string(h) + "x" + std::to_string(w) +
                                " too small for the blur kernel");
  Tape& tape = *pred.tape();
  Var kernel = tape.constant(binomial5x5_kernel(), "blur5.w");
  Var zero_bias = tape.constant(Tensor({1}), "blur5.b");
  Var blurred = conv2d(pred, kernel, zero_bias, 1, Padding::Reflect);
  Var up = upsample_bilinear(downsample2(blurred), h, w);
  Var band = sub(pred, up);
  return signed_output ? band : vabs(band);
}

Var cbam(const Var& x, const EgaParams& params, i64 reduction, i64 spatial_kernel) {
  const Tensor& v = x.value();
  if (v.rank() != 4) throw std::invalid_argument("cbam: expected [B,C,H,W], got " + shape_string(v.shape()));
  const i64 c = v.extent(1);
  if (reduction < 1 || c % reduction != 0)
    throw std::invalid_argument("cbam: reduction " + std::to_string(reduction) + " must divide channels " +
                                std::to_string(c));
  if (spatial_kernel % 2 == 0)
    throw std::invalid_argument("cbam: spatial kernel must be odd, got " + std::to_string(spatial_kernel));

  Tape& tape = *x.tape();
  auto mlp = [&](const Var& pooled) {
    Var hidden = relu(conv2d(pooled, tape.use(*params.mlp1_w), tape.use(*params.mlp1_b), 1, Padding::Valid));
    return conv2d(hidden, tape.use(*params.mlp2_w), tape.use(*params.mlp2_b), 1, Padding::Valid);
  };
  Var channel_gate = sigmoid(add(mlp(global_avg_pool(x)), mlp(global_max_pool(x))));
  Var refined = mul(x, channel_gate);

  Var spatial_in = concat({channel_mean(refined), channel_max(refined)}, 1);
  Var spatial_gate =
      sigmoid(conv2d(spatial_in, tape.use(*params.spatial_w), tape.use(*params.spatial_b), 1, Padding::Zero));
  return mul(refined, spatial_gate);
}

EgaOutput ega_forward(const Var& enc, const Var& pred_above, const Var& hf, const EgaConfig& cfg,
                      const EgaParams& params) {
  cfg.validate();
  const Tensor& ev = enc.value();
  if (ev.rank() != 4) throw std::invalid_argument("ega: enc must be [B,N,H,W], got " + shape_string(ev.shape()));
  if (ev.extent(1) != cfg.channels)
    throw std::invalid_argument("ega: enc has " + std::to_string(ev.extent(1)) + " channels, config expects " +
                                std::to_string(cfg.channels));
  if ((cfg.use_reverse || cfg.use_boundary) && !pred_above.defined())
    throw std::invalid_argument("ega: pred_above required when the reverse or boundary branch is enabled");
  if (cfg.use_hf && !hf.defined()) throw std::invalid_argument("ega: hf map required when use_hf is enabled");

  Tape& tape = *enc.tape();
  EgaOutput out;

  std::vector<Var> branches;
  if (cfg.use_hf) branches.push_back(mul(enc, hf));
  if (cfg.use_boundary) {
    out.boundary = boundary_attention(pred_above, cfg.signed_boundary);
    branches.push_back(mul(enc, out.boundary));
  }
  if (cfg.use_reverse) {
    out.reverse = reverse_attention(pred_above);
    branches.push_back(mul(enc, out.reverse));
  }

  Var comb_in = branches.empty() ? enc : (branches.size() == 1 ? branches[0] : concat(branches, 1));
  out.combined = conv2d(comb_in, tape.use(*params.comb_w), tape.use(*params.comb_b), 1, Padding::Reflect);
  out.mask = sigmoid(conv2d(out.combined, tape.use(*params.mask_w), tape.use(*params.mask_b), 1, Padding::Reflect));
  out.attended = add(enc, mul(out.combined, out.mask));
  out.decoded = cfg.use_cbam ? cbam(out.attended, params, cfg.cbam_reduction, cfg.spatial_kernel) : out.attended;
  return out;
}

}  // namespace megalap
