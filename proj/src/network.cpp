#include "megalap/network.hpp"

#include <stdexcept>

namespace megalap {

void NetworkConfig::finalize() {
  if (depth < 2) throw std::invalid_argument("network: depth must be >= 2, got " + std::to_string(depth));
  if (channel_schedule.empty()) {
    channel_schedule.resize(static_cast<size_t>(depth));
    i64 c = stem_channels;
    for (int i = 0; i < depth; ++i, c *= 2) channel_schedule[static_cast<size_t>(i)] = c;
  }
  if (static_cast<int>(channel_schedule.size()) != depth)
    throw std::invalid_argument("network: channel schedule has " + std::to_string(channel_schedule.size()) +
                                " entries for depth " + std::to_string(depth));
  const i64 divisor = i64{1} << depth;
  if (input_h % divisor != 0 || input_w % divisor != 0)
    throw std::invalid_argument("network: input " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                                " not divisible by 2^" + std::to_string(depth));
  ega.channels = stem_channels;
  ega.validate();
}

Meganet::Meganet(NetworkConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.finalize();
  Rng rng(seed);
  const int d = cfg_.depth;
  const auto& ch = cfg_.channel_schedule;

  for (int i = 0; i < d; ++i) {
    const i64 cin = (i == 0) ? 3 : ch[static_cast<size_t>(i - 1)];
    const i64 cout = ch[static_cast<size_t>(i)];
    const std::string prefix = "enc." + std::to_string(i);
    Stage s;
    s.w1 = &store_.create(prefix + ".conv1.w", {cout, cin, 3, 3});
    s.b1 = &store_.create(prefix + ".conv1.b", {cout});
    s.w2 = &store_.create(prefix + ".conv2.w", {cout, cout, 3, 3});
    s.b2 = &store_.create(prefix + ".conv2.b", {cout});
    kaiming_uniform(s.w1->value, rng);
    kaiming_uniform(s.w2->value, rng);
    stages_.push_back(s);
  }

  reduce_w_.assign(static_cast<size_t>(d), nullptr);
  reduce_b_.assign(static_cast<size_t>(d), nullptr);
  for (int i = 1; i <= d - 2; ++i) {
    const std::string prefix = "reduce." + std::to_string(i);
    reduce_w_[static_cast<size_t>(i)] = &store_.create(prefix + ".w", {cfg_.stem_channels, ch[static_cast<size_t>(i)], 3, 3});
    reduce_b_[static_cast<size_t>(i)] = &store_.create(prefix + ".b", {cfg_.stem_channels});
    kaiming_uniform(reduce_w_[static_cast<size_t>(i)]->value, rng);
  }

  for (int i = 0; i <= d - 2; ++i)
    ega_params_.push_back(make_ega_params(store_, "ega." + std::to_string(i), cfg_.ega, rng));

  for (int i = 0; i < d; ++i) {
    const i64 cin = (i == d - 1) ? ch[static_cast<size_t>(d - 1)] : cfg_.stem_channels;
    head_w_.push_back(&store_.create("head." + std::to_string(i) + ".w", {1, cin, 1, 1}));
    head_b_.push_back(&store_.create("head." + std::to_string(i) + ".b", {1}));
    kaiming_uniform(head_w_[static_cast<size_t>(i)]->value, rng);
  }
}

std::vector<Var> Meganet::encode(Tape& tape, const Var& images) {
  const Tensor& v = images.value();
  if (v.rank() != 4 || v.extent(1) != 3)
    throw std::invalid_argument("encode: expected [B,3,H,W], got " + shape_string(v.shape()));
  if (v.extent(2) != cfg_.input_h || v.extent(3) != cfg_.input_w)
    throw std::invalid_argument("encode: input extents " + std::to_string(v.extent(2)) + "x" +
                                std::to_string(v.extent(3)) + " do not match configured " +
                                std::to_string(cfg_.input_h) + "x" + std::to_string(cfg_.input_w));
  std::vector<Var> features;
  Var x = images;
  for (int i = 0; i < cfg_.depth; ++i) {
    const Stage& s = stages_[static_cast<size_t>(i)];
    x = relu(conv2d(x, tape.use(*s.w1), tape.use(*s.b1), 1, Padding::Zero));
    x = relu(conv2d(x, tape.use(*s.w2), tape.use(*s.b2), 1, Padding::Zero));
    x = max_pool2d(x, 2, 2);
    features.push_back(x);
  }
  return features;
}

Var Meganet::reduce_level(Tape& tape, const Var& enc_i, int level) {
  if (level == 0) return enc_i;
  if (level < 1 || level > cfg_.depth - 2)
    throw std::invalid_argument("reduce_level: level " + std::to_string(level) + " has no reduction conv");
  Parameter* w = reduce_w_[static_cast<size_t>(level)];
  Parameter* b = reduce_b_[static_cast<size_t>(level)];
  return conv2d(enc_i, tape.use(*w), tape.use(*b), 1, Padding::Zero);
}

std::vector<Tensor> Meganet::make_hf_batch(const std::vector<Tensor>& rgb_images) const {
  const int levels = cfg_.depth - 1;
  std::vector<HighFreqSet> sets;
  sets.reserve(rgb_images.size());
  for (const Tensor& img : rgb_images)
    sets.push_back(high_freq_set(img, levels, cfg_.hf_derivation, cfg_.hf_normalize));

  const i64 batch = static_cast<i64>(rgb_images.size());
  std::vector<Tensor> stacked;
  for (int lv = 0; lv < levels; ++lv) {
    const Tensor& first = sets[0].levels[static_cast<size_t>(lv)];
    const i64 h = first.extent(1), w = first.extent(2);
    Tensor t({batch, 1, h, w});
    for (i64 b = 0; b < batch; ++b) {
      const Tensor& m = sets[static_cast<size_t>(b)].levels[static_cast<size_t>(lv)];
      for (i64 i = 0; i < h * w; ++i) t[b * h * w + i] = m[i];
    }
    stacked.push_back(std::move(t));
  }
  return stacked;
}

ForwardResult Meganet::forward(Tape& tape, const Tensor& images, const std::vector<Tensor>& hf_levels) {
  const int d = cfg_.depth;
  if (cfg_.ega.use_hf && static_cast<int>(hf_levels.size()) < d - 1)
    throw std::invalid_argument("forward: expected " + std::to_string(d - 1) + " high-frequency maps, got " +
                                std::to_string(hf_levels.size()));

  ForwardResult out;
  Var input = tape.constant(images, "input");
  out.enc = encode(tape, input);
  out.logits.assign(static_cast<size_t>(d), Var{});
  out.ega.assign(static_cast<size_t>(d - 1), EgaOutput{});

  out.logits[static_cast<size_t>(d - 1)] = conv2d(out.enc[static_cast<size_t>(d - 1)],
                                                  tape.use(*head_w_[static_cast<size_t>(d - 1)]),
                                                  tape.use(*head_b_[static_cast<size_t>(d - 1)]), 1, Padding::Valid);

  for (int i = d - 2; i >= 0; --i) {
    const i64 h = cfg_.level_h(i), w = cfg_.level_w(i);
    Var pred_above = sigmoid(upsample_bilinear(out.logits[static_cast<size_t>(i + 1)], h, w));
    Var enc_hat = reduce_level(tape, out.enc[static_cast<size_t>(i)], i);

    Var hf;
    if (cfg_.ega.use_hf) {
      Tensor map = hf_levels[static_cast<size_t>(i)];
      if (map.extent(2) != h || map.extent(3) != w) {
        if (!cfg_.hf_interpolate)
          throw std::invalid_argument("forward: hf map level " + std::to_string(i) + " is " +
                                      std::to_string(map.extent(2)) + "x" + std::to_string(map.extent(3)) +
                                      ", expected " + std::to_string(h) + "x" + std::to_string(w));
        map = resize_bilinear(map, h, w);
      }
      hf = tape.constant(std::move(map), "hf." + std::to_string(i));
    }

    out.ega[static_cast<size_t>(i)] = ega_forward(enc_hat, pred_above, hf, cfg_.ega, ega_params_[static_cast<size_t>(i)]);
    out.logits[static_cast<size_t>(i)] =
        conv2d(out.ega[static_cast<size_t>(i)].decoded, tape.use(*head_w_[static_cast<size_t>(i)]),
               tape.use(*head_b_[static_cast<size_t>(i)]), 1, Padding::Valid);
  }

  out.full_res_prob = sigmoid(upsample_bilinear(out.logits[0], cfg_.input_h, cfg_.input_w));
  return out;
}

}  // namespace megalap
