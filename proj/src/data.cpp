#include "megalap/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "megalap/image_io.hpp"
#include "megalap/metrics.hpp"  // distance_to_set
#include "megalap/pyramid.hpp"  // resize_bilinear

namespace megalap {

namespace {

double stable_sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// Smooth value noise in [-1,1]: a coarse random grid interpolated up.
Tensor value_noise(i64 h, i64 w, Rng& rng) {
  const i64 gh = std::max<i64>(h / 8, 2), gw = std::max<i64>(w / 8, 2);
  Tensor grid({1, gh, gw});
  for (i64 i = 0; i < grid.numel(); ++i) grid[i] = rng.uniform(-1.0, 1.0);
  return resize_bilinear(grid, h, w);
}

std::string sample_id(i64 index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sample_%04lld", static_cast<long long>(index));
  return buf;
}

Sample generate_one(const SynthConfig& cfg, i64 index, uint64_t seed) {
  Rng rng(seed);
  const i64 h = cfg.height, w = cfg.width;

  const i64 blobs = rng.uniform_int(cfg.blob_min, cfg.blob_max);
  std::vector<double> cx(static_cast<size_t>(blobs)), cy(static_cast<size_t>(blobs)), r(static_cast<size_t>(blobs));
  for (i64 b = 0; b < blobs; ++b) {
    cx[static_cast<size_t>(b)] = rng.uniform(0.25, 0.75) * static_cast<double>(w);
    cy[static_cast<size_t>(b)] = rng.uniform(0.25, 0.75) * static_cast<double>(h);
    r[static_cast<size_t>(b)] = rng.uniform(0.12, 0.22) * static_cast<double>(std::min(h, w));
  }

  // metaball union: foreground where the summed field reaches 1
  Tensor mask({1, h, w});
  std::vector<uint8_t> fg(static_cast<size_t>(h * w)), bg(static_cast<size_t>(h * w));
  for (i64 y = 0; y < h; ++y)
    for (i64 x = 0; x < w; ++x) {
      double field = 0;
      for (i64 b = 0; b < blobs; ++b) {
        const double dx = static_cast<double>(x) - cx[static_cast<size_t>(b)];
        const double dy = static_cast<double>(y) - cy[static_cast<size_t>(b)];
        field += r[static_cast<size_t>(b)] * r[static_cast<size_t>(b)] / (dx * dx + dy * dy + 1e-9);
      }
      const bool inside = field >= 1.0;
      mask[y * w + x] = inside ? 1.0 : 0.0;
      fg[static_cast<size_t>(y * w + x)] = inside;
      bg[static_cast<size_t>(y * w + x)] = !inside;
    }

  // signed pixel distance to the boundary: positive inside, negative outside
  std::vector<double> dist_to_bg, dist_to_fg;
  std::vector<i64> scratch;
  distance_to_set(bg, h, w, dist_to_bg, scratch);
  distance_to_set(fg, h, w, dist_to_fg, scratch);

  Tensor alpha({1, h, w});
  for (i64 i = 0; i < h * w; ++i) {
    const double signed_d = mask[i] != 0.0 ? dist_to_bg[static_cast<size_t>(i)] : -dist_to_fg[static_cast<size_t>(i)];
    alpha[i] = cfg.boundary_softness > 0 ? stable_sigmoid(4.0 * signed_d / cfg.boundary_softness) : mask[i];
  }

  // textures: per-channel smooth noise around the fg/bg means
  Sample s;
  s.id = sample_id(index);
  s.mask = mask;
  s.image = Tensor({3, h, w});
  for (i64 c = 0; c < 3; ++c) {
    const double tint = rng.uniform(-0.04, 0.04);
    const double fg_mean = 0.5 + cfg.contrast / 2.0 + tint;
    const double bg_mean = 0.5 - cfg.contrast / 2.0 - tint;
    const Tensor fg_tex = value_noise(h, w, rng);
    const Tensor bg_tex = value_noise(h, w, rng);
    for (i64 i = 0; i < h * w; ++i) {
      const double fg_v = fg_mean + cfg.texture_amplitude * fg_tex[i];
      const double bg_v = bg_mean + cfg.texture_amplitude * bg_tex[i];
      s.image[c * h * w + i] = std::clamp(alpha[i] * fg_v + (1.0 - alpha[i]) * bg_v, 0.0, 1.0);
    }
  }
  return s;
}

}  // namespace

std::vector<Sample> generate_samples(const SynthConfig& cfg) {
  if (cfg.count < 1) throw std::invalid_argument("generate_samples: count must be positive");
  if (cfg.blob_min < 1 || cfg.blob_max < cfg.blob_min)
    throw std::invalid_argument("generate_samples: invalid blob count range");
  if (cfg.boundary_softness < 0) throw std::invalid_argument("generate_samples: boundary_softness must be >= 0");
  Rng master(cfg.seed);
  std::vector<uint64_t> seeds(static_cast<size_t>(cfg.count));
  for (auto& s : seeds) s = master.raw();
  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(cfg.count));
  for (i64 i = 0; i < cfg.count; ++i) out.push_back(generate_one(cfg, i, seeds[static_cast<size_t>(i)]));
  return out;
}

Tensor flip_horizontal(const Tensor& t) {
  const i64 h = t.extent(t.rank() - 2), w = t.extent(t.rank() - 1);
  i64 n = 1;
  for (i64 i = 0; i < t.rank() - 2; ++i) n *= t.extent(i);
  Tensor out(t.shape());
  for (i64 p = 0; p < n; ++p)
    for (i64 y = 0; y < h; ++y)
      for (i64 x = 0; x < w; ++x) out[(p * h + y) * w + x] = t[(p * h + y) * w + (w - 1 - x)];
  return out;
}

Tensor flip_vertical(const Tensor& t) {
  const i64 h = t.extent(t.rank() - 2), w = t.extent(t.rank() - 1);
  i64 n = 1;
  for (i64 i = 0; i < t.rank() - 2; ++i) n *= t.extent(i);
  Tensor out(t.shape());
  for (i64 p = 0; p < n; ++p)
    for (i64 y = 0; y < h; ++y)
      for (i64 x = 0; x < w; ++x) out[(p * h + y) * w + x] = t[(p * h + (h - 1 - y)) * w + x];
  return out;
}

Tensor rotate_quarter(const Tensor& t) {
  const i64 h = t.extent(t.rank() - 2), w = t.extent(t.rank() - 1);
  i64 n = 1;
  for (i64 i = 0; i < t.rank() - 2; ++i) n *= t.extent(i);
  std::vector<i64> shape = t.shape();
  shape[shape.size() - 2] = w;
  shape[shape.size() - 1] = h;
  Tensor out(std::move(shape));
  // counter-clockwise: (y,x) -> (w-1-x, y)
  for (i64 p = 0; p < n; ++p)
    for (i64 y = 0; y < h; ++y)
      for (i64 x = 0; x < w; ++x) out[(p * w + (w - 1 - x)) * h + y] = t[(p * h + y) * w + x];
  return out;
}

Tensor resize_nearest(const Tensor& t, i64 out_h, i64 out_w) {
  const i64 h = t.extent(t.rank() - 2), w = t.extent(t.rank() - 1);
  i64 n = 1;
  for (i64 i = 0; i < t.rank() - 2; ++i) n *= t.extent(i);
  std::vector<i64> shape = t.shape();
  shape[shape.size() - 2] = out_h;
  shape[shape.size() - 1] = out_w;
  Tensor out(std::move(shape));
  auto src_of = [](i64 o, i64 in, i64 out_n) {
    const double p = out_n > 1 ? static_cast<double>(o) * static_cast<double>(in - 1) / static_cast<double>(out_n - 1)
                               : static_cast<double>(in - 1) / 2.0;
    return std::clamp<i64>(static_cast<i64>(std::lround(p)), 0, in - 1);
  };
  for (i64 p = 0; p < n; ++p)
    for (i64 y = 0; y < out_h; ++y)
      for (i64 x = 0; x < out_w; ++x)
        out[(p * out_h + y) * out_w + x] = t[(p * h + src_of(y, h, out_h)) * w + src_of(x, w, out_w)];
  return out;
}

Tensor center_fit(const Tensor& t, i64 out_h, i64 out_w, double pad_value) {
  const i64 h = t.extent(t.rank() - 2), w = t.extent(t.rank() - 1);
  i64 n = 1;
  for (i64 i = 0; i < t.rank() - 2; ++i) n *= t.extent(i);
  std::vector<i64> shape = t.shape();
  shape[shape.size() - 2] = out_h;
  shape[shape.size() - 1] = out_w;
  Tensor out = Tensor::full(std::move(shape), pad_value);
  const i64 copy_h = std::min(h, out_h), copy_w = std::min(w, out_w);
  const i64 src_y = (h - copy_h) / 2, src_x = (w - copy_w) / 2;
  const i64 dst_y = (out_h - copy_h) / 2, dst_x = (out_w - copy_w) / 2;
  for (i64 p = 0; p < n; ++p)
    for (i64 y = 0; y < copy_h; ++y)
      for (i64 x = 0; x < copy_w; ++x)
        out[(p * out_h + dst_y + y) * out_w + dst_x + x] = t[(p * h + src_y + y) * w + src_x + x];
  return out;
}

Sample augment(const Sample& s, Rng& rng) {
  const bool do_flip_h = rng.coin();
  const bool do_flip_v = rng.coin();
  const i64 turns = rng.uniform_int(0, 3);
  const double scales[3] = {0.75, 1.0, 1.25};
  const double scale = scales[rng.uniform_int(0, 2)];

  Sample out = s;
  if (do_flip_h) {
    out.image = flip_horizontal(out.image);
    out.mask = flip_horizontal(out.mask);
  }
  if (do_flip_v) {
    out.image = flip_vertical(out.image);
    out.mask = flip_vertical(out.mask);
  }
  for (i64 k = 0; k < turns; ++k) {
    out.image = rotate_quarter(out.image);
    out.mask = rotate_quarter(out.mask);
  }
  if (scale != 1.0) {
    const i64 h = s.mask.extent(1), w = s.mask.extent(2);
    const i64 sh = static_cast<i64>(std::lround(static_cast<double>(out.image.extent(1)) * scale));
    const i64 sw = static_cast<i64>(std::lround(static_cast<double>(out.image.extent(2)) * scale));
    out.image = center_fit(resize_bilinear(out.image, sh, sw), h, w, 0.0);
    out.mask = center_fit(resize_nearest(out.mask, sh, sw), h, w, 0.0);
  }
  return out;
}

void write_dataset(const std::string& dir, const std::vector<Sample>& samples, double val_fraction) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "masks");
  const i64 val_count = static_cast<i64>(std::lround(val_fraction * static_cast<double>(samples.size())));
  const i64 train_count = static_cast<i64>(samples.size()) - val_count;

  nlohmann::json manifest;
  manifest["samples"] = nlohmann::json::array();
  for (size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    write_png((fs::path(dir) / "images" / (s.id + ".png")).string(), rgb_tensor_to_image(s.image));
    write_mask((fs::path(dir) / "masks" / (s.id + ".png")).string(), s.mask);
    manifest["samples"].push_back(
        {{"id", s.id}, {"split", static_cast<i64>(i) < train_count ? "train" : "val"}});
  }
  std::ofstream os(fs::path(dir) / "manifest.json");
  os << manifest.dump(2) << "\n";
  if (!os) throw std::runtime_error("failed to write manifest in " + dir);
}

Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream is(fs::path(dir) / "manifest.json");
  if (!is) throw std::runtime_error("missing manifest.json in " + dir);
  nlohmann::json manifest;
  is >> manifest;

  Dataset ds;
  for (const auto& entry : manifest.at("samples")) {
    Sample s;
    s.id = entry.at("id").get<std::string>();
    s.image = image_to_rgb_tensor(read_image_file((fs::path(dir) / "images" / (s.id + ".png")).string()));
    s.mask = read_mask((fs::path(dir) / "masks" / (s.id + ".png")).string());
    if (entry.at("split").get<std::string>() == "val")
      ds.val.push_back(std::move(s));
    else
      ds.train.push_back(std::move(s));
  }
  if (ds.train.empty() && ds.val.empty()) throw std::runtime_error("dataset is empty: " + dir);
  return ds;
}

}  // namespace megalap
