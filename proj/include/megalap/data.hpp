#pragma once

#include <string>
#include <vector>

#include "megalap/params.hpp"
#include "megalap/tensor.hpp"

namespace megalap {

struct Sample {
  Tensor image;  // [3,H,W] in [0,1]
  Tensor mask;   // [1,H,W] binary
  std::string id;
};

/// Synthetic weak-boundary blobs: a metaball union gives the hard mask, the
/// image blends textured foreground over textured background through a
/// sigmoid ramp of width boundary_softness (in pixels) across the boundary.
struct SynthConfig {
  i64 count = 8;
  i64 height = 64;
  i64 width = 64;
  i64 blob_min = 1;
  i64 blob_max = 3;
  double boundary_softness = 0.0;  // 0 = hard step exactly on the mask edge
  double texture_amplitude = 0.08;
  double contrast = 0.7;  // gap between fg and bg mean intensity
  uint64_t seed = 0;
};

std::vector<Sample> generate_samples(const SynthConfig& cfg);

/// Independent 50% horizontal and vertical flips, a uniform number of
/// quarter turns, and a scale from {0.75, 1, 1.25} (bilinear image, nearest
/// mask) followed by a center crop/zero-pad back to the original extents.
/// Image and mask receive identical geometry.
Sample augment(const Sample& s, Rng& rng);

// geometry helpers shared with the augmentation tests
Tensor flip_horizontal(const Tensor& t);
Tensor flip_vertical(const Tensor& t);
Tensor rotate_quarter(const Tensor& t);  // one 90-degree turn
Tensor resize_nearest(const Tensor& t, i64 out_h, i64 out_w);
Tensor center_fit(const Tensor& t, i64 out_h, i64 out_w, double pad_value);

// Dataset directory layout:
//   <dir>/images/<id>.png   8-bit RGB
//   <dir>/masks/<id>.png    8-bit gray, 0/255
//   <dir>/manifest.json     {"samples":[{"id":"...","split":"train"|"val"}]}
struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> val;
};

void write_dataset(const std::string& dir, const std::vector<Sample>& samples, double val_fraction);
Dataset load_dataset(const std::string& dir);

}  // namespace megalap
