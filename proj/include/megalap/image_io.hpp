#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "megalap/tensor.hpp"

namespace megalap {

/// 8-bit interleaved image, 1 (gray) or 3 (RGB) channels.
struct ImageU8 {
  i64 width = 0;
  i64 height = 0;
  i64 channels = 0;
  std::vector<uint8_t> pixels;  // row-major, interleaved
};

// PNG (8-bit gray / gray+alpha / RGB / RGBA, non-interlaced; alpha is
// dropped on read) and binary PNM (P5/P6). Malformed files raise
// std::runtime_error naming the byte offset of the problem.
ImageU8 read_png(const std::string& path);
void write_png(const std::string& path, const ImageU8& img);
ImageU8 read_pnm(const std::string& path);
void write_pnm(const std::string& path, const ImageU8& img);
/// Dispatches on the file's magic bytes.
ImageU8 read_image_file(const std::string& path);

/// [3,H,W] in [0,1]; gray inputs are replicated across channels.
Tensor image_to_rgb_tensor(const ImageU8& img);
/// [1,H,W] in [0,1]; RGB inputs are converted via Rec. 601 luma weights.
Tensor image_to_gray_tensor(const ImageU8& img);

/// [3,H,W] in [0,1] -> 8-bit RGB (values clamped).
ImageU8 rgb_tensor_to_image(const Tensor& t);
/// [1,H,W] -> 8-bit gray. stretch=true min-max stretches to the full range
/// (constant maps go to 0); stretch=false clamps to [0,1].
ImageU8 gray_tensor_to_image(const Tensor& t, bool stretch);

/// Reads a binary mask: any format, thresholded at half range. Values {0,1}.
Tensor read_mask(const std::string& path);
/// Writes a binary mask as 8-bit gray 0/255 PNG; round-trips losslessly.
void write_mask(const std::string& path, const Tensor& mask);

}  // namespace megalap
