#include "megalap/image_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace megalap {

namespace {

[[noreturn]] void parse_fail(const std::string& path, size_t offset, const std::string& what) {
  throw std::runtime_error(path + ": parse error at byte " + std::to_string(offset) + ": " + what);
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open file: " + path);
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open file for writing: " + path);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write failed: " + path);
}

constexpr uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};

uint32_t read_u32_be(const std::vector<uint8_t>& b, size_t at) {
  return (static_cast<uint32_t>(b[at]) << 24) | (static_cast<uint32_t>(b[at + 1]) << 16) |
         (static_cast<uint32_t>(b[at + 2]) << 8) | static_cast<uint32_t>(b[at + 3]);
}

void push_u32_be(std::vector<uint8_t>& b, uint32_t v) {
  b.push_back(static_cast<uint8_t>(v >> 24));
  b.push_back(static_cast<uint8_t>(v >> 16));
  b.push_back(static_cast<uint8_t>(v >> 8));
  b.push_back(static_cast<uint8_t>(v));
}

uint8_t paeth(uint8_t a, uint8_t b, uint8_t c) {
  const int p = static_cast<int>(a) + static_cast<int>(b) - static_cast<int>(c);
  const int pa = std::abs(p - static_cast<int>(a));
  const int pb = std::abs(p - static_cast<int>(b));
  const int pc = std::abs(p - static_cast<int>(c));
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

void append_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& data) {
  push_u32_be(out, static_cast<uint32_t>(data.size()));
  const size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uint32_t crc = static_cast<uint32_t>(
      crc32(0, out.data() + type_at, static_cast<uInt>(4 + data.size())));
  push_u32_be(out, crc);
}

}  // namespace

ImageU8 read_png(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file(path);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSignature, 8) != 0)
    parse_fail(path, 0, "missing PNG signature");

  i64 width = 0, height = 0;
  int color_type = -1, src_channels = 0;
  std::vector<uint8_t> idat;
  bool seen_ihdr = false, seen_iend = false;

  size_t at = 8;
  while (at < bytes.size()) {
    if (at + 8 > bytes.size()) parse_fail(path, at, "truncated chunk header");
    const uint32_t len = read_u32_be(bytes, at);
    if (at + 12 + len > bytes.size()) parse_fail(path, at, "chunk length exceeds file size");
    const char* type = reinterpret_cast<const char*>(bytes.data() + at + 4);
    const uint8_t* data = bytes.data() + at + 8;
    const uint32_t stored_crc = read_u32_be(bytes, at + 8 + len);
    const uint32_t actual_crc =
        static_cast<uint32_t>(crc32(0, bytes.data() + at + 4, static_cast<uInt>(4 + len)));
    if (stored_crc != actual_crc) parse_fail(path, at + 8 + len, "chunk CRC mismatch");

    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) parse_fail(path, at, "IHDR length must be 13");
      width = static_cast<i64>(read_u32_be(bytes, at + 8));
      height = static_cast<i64>(read_u32_be(bytes, at + 12));
      const int bit_depth = data[8];
      color_type = data[9];
      const int interlace = data[12];
      if (bit_depth != 8) parse_fail(path, at + 16, "unsupported bit depth " + std::to_string(bit_depth));
      switch (color_type) {
        case 0: src_channels = 1; break;
        case 2: src_channels = 3; break;
        case 4: src_channels = 2; break;
        case 6: src_channels = 4; break;
        default: parse_fail(path, at + 17, "unsupported color type " + std::to_string(color_type));
      }
      if (interlace != 0) parse_fail(path, at + 20, "interlaced PNG is not supported");
      seen_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      if (!seen_ihdr) parse_fail(path, at, "IDAT before IHDR");
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      seen_iend = true;
      break;
    }
    // ancillary chunks are skipped
    at += 12 + len;
  }
  if (!seen_ihdr) parse_fail(path, bytes.size(), "no IHDR chunk");
  if (!seen_iend) parse_fail(path, bytes.size(), "no IEND chunk");
  if (width <= 0 || height <= 0) parse_fail(path, 16, "invalid extents");

  const i64 stride = width * src_channels;
  std::vector<uint8_t> raw(static_cast<size_t>(height * (stride + 1)));
  uLongf raw_len = static_cast<uLongf>(raw.size());
  const int zrc = uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size()));
  if (zrc != Z_OK || raw_len != raw.size()) parse_fail(path, 8, "IDAT inflate failed");

  // undo per-row filters in place
  std::vector<uint8_t> scan(static_cast<size_t>(height * stride));
  const i64 bpp = src_channels;
  for (i64 y = 0; y < height; ++y) {
    const uint8_t filter = raw[static_cast<size_t>(y * (stride + 1))];
    const uint8_t* src = raw.data() + y * (stride + 1) + 1;
    uint8_t* cur = scan.data() + y * stride;
    const uint8_t* up = y > 0 ? scan.data() + (y - 1) * stride : nullptr;
    for (i64 x = 0; x < stride; ++x) {
      const uint8_t a = x >= bpp ? cur[x - bpp] : 0;
      const uint8_t b = up ? up[x] : 0;
      const uint8_t c = (up && x >= bpp) ? up[x - bpp] : 0;
      uint8_t v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v = static_cast<uint8_t>(v + a); break;
        case 2: v = static_cast<uint8_t>(v + b); break;
        case 3: v = static_cast<uint8_t>(v + (a + b) / 2); break;
        case 4: v = static_cast<uint8_t>(v + paeth(a, b, c)); break;
        default: parse_fail(path, static_cast<size_t>(8 + y), "unknown row filter " + std::to_string(filter));
      }
      cur[x] = v;
    }
  }

  ImageU8 img;
  img.width = width;
  img.height = height;
  img.channels = (src_channels >= 3) ? 3 : 1;
  img.pixels.resize(static_cast<size_t>(width * height * img.channels));
  for (i64 i = 0; i < width * height; ++i)
    for (i64 c = 0; c < img.channels; ++c)
      img.pixels[static_cast<size_t>(i * img.channels + c)] = scan[static_cast<size_t>(i * src_channels + c)];
  return img;
}

void write_png(const std::string& path, const ImageU8& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_png: channels must be 1 or 3, got " + std::to_string(img.channels));
  const i64 stride = img.width * img.channels;
  std::vector<uint8_t> raw(static_cast<size_t>(img.height * (stride + 1)));
  for (i64 y = 0; y < img.height; ++y) {
    raw[static_cast<size_t>(y * (stride + 1))] = 0;  // filter: none
    std::memcpy(raw.data() + y * (stride + 1) + 1, img.pixels.data() + y * stride, static_cast<size_t>(stride));
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), Z_DEFAULT_COMPRESSION) != Z_OK)
    throw std::runtime_error("write_png: deflate failed for " + path);
  compressed.resize(bound);

  std::vector<uint8_t> out(kPngSignature, kPngSignature + 8);
  std::vector<uint8_t> ihdr;
  push_u32_be(ihdr, static_cast<uint32_t>(img.width));
  push_u32_be(ihdr, static_cast<uint32_t>(img.height));
  ihdr.push_back(8);                                     // bit depth
  ihdr.push_back(img.channels == 1 ? 0 : 2);             // gray / rgb
  ihdr.push_back(0);                                     // compression
  ihdr.push_back(0);                                     // filter method
  ihdr.push_back(0);                                     // no interlace
  append_chunk(out, "IHDR", ihdr);
  append_chunk(out, "IDAT", compressed);
  append_chunk(out, "IEND", {});
  write_file(path, out);
}

ImageU8 read_pnm(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file(path);
  size_t at = 0;
  auto skip_space = [&] {
    while (at < bytes.size()) {
      if (bytes[at] == '#') {  // comment to end of line
        while (at < bytes.size() && bytes[at] != '\n') ++at;
      } else if (std::isspace(bytes[at])) {
        ++at;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> i64 {
    skip_space();
    const size_t start = at;
    i64 v = 0;
    while (at < bytes.size() && std::isdigit(bytes[at])) v = v * 10 + (bytes[at++] - '0');
    if (at == start) parse_fail(path, at, "expected an integer");
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    parse_fail(path, 0, "expected P5 or P6 magic");
  const i64 channels = bytes[1] == '5' ? 1 : 3;
  at = 2;
  const i64 width = read_int();
  const i64 height = read_int();
  const i64 maxval = read_int();
  if (maxval != 255) parse_fail(path, at, "only maxval 255 is supported, got " + std::to_string(maxval));
  if (at >= bytes.size() || !std::isspace(bytes[at])) parse_fail(path, at, "expected whitespace before payload");
  ++at;
  const size_t need = static_cast<size_t>(width * height * channels);
  if (bytes.size() - at < need) parse_fail(path, bytes.size(), "payload truncated");

  ImageU8 img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(at),
                    bytes.begin() + static_cast<std::ptrdiff_t>(at + need));
  return img;
}

void write_pnm(const std::string& path, const ImageU8& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_pnm: channels must be 1 or 3, got " + std::to_string(img.channels));
  std::vector<uint8_t> out;
  const std::string header = std::string(img.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n255\n";
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  write_file(path, out);
}

ImageU8 read_image_file(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file(path);
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSignature, 8) == 0) return read_png(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) return read_pnm(path);
  parse_fail(path, 0, "unrecognized image format");
}

Tensor image_to_rgb_tensor(const ImageU8& img) {
  Tensor t({3, img.height, img.width});
  const i64 n = img.height * img.width;
  for (i64 i = 0; i < n; ++i)
    for (i64 c = 0; c < 3; ++c) {
      const i64 src_c = img.channels == 1 ? 0 : c;
      t[c * n + i] = img.pixels[static_cast<size_t>(i * img.channels + src_c)] / 255.0;
    }
  return t;
}

Tensor image_to_gray_tensor(const ImageU8& img) {
  Tensor t({1, img.height, img.width});
  const i64 n = img.height * img.width;
  for (i64 i = 0; i < n; ++i) {
    if (img.channels == 1) {
      t[i] = img.pixels[static_cast<size_t>(i)] / 255.0;
    } else {
      const double r = img.pixels[static_cast<size_t>(i * 3)] / 255.0;
      const double g = img.pixels[static_cast<size_t>(i * 3 + 1)] / 255.0;
      const double b = img.pixels[static_cast<size_t>(i * 3 + 2)] / 255.0;
      t[i] = 0.299 * r + 0.587 * g + 0.114 * b;
    }
  }
  return t;
}

ImageU8 rgb_tensor_to_image(const Tensor& t) {
  if (t.rank() != 3 || t.extent(0) != 3)
    throw std::invalid_argument("rgb_tensor_to_image: expected [3,H,W], got " + shape_string(t.shape()));
  ImageU8 img;
  img.height = t.extent(1);
  img.width = t.extent(2);
  img.channels = 3;
  const i64 n = img.height * img.width;
  img.pixels.resize(static_cast<size_t>(n * 3));
  for (i64 i = 0; i < n; ++i)
    for (i64 c = 0; c < 3; ++c) {
      const double v = std::clamp(t[c * n + i], 0.0, 1.0);
      img.pixels[static_cast<size_t>(i * 3 + c)] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
  return img;
}

ImageU8 gray_tensor_to_image(const Tensor& t, bool stretch) {
  if (t.rank() != 3 || t.extent(0) != 1)
    throw std::invalid_argument("gray_tensor_to_image: expected [1,H,W], got " + shape_string(t.shape()));
  ImageU8 img;
  img.height = t.extent(1);
  img.width = t.extent(2);
  img.channels = 1;
  img.pixels.resize(static_cast<size_t>(t.numel()));
  double lo = 0.0, hi = 1.0;
  if (stretch) {
    lo = min_value(t);
    hi = max_value(t);
  }
  const double range = hi - lo;
  for (i64 i = 0; i < t.numel(); ++i) {
    const double v = range > 0 ? std::clamp((t[i] - lo) / range, 0.0, 1.0) : 0.0;
    img.pixels[static_cast<size_t>(i)] = static_cast<uint8_t>(std::lround(v * 255.0));
  }
  return img;
}

Tensor read_mask(const std::string& path) {
  const Tensor gray = image_to_gray_tensor(read_image_file(path));
  Tensor mask(gray.shape());
  for (i64 i = 0; i < gray.numel(); ++i) mask[i] = gray[i] >= 0.5 ? 1.0 : 0.0;
  return mask;
}

void write_mask(const std::string& path, const Tensor& mask) {
  if (mask.rank() != 3 || mask.extent(0) != 1)
    throw std::invalid_argument("write_mask: expected [1,H,W], got " + shape_string(mask.shape()));
  ImageU8 img;
  img.height = mask.extent(1);
  img.width = mask.extent(2);
  img.channels = 1;
  img.pixels.resize(static_cast<size_t>(mask.numel()));
  for (i64 i = 0; i < mask.numel(); ++i) img.pixels[static_cast<size_t>(i)] = mask[i] >= 0.5 ? 255 : 0;
  write_png(path, img);
}

}  // namespace megalap
