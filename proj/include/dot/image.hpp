#pragma once

#include <filesystem>
#include <vector>

#include "dot/geometry.hpp"

namespace dot {

// Linear float rgb image, row-major, interleaved channels.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h, float fill = 0.0f)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

  float& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  Vec3 rgb(int x, int y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }
  void set_rgb(int x, int y, const Vec3& v) {
    at(x, y, 0) = static_cast<float>(v.x);
    at(x, y, 1) = static_cast<float>(v.y);
    at(x, y, 2) = static_cast<float>(v.z);
  }
  bool operator==(const Image&) const = default;
};

// Decoded 8-bit PNG as float rgba in [0,1]; rgb inputs get alpha 1.
struct RgbaImage {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;  // 4 per pixel
};

RgbaImage read_png(const std::filesystem::path& path);
// 8-bit rgb, values clamped to [0,1] and rounded.
void write_png(const std::filesystem::path& path, const Image& image);

// Composite rgba over a solid background: rgb = a * c + (1 - a) * bg.
Image composite_over(const RgbaImage& rgba, const Vec3& background);

// Quantize to 8 bits and back, as a PNG round trip would.
Image quantize_8bit(const Image& image);

}  // namespace dot
