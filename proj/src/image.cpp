#include "dot/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "dot/error.hpp"

namespace dot {

namespace {

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

RgbaImage read_png(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw LoadError(LoadError::Kind::kMissingFile, "missing image " + path.string());
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw LoadError(LoadError::Kind::kImageDecode,
                    "cannot decode " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw LoadError(LoadError::Kind::kImageDecode,
                    "cannot decode " + path.string() + ": " + image.message);
  }
  RgbaImage out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.pixels.resize(buffer.size());
  std::transform(buffer.begin(), buffer.end(), out.pixels.begin(),
                 [](std::uint8_t v) { return v / 255.0f; });
  return out;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  std::vector<std::uint8_t> buffer(img.pixels.size());
  std::transform(img.pixels.begin(), img.pixels.end(), buffer.begin(), to_byte);
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw Error("cannot write " + path.string() + ": " + image.message);
  }
}

Image composite_over(const RgbaImage& rgba, const Vec3& background) {
  Image out(rgba.width, rgba.height);
  const std::size_t n = static_cast<std::size_t>(rgba.width) * rgba.height;
  for (std::size_t i = 0; i < n; ++i) {
    const float a = rgba.pixels[i * 4 + 3];
    for (int c = 0; c < 3; ++c) {
      out.pixels[i * 3 + c] = static_cast<float>(a * rgba.pixels[i * 4 + c] +
                                                 (1.0 - a) * background[c]);
    }
  }
  return out;
}

Image quantize_8bit(const Image& image) {
  Image out = image;
  for (float& v : out.pixels) v = to_byte(v) / 255.0f;
  return out;
}

}  // namespace dot
