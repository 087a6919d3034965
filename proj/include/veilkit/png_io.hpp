#pragma once

// 8-bit PNG read/write on top of libpng's simplified API.

#include <png.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "veilkit/error.hpp"
#include "veilkit/image.hpp"

namespace veilkit {

struct PngInfo {
  int width = 0;
  int height = 0;
  int channels = 0;  // as stored in the file
};

/// Reads only the PNG header.
inline PngInfo probe_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  PngInfo info{static_cast<int>(image.width), static_cast<int>(image.height),
               static_cast<int>(PNG_IMAGE_SAMPLE_CHANNELS(image.format))};
  png_image_free(&image);
  return info;
}

/// Decodes a PNG into `channels` (1 = gray, 3 = RGB) floats in [0,1], x/255.
inline Image read_png(const std::filesystem::path& path, int channels = 3) {
  if (channels != 1 && channels != 3) throw ValidationError("read_png supports 1 or 3 channels");
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + msg);
  }
  Image out(static_cast<int>(image.height), static_cast<int>(image.width), channels);
  for (std::size_t i = 0; i < buffer.size(); ++i) out.data[i] = static_cast<float>(buffer[i]) / 255.0f;
  return out;
}

inline std::uint8_t to_u8(float v) noexcept {
  return static_cast<std::uint8_t>(std::lround(clamp01(v) * 255.0f));
}

/// Encodes a 1- or 3-channel image as 8-bit PNG (values clamped, rounded).
inline void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw ValidationError("write_png supports 1 or 3 channels, got " + std::to_string(img.channels));
  }
  std::vector<std::uint8_t> buffer(img.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) buffer[i] = to_u8(img.data[i]);
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, buffer.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot write PNG " + path.string() + ": " + msg);
  }
}

}  // namespace veilkit
