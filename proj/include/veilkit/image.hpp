#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "veilkit/error.hpp"

namespace veilkit {

/// Dense float raster, channel-last (h, w, c), row-major.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c), fill) {
    if (h < 0 || w < 0 || c < 0) throw ValidationError("negative image dimension");
  }

  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  std::size_t size() const noexcept { return data.size(); }
  bool empty() const noexcept { return data.empty(); }

  std::size_t index(int y, int x, int c = 0) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels) +
           static_cast<std::size_t>(c);
  }
  float& at(int y, int x, int c = 0) noexcept { return data[index(y, x, c)]; }
  float at(int y, int x, int c = 0) const noexcept { return data[index(y, x, c)]; }

  std::span<float> values() noexcept { return data; }
  std::span<const float> values() const noexcept { return data; }

  bool same_shape(const Image& o) const noexcept {
    return height == o.height && width == o.width && channels == o.channels;
  }
  bool same_extent(const Image& o) const noexcept { return height == o.height && width == o.width; }

  std::string shape_string() const {
    return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
  }

  friend bool operator==(const Image&, const Image&) = default;
};

inline void require_unit_range(const Image& img, const char* what) {
  for (float v : img.data) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw ValidationError(std::string(what) + " has values outside [0,1]");
    }
  }
}

inline float clamp01(float v) noexcept { return std::clamp(v, 0.0f, 1.0f); }

}  // namespace veilkit
