#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "veilkit/error.hpp"
#include "veilkit/manifest.hpp"
#include "veilkit/tensor_store.hpp"

namespace veilkit {

/// Per-frame grid of patch descriptors (gh x gw x d), row-major with the
/// descriptor dimension fastest.
struct DescriptorGrid {
  int rows = 0;  // gh
  int cols = 0;  // gw
  int dim = 0;   // d
  std::vector<float> vectors;
  PatchGeometry geometry;
  int frame_height = 0;
  int frame_width = 0;

  std::size_t patch_count() const noexcept { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }

  std::span<const float> at(int row, int col) const noexcept {
    return std::span<const float>(vectors).subspan(
        (static_cast<std::size_t>(row) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(col)) *
            static_cast<std::size_t>(dim),
        static_cast<std::size_t>(dim));
  }
  std::span<const float> patch(std::size_t j) const noexcept {
    return std::span<const float>(vectors).subspan(j * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim));
  }
};

/// Builds a grid and checks the tiling relation against the frame size and
/// that every value is finite.
inline DescriptorGrid make_grid(int rows, int cols, int dim, std::vector<float> vectors, PatchGeometry geometry,
                                int frame_height, int frame_width) {
  if (rows < 1 || cols < 1 || dim < 1) throw ValidationError("descriptor grid dimensions must be positive");
  if (vectors.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * static_cast<std::size_t>(dim)) {
    throw ValidationError("descriptor grid holds " + std::to_string(vectors.size()) + " values, expected " +
                          std::to_string(rows) + "x" + std::to_string(cols) + "x" + std::to_string(dim));
  }
  if (geometry.grid_extent(frame_height) != rows || geometry.grid_extent(frame_width) != cols) {
    throw ValidationError("descriptor grid " + std::to_string(rows) + "x" + std::to_string(cols) +
                          " inconsistent with " + std::to_string(frame_height) + "x" + std::to_string(frame_width) +
                          " frame at patch " + std::to_string(geometry.patch) + ", stride " +
                          std::to_string(geometry.stride));
  }
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (!std::isfinite(vectors[i])) {
      const auto j = i / static_cast<std::size_t>(dim);
      throw ValidationError("non-finite descriptor at grid cell (" + std::to_string(j / static_cast<std::size_t>(cols)) +
                            "," + std::to_string(j % static_cast<std::size_t>(cols)) + ")");
    }
  }
  return DescriptorGrid{rows, cols, dim, std::move(vectors), geometry, frame_height, frame_width};
}

inline DescriptorGrid load_grid(const std::filesystem::path& path, PatchGeometry geometry, int frame_height,
                                int frame_width) {
  if (!std::filesystem::exists(path)) throw IoError("missing file: " + path.string());
  const TensorFile t = read_tensor(path);
  if (t.dtype != DType::f32 || t.shape.size() != 3) {
    throw ValidationError(path.string() + ": descriptor grid must be f32 [gh,gw,d]");
  }
  return make_grid(static_cast<int>(t.shape[0]), static_cast<int>(t.shape[1]), static_cast<int>(t.shape[2]), t.as_f32(),
                   geometry, frame_height, frame_width);
}

inline void save_grid(const std::filesystem::path& path, const DescriptorGrid& g) {
  const std::uint32_t shape[] = {static_cast<std::uint32_t>(g.rows), static_cast<std::uint32_t>(g.cols),
                                 static_cast<std::uint32_t>(g.dim)};
  write_tensor(path, shape, g.vectors);
}

}  // namespace veilkit
