#pragma once

// Clip manifest: a JSON file tying frames, descriptor grids, flow fields and
// masks of one clip together. Paths are relative to the manifest's directory.
//
//   {
//     "clip_id": "clip0",
//     "frame_paths": ["frames/0000.png", ...],          // T entries, required
//     "descriptor_paths": ["desc/0000.tnsr", ...],      // T entries or absent
//     "flow_paths": ["flow/0001.tnsr", ...],            // T-1 entries or absent
//     "mask_paths": ["masks/0000.png", ...],            // T entries or absent
//     "dataset_mean": [0.45, 0.42, 0.40],               // optional
//     "dataset_std": [0.22, 0.21, 0.21],                // optional
//     "patch_geometry": {"patch": 8, "stride": 8}
//   }

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "veilkit/error.hpp"
#include "veilkit/image.hpp"
#include "veilkit/png_io.hpp"
#include "veilkit/tensor_store.hpp"

namespace veilkit {

namespace fs = std::filesystem;

struct PatchGeometry {
  int patch = 8;
  int stride = 8;

  /// Number of patches along an axis of `extent` pixels.
  int grid_extent(int extent) const noexcept { return extent < patch ? 0 : (extent - patch) / stride + 1; }

  /// Pixel-space center of the patch at grid index `i` along one axis.
  double center(int i) const noexcept { return static_cast<double>(i) * stride + patch / 2.0; }

  friend bool operator==(const PatchGeometry&, const PatchGeometry&) = default;
};

using Rgb = std::array<float, 3>;

struct ClipManifest {
  std::string clip_id;
  fs::path base_dir;  // directory that relative paths resolve against
  std::vector<fs::path> frame_paths;
  std::vector<fs::path> descriptor_paths;
  std::vector<fs::path> flow_paths;
  std::vector<fs::path> mask_paths;
  std::optional<Rgb> dataset_mean;
  std::optional<Rgb> dataset_std;
  PatchGeometry geometry;

  // Probed from file headers during validation.
  int height = 0;
  int width = 0;
  int descriptor_dim = 0;

  std::size_t frame_count() const noexcept { return frame_paths.size(); }
  bool has_descriptors() const noexcept { return !descriptor_paths.empty(); }
  bool has_flows() const noexcept { return !flow_paths.empty(); }
  bool has_masks() const noexcept { return !mask_paths.empty(); }

  fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : base_dir / p; }
};

// ---------------------------------------------------------------------------
// Frame and mask files

inline bool is_tensor_file(const fs::path& p) {
  if (p.extension() == ".tnsr") return true;
  std::ifstream f(p, std::ios::binary);
  char magic[4] = {};
  f.read(magic, 4);
  return f.gcount() == 4 && std::equal(magic, magic + 4, kTensorMagic.begin());
}

/// Loads an RGB frame from 8-bit PNG (x/255) or TNSR f32/u8 [h, w, 3].
inline Image load_frame(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing file: " + path.string());
  if (is_tensor_file(path)) {
    Image img = read_image_tensor(path);
    if (img.channels != 3) throw ValidationError(path.string() + ": frame tensor must be [h,w,3]");
    return img;
  }
  return read_png(path, 3);
}

/// Loads a binary mask (1 where the file is nonzero) from PNG or TNSR [h, w].
inline Image load_mask(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing file: " + path.string());
  Image raw = is_tensor_file(path) ? read_image_tensor(path) : read_png(path, 1);
  if (raw.channels != 1) throw ValidationError(path.string() + ": mask must be single-channel");
  for (auto& v : raw.data) v = v != 0.0f ? 1.0f : 0.0f;
  return raw;
}

struct FrameShape {
  int height = 0;
  int width = 0;
  int channels = 0;
};

inline FrameShape probe_image_file(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing file: " + path.string());
  if (is_tensor_file(path)) {
    const TensorHeader h = read_tensor_header(path);
    if (h.shape.size() == 2) return {static_cast<int>(h.shape[0]), static_cast<int>(h.shape[1]), 1};
    if (h.shape.size() == 3) {
      return {static_cast<int>(h.shape[0]), static_cast<int>(h.shape[1]), static_cast<int>(h.shape[2])};
    }
    throw ValidationError(path.string() + ": expected rank-2 or rank-3 tensor, got " + shape_string(h.shape));
  }
  const PngInfo info = probe_png(path);
  return {info.height, info.width, info.channels};
}

// ---------------------------------------------------------------------------
// Validation

namespace detail {

inline std::vector<fs::path> path_list(const nlohmann::json& j, const char* key, bool required) {
  std::vector<fs::path> out;
  if (!j.contains(key) || j[key].is_null()) {
    if (required) throw ValidationError(std::string("manifest is missing \"") + key + "\"");
    return out;
  }
  if (!j[key].is_array()) throw ValidationError(std::string("manifest \"") + key + "\" must be an array");
  for (const auto& e : j[key]) {
    if (!e.is_string()) throw ValidationError(std::string("manifest \"") + key + "\" entries must be strings");
    out.emplace_back(e.get<std::string>());
  }
  return out;
}

inline std::optional<Rgb> rgb_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  const auto& a = j[key];
  if (!a.is_array() || a.size() != 3) throw ValidationError(std::string(key) + " must be an array of 3 numbers");
  Rgb out{};
  for (std::size_t c = 0; c < 3; ++c) {
    if (!a[c].is_number()) throw ValidationError(std::string(key) + " must be an array of 3 numbers");
    const double v = a[c].get<double>();
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw ValidationError(std::string(key) + "[" + std::to_string(c) + "] = " + std::to_string(v) +
                            " is outside [0,1]");
    }
    out[c] = static_cast<float>(v);
  }
  return out;
}

inline std::string entry_name(const char* list, std::size_t i) {
  return std::string(list) + "[" + std::to_string(i) + "]";
}

}  // namespace detail

/// Checks every cross-file invariant using file headers only; fills the
/// probed dimensions. Missing files raise IoError, inconsistencies
/// ValidationError naming the offending entry.
inline void validate_manifest(ClipManifest& m) {
  if (m.frame_paths.empty()) throw ValidationError("manifest lists no frames");
  if (m.geometry.patch < 1 || m.geometry.stride < 1) {
    throw ValidationError("patch_geometry: patch and stride must be >= 1");
  }
  const std::size_t T = m.frame_paths.size();

  for (std::size_t i = 0; i < T; ++i) {
    const FrameShape s = probe_image_file(m.resolve(m.frame_paths[i]));
    const bool tensor = is_tensor_file(m.resolve(m.frame_paths[i]));
    if (tensor && s.channels != 3) {
      throw ValidationError(detail::entry_name("frame_paths", i) + ": frame tensor must have 3 channels");
    }
    if (i == 0) {
      m.height = s.height;
      m.width = s.width;
    } else if (s.height != m.height || s.width != m.width) {
      throw ValidationError(detail::entry_name("frame_paths", i) + ": frame is " + std::to_string(s.height) + "x" +
                            std::to_string(s.width) + ", expected " + std::to_string(m.height) + "x" +
                            std::to_string(m.width));
    }
  }
  if (m.height < 1 || m.width < 1) throw ValidationError("frames are empty");

  if (m.has_descriptors()) {
    if (m.descriptor_paths.size() != T) {
      throw ValidationError("expected " + std::to_string(T) + " descriptor grids, got " +
                            std::to_string(m.descriptor_paths.size()));
    }
    const int gh = m.geometry.grid_extent(m.height);
    const int gw = m.geometry.grid_extent(m.width);
    if (gh < 1 || gw < 1) {
      throw ValidationError("patch_geometry: patch " + std::to_string(m.geometry.patch) + " exceeds frame size");
    }
    for (std::size_t i = 0; i < T; ++i) {
      const TensorHeader h = read_tensor_header(m.resolve(m.descriptor_paths[i]));
      const auto name = detail::entry_name("descriptor_paths", i);
      if (h.dtype != DType::f32 || h.shape.size() != 3) {
        throw ValidationError(name + ": descriptor grid must be f32 [gh,gw,d], got " + dtype_name(h.dtype) + " " +
                              shape_string(h.shape));
      }
      if (static_cast<int>(h.shape[0]) != gh || static_cast<int>(h.shape[1]) != gw) {
        throw ValidationError(name + ": grid " + shape_string(h.shape) + " does not match expected " +
                              std::to_string(gh) + "x" + std::to_string(gw) + " for patch " +
                              std::to_string(m.geometry.patch) + ", stride " + std::to_string(m.geometry.stride));
      }
      if (h.shape[2] == 0) throw ValidationError(name + ": descriptor dimension is 0");
      if (i == 0) {
        m.descriptor_dim = static_cast<int>(h.shape[2]);
      } else if (static_cast<int>(h.shape[2]) != m.descriptor_dim) {
        throw ValidationError(name + ": descriptor dimension " + std::to_string(h.shape[2]) + " != " +
                              std::to_string(m.descriptor_dim));
      }
    }
  }

  if (m.has_flows()) {
    if (m.flow_paths.size() != T - 1) {
      throw ValidationError("expected " + std::to_string(T - 1) + " flow fields, got " +
                            std::to_string(m.flow_paths.size()));
    }
    for (std::size_t i = 0; i < m.flow_paths.size(); ++i) {
      const TensorHeader h = read_tensor_header(m.resolve(m.flow_paths[i]));
      if (h.dtype != DType::f32 || h.shape.size() != 3 || static_cast<int>(h.shape[0]) != m.height ||
          static_cast<int>(h.shape[1]) != m.width || h.shape[2] != 2) {
        throw ValidationError(detail::entry_name("flow_paths", i) + ": flow must be f32 [" +
                              std::to_string(m.height) + "," + std::to_string(m.width) + ",2], got " +
                              dtype_name(h.dtype) + " " + shape_string(h.shape));
      }
    }
  }

  if (m.has_masks()) {
    if (m.mask_paths.size() != T) {
      throw ValidationError("expected " + std::to_string(T) + " masks, got " + std::to_string(m.mask_paths.size()));
    }
    for (std::size_t i = 0; i < T; ++i) {
      const FrameShape s = probe_image_file(m.resolve(m.mask_paths[i]));
      if (s.height != m.height || s.width != m.width) {
        throw ValidationError(detail::entry_name("mask_paths", i) + ": mask is " + std::to_string(s.height) + "x" +
                              std::to_string(s.width) + ", expected " + std::to_string(m.height) + "x" +
                              std::to_string(m.width));
      }
    }
  }
}

inline ClipManifest parse_manifest(const nlohmann::json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ValidationError("manifest must be a JSON object");
  ClipManifest m;
  m.base_dir = base_dir;
  m.clip_id = j.value("clip_id", std::string{});
  m.frame_paths = detail::path_list(j, "frame_paths", true);
  m.descriptor_paths = detail::path_list(j, "descriptor_paths", false);
  m.flow_paths = detail::path_list(j, "flow_paths", false);
  m.mask_paths = detail::path_list(j, "mask_paths", false);
  m.dataset_mean = detail::rgb_field(j, "dataset_mean");
  m.dataset_std = detail::rgb_field(j, "dataset_std");
  if (j.contains("patch_geometry")) {
    const auto& g = j["patch_geometry"];
    if (!g.is_object() || !g.contains("patch") || !g.contains("stride") || !g["patch"].is_number_integer() ||
        !g["stride"].is_number_integer()) {
      throw ValidationError("patch_geometry must be {\"patch\": int, \"stride\": int}");
    }
    m.geometry = {g["patch"].get<int>(), g["stride"].get<int>()};
  } else if (!m.descriptor_paths.empty()) {
    throw ValidationError("manifest with descriptor_paths requires patch_geometry");
  }
  validate_manifest(m);
  return m;
}

inline ClipManifest load_manifest(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("missing file: " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": invalid JSON: " + e.what());
  }
  return parse_manifest(j, path.parent_path());
}

inline nlohmann::json manifest_to_json(const ClipManifest& m) {
  auto list = [](const std::vector<fs::path>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& p : v) a.push_back(p.generic_string());
    return a;
  };
  nlohmann::json j;
  j["clip_id"] = m.clip_id;
  j["frame_paths"] = list(m.frame_paths);
  if (m.has_descriptors()) j["descriptor_paths"] = list(m.descriptor_paths);
  if (m.has_flows()) j["flow_paths"] = list(m.flow_paths);
  if (m.has_masks()) j["mask_paths"] = list(m.mask_paths);
  if (m.dataset_mean) j["dataset_mean"] = *m.dataset_mean;
  if (m.dataset_std) j["dataset_std"] = *m.dataset_std;
  j["patch_geometry"] = {{"patch", m.geometry.patch}, {"stride", m.geometry.stride}};
  return j;
}

inline void save_manifest(const ClipManifest& m, const fs::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << manifest_to_json(m).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Dataset statistics

struct DatasetStats {
  std::array<double, 3> mean{};
  std::array<double, 3> std{};

  Rgb mean_f() const { return {static_cast<float>(mean[0]), static_cast<float>(mean[1]), static_cast<float>(mean[2])}; }
  Rgb std_f() const { return {static_cast<float>(std[0]), static_cast<float>(std[1]), static_cast<float>(std[2])}; }
};

/// Accumulates per-channel population mean/variance frame by frame (two-pass
/// within a frame, pairwise merge across frames).
class StatsAccumulator {
public:
  void add(const Image& frame) {
    if (frame.channels != 3) throw ValidationError("dataset statistics need 3-channel frames");
    const auto n = static_cast<double>(frame.pixel_count());
    if (n == 0) return;
    for (int c = 0; c < 3; ++c) {
      double sum = 0.0;
      for (std::size_t i = static_cast<std::size_t>(c); i < frame.size(); i += 3) sum += frame.data[i];
      const double mean = sum / n;
      double m2 = 0.0;
      for (std::size_t i = static_cast<std::size_t>(c); i < frame.size(); i += 3) {
        const double d = frame.data[i] - mean;
        m2 += d * d;
      }
      const double total = count_ + n;
      const double delta = mean - mean_[c];
      mean_[c] += delta * n / total;
      m2_[c] += m2 + delta * delta * count_ * n / total;
    }
    count_ += n;
  }

  DatasetStats result() const {
    if (count_ == 0) throw ValidationError("no pixels to compute dataset statistics from");
    DatasetStats s;
    for (int c = 0; c < 3; ++c) {
      s.mean[c] = mean_[c];
      s.std[c] = std::sqrt(std::max(0.0, m2_[c] / count_));
    }
    return s;
  }

private:
  double count_ = 0.0;
  std::array<double, 3> mean_{};
  std::array<double, 3> m2_{};
};

inline DatasetStats compute_dataset_stats(std::span<const Image> frames) {
  if (frames.empty()) throw ValidationError("compute_dataset_stats needs at least one frame");
  StatsAccumulator acc;
  for (const auto& f : frames) acc.add(f);
  return acc.result();
}

inline DatasetStats compute_dataset_stats(std::span<const fs::path> frame_paths) {
  if (frame_paths.empty()) throw ValidationError("compute_dataset_stats needs at least one frame");
  StatsAccumulator acc;
  for (const auto& p : frame_paths) acc.add(load_frame(p));
  return acc.result();
}

/// Manifest-supplied statistics when present, else statistics of the clip's
/// own frames.
inline DatasetStats resolve_stats(const ClipManifest& m) {
  if (m.dataset_mean && m.dataset_std) {
    DatasetStats s;
    for (int c = 0; c < 3; ++c) {
      s.mean[c] = (*m.dataset_mean)[c];
      s.std[c] = (*m.dataset_std)[c];
    }
    return s;
  }
  std::vector<fs::path> paths;
  for (const auto& p : m.frame_paths) paths.push_back(m.resolve(p));
  return compute_dataset_stats(std::span<const fs::path>(paths));
}

}  // namespace veilkit
