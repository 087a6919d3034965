#pragma once

// Synthetic clip fixtures: frames, descriptor grids, flows, masks, a manifest
// and a two-template library, written to disk from a small JSON spec.
//
// Descriptors inside the saliency pattern equal the basis vector e0 (the
// "target" template); outside they are random vectors in span(e1, ..., e_{d-1}),
// so the target's cosine is exactly 1 or 0.
//
//   {
//     "T": 8, "h": 64, "w": 64, "d": 8, "patch": 8, "stride": 8, "seed": 7,
//     "flow_pattern": {"kind": "constant", "dx": 1, "dy": 0},
//     "saliency_pattern": {"kind": "blob", "center": [32, 32], "r": 12}
//   }

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "veilkit/descriptor_grid.hpp"
#include "veilkit/error.hpp"
#include "veilkit/image.hpp"
#include "veilkit/manifest.hpp"
#include "veilkit/png_io.hpp"
#include "veilkit/rng.hpp"
#include "veilkit/template_lib.hpp"
#include "veilkit/tensor_store.hpp"

namespace veilkit {

struct FlowPattern {
  enum class Kind { zero, constant, shear };
  Kind kind = Kind::zero;
  float dx = 0.0f;
  float dy = 0.0f;
  float k = 0.0f;  // shear: u = k * (y - h/2), v = 0
};

struct SaliencyPattern {
  enum class Kind { none, blob, full };
  Kind kind = Kind::none;
  double cx = 0.0;
  double cy = 0.0;
  double r = 0.0;
};

struct ClipSpec {
  std::string clip_id = "synth";
  int frames = 8;
  int height = 64;
  int width = 64;
  int dim = 8;
  PatchGeometry geometry{8, 8};
  FlowPattern flow;
  SaliencyPattern saliency;
  std::uint64_t seed = 0;

  void validate() const {
    if (frames < 1) throw ValidationError("spec: T must be >= 1");
    if (geometry.patch < 1 || geometry.stride < 1) throw ValidationError("spec: patch and stride must be >= 1");
    if (height < geometry.patch || width < geometry.patch) {
      throw ValidationError("spec: frame " + std::to_string(height) + "x" + std::to_string(width) +
                            " is smaller than patch " + std::to_string(geometry.patch));
    }
    if (dim < 2) throw ValidationError("spec: d must be >= 2");
    if (saliency.kind == SaliencyPattern::Kind::blob && !(saliency.r >= 0.0)) {
      throw ValidationError("spec: blob radius must be >= 0");
    }
  }
};

inline constexpr const char* kTargetTemplate = "target";
inline constexpr const char* kDecoyTemplate = "decoy";

/// Template i is the unit basis vector e_i of R^d.
inline TemplateLibrary make_library(std::size_t dim, const std::vector<std::string>& names) {
  if (names.size() > dim) {
    throw ValidationError("cannot build " + std::to_string(names.size()) + " orthogonal templates in dimension " +
                          std::to_string(dim));
  }
  TemplateLibrary lib;
  for (std::size_t i = 0; i < names.size(); ++i) {
    Template t{names[i], dim, std::vector<float>(dim, 0.0f), {}};
    t.values[i] = 1.0f;
    lib.add(std::move(t));
  }
  return lib;
}

// ---------------------------------------------------------------------------
// Spec parsing

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ValidationError(where + ": unknown key \"" + key + "\"");
  }
}

template <typename T>
T spec_number(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw ValidationError(std::string("spec: \"") + key + "\" must be a number");
  return j[key].get<T>();
}

inline std::string pattern_kind(const nlohmann::json& j, const char* where) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_object() && j.contains("kind") && j["kind"].is_string()) return j["kind"].get<std::string>();
  throw ValidationError(std::string("spec: ") + where + " needs a \"kind\"");
}

}  // namespace detail

inline ClipSpec parse_clip_spec(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("spec must be a JSON object");
  detail::reject_unknown_keys(
      j, {"clip_id", "T", "h", "w", "d", "patch", "stride", "seed", "flow_pattern", "saliency_pattern"}, "spec");
  ClipSpec s;
  if (j.contains("clip_id")) s.clip_id = j["clip_id"].get<std::string>();
  s.frames = detail::spec_number(j, "T", s.frames);
  s.height = detail::spec_number(j, "h", s.height);
  s.width = detail::spec_number(j, "w", s.width);
  s.dim = detail::spec_number(j, "d", s.dim);
  s.geometry.patch = detail::spec_number(j, "patch", s.geometry.patch);
  s.geometry.stride = detail::spec_number(j, "stride", s.geometry.stride);
  s.seed = detail::spec_number<std::uint64_t>(j, "seed", 0);

  if (j.contains("flow_pattern")) {
    const auto& f = j["flow_pattern"];
    const std::string kind = detail::pattern_kind(f, "flow_pattern");
    if (f.is_object()) detail::reject_unknown_keys(f, {"kind", "dx", "dy", "k"}, "flow_pattern");
    const nlohmann::json args = f.is_object() ? f : nlohmann::json::object();
    if (kind == "zero") {
      s.flow.kind = FlowPattern::Kind::zero;
    } else if (kind == "constant") {
      s.flow = {FlowPattern::Kind::constant, detail::spec_number(args, "dx", 0.0f), detail::spec_number(args, "dy", 0.0f),
                0.0f};
    } else if (kind == "shear") {
      s.flow = {FlowPattern::Kind::shear, 0.0f, 0.0f, detail::spec_number(args, "k", 0.0f)};
    } else {
      throw ValidationError("spec: unknown flow_pattern \"" + kind + "\" (expected zero, constant or shear)");
    }
  }

  if (j.contains("saliency_pattern")) {
    const auto& p = j["saliency_pattern"];
    const std::string kind = detail::pattern_kind(p, "saliency_pattern");
    if (p.is_object()) detail::reject_unknown_keys(p, {"kind", "center", "r"}, "saliency_pattern");
    if (kind == "none") {
      s.saliency.kind = SaliencyPattern::Kind::none;
    } else if (kind == "full") {
      s.saliency.kind = SaliencyPattern::Kind::full;
    } else if (kind == "blob") {
      if (!p.is_object() || !p.contains("center") || !p["center"].is_array() || p["center"].size() != 2) {
        throw ValidationError("spec: blob needs \"center\": [x, y]");
      }
      s.saliency = {SaliencyPattern::Kind::blob, p["center"][0].get<double>(), p["center"][1].get<double>(),
                    detail::spec_number(p, "r", 0.0)};
    } else {
      throw ValidationError("spec: unknown saliency_pattern \"" + kind + "\" (expected none, blob or full)");
    }
  }
  s.validate();
  return s;
}

inline ClipSpec load_clip_spec(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("missing file: " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": invalid JSON: " + e.what());
  }
  return parse_clip_spec(j);
}

// ---------------------------------------------------------------------------
// Generation

/// Whether grid cell (row, col) carries the target descriptor.
inline bool cell_in_pattern(const ClipSpec& s, int row, int col) {
  switch (s.saliency.kind) {
    case SaliencyPattern::Kind::none: return false;
    case SaliencyPattern::Kind::full: return true;
    case SaliencyPattern::Kind::blob: {
      const double dx = s.geometry.center(col) - s.saliency.cx;
      const double dy = s.geometry.center(row) - s.saliency.cy;
      return dx * dx + dy * dy <= s.saliency.r * s.saliency.r;
    }
  }
  return false;
}

inline Image make_flow_image(const ClipSpec& s) {
  Image v(s.height, s.width, 2);
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      switch (s.flow.kind) {
        case FlowPattern::Kind::zero: break;
        case FlowPattern::Kind::constant:
          v.at(y, x, 0) = s.flow.dx;
          v.at(y, x, 1) = s.flow.dy;
          break;
        case FlowPattern::Kind::shear:
          v.at(y, x, 0) = s.flow.k * (static_cast<float>(y) - static_cast<float>(s.height) / 2.0f);
          break;
      }
    }
  }
  return v;
}

/// Frame t of the clip, quantized to multiples of 1/255 so PNG round trips exactly.
inline Image make_frame(const ClipSpec& s, int t) {
  const CounterRng rng(s.seed);
  Image img(s.height, s.width, 3);
  for (std::size_t i = 0; i < img.size(); ++i) {
    img.data[i] = static_cast<float>(rng.bits(i, 1 + static_cast<std::uint64_t>(t)) >> 24) / 255.0f;
  }
  return img;
}

inline DescriptorGrid make_descriptor_grid(const ClipSpec& s, int t) {
  const int rows = s.geometry.grid_extent(s.height);
  const int cols = s.geometry.grid_extent(s.width);
  const auto d = static_cast<std::size_t>(s.dim);
  const CounterRng rng(s.seed);
  const std::uint64_t stream = 0x100000000ull + static_cast<std::uint64_t>(t);
  std::vector<float> v(static_cast<std::size_t>(rows) * cols * d, 0.0f);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      float* cell = v.data() + (static_cast<std::size_t>(r) * cols + c) * d;
      if (cell_in_pattern(s, r, c)) {
        cell[0] = 1.0f;
        continue;
      }
      const std::size_t base = (static_cast<std::size_t>(r) * cols + c) * d;
      for (std::size_t k = 1; k < d; ++k) cell[k] = static_cast<float>(2.0 * rng.uniform(base + k, stream) - 1.0);
      cell[1] = 0.5f + std::abs(cell[1]);  // keeps the vector away from zero
    }
  }
  return make_grid(rows, cols, s.dim, std::move(v), s.geometry, s.height, s.width);
}

/// Pixel mask of the pattern: pixel centers inside the blob disk.
inline Image make_mask(const ClipSpec& s) {
  Image m(s.height, s.width, 1);
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      bool in = s.saliency.kind == SaliencyPattern::Kind::full;
      if (s.saliency.kind == SaliencyPattern::Kind::blob) {
        const double dx = x + 0.5 - s.saliency.cx;
        const double dy = y + 0.5 - s.saliency.cy;
        in = dx * dx + dy * dy <= s.saliency.r * s.saliency.r;
      }
      m.at(y, x) = in ? 1.0f : 0.0f;
    }
  }
  return m;
}

/// Writes the clip under `out` and returns its validated manifest:
///   manifest.json, frames/NNNN.png, desc/NNNN.tnsr, flow/NNNN.tnsr (1..T-1),
///   masks/NNNN.png, library/
inline ClipManifest make_clip(const ClipSpec& spec, const std::filesystem::path& out) {
  spec.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  for (const char* sub : {"frames", "desc", "flow", "masks"}) {
    fs::create_directories(out / sub, ec);
    if (ec) throw IoError("cannot create " + (out / sub).string() + ": " + ec.message());
  }
  auto numbered = [](const char* dir, int i, const char* ext) {
    char name[64];
    std::snprintf(name, sizeof name, "%s/%04d%s", dir, i, ext);
    return fs::path(name);
  };

  ClipManifest m;
  m.clip_id = spec.clip_id;
  m.geometry = spec.geometry;
  const Image mask = make_mask(spec);
  const Image flow = make_flow_image(spec);
  for (int t = 0; t < spec.frames; ++t) {
    m.frame_paths.push_back(numbered("frames", t, ".png"));
    write_png(out / m.frame_paths.back(), make_frame(spec, t));
    m.descriptor_paths.push_back(numbered("desc", t, ".tnsr"));
    save_grid(out / m.descriptor_paths.back(), make_descriptor_grid(spec, t));
    m.mask_paths.push_back(numbered("masks", t, ".png"));
    write_png(out / m.mask_paths.back(), mask);
    if (t > 0) {
      m.flow_paths.push_back(numbered("flow", t, ".tnsr"));
      write_image_tensor(out / m.flow_paths.back(), flow);
    }
  }
  save_manifest(m, out / "manifest.json");
  save_library(make_library(static_cast<std::size_t>(spec.dim), {kTargetTemplate, kDecoyTemplate}), out / "library");
  return load_manifest(out / "manifest.json");
}

}  // namespace veilkit
