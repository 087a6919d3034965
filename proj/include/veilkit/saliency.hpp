#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "veilkit/descriptor_grid.hpp"
#include "veilkit/error.hpp"
#include "veilkit/image.hpp"
#include "veilkit/manifest.hpp"
#include "veilkit/parallel.hpp"
#include "veilkit/template_lib.hpp"

namespace veilkit {

enum class Reassembly { nearest, bilinear };

inline std::string_view to_string(Reassembly r) noexcept { return r == Reassembly::nearest ? "nearest" : "bilinear"; }

inline Reassembly parse_reassembly(std::string_view s) {
  if (s == "nearest") return Reassembly::nearest;
  if (s == "bilinear") return Reassembly::bilinear;
  throw ValidationError("unknown reassembly mode \"" + std::string(s) + "\" (expected nearest or bilinear)");
}

/// How multi-descriptor templates enter the template average.
///  per_template: each template scores the mean clipped cosine of its
///                descriptors; scores are averaged over templates.
///  flatten:      every descriptor counts as a template of its own.
enum class TemplateAveraging { per_template, flatten };

struct SaliencyOptions {
  Reassembly reassembly = Reassembly::nearest;
  TemplateAveraging averaging = TemplateAveraging::per_template;
};

struct SaliencyMap {
  int frame_index = 0;
  Image values;  // h x w x 1, every value in [0,1]
};

namespace detail {

struct UnitGroups {
  std::vector<std::vector<double>> units;   // unit-norm descriptors
  std::vector<std::size_t> group_of;        // descriptor -> group
  std::vector<double> group_weight;         // 1 / descriptors in group
  std::size_t groups = 0;
};

inline UnitGroups normalize_templates(const SelectedTemplates& selected, TemplateAveraging averaging) {
  UnitGroups g;
  for (const auto& t : selected.templates) {
    const std::size_t n = t.count();
    for (std::size_t k = 0; k < n; ++k) {
      const auto d = t.descriptor(k);
      const double norm = l2_norm(d);
      if (!(norm > kMinDescriptorNorm) || !std::isfinite(norm)) {
        throw ValidationError("template \"" + t.name + "\" descriptor " + std::to_string(k) +
                              " has zero or non-finite norm");
      }
      std::vector<double> u(d.size());
      for (std::size_t i = 0; i < d.size(); ++i) u[i] = d[i] / norm;
      g.units.push_back(std::move(u));
      if (averaging == TemplateAveraging::flatten) {
        g.group_of.push_back(g.groups++);
        g.group_weight.push_back(1.0);
      } else {
        g.group_of.push_back(g.groups);
      }
    }
    if (averaging == TemplateAveraging::per_template) {
      g.group_weight.push_back(1.0 / static_cast<double>(n));
      ++g.groups;
    }
  }
  return g;
}

}  // namespace detail

/// Clipped-cosine saliency per patch:
///   s_j = 1/|T| * sum_i max(0, cos(K(tau_i), K(I_j)))
/// Returns a gh x gw x 1 image with every value in [0,1].
inline Image patch_saliency(const DescriptorGrid& grid, const SelectedTemplates& selected,
                            TemplateAveraging averaging = TemplateAveraging::per_template) {
  if (selected.templates.empty()) throw ValidationError("no templates selected");
  if (static_cast<std::size_t>(grid.dim) != selected.dim) {
    throw ValidationError("descriptor dimension mismatch: grid has " + std::to_string(grid.dim) + ", templates have " +
                          std::to_string(selected.dim));
  }
  const auto groups = detail::normalize_templates(selected, averaging);
  const auto dim = static_cast<std::size_t>(grid.dim);
  Image out(grid.rows, grid.cols, 1);

  parallel_for(static_cast<std::size_t>(grid.rows), [&](std::size_t row) {
    std::vector<double> group_sum(groups.groups);
    for (int col = 0; col < grid.cols; ++col) {
      const auto key = grid.at(static_cast<int>(row), col);
      double nn = 0.0;
      for (float x : key) {
        if (!std::isfinite(x)) {
          throw ValidationError("non-finite descriptor at grid cell (" + std::to_string(row) + "," +
                                std::to_string(col) + ")");
        }
        nn += static_cast<double>(x) * x;
      }
      const double norm = std::sqrt(nn);
      if (!(norm > kMinDescriptorNorm)) {
        throw ValidationError("zero-norm descriptor at grid cell (" + std::to_string(row) + "," + std::to_string(col) +
                              ")");
      }
      std::fill(group_sum.begin(), group_sum.end(), 0.0);
      for (std::size_t k = 0; k < groups.units.size(); ++k) {
        const auto& u = groups.units[k];
        double dot = 0.0;
        for (std::size_t i = 0; i < dim; ++i) dot += u[i] * key[i];
        group_sum[groups.group_of[k]] += std::max(0.0, dot / norm);
      }
      double s = 0.0;
      for (std::size_t g = 0; g < groups.groups; ++g) s += group_sum[g] * groups.group_weight[g];
      s /= static_cast<double>(groups.groups);
      out.at(static_cast<int>(row), col) = static_cast<float>(std::clamp(s, 0.0, 1.0));
    }
  });
  return out;
}

namespace detail {

// Continuous grid coordinate of pixel `p` (pixel centers at p + 0.5).
inline double grid_coord(int p, const PatchGeometry& g) noexcept {
  return (p + 0.5 - g.patch / 2.0) / g.stride;
}

inline int nearest_cell(int p, const PatchGeometry& g, int cells) noexcept {
  // Ties go to the lower cell.
  const int idx = static_cast<int>(std::ceil(grid_coord(p, g) - 0.5));
  return std::clamp(idx, 0, cells - 1);
}

struct Lerp {
  int lo = 0;
  int hi = 0;
  double frac = 0.0;
};

inline Lerp lerp_cells(int p, const PatchGeometry& g, int cells) noexcept {
  const double c = std::clamp(grid_coord(p, g), 0.0, static_cast<double>(cells - 1));
  const int lo = static_cast<int>(std::floor(c));
  return {lo, std::min(lo + 1, cells - 1), c - lo};
}

}  // namespace detail

/// Maps a patch grid back to an h x w pixel map. Patch (r, c) is centred at
/// (r*stride + patch/2, c*stride + patch/2); pixels beyond the outer centres
/// take the nearest cell's value in both modes.
inline SaliencyMap reassemble(const Image& patch_vals, const PatchGeometry& geometry, int height, int width,
                              Reassembly mode = Reassembly::nearest, int frame_index = 0) {
  if (patch_vals.channels != 1) throw ValidationError("patch values must be single-channel");
  if (geometry.grid_extent(height) != patch_vals.height || geometry.grid_extent(width) != patch_vals.width) {
    throw ValidationError("patch grid " + std::to_string(patch_vals.height) + "x" + std::to_string(patch_vals.width) +
                          " inconsistent with " + std::to_string(height) + "x" + std::to_string(width) +
                          " at patch " + std::to_string(geometry.patch) + ", stride " +
                          std::to_string(geometry.stride));
  }
  require_unit_range(patch_vals, "patch saliency");
  const int gh = patch_vals.height;
  const int gw = patch_vals.width;
  SaliencyMap out{frame_index, Image(height, width, 1)};

  if (mode == Reassembly::nearest) {
    std::vector<int> col_cell(static_cast<std::size_t>(width));
    for (int x = 0; x < width; ++x) col_cell[x] = detail::nearest_cell(x, geometry, gw);
    for (int y = 0; y < height; ++y) {
      const int r = detail::nearest_cell(y, geometry, gh);
      for (int x = 0; x < width; ++x) out.values.at(y, x) = patch_vals.at(r, col_cell[x]);
    }
    return out;
  }

  std::vector<detail::Lerp> cols(static_cast<std::size_t>(width));
  for (int x = 0; x < width; ++x) cols[x] = detail::lerp_cells(x, geometry, gw);
  for (int y = 0; y < height; ++y) {
    const auto rw = detail::lerp_cells(y, geometry, gh);
    for (int x = 0; x < width; ++x) {
      const auto& cw = cols[x];
      const double top = (1.0 - cw.frac) * patch_vals.at(rw.lo, cw.lo) + cw.frac * patch_vals.at(rw.lo, cw.hi);
      const double bottom = (1.0 - cw.frac) * patch_vals.at(rw.hi, cw.lo) + cw.frac * patch_vals.at(rw.hi, cw.hi);
      const double v = (1.0 - rw.frac) * top + rw.frac * bottom;
      out.values.at(y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

/// One saliency map per frame; frame t depends only on descriptor grid t.
inline std::vector<SaliencyMap> saliency_for_clip(const ClipManifest& manifest, const SelectedTemplates& selected,
                                                  const SaliencyOptions& options = {}) {
  if (!manifest.has_descriptors()) {
    throw ValidationError("manifest \"" + manifest.clip_id + "\" has no descriptor grids");
  }
  std::vector<SaliencyMap> maps(manifest.frame_count());
  parallel_for(maps.size(), [&](std::size_t t) {
    const auto grid = load_grid(manifest.resolve(manifest.descriptor_paths[t]), manifest.geometry, manifest.height,
                                manifest.width);
    maps[t] = reassemble(patch_saliency(grid, selected, options.averaging), manifest.geometry, manifest.height,
                         manifest.width, options.reassembly, static_cast<int>(t));
  });
  return maps;
}

/// Pixel-wise arithmetic mean of equally shaped single-channel maps.
inline Image average_saliency(std::span<const Image> maps) {
  if (maps.empty()) throw ValidationError("average_saliency needs at least one map");
  std::vector<double> sum(maps.front().size(), 0.0);
  for (const auto& m : maps) {
    if (!m.same_shape(maps.front())) {
      throw ValidationError("saliency map shape " + m.shape_string() + " != " + maps.front().shape_string());
    }
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += m.data[i];
  }
  Image out(maps.front().height, maps.front().width, maps.front().channels);
  const double n = static_cast<double>(maps.size());
  for (std::size_t i = 0; i < sum.size(); ++i) out.data[i] = static_cast<float>(sum[i] / n);
  return out;
}

inline Image average_saliency(std::span<const SaliencyMap> maps) {
  std::vector<Image> images;
  images.reserve(maps.size());
  for (const auto& m : maps) images.push_back(m.values);
  return average_saliency(std::span<const Image>(images));
}

struct SimilarityMatrix {
  std::vector<std::string> names;
  std::vector<double> values;  // n x n, row-major

  std::size_t size() const noexcept { return names.size(); }
  double at(std::size_t i, std::size_t j) const noexcept { return values[i * names.size() + j]; }
};

/// v_ij = sum_p |avg_i(p) - avg_j(p)| between per-template average maps.
/// With `per_pixel`, the sum is divided by the pixel count.
inline SimilarityMatrix template_similarity_matrix(std::span<const std::pair<std::string, Image>> averages,
                                                   bool per_pixel = false) {
  if (averages.size() < 2) throw ValidationError("template_similarity_matrix needs at least two templates");
  const Image& ref = averages.front().second;
  for (const auto& [name, map] : averages) {
    if (!map.same_shape(ref)) {
      throw ValidationError("average map \"" + name + "\" is " + map.shape_string() + ", expected " +
                            ref.shape_string());
    }
  }
  const std::size_t n = averages.size();
  SimilarityMatrix m;
  m.values.assign(n * n, 0.0);
  for (const auto& a : averages) m.names.push_back(a.first);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto& a = averages[i].second.data;
      const auto& b = averages[j].second.data;
      double v = 0.0;
      for (std::size_t p = 0; p < a.size(); ++p) v += std::abs(static_cast<double>(a[p]) - static_cast<double>(b[p]));
      if (per_pixel && !a.empty()) v /= static_cast<double>(a.size());
      m.values[i * n + j] = v;
      m.values[j * n + i] = v;
    }
  }
  return m;
}

/// Average saliency of each named template on its own, over every frame of
/// every clip. All clips must share one frame size.
inline std::vector<std::pair<std::string, Image>> per_template_averages(std::span<const ClipManifest> clips,
                                                                        const TemplateLibrary& lib,
                                                                        const std::vector<std::string>& names,
                                                                        const SaliencyOptions& options = {}) {
  if (clips.empty()) throw ValidationError("no clips given");
  std::vector<std::pair<std::string, Image>> out;
  for (const auto& name : names) {
    const std::string single[] = {name};
    const auto sel = select(lib, single);
    std::vector<Image> maps;
    for (const auto& clip : clips) {
      if (clip.height != clips.front().height || clip.width != clips.front().width) {
        throw ValidationError("clip \"" + clip.clip_id + "\" frame size differs from \"" + clips.front().clip_id + "\"");
      }
      for (auto& m : saliency_for_clip(clip, sel, options)) maps.push_back(std::move(m.values));
    }
    out.emplace_back(name, average_saliency(std::span<const Image>(maps)));
  }
  return out;
}

}  // namespace veilkit
