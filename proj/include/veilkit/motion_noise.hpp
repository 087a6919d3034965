#pragma once

// Motion-consistent noise: a seeded uniform noise frame sized to the clip,
// dragged along the clip's backward optical flow with nearest-neighbour
// sampling so that the noise video carries the source motion.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "veilkit/error.hpp"
#include "veilkit/image.hpp"
#include "veilkit/manifest.hpp"
#include "veilkit/parallel.hpp"
#include "veilkit/rng.hpp"
#include "veilkit/tensor_store.hpp"

namespace veilkit {

/// Backward flow of frame t: pixel p of frame t sits at p + (u, v) in frame t-1.
/// Channel 0 is u (horizontal), channel 1 is v (vertical), both in pixels.
struct FlowField {
  int t = 1;
  Image values;  // h x w x 2

  int height() const noexcept { return values.height; }
  int width() const noexcept { return values.width; }
};

inline FlowField make_flow(Image values, int t) {
  if (values.channels != 2) throw ValidationError("flow field must have 2 channels, got " + std::to_string(values.channels));
  const float bound = static_cast<float>(std::max(values.height, values.width));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float v = values.data[i];
    if (!std::isfinite(v)) throw ValidationError("flow field " + std::to_string(t) + " has a non-finite value");
    if (std::abs(v) >= bound) {
      throw ValidationError("flow field " + std::to_string(t) + " displacement " + std::to_string(v) +
                            " exceeds the frame size");
    }
  }
  return FlowField{t, std::move(values)};
}

/// Constant displacement (dx, dy) everywhere.
inline FlowField constant_flow(int height, int width, float dx, float dy, int t = 1) {
  Image v(height, width, 2);
  for (std::size_t i = 0; i < v.pixel_count(); ++i) {
    v.data[2 * i] = dx;
    v.data[2 * i + 1] = dy;
  }
  return make_flow(std::move(v), t);
}

inline FlowField load_flow(const std::filesystem::path& path, int t) {
  if (!std::filesystem::exists(path)) throw IoError("missing file: " + path.string());
  Image v = read_image_tensor(path);
  return make_flow(std::move(v), t);
}

enum class NoiseMode { warp_iterative, warp_composed, iid };

inline std::string_view to_string(NoiseMode m) noexcept {
  switch (m) {
    case NoiseMode::warp_iterative: return "warp";
    case NoiseMode::warp_composed: return "composed";
    case NoiseMode::iid: return "iid";
  }
  return "warp";
}

inline NoiseMode parse_noise_mode(std::string_view s) {
  if (s == "warp" || s == "warp_iterative") return NoiseMode::warp_iterative;
  if (s == "composed" || s == "warp_composed") return NoiseMode::warp_composed;
  if (s == "iid") return NoiseMode::iid;
  throw ValidationError("unknown noise mode \"" + std::string(s) + "\" (expected warp, composed or iid)");
}

struct NoiseSequence {
  std::vector<Image> frames;
  std::uint64_t seed = 0;
  NoiseMode mode = NoiseMode::warp_iterative;
};

/// Sub-seed of 0-based frame t in iid mode. Frame 0 keeps the base seed.
constexpr std::uint64_t iid_subseed(std::uint64_t seed, std::uint64_t t) noexcept {
  return seed ^ (t * 0x9E3779B97F4A7C15ull);
}

/// h x w x 3 frame, value (y, x, c) drawn from U[mean_c - std_c, mean_c + std_c]
/// then clamped to [0,1]. Draw index (y*w + x)*3 + c.
inline Image init_noise(int height, int width, const Rgb& mean, const Rgb& std, std::uint64_t seed) {
  for (int c = 0; c < 3; ++c) {
    if (!std::isfinite(mean[c]) || !std::isfinite(std[c])) throw ValidationError("noise statistics must be finite");
    if (std[c] < 0.0f) throw ValidationError("noise standard deviation must be >= 0");
  }
  const CounterRng rng(seed);
  Image out(height, width, 3);
  parallel_for(static_cast<std::size_t>(height), [&](std::size_t y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t base = (y * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3;
      for (int c = 0; c < 3; ++c) {
        const double lo = static_cast<double>(mean[c]) - static_cast<double>(std[c]);
        const double v = lo + rng.uniform(base + static_cast<std::size_t>(c)) * (2.0 * static_cast<double>(std[c]));
        out.data[base + static_cast<std::size_t>(c)] = clamp01(static_cast<float>(v));
      }
    }
  });
  return out;
}

namespace detail {

inline int round_clamp(double v, int extent) noexcept {
  // std::round rounds half away from zero.
  const double r = std::round(v);
  if (r < 0.0) return 0;
  if (r > extent - 1) return extent - 1;
  return static_cast<int>(r);
}

}  // namespace detail

/// next(p) = prev(clamp(round(p + flow(p)))), per channel.
inline Image warp_step(const Image& prev, const FlowField& flow) {
  if (!prev.same_extent(flow.values)) {
    throw ValidationError("flow " + flow.values.shape_string() + " does not match noise frame " + prev.shape_string());
  }
  Image next(prev.height, prev.width, prev.channels);
  parallel_for(static_cast<std::size_t>(prev.height), [&](std::size_t yy) {
    const int y = static_cast<int>(yy);
    for (int x = 0; x < prev.width; ++x) {
      const int sx = detail::round_clamp(x + static_cast<double>(flow.values.at(y, x, 0)), prev.width);
      const int sy = detail::round_clamp(y + static_cast<double>(flow.values.at(y, x, 1)), prev.height);
      for (int c = 0; c < prev.channels; ++c) next.at(y, x, c) = prev.at(sy, sx, c);
    }
  });
  return next;
}

/// Frame `frame` (0-based) gathered straight from the first noise frame: the
/// displacement is accumulated through flows frame..1, sampling each flow at
/// the rounded intermediate position, and rounded once at the end.
inline Image warp_composed_frame(const Image& first, std::span<const FlowField> flows, std::size_t frame) {
  Image out(first.height, first.width, first.channels);
  parallel_for(static_cast<std::size_t>(first.height), [&](std::size_t yy) {
    for (int x = 0; x < first.width; ++x) {
      double qx = x;
      double qy = static_cast<double>(yy);
      for (std::size_t s = frame; s >= 1; --s) {
        const auto& f = flows[s - 1].values;
        const int sx = detail::round_clamp(qx, first.width);
        const int sy = detail::round_clamp(qy, first.height);
        qx += f.at(sy, sx, 0);
        qy += f.at(sy, sx, 1);
      }
      const int gx = detail::round_clamp(qx, first.width);
      const int gy = detail::round_clamp(qy, first.height);
      for (int c = 0; c < first.channels; ++c) out.at(static_cast<int>(yy), x, c) = first.at(gy, gx, c);
    }
  });
  return out;
}

/// `frames` noise frames of h x w. flows[k] maps frame k+1 to frame k
/// (0-based) and is required for k < frames-1 in the warp modes.
inline NoiseSequence synthesize(int height, int width, std::size_t frames, std::span<const FlowField> flows,
                                const Rgb& mean, const Rgb& std, std::uint64_t seed, NoiseMode mode) {
  if (frames == 0) throw ValidationError("cannot synthesize an empty noise sequence");
  NoiseSequence seq{{}, seed, mode};
  seq.frames.reserve(frames);
  if (mode == NoiseMode::iid) {
    for (std::size_t t = 0; t < frames; ++t) seq.frames.push_back(init_noise(height, width, mean, std, iid_subseed(seed, t)));
    return seq;
  }
  if (flows.size() < frames - 1) {
    throw ValidationError("warp noise needs " + std::to_string(frames - 1) + " flow fields, got " +
                          std::to_string(flows.size()));
  }
  for (const auto& f : flows.first(frames - 1)) {
    if (f.height() != height || f.width() != width) {
      throw ValidationError("flow field " + std::to_string(f.t) + " is " + f.values.shape_string() + ", expected " +
                            std::to_string(height) + "x" + std::to_string(width) + "x2");
    }
  }
  seq.frames.push_back(init_noise(height, width, mean, std, seed));
  for (std::size_t t = 1; t < frames; ++t) {
    if (mode == NoiseMode::warp_iterative) {
      seq.frames.push_back(warp_step(seq.frames.back(), flows[t - 1]));
    } else {
      seq.frames.push_back(warp_composed_frame(seq.frames.front(), flows, t));
    }
  }
  return seq;
}

inline std::vector<FlowField> load_flows(const ClipManifest& m) {
  std::vector<FlowField> flows;
  flows.reserve(m.flow_paths.size());
  for (std::size_t i = 0; i < m.flow_paths.size(); ++i) {
    flows.push_back(load_flow(m.resolve(m.flow_paths[i]), static_cast<int>(i) + 1));
  }
  return flows;
}

inline NoiseSequence synthesize(const ClipManifest& m, std::uint64_t seed, NoiseMode mode,
                                const std::optional<DatasetStats>& stats = std::nullopt) {
  if (mode != NoiseMode::iid && m.frame_count() > 1 && !m.has_flows()) {
    throw ValidationError("noise mode \"" + std::string(to_string(mode)) + "\" needs flow fields; manifest \"" +
                          m.clip_id + "\" has none");
  }
  const DatasetStats s = stats ? *stats : resolve_stats(m);
  const auto flows = mode == NoiseMode::iid ? std::vector<FlowField>{} : load_flows(m);
  return synthesize(m.height, m.width, m.frame_count(), flows, s.mean_f(), s.std_f(), seed, mode);
}

}  // namespace veilkit
