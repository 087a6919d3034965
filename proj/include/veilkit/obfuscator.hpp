#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "veilkit/error.hpp"
#include "veilkit/hash.hpp"
#include "veilkit/image.hpp"
#include "veilkit/manifest.hpp"
#include "veilkit/motion_noise.hpp"
#include "veilkit/parallel.hpp"
#include "veilkit/saliency.hpp"
#include "veilkit/template_lib.hpp"
#include "veilkit/tensor_store.hpp"
#include "veilkit/timing.hpp"

namespace veilkit {

struct ObfuscationConfig {
  std::vector<std::string> template_names;
  std::uint64_t seed = 0;
  NoiseMode noise_mode = NoiseMode::warp_iterative;
  Reassembly reassembly = Reassembly::nearest;
  TemplateAveraging averaging = TemplateAveraging::per_template;
  float saliency_gain = 1.0f;

  void validate() const {
    if (template_names.empty()) throw ValidationError("at least one template must be selected");
    if (!std::isfinite(saliency_gain) || saliency_gain < 0.0f) throw ValidationError("saliency gain must be >= 0");
  }

  nlohmann::json to_json() const {
    return {{"templates", template_names},
            {"seed", seed},
            {"noise_mode", std::string(to_string(noise_mode))},
            {"reassembly", std::string(to_string(reassembly))},
            {"flatten", averaging == TemplateAveraging::flatten},
            {"saliency_gain", saliency_gain}};
  }

  std::string hash() const { return digest_string(to_json().dump()); }
};

/// O = I + S * (N - I), evaluated as (1 - S) * I + S * N in double so that
/// S = 0 reproduces I and S = 1 reproduces N bit for bit. S is broadcast over
/// channels.
inline Image blend_frame(const Image& frame, const Image& saliency, const Image& noise) {
  if (!frame.same_shape(noise) || frame.channels != 3) {
    throw ValidationError("blend: frame " + frame.shape_string() + " and noise " + noise.shape_string() +
                          " must both be h x w x 3");
  }
  if (!saliency.same_extent(frame) || saliency.channels != 1) {
    throw ValidationError("blend: saliency " + saliency.shape_string() + " must be h x w x 1 matching the frame");
  }
  require_unit_range(frame, "frame");
  require_unit_range(noise, "noise");
  require_unit_range(saliency, "saliency");
  Image out(frame.height, frame.width, 3);
  const std::size_t n = frame.pixel_count();
  for (std::size_t p = 0; p < n; ++p) {
    const double s = saliency.data[p];
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t i = 3 * p + c;
      out.data[i] = static_cast<float>((1.0 - s) * frame.data[i] + s * noise.data[i]);
    }
  }
  return out;
}

/// Multiplies a saliency map by `gain` and clamps to [0,1]. Gain 1 is exact.
inline Image apply_gain(Image s, float gain) {
  if (gain == 1.0f) return s;
  for (auto& v : s.data) v = clamp01(v * gain);
  return s;
}

struct ObfuscationResult {
  std::vector<Image> frames;
  std::vector<SaliencyMap> saliency;  // before gain
  NoiseSequence noise;
  std::string config_hash;
};

namespace detail {

inline std::optional<std::vector<Image>> load_cached(const std::filesystem::path& dir, std::size_t count) {
  std::vector<Image> out;
  for (std::size_t t = 0; t < count; ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "%04zu.tnsr", t);
    if (!std::filesystem::exists(dir / name)) return std::nullopt;
    out.push_back(read_image_tensor(dir / name));
  }
  return out;
}

inline void store_cached(const std::filesystem::path& dir, const std::vector<Image>& images) {
  std::filesystem::create_directories(dir);
  for (std::size_t t = 0; t < images.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "%04zu.tnsr", t);
    write_image_tensor(dir / name, images[t]);
  }
}

inline std::string saliency_cache_key(const ClipManifest& m, const SelectedTemplates& sel, const ObfuscationConfig& cfg) {
  Fnv1a h;
  h.update("saliency/v1/");
  for (const auto& p : m.descriptor_paths) h.update(digest_file(m.resolve(p)));
  for (const auto& t : sel.templates) {
    h.update(t.name);
    h.update(std::span(reinterpret_cast<const std::uint8_t*>(t.values.data()), t.values.size() * sizeof(float)));
  }
  h.update(to_string(cfg.reassembly));
  h.update(cfg.averaging == TemplateAveraging::flatten ? "flatten" : "per_template");
  h.update(std::to_string(m.geometry.patch) + "/" + std::to_string(m.geometry.stride));
  return hex64(h.value());
}

inline std::string noise_cache_key(const ClipManifest& m, const DatasetStats& stats, const ObfuscationConfig& cfg) {
  Fnv1a h;
  h.update("noise/v1/");
  if (cfg.noise_mode != NoiseMode::iid) {
    for (const auto& p : m.flow_paths) h.update(digest_file(m.resolve(p)));
  }
  const auto mean = stats.mean_f();
  const auto std = stats.std_f();
  h.update(std::span(reinterpret_cast<const std::uint8_t*>(mean.data()), sizeof mean));
  h.update(std::span(reinterpret_cast<const std::uint8_t*>(std.data()), sizeof std));
  h.update(std::to_string(m.height) + "x" + std::to_string(m.width) + "x" + std::to_string(m.frame_count()));
  h.update(std::to_string(cfg.seed));
  h.update(to_string(cfg.noise_mode));
  return hex64(h.value());
}

}  // namespace detail

struct ObfuscationOptions {
  std::optional<std::filesystem::path> cache_dir;  // reuse saliency / noise across runs
  std::optional<DatasetStats> stats;               // overrides manifest / clip statistics
  StageLog log;
};

/// O_t = blend(I_t, clamp(gain * S_t), N_t) for every frame of the clip.
inline ObfuscationResult obfuscate_clip(const ClipManifest& manifest, const TemplateLibrary& library,
                                        const ObfuscationConfig& config, const ObfuscationOptions& options = {}) {
  config.validate();
  const std::size_t T = manifest.frame_count();
  ObfuscationResult result;
  result.config_hash = config.hash();

  const auto selected = with_stage("template", [&] { return select(library, config.template_names); });
  const SaliencyOptions sal_opts{config.reassembly, config.averaging};

  result.saliency = with_stage("saliency", [&] {
    return options.log.time("saliency", T, [&] {
      std::optional<std::filesystem::path> dir;
      if (options.cache_dir) {
        dir = *options.cache_dir / ("saliency-" + detail::saliency_cache_key(manifest, selected, config));
        if (auto hit = detail::load_cached(*dir, T)) {
          std::vector<SaliencyMap> maps;
          for (std::size_t t = 0; t < T; ++t) maps.push_back({static_cast<int>(t), std::move((*hit)[t])});
          return maps;
        }
      }
      auto maps = saliency_for_clip(manifest, selected, sal_opts);
      if (dir) {
        std::vector<Image> images;
        for (const auto& m : maps) images.push_back(m.values);
        detail::store_cached(*dir, images);
      }
      return maps;
    });
  });

  result.noise = with_stage("noise", [&] {
    return options.log.time("noise", T, [&] {
      const DatasetStats stats = options.stats ? *options.stats : resolve_stats(manifest);
      std::optional<std::filesystem::path> dir;
      if (options.cache_dir) {
        dir = *options.cache_dir / ("noise-" + detail::noise_cache_key(manifest, stats, config));
        if (auto hit = detail::load_cached(*dir, T)) return NoiseSequence{std::move(*hit), config.seed, config.noise_mode};
      }
      auto seq = synthesize(manifest, config.seed, config.noise_mode, stats);
      if (dir) detail::store_cached(*dir, seq.frames);
      return seq;
    });
  });

  result.frames.resize(T);
  with_stage("blend", [&] {
    options.log.time("blend", T, [&] {
      parallel_for(T, [&](std::size_t t) {
        const Image frame = load_frame(manifest.resolve(manifest.frame_paths[t]));
        result.frames[t] = blend_frame(frame, apply_gain(result.saliency[t].values, config.saliency_gain),
                                       result.noise.frames[t]);
      });
    });
  });
  return result;
}

}  // namespace veilkit
