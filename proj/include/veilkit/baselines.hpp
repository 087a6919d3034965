#pragma once

// Whole-frame obfuscation baselines: block pixelation, Gaussian blur and
// region mask fill.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "veilkit/error.hpp"
#include "veilkit/image.hpp"

namespace veilkit {

/// Replaces each x-by-x block (anchored at the top-left corner) with its
/// per-channel mean. Edge blocks average over their actual extent; output
/// dimensions equal the input's.
inline Image pixelate(const Image& frame, int block) {
  if (block < 1) throw ValidationError("pixelate block size must be >= 1, got " + std::to_string(block));
  Image out(frame.height, frame.width, frame.channels);
  std::vector<double> sum(static_cast<std::size_t>(frame.channels));
  for (int by = 0; by < frame.height; by += block) {
    const int ey = std::min(frame.height, by + block);
    for (int bx = 0; bx < frame.width; bx += block) {
      const int ex = std::min(frame.width, bx + block);
      std::fill(sum.begin(), sum.end(), 0.0);
      for (int y = by; y < ey; ++y)
        for (int x = bx; x < ex; ++x)
          for (int c = 0; c < frame.channels; ++c) sum[c] += frame.at(y, x, c);
      const double n = static_cast<double>(ey - by) * (ex - bx);
      for (int c = 0; c < frame.channels; ++c) {
        const float mean = static_cast<float>(sum[c] / n);
        for (int y = by; y < ey; ++y)
          for (int x = bx; x < ex; ++x) out.at(y, x, c) = mean;
      }
    }
  }
  return out;
}

/// Sampled Gaussian of `kappa` taps (odd) normalized to sum 1.
inline std::vector<double> gaussian_kernel(int kappa, double sigma) {
  if (kappa < 1 || kappa % 2 == 0) throw ValidationError("blur kernel size must be odd and >= 1, got " + std::to_string(kappa));
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ValidationError("blur sigma must be > 0");
  const int r = kappa / 2;
  std::vector<double> k(static_cast<std::size_t>(kappa));
  double total = 0.0;
  for (int i = 0; i < kappa; ++i) {
    const double d = i - r;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += k[i];
  }
  for (auto& v : k) v /= total;
  return k;
}

namespace detail {

// Half-sample symmetric extension (... c b a | a b c ... | c b a ...).
inline int reflect_index(int i, int n) noexcept {
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

}  // namespace detail

/// Separable Gaussian blur with symmetric reflection at the borders.
inline Image gaussian_blur(const Image& frame, int kappa, double sigma) {
  const auto k = gaussian_kernel(kappa, sigma);
  const int r = kappa / 2;
  const int h = frame.height;
  const int w = frame.width;
  const int ch = frame.channels;
  if (h == 0 || w == 0) return frame;
  std::vector<double> tmp(frame.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = 0; i < kappa; ++i) acc += k[i] * frame.at(y, detail::reflect_index(x + i - r, w), c);
        tmp[frame.index(y, x, c)] = acc;
      }
    }
  }
  Image out(h, w, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = 0; i < kappa; ++i) acc += k[i] * tmp[frame.index(detail::reflect_index(y + i - r, h), x, c)];
        out.at(y, x, c) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

/// Pixels where `mask` is nonzero take the per-channel mean of the frame
/// over the masked region; everything else is untouched.
inline Image mask_fill(const Image& frame, const Image& mask) {
  if (!mask.same_extent(frame) || mask.channels != 1) {
    throw ValidationError("mask " + mask.shape_string() + " must be single-channel and match frame " +
                          frame.shape_string());
  }
  std::vector<double> sum(static_cast<std::size_t>(frame.channels), 0.0);
  std::size_t count = 0;
  for (std::size_t p = 0; p < frame.pixel_count(); ++p) {
    if (mask.data[p] == 0.0f) continue;
    ++count;
    for (int c = 0; c < frame.channels; ++c) sum[c] += frame.data[p * frame.channels + c];
  }
  Image out = frame;
  if (count == 0) return out;
  for (std::size_t p = 0; p < frame.pixel_count(); ++p) {
    if (mask.data[p] == 0.0f) continue;
    for (int c = 0; c < frame.channels; ++c) {
      out.data[p * frame.channels + c] = static_cast<float>(sum[c] / static_cast<double>(count));
    }
  }
  return out;
}

/// Bilinear resampling with pixel-centre alignment and edge clamping.
inline Image resize_bilinear(const Image& frame, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ValidationError("resize target must be positive");
  if (frame.height == out_h && frame.width == out_w) return frame;
  Image out(out_h, out_w, frame.channels);
  const double sy = static_cast<double>(frame.height) / out_h;
  const double sx = static_cast<double>(frame.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(frame.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, frame.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(frame.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, frame.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < frame.channels; ++c) {
        const double top = (1 - wx) * frame.at(y0, x0, c) + wx * frame.at(y0, x1, c);
        const double bot = (1 - wx) * frame.at(y1, x0, c) + wx * frame.at(y1, x1, c);
        out.at(y, x, c) = static_cast<float>((1 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

struct BaselineSpec {
  enum class Kind { pixelate, blur, mask };

  Kind kind = Kind::pixelate;
  int block = 4;         // pixelate
  int kappa = 13;        // blur
  double sigma = 10.0;   // blur
  std::optional<int> resize_to;

  static BaselineSpec pixelation(int block) { return {Kind::pixelate, block, 13, 10.0, std::nullopt}; }
  static BaselineSpec blur(int kappa, double sigma) { return {Kind::blur, 4, kappa, sigma, std::nullopt}; }
  static BaselineSpec weak_blur() { return blur(13, 10.0); }
  static BaselineSpec strong_blur() { return blur(21, 10.0); }
  static BaselineSpec masking() { return {Kind::mask, 4, 13, 10.0, std::nullopt}; }

  void validate() const {
    if (kind == Kind::pixelate && block < 1) throw ValidationError("pixelate block size must be >= 1");
    if (kind == Kind::blur) gaussian_kernel(kappa, sigma);
    if (resize_to && *resize_to < 1) throw ValidationError("resize target must be positive");
  }
};

/// Applies a baseline to one frame, resizing first when requested. A mask is
/// resized along with the frame and re-binarized at 0.5.
inline Image apply_baseline(const Image& frame, const BaselineSpec& spec, const Image* mask = nullptr) {
  spec.validate();
  Image input = spec.resize_to ? resize_bilinear(frame, *spec.resize_to, *spec.resize_to) : frame;
  switch (spec.kind) {
    case BaselineSpec::Kind::pixelate: return pixelate(input, spec.block);
    case BaselineSpec::Kind::blur: return gaussian_blur(input, spec.kappa, spec.sigma);
    case BaselineSpec::Kind::mask: {
      if (!mask) throw ValidationError("mask baseline needs a mask per frame");
      if (!spec.resize_to) return mask_fill(input, *mask);
      Image m = resize_bilinear(*mask, *spec.resize_to, *spec.resize_to);
      for (auto& v : m.data) v = v >= 0.5f ? 1.0f : 0.0f;
      return mask_fill(input, m);
    }
  }
  return input;
}

}  // namespace veilkit
