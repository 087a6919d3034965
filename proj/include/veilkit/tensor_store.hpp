#pragma once

// TNSR binary container.
//
// Layout (all integers little-endian):
//   offset 0   "TNSR"
//   offset 4   version (u8, currently 1)
//   offset 5   dtype code (u8: 0 = f32, 1 = u8)
//   offset 6   ndim (u8)
//   offset 7   ndim x u32 dims, row-major
//   then       product(dims) x sizeof(dtype) payload bytes, little-endian

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "veilkit/error.hpp"
#include "veilkit/image.hpp"

namespace veilkit {

enum class DType : std::uint8_t { f32 = 0, u8 = 1 };

inline constexpr std::array<char, 4> kTensorMagic{'T', 'N', 'S', 'R'};
inline constexpr std::uint8_t kTensorVersion = 1;

constexpr std::size_t dtype_size(DType t) noexcept { return t == DType::f32 ? 4 : 1; }

inline const char* dtype_name(DType t) noexcept { return t == DType::f32 ? "f32" : "u8"; }

inline std::size_t shape_product(std::span<const std::uint32_t> shape) noexcept {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

inline std::string shape_string(std::span<const std::uint32_t> shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

struct TensorHeader {
  DType dtype = DType::f32;
  std::vector<std::uint32_t> shape;

  std::size_t header_bytes() const noexcept { return 7 + 4 * shape.size(); }
  std::size_t payload_bytes() const noexcept { return shape_product(shape) * dtype_size(dtype); }
};

struct TensorFile {
  DType dtype = DType::f32;
  std::vector<std::uint32_t> shape;
  std::vector<std::uint8_t> payload;  // raw little-endian bytes

  std::size_t element_count() const noexcept { return shape_product(shape); }

  std::vector<float> as_f32() const {
    if (dtype != DType::f32) throw ValidationError("tensor is u8, expected f32");
    std::vector<float> out(element_count());
    for (std::size_t i = 0; i < out.size(); ++i) {
      const std::uint8_t* b = payload.data() + 4 * i;
      const std::uint32_t bits = std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) |
                                 (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
      out[i] = std::bit_cast<float>(bits);
    }
    return out;
  }

  std::vector<std::uint8_t> as_u8() const {
    if (dtype != DType::u8) throw ValidationError("tensor is f32, expected u8");
    return payload;
  }
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const std::uint8_t* b) noexcept {
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
         (std::uint32_t{b[3]} << 24);
}

inline std::vector<std::uint8_t> encode_header(DType dtype, std::span<const std::uint32_t> shape) {
  if (shape.size() > 255) throw ValidationError("tensor rank exceeds 255");
  std::vector<std::uint8_t> out(kTensorMagic.begin(), kTensorMagic.end());
  out.push_back(kTensorVersion);
  out.push_back(static_cast<std::uint8_t>(dtype));
  out.push_back(static_cast<std::uint8_t>(shape.size()));
  for (auto d : shape) put_u32(out, d);
  return out;
}

inline TensorHeader decode_header(std::span<const std::uint8_t> bytes, const std::string& source) {
  if (bytes.size() < 4) throw ParseError(source, 0, "truncated header (" + std::to_string(bytes.size()) + " bytes)");
  if (std::memcmp(bytes.data(), kTensorMagic.data(), 4) != 0) throw ParseError(source, 0, "bad magic");
  if (bytes.size() < 7) throw ParseError(source, bytes.size(), "truncated header");
  if (bytes[4] != kTensorVersion) {
    throw ParseError(source, 4, "unsupported version " + std::to_string(bytes[4]));
  }
  TensorHeader h;
  if (bytes[5] > 1) throw ParseError(source, 5, "unknown dtype code " + std::to_string(bytes[5]));
  h.dtype = static_cast<DType>(bytes[5]);
  const std::size_t ndim = bytes[6];
  if (bytes.size() < 7 + 4 * ndim) {
    throw ParseError(source, bytes.size(),
                     "truncated header: expected " + std::to_string(7 + 4 * ndim) + " header bytes, got " +
                         std::to_string(bytes.size()));
  }
  h.shape.resize(ndim);
  for (std::size_t i = 0; i < ndim; ++i) h.shape[i] = get_u32(bytes.data() + 7 + 4 * i);
  return h;
}

inline void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path, std::size_t limit = SIZE_MAX) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path.string());
  std::vector<std::uint8_t> out;
  if (limit == SIZE_MAX) {
    out.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  } else {
    out.resize(limit);
    f.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(limit));
    out.resize(static_cast<std::size_t>(f.gcount()));
  }
  return out;
}

}  // namespace detail

/// Serializes a tensor to an in-memory TNSR image.
inline std::vector<std::uint8_t> encode_tensor(std::span<const std::uint32_t> shape, std::span<const float> values) {
  if (shape_product(shape) != values.size()) {
    throw ValidationError("shape " + shape_string(shape) + " holds " + std::to_string(shape_product(shape)) +
                          " values, got " + std::to_string(values.size()));
  }
  auto out = detail::encode_header(DType::f32, shape);
  out.reserve(out.size() + 4 * values.size());
  for (float v : values) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

inline std::vector<std::uint8_t> encode_tensor(std::span<const std::uint32_t> shape,
                                               std::span<const std::uint8_t> values) {
  if (shape_product(shape) != values.size()) {
    throw ValidationError("shape " + shape_string(shape) + " holds " + std::to_string(shape_product(shape)) +
                          " values, got " + std::to_string(values.size()));
  }
  auto out = detail::encode_header(DType::u8, shape);
  out.insert(out.end(), values.begin(), values.end());
  return out;
}

inline TensorFile decode_tensor(std::span<const std::uint8_t> bytes, const std::string& source = "<memory>") {
  const TensorHeader h = detail::decode_header(bytes, source);
  const std::size_t start = h.header_bytes();
  const std::size_t expected = h.payload_bytes();
  const std::size_t actual = bytes.size() - start;
  if (actual < expected) {
    throw ParseError(source, bytes.size(),
                     "truncated payload: expected " + std::to_string(expected) + " bytes, got " +
                         std::to_string(actual));
  }
  if (actual > expected) {
    throw ParseError(source, start + expected,
                     "trailing bytes: expected " + std::to_string(expected) + " payload bytes, got " +
                         std::to_string(actual));
  }
  TensorFile t;
  t.dtype = h.dtype;
  t.shape = h.shape;
  t.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(start), bytes.end());
  return t;
}

inline void write_tensor(const std::filesystem::path& path, std::span<const std::uint32_t> shape,
                         std::span<const float> values) {
  detail::write_bytes(path, encode_tensor(shape, values));
}

inline void write_tensor(const std::filesystem::path& path, std::span<const std::uint32_t> shape,
                         std::span<const std::uint8_t> values) {
  detail::write_bytes(path, encode_tensor(shape, values));
}

inline TensorFile read_tensor(const std::filesystem::path& path) {
  return decode_tensor(detail::read_bytes(path), path.string());
}

/// Reads only the header; the payload length is checked against the file size
/// without loading it.
inline TensorHeader read_tensor_header(const std::filesystem::path& path) {
  std::error_code ec;
  const auto file_size = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot stat " + path.string() + ": " + ec.message());
  auto head = detail::read_bytes(path, 7);
  std::size_t ndim = head.size() >= 7 ? head[6] : 0;
  if (ndim > 0) head = detail::read_bytes(path, 7 + 4 * ndim);
  TensorHeader h = detail::decode_header(head, path.string());
  const std::size_t actual = static_cast<std::size_t>(file_size) - h.header_bytes();
  if (actual != h.payload_bytes()) {
    throw ParseError(path.string(), static_cast<std::size_t>(file_size),
                     "payload size mismatch: expected " + std::to_string(h.payload_bytes()) + " bytes, got " +
                         std::to_string(actual));
  }
  return h;
}

/// Writes an image as f32 [h, w, c], or [h, w] when single-channel.
inline void write_image_tensor(const std::filesystem::path& path, const Image& img) {
  std::vector<std::uint32_t> shape{static_cast<std::uint32_t>(img.height), static_cast<std::uint32_t>(img.width)};
  if (img.channels != 1) shape.push_back(static_cast<std::uint32_t>(img.channels));
  write_tensor(path, shape, img.values());
}

/// Reads an f32 [h, w] or [h, w, c] tensor, or a u8 one mapped to x/255.
inline Image read_image_tensor(const std::filesystem::path& path) {
  const TensorFile t = read_tensor(path);
  if (t.shape.size() != 2 && t.shape.size() != 3) {
    throw ValidationError(path.string() + ": expected rank-2 or rank-3 image tensor, got " + shape_string(t.shape));
  }
  Image img(static_cast<int>(t.shape[0]), static_cast<int>(t.shape[1]),
            t.shape.size() == 3 ? static_cast<int>(t.shape[2]) : 1);
  if (t.dtype == DType::f32) {
    img.data = t.as_f32();
  } else {
    for (std::size_t i = 0; i < t.payload.size(); ++i) img.data[i] = static_cast<float>(t.payload[i]) / 255.0f;
  }
  return img;
}

}  // namespace veilkit
