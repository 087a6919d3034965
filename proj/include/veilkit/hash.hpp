#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>

#include "veilkit/error.hpp"

namespace veilkit {

/// 64-bit FNV-1a, used for config hashes and input digests (not security).
class Fnv1a {
public:
  void update(std::span<const std::uint8_t> bytes) noexcept {
    for (auto b : bytes) {
      state_ ^= b;
      state_ *= 0x100000001b3ull;
    }
  }
  void update(std::string_view s) noexcept {
    update(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  }
  std::uint64_t value() const noexcept { return state_; }

private:
  std::uint64_t state_ = 0xcbf29ce484222325ull;
};

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string digest_string(std::string_view s) {
  Fnv1a h;
  h.update(s);
  return hex64(h.value());
}

inline std::string digest_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for hashing: " + path.string());
  Fnv1a h;
  char buf[1 << 16];
  while (f) {
    f.read(buf, sizeof buf);
    h.update(std::span(reinterpret_cast<const std::uint8_t*>(buf), static_cast<std::size_t>(f.gcount())));
  }
  return hex64(h.value());
}

}  // namespace veilkit
