#pragma once

// Counter-based random numbers (Philox4x32-10). A draw is a pure function of
// (seed, index), so any subset of draws can be produced in any order.

#include <array>
#include <cstdint>

namespace veilkit {

class CounterRng {
public:
  using Block = std::array<std::uint32_t, 4>;

  explicit CounterRng(std::uint64_t seed) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  std::uint64_t seed() const noexcept { return std::uint64_t{key_[0]} | (std::uint64_t{key_[1]} << 32); }

  static Block philox(Block ctr, std::array<std::uint32_t, 2> key) noexcept {
    constexpr std::uint32_t kMul0 = 0xD2511F53u;
    constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

  /// 128 random bits for block `counter` of stream `stream`.
  Block block(std::uint64_t counter, std::uint64_t stream = 0) const noexcept {
    return philox({static_cast<std::uint32_t>(counter), static_cast<std::uint32_t>(counter >> 32),
                   static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)},
                  key_);
  }

  /// The index-th 32-bit word of the stream.
  std::uint32_t bits(std::uint64_t index, std::uint64_t stream = 0) const noexcept {
    return block(index >> 2, stream)[index & 3];
  }

  /// Uniform on [0, 1) with 24-bit resolution.
  double uniform(std::uint64_t index, std::uint64_t stream = 0) const noexcept {
    return static_cast<double>(bits(index, stream) >> 8) * (1.0 / 16777216.0);
  }

private:
  std::array<std::uint32_t, 2> key_;
};

}  // namespace veilkit
