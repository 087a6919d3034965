#include <catch_amalgamated.hpp>

#include <bit>
#include <cstring>
#include <random>

#include "test_support.hpp"
#include "veilkit/tensor_store.hpp"

using namespace veilkit;
using Catch::Matchers::ContainsSubstring;

namespace {

// Independent byte-level encoder for the container layout.
std::vector<std::uint8_t> reference_bytes(std::uint8_t dtype, const std::vector<std::uint32_t>& shape,
                                          const std::vector<std::uint8_t>& payload) {
  std::vector<std::uint8_t> b{'T', 'N', 'S', 'R', 1, dtype, static_cast<std::uint8_t>(shape.size())};
  for (auto d : shape) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>((d >> (8 * i)) & 0xFF));
  }
  b.insert(b.end(), payload.begin(), payload.end());
  return b;
}

}  // namespace

TEST_CASE("zero f32 2x2 tensor is a 31-byte file with zero payload") {
  vktest::TempDir dir("tnsr");
  const std::uint32_t shape[] = {2, 2};
  const std::vector<float> zeros(4, 0.0f);
  write_tensor(dir / "z.tnsr", shape, zeros);
  const auto bytes = detail::read_bytes(dir / "z.tnsr");
  REQUIRE(bytes.size() == 31);
  CHECK(bytes == reference_bytes(0, {2, 2}, std::vector<std::uint8_t>(16, 0)));
}

TEST_CASE("u8 scalar 255 stores a single 0xFF payload byte") {
  const std::uint32_t shape[] = {1};
  const std::uint8_t v[] = {255};
  const auto bytes = encode_tensor(shape, std::span<const std::uint8_t>(v));
  CHECK(bytes == reference_bytes(1, {1}, {0xFF}));
}

TEST_CASE("f32 payload is little-endian IEEE-754") {
  const std::uint32_t shape[] = {2};
  const float v[] = {1.0f, -2.5f};
  const auto bytes = encode_tensor(shape, std::span<const float>(v));
  // 1.0f = 0x3F800000, -2.5f = 0xC0200000
  const std::vector<std::uint8_t> payload{0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x20, 0xC0};
  CHECK(bytes == reference_bytes(0, {2}, payload));
}

TEST_CASE("random f32 [3,4,5] round trips bit for bit") {
  vktest::TempDir dir("tnsr");
  std::mt19937_64 rng(11);
  std::vector<float> v(60);
  for (auto& x : v) x = std::bit_cast<float>(static_cast<std::uint32_t>(rng()) & 0xFF7FFFFFu);
  const std::uint32_t shape[] = {3, 4, 5};
  write_tensor(dir / "r.tnsr", shape, v);
  const auto t = read_tensor(dir / "r.tnsr");
  CHECK(t.dtype == DType::f32);
  CHECK(t.shape == std::vector<std::uint32_t>{3, 4, 5});
  const auto back = t.as_f32();
  REQUIRE(back.size() == v.size());
  CHECK(std::memcmp(back.data(), v.data(), v.size() * sizeof(float)) == 0);
}

TEST_CASE("round trip is identity for both dtypes and ranks 1 to 4") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int ndim = 1 + static_cast<int>(rng() % 4);
    std::vector<std::uint32_t> shape;
    for (int i = 0; i < ndim; ++i) shape.push_back(static_cast<std::uint32_t>(1 + rng() % 5));
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    if (rng() % 2) {
      std::vector<std::uint8_t> v(n);
      for (auto& x : v) x = static_cast<std::uint8_t>(rng());
      const auto t = decode_tensor(encode_tensor(shape, std::span<const std::uint8_t>(v)));
      REQUIRE(t.dtype == DType::u8);
      REQUIRE(t.shape == shape);
      REQUIRE(t.as_u8() == v);
    } else {
      std::vector<float> v(n);
      for (auto& x : v) x = static_cast<float>(rng() % 100000) / 7.0f - 5000.0f;
      const auto bytes = encode_tensor(shape, std::span<const float>(v));
      const auto t = decode_tensor(bytes);
      REQUIRE(t.dtype == DType::f32);
      REQUIRE(t.shape == shape);
      REQUIRE(t.as_f32() == v);
      REQUIRE(encode_tensor(t.shape, std::span<const float>(t.as_f32())) == bytes);
    }
  }
}

TEST_CASE("shape and value count must agree on write") {
  const std::uint32_t shape[] = {2, 3};
  const std::vector<float> v(5);
  CHECK_THROWS_AS(encode_tensor(shape, std::span<const float>(v)), ValidationError);
}

TEST_CASE("decode errors name the offset") {
  const std::uint32_t shape[] = {2, 2};
  const std::vector<float> v(4, 1.0f);
  auto good = encode_tensor(shape, std::span<const float>(v));

  SECTION("bad magic") {
    auto b = good;
    std::memcpy(b.data(), "XXXX", 4);
    CHECK_THROWS_WITH(decode_tensor(b), ContainsSubstring("bad magic at offset 0"));
    try {
      decode_tensor(b);
    } catch (const ParseError& e) {
      CHECK(e.offset() == 0);
    }
  }
  SECTION("unsupported version") {
    auto b = good;
    b[4] = 2;
    CHECK_THROWS_WITH(decode_tensor(b), ContainsSubstring("offset 4"));
  }
  SECTION("unknown dtype") {
    auto b = good;
    b[5] = 7;
    CHECK_THROWS_WITH(decode_tensor(b), ContainsSubstring("unknown dtype") && ContainsSubstring("offset 5"));
  }
  SECTION("truncated payload reports expected and actual byte counts") {
    auto b = good;
    b.resize(b.size() - 3);
    CHECK_THROWS_WITH(decode_tensor(b), ContainsSubstring("expected 16 bytes, got 13"));
    CHECK_THROWS_AS(decode_tensor(b), ParseError);
  }
  SECTION("truncated header") {
    auto b = good;
    b.resize(9);
    CHECK_THROWS_AS(decode_tensor(b), ParseError);
  }
  SECTION("trailing bytes") {
    auto b = good;
    b.push_back(0);
    CHECK_THROWS_WITH(decode_tensor(b), ContainsSubstring("trailing bytes"));
  }
}

TEST_CASE("parse errors are I/O errors") {
  vktest::TempDir dir("tnsr");
  detail::write_bytes(dir / "bad.tnsr", std::vector<std::uint8_t>{'N', 'O', 'P', 'E', 1, 0, 0});
  CHECK_THROWS_AS(read_tensor(dir / "bad.tnsr"), IoError);
  CHECK_THROWS_AS(read_tensor(dir / "missing.tnsr"), IoError);
}

TEST_CASE("header-only read checks the payload length against the file size") {
  vktest::TempDir dir("tnsr");
  const std::uint32_t shape[] = {4, 4, 3};
  const std::vector<float> v(48, 0.25f);
  write_tensor(dir / "a.tnsr", shape, v);
  const auto h = read_tensor_header(dir / "a.tnsr");
  CHECK(h.shape == std::vector<std::uint32_t>{4, 4, 3});
  CHECK(h.payload_bytes() == 48 * 4);

  auto bytes = detail::read_bytes(dir / "a.tnsr");
  bytes.resize(bytes.size() - 4);
  detail::write_bytes(dir / "b.tnsr", bytes);
  CHECK_THROWS_AS(read_tensor_header(dir / "b.tnsr"), ParseError);
}

TEST_CASE("image tensors keep [h,w] for one channel and map u8 to x/255") {
  vktest::TempDir dir("tnsr");
  std::mt19937_64 rng(2);
  const Image gray = vktest::random_image(rng, 5, 7, 1);
  write_image_tensor(dir / "g.tnsr", gray);
  CHECK(read_tensor_header(dir / "g.tnsr").shape == std::vector<std::uint32_t>{5, 7});
  CHECK(read_image_tensor(dir / "g.tnsr") == gray);

  const Image rgb = vktest::random_image(rng, 3, 4, 3);
  write_image_tensor(dir / "c.tnsr", rgb);
  CHECK(read_image_tensor(dir / "c.tnsr") == rgb);

  const std::uint32_t shape[] = {1, 2};
  const std::uint8_t raw[] = {0, 51};
  write_tensor(dir / "u.tnsr", shape, std::span<const std::uint8_t>(raw));
  const Image u = read_image_tensor(dir / "u.tnsr");
  CHECK(u.data[0] == 0.0f);
  CHECK(u.data[1] == 51.0f / 255.0f);
}
