#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <random>
#include <set>

#include "test_support.hpp"
#include "veilkit/motion_noise.hpp"

using namespace veilkit;
using Catch::Matchers::ContainsSubstring;

namespace {

const Rgb kMean{0.5f, 0.5f, 0.5f};
const Rgb kStd{0.1f, 0.1f, 0.1f};

double correlation(const Image& a, const Image& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a.data[i];
    mb += b.data[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a.data[i] - ma) * (b.data[i] - mb);
    saa += (a.data[i] - ma) * (a.data[i] - ma);
    sbb += (b.data[i] - mb) * (b.data[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Integer flow with components in {-1, 0, 1}.
FlowField random_int_flow(std::mt19937_64& rng, int h, int w, int t) {
  Image v(h, w, 2);
  for (auto& x : v.data) x = static_cast<float>(static_cast<int>(rng() % 3) - 1);
  return make_flow(std::move(v), t);
}

}  // namespace

TEST_CASE("zero std gives a constant frame at the mean") {
  const auto f = init_noise(9, 7, Rgb{0.2f, 0.4f, 0.6f}, Rgb{0, 0, 0}, 5);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 7; ++x) {
      CHECK(f.at(y, x, 0) == 0.2f);
      CHECK(f.at(y, x, 1) == 0.4f);
      CHECK(f.at(y, x, 2) == 0.6f);
    }
}

TEST_CASE("noise stays inside mean +- std and covers it uniformly") {
  const auto f = init_noise(64, 64, kMean, kStd, 11);
  double sum = 0, sq = 0;
  for (float v : f.data) {
    CHECK(v >= 0.4f - 1e-6f);
    CHECK(v <= 0.6f + 1e-6f);
    sum += v;
    sq += double(v) * v;
  }
  const double n = static_cast<double>(f.size());
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean - 0.5) < 0.002);
  CHECK(std::abs(var - 0.01 / 3.0) < 0.01 / 3.0 * 0.05);
}

TEST_CASE("noise is clamped to [0,1]") {
  const auto f = init_noise(32, 32, Rgb{0.95f, 0.05f, 0.5f}, Rgb{0.2f, 0.2f, 0.6f}, 3);
  bool hit_one = false, hit_zero = false;
  for (float v : f.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
    hit_one = hit_one || v == 1.0f;
    hit_zero = hit_zero || v == 0.0f;
  }
  CHECK(hit_one);
  CHECK(hit_zero);
}

TEST_CASE("noise is a function of the seed") {
  const auto a = init_noise(32, 32, kMean, kStd, 1234);
  CHECK(init_noise(32, 32, kMean, kStd, 1234) == a);
  const auto b = init_noise(32, 32, kMean, kStd, 1235);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < a.size(); ++i) differ += a.data[i] != b.data[i];
  CHECK(static_cast<double>(differ) / a.size() > 0.99);
}

TEST_CASE("bad noise statistics are rejected") {
  CHECK_THROWS_AS(init_noise(4, 4, kMean, Rgb{-0.1f, 0.1f, 0.1f}, 0), ValidationError);
  CHECK_THROWS_AS(init_noise(4, 4, Rgb{NAN, 0.5f, 0.5f}, kStd, 0), ValidationError);
}

TEST_CASE("zero flow leaves the frame unchanged") {
  const auto f = init_noise(16, 12, kMean, kStd, 2);
  CHECK(warp_step(f, constant_flow(16, 12, 0, 0)) == f);
}

TEST_CASE("unit horizontal flow matches a brute-force shift") {
  const int h = 10, w = 13;
  const auto f = init_noise(h, w, kMean, kStd, 4);
  const auto next = warp_step(f, constant_flow(h, w, 1, 0));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) CHECK(next.at(y, x, c) == f.at(y, std::min(x + 1, w - 1), c));
  const auto up = warp_step(f, constant_flow(h, w, 0, -2));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) CHECK(up.at(y, x, 1) == f.at(std::max(y - 2, 0), x, 1));
}

TEST_CASE("sub-pixel flow rounds to the nearest pixel") {
  const auto f = init_noise(8, 8, kMean, kStd, 6);
  CHECK(warp_step(f, constant_flow(8, 8, 0.4f, -0.4f)) == f);
  CHECK(warp_step(f, constant_flow(8, 8, 0.6f, 0)) == warp_step(f, constant_flow(8, 8, 1, 0)));
  // The sample position x + u is rounded half away from zero, so +0.5 moves and -0.5 does not.
  CHECK(warp_step(f, constant_flow(8, 8, 0.5f, 0)) == warp_step(f, constant_flow(8, 8, 1, 0)));
  CHECK(warp_step(f, constant_flow(8, 8, -0.5f, 0)) == f);
  CHECK(warp_step(f, constant_flow(8, 8, -0.6f, 0)) == warp_step(f, constant_flow(8, 8, -1, 0)));
}

TEST_CASE("warped values all come from the previous frame") {
  std::mt19937_64 rng(8);
  const auto f = init_noise(20, 20, kMean, kStd, 8);
  Image flow(20, 20, 2);
  for (auto& v : flow.data) v = static_cast<float>(static_cast<int>(rng() % 11) - 5) * 0.7f;
  const auto next = warp_step(f, make_flow(flow, 1));
  const std::set<float> source(f.data.begin(), f.data.end());
  for (float v : next.data) CHECK(source.contains(v));
}

TEST_CASE("constant flow accumulates over frames in both warp modes") {
  const int h = 12, w = 24, T = 6;
  std::vector<FlowField> flows;
  for (int t = 1; t < T; ++t) flows.push_back(constant_flow(h, w, 1, 0, t));
  for (auto mode : {NoiseMode::warp_iterative, NoiseMode::warp_composed}) {
    const auto seq = synthesize(h, w, T, flows, kMean, kStd, 21, mode);
    REQUIRE(seq.frames.size() == static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) CHECK(seq.frames[t].at(y, x, 0) == seq.frames[0].at(y, std::min(x + t, w - 1), 0));
  }
}

TEST_CASE("iterative and composed agree wherever trajectories stay inside") {
  std::mt19937_64 rng(22);
  const int h = 24, w = 24, T = 5;
  std::vector<FlowField> flows;
  for (int t = 1; t < T; ++t) flows.push_back(random_int_flow(rng, h, w, t));
  const auto it = synthesize(h, w, T, flows, kMean, kStd, 5, NoiseMode::warp_iterative);
  const auto co = synthesize(h, w, T, flows, kMean, kStd, 5, NoiseMode::warp_composed);
  std::size_t checked = 0;
  for (int t = 1; t < T; ++t)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int qx = x, qy = y;
        bool inside = true;
        for (int s = t; s >= 1 && inside; --s) {
          const auto& f = flows[s - 1].values;
          const int nx = qx + static_cast<int>(f.at(qy, qx, 0));
          const int ny = qy + static_cast<int>(f.at(qy, qx, 1));
          inside = nx >= 0 && nx < w && ny >= 0 && ny < h;
          qx = nx;
          qy = ny;
        }
        if (!inside) continue;
        ++checked;
        for (int c = 0; c < 3; ++c) {
          CHECK(it.frames[t].at(y, x, c) == co.frames[t].at(y, x, c));
          CHECK(it.frames[t].at(y, x, c) == it.frames[0].at(qy, qx, c));
        }
      }
  CHECK(checked > 1000);
}

TEST_CASE("iid frames are uncorrelated, zero-flow warp frames identical") {
  const int h = 64, w = 64;
  const auto iid = synthesize(h, w, 3, {}, kMean, kStd, 77, NoiseMode::iid);
  CHECK(std::abs(correlation(iid.frames[0], iid.frames[1])) < 0.05);
  CHECK(std::abs(correlation(iid.frames[1], iid.frames[2])) < 0.05);
  CHECK(iid.frames[0] == init_noise(h, w, kMean, kStd, 77));
  CHECK(iid.frames[2] == init_noise(h, w, kMean, kStd, 77ull ^ (2ull * 0x9E3779B97F4A7C15ull)));

  const std::vector<FlowField> zero = {constant_flow(h, w, 0, 0, 1), constant_flow(h, w, 0, 0, 2)};
  const auto warp = synthesize(h, w, 3, zero, kMean, kStd, 77, NoiseMode::warp_iterative);
  CHECK(correlation(warp.frames[0], warp.frames[2]) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("a single frame needs no flow in any mode") {
  for (auto mode : {NoiseMode::warp_iterative, NoiseMode::warp_composed, NoiseMode::iid}) {
    const auto seq = synthesize(5, 6, 1, {}, kMean, kStd, 9, mode);
    REQUIRE(seq.frames.size() == 1);
    CHECK(seq.frames[0] == init_noise(5, 6, kMean, kStd, 9));
  }
}

TEST_CASE("synthesize checks its inputs") {
  const std::vector<FlowField> one = {constant_flow(8, 8, 0, 0, 1)};
  CHECK_THROWS_WITH(synthesize(8, 8, 3, one, kMean, kStd, 0, NoiseMode::warp_iterative),
                    ContainsSubstring("needs 2 flow fields, got 1"));
  const std::vector<FlowField> wrong = {constant_flow(8, 9, 0, 0, 1)};
  CHECK_THROWS_AS(synthesize(8, 8, 2, wrong, kMean, kStd, 0, NoiseMode::warp_composed), ValidationError);
  CHECK_THROWS_AS(synthesize(8, 8, 0, {}, kMean, kStd, 0, NoiseMode::iid), ValidationError);
  CHECK_THROWS_AS(warp_step(Image(8, 8, 3), constant_flow(4, 8, 0, 0)), ValidationError);
}

TEST_CASE("flow fields are validated") {
  CHECK_THROWS_AS(make_flow(Image(4, 4, 3), 1), ValidationError);
  Image nan(4, 4, 2);
  nan.data[3] = NAN;
  CHECK_THROWS_AS(make_flow(nan, 1), ValidationError);
  CHECK_THROWS_WITH(constant_flow(4, 4, 4.0f, 0), ContainsSubstring("exceeds the frame size"));
  CHECK_NOTHROW(constant_flow(4, 4, 3.5f, -3.5f));
}

TEST_CASE("noise mode names") {
  CHECK(parse_noise_mode("warp") == NoiseMode::warp_iterative);
  CHECK(parse_noise_mode("composed") == NoiseMode::warp_composed);
  CHECK(parse_noise_mode("iid") == NoiseMode::iid);
  CHECK_THROWS_AS(parse_noise_mode("gaussian"), ValidationError);
  CHECK(to_string(NoiseMode::warp_composed) == "composed");
}

TEST_CASE("worker count does not change the result") {
  std::mt19937_64 rng(30);
  const int h = 48, w = 40, T = 4;
  std::vector<FlowField> flows;
  for (int t = 1; t < T; ++t) {
    Image v(h, w, 2);
    for (auto& x : v.data) x = static_cast<float>(static_cast<int>(rng() % 41) - 20) * 0.37f;
    flows.push_back(make_flow(v, t));
  }
  const char* old = std::getenv("VEILKIT_THREADS");
  const std::string saved = old ? old : "";
  std::vector<std::vector<Image>> runs;
  for (const char* n : {"1", "3", "8"}) {
    ::setenv("VEILKIT_THREADS", n, 1);
    for (auto mode : {NoiseMode::warp_iterative, NoiseMode::warp_composed, NoiseMode::iid})
      runs.push_back(synthesize(h, w, T, flows, kMean, kStd, 99, mode).frames);
  }
  if (old) {
    ::setenv("VEILKIT_THREADS", saved.c_str(), 1);
  } else {
    ::unsetenv("VEILKIT_THREADS");
  }
  for (std::size_t i = 3; i < runs.size(); ++i) CHECK(runs[i] == runs[i % 3]);
}
