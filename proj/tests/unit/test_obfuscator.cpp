#include <catch_amalgamated.hpp>

#include <random>

#include "test_support.hpp"
#include "veilkit/obfuscator.hpp"
#include "veilkit/synth.hpp"

using namespace veilkit;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::StartsWith;

namespace {

ClipSpec blob_spec(int frames = 3) {
  ClipSpec s;
  s.clip_id = "blob";
  s.frames = frames;
  s.height = 32;
  s.width = 40;
  s.dim = 6;
  s.geometry = {8, 4};
  s.flow = {FlowPattern::Kind::constant, 1.0f, 0.0f, 0.0f};
  s.saliency = {SaliencyPattern::Kind::blob, 20.0, 16.0, 9.0};
  s.seed = 17;
  return s;
}

ObfuscationConfig target_config() {
  ObfuscationConfig cfg;
  cfg.template_names = {kTargetTemplate};
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("blend endpoints are bit exact") {
  std::mt19937_64 rng(1);
  const Image I = vktest::random_image(rng, 20, 30, 3);
  const Image N = vktest::random_image(rng, 20, 30, 3);
  CHECK(blend_frame(I, Image(20, 30, 1, 0.0f), N) == I);
  CHECK(blend_frame(I, Image(20, 30, 1, 1.0f), N) == N);
}

TEST_CASE("blend of 0.2 and 0.8 at 0.5 is 0.5") {
  const auto O = blend_frame(Image(2, 2, 3, 0.2f), Image(2, 2, 1, 0.5f), Image(2, 2, 3, 0.8f));
  for (float v : O.data) CHECK(v == Catch::Approx(0.5).margin(1e-7));
}

TEST_CASE("blend is convex and monotone in S") {
  std::mt19937_64 rng(2);
  const Image I = vktest::random_image(rng, 16, 16, 3);
  const Image N = vktest::random_image(rng, 16, 16, 3);
  Image prev = I;
  for (int k = 1; k <= 10; ++k) {
    const auto O = blend_frame(I, Image(16, 16, 1, k / 10.0f), N);
    for (std::size_t i = 0; i < O.size(); ++i) {
      CHECK(O.data[i] >= std::min(I.data[i], N.data[i]));
      CHECK(O.data[i] <= std::max(I.data[i], N.data[i]));
      if (N.data[i] >= I.data[i]) {
        CHECK(O.data[i] >= prev.data[i]);
      } else {
        CHECK(O.data[i] <= prev.data[i]);
      }
    }
    prev = O;
  }
}

TEST_CASE("per-pixel saliency is broadcast over channels") {
  std::mt19937_64 rng(3);
  const Image I = vktest::random_image(rng, 6, 5, 3);
  const Image N = vktest::random_image(rng, 6, 5, 3);
  const Image S = vktest::random_image(rng, 6, 5, 1);
  const auto O = blend_frame(I, S, N);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 5; ++x)
      for (int c = 0; c < 3; ++c) {
        const double s = S.at(y, x);
        CHECK(O.at(y, x, c) == static_cast<float>((1 - s) * I.at(y, x, c) + s * N.at(y, x, c)));
      }
}

TEST_CASE("blend rejects mismatched shapes and out-of-range values") {
  const Image I(4, 4, 3, 0.5f), N(4, 4, 3, 0.5f), S(4, 4, 1, 0.5f);
  CHECK_THROWS_AS(blend_frame(I, S, Image(4, 5, 3)), ValidationError);
  CHECK_THROWS_AS(blend_frame(I, Image(4, 4, 3), N), ValidationError);
  CHECK_THROWS_AS(blend_frame(I, Image(3, 4, 1), N), ValidationError);
  CHECK_THROWS_AS(blend_frame(Image(4, 4, 1), S, Image(4, 4, 1)), ValidationError);
  CHECK_THROWS_WITH(blend_frame(I, Image(4, 4, 1, 1.5f), N), ContainsSubstring("saliency"));
  CHECK_THROWS_WITH(blend_frame(Image(4, 4, 3, -0.1f), S, N), ContainsSubstring("frame"));
}

TEST_CASE("saliency gain") {
  std::mt19937_64 rng(4);
  const Image S = vktest::random_image(rng, 8, 8, 1);
  CHECK(apply_gain(S, 1.0f) == S);
  for (float v : apply_gain(S, 0.0f).data) CHECK(v == 0.0f);
  const auto doubled = apply_gain(S, 2.0f);
  for (std::size_t i = 0; i < S.size(); ++i) CHECK(doubled.data[i] == std::min(1.0f, S.data[i] * 2.0f));
}

TEST_CASE("config validation and hashing") {
  ObfuscationConfig cfg;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = target_config();
  cfg.saliency_gain = -1.0f;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  const auto a = target_config();
  auto b = a;
  CHECK(a.hash() == b.hash());
  b.seed = 6;
  CHECK(a.hash() != b.hash());
  CHECK(a.hash().size() == 16);
}

TEST_CASE("pipeline matches the staged oracle") {
  vktest::TempDir dir("obf");
  const auto spec = blob_spec();
  const auto m = make_clip(spec, dir.path());
  const auto lib = load_library(dir / "library");
  const auto cfg = target_config();
  const auto r = obfuscate_clip(m, lib, cfg);
  REQUIRE(r.frames.size() == 3);
  REQUIRE(r.saliency.size() == 3);
  REQUIRE(r.noise.frames.size() == 3);

  // Recompute each stage independently.
  const auto expected_noise = synthesize(m, cfg.seed, cfg.noise_mode, resolve_stats(m));
  CHECK(r.noise.frames == expected_noise.frames);
  std::size_t inside = 0;
  for (int t = 0; t < spec.frames; ++t) {
    const Image I = load_frame(m.resolve(m.frame_paths[t]));
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        const int row = detail::nearest_cell(y, spec.geometry, spec.geometry.grid_extent(spec.height));
        const int col = detail::nearest_cell(x, spec.geometry, spec.geometry.grid_extent(spec.width));
        const bool in = cell_in_pattern(spec, row, col);
        inside += in;
        CHECK(r.saliency[t].values.at(y, x) == (in ? 1.0f : 0.0f));
        for (int c = 0; c < 3; ++c) {
          const float want = in ? expected_noise.frames[t].at(y, x, c) : I.at(y, x, c);
          const double staged = (1.0 - (in ? 1.0 : 0.0)) * I.at(y, x, c) + (in ? 1.0 : 0.0) * expected_noise.frames[t].at(y, x, c);
          CHECK(r.frames[t].at(y, x, c) == want);
          CHECK(std::abs(r.frames[t].at(y, x, c) - staged) < 1e-6);
        }
      }
  }
  CHECK(inside > 0);
  CHECK(inside < static_cast<std::size_t>(spec.frames * spec.height * spec.width));
}

TEST_CASE("no-match clip is returned unchanged, full clip becomes noise") {
  vktest::TempDir dir("obf");
  auto spec = blob_spec(2);
  spec.saliency.kind = SaliencyPattern::Kind::none;
  const auto none = make_clip(spec, dir / "none");
  const auto lib = load_library(dir / "none" / "library");
  const auto r0 = obfuscate_clip(none, lib, target_config());
  for (std::size_t t = 0; t < 2; ++t) CHECK(r0.frames[t] == load_frame(none.resolve(none.frame_paths[t])));

  spec.saliency.kind = SaliencyPattern::Kind::full;
  const auto full = make_clip(spec, dir / "full");
  const auto r1 = obfuscate_clip(full, lib, target_config());
  for (std::size_t t = 0; t < 2; ++t) CHECK(r1.frames[t] == r1.noise.frames[t]);
}

TEST_CASE("reruns are identical and caches are reused") {
  vktest::TempDir dir("obf");
  const auto m = make_clip(blob_spec(), dir / "clip");
  const auto lib = load_library(dir / "clip" / "library");
  ObfuscationOptions opts;
  opts.cache_dir = dir / "cache";
  const auto first = obfuscate_clip(m, lib, target_config(), opts);
  const auto plain = obfuscate_clip(m, lib, target_config());
  CHECK(first.frames == plain.frames);

  // Tamper with the cached saliency; a cache hit must return the tampered maps.
  std::filesystem::path sal_dir;
  for (const auto& e : std::filesystem::directory_iterator(dir / "cache"))
    if (e.path().filename().string().starts_with("saliency-")) sal_dir = e.path();
  REQUIRE(!sal_dir.empty());
  for (int t = 0; t < 3; ++t) {
    char name[16];
    std::snprintf(name, sizeof name, "%04d.tnsr", t);
    write_image_tensor(sal_dir / name, Image(32, 40, 1, 0.0f));
  }
  const auto second = obfuscate_clip(m, lib, target_config(), opts);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(second.frames[t] == load_frame(m.resolve(m.frame_paths[t])));
    CHECK(second.noise.frames[t] == first.noise.frames[t]);
  }
}

TEST_CASE("errors carry the failing stage") {
  vktest::TempDir dir("obf");
  const auto m = make_clip(blob_spec(), dir.path());
  const auto lib = load_library(dir / "library");
  auto cfg = target_config();
  cfg.template_names = {"targte"};
  CHECK_THROWS_WITH(obfuscate_clip(m, lib, cfg), StartsWith("[template]") && ContainsSubstring("target"));

  std::filesystem::remove(m.resolve(m.flow_paths[1]));
  CHECK_THROWS_AS(obfuscate_clip(m, lib, target_config()), IoError);
  CHECK_THROWS_WITH(obfuscate_clip(m, lib, target_config()), StartsWith("[noise]"));

  std::filesystem::remove(m.resolve(m.descriptor_paths[0]));
  CHECK_THROWS_WITH(obfuscate_clip(m, lib, target_config()), StartsWith("[saliency]"));
}

TEST_CASE("stage timings are reported") {
  vktest::TempDir dir("obf");
  const auto m = make_clip(blob_spec(), dir.path());
  const auto lib = load_library(dir / "library");
  std::vector<StageTiming> seen;
  ObfuscationOptions opts;
  opts.log = StageLog([&](const StageTiming& t) { seen.push_back(t); });
  obfuscate_clip(m, lib, target_config(), opts);
  REQUIRE(seen.size() == 3);
  CHECK(seen[0].stage == "saliency");
  CHECK(seen[1].stage == "noise");
  CHECK(seen[2].stage == "blend");
  for (const auto& s : seen) CHECK(s.frames == 3);
}
