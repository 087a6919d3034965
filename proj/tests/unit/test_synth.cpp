#include <catch_amalgamated.hpp>

#include <map>

#include "test_support.hpp"
#include "veilkit/saliency.hpp"
#include "veilkit/synth.hpp"

using namespace veilkit;
using Catch::Matchers::ContainsSubstring;
namespace fs = std::filesystem;

namespace {

ClipSpec small_spec(SaliencyPattern::Kind kind) {
  ClipSpec s;
  s.frames = 3;
  s.height = 40;
  s.width = 48;
  s.dim = 5;
  s.geometry = {8, 4};
  s.flow = {FlowPattern::Kind::constant, 2.0f, -1.0f, 0.0f};
  s.saliency = {kind, 22.0, 18.0, 10.0};
  s.seed = 3;
  return s;
}

SelectedTemplates target_only(const TemplateLibrary& lib) {
  const std::string names[] = {kTargetTemplate};
  return select(lib, names);
}

std::map<std::string, std::vector<std::uint8_t>> tree_bytes(const fs::path& root) {
  std::map<std::string, std::vector<std::uint8_t>> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = detail::read_bytes(e.path());
  return out;
}

}  // namespace

TEST_CASE("spec parsing") {
  const auto s = parse_clip_spec(nlohmann::json::parse(R"({
    "T": 8, "h": 64, "w": 64, "d": 8, "patch": 8, "stride": 8, "seed": 7,
    "flow_pattern": {"kind": "constant", "dx": 1, "dy": 0},
    "saliency_pattern": {"kind": "blob", "center": [32, 32], "r": 12}
  })"));
  CHECK(s.frames == 8);
  CHECK(s.seed == 7);
  CHECK(s.flow.kind == FlowPattern::Kind::constant);
  CHECK(s.flow.dx == 1.0f);
  CHECK(s.saliency.kind == SaliencyPattern::Kind::blob);
  CHECK(s.saliency.cx == 32.0);
  CHECK(s.saliency.r == 12.0);

  const auto d = parse_clip_spec(nlohmann::json::parse(R"({"saliency_pattern": "full", "flow_pattern": "zero"})"));
  CHECK(d.frames == 8);
  CHECK(d.height == 64);
  CHECK(d.saliency.kind == SaliencyPattern::Kind::full);

  CHECK_THROWS_WITH(parse_clip_spec(nlohmann::json::parse(R"({"frames": 3})")), ContainsSubstring("unknown key \"frames\""));
  CHECK_THROWS_AS(parse_clip_spec(nlohmann::json::parse(R"({"T": 0})")), ValidationError);
  CHECK_THROWS_AS(parse_clip_spec(nlohmann::json::parse(R"({"h": "tall"})")), ValidationError);
  CHECK_THROWS_AS(parse_clip_spec(nlohmann::json::parse(R"({"d": 1})")), ValidationError);
  CHECK_THROWS_AS(parse_clip_spec(nlohmann::json::parse(R"({"h": 4})")), ValidationError);
  CHECK_THROWS_WITH(parse_clip_spec(nlohmann::json::parse(R"({"flow_pattern": "spiral"})")), ContainsSubstring("spiral"));
  CHECK_THROWS_WITH(parse_clip_spec(nlohmann::json::parse(R"({"saliency_pattern": {"kind": "blob"}})")),
                    ContainsSubstring("center"));
  CHECK_THROWS_AS(parse_clip_spec(nlohmann::json::parse(R"({"saliency_pattern": {"kind": "blob", "center": [1, 2], "rr": 3}})")),
                  ValidationError);
  CHECK_THROWS_AS(parse_clip_spec(nlohmann::json::parse("[1, 2]")), ValidationError);
}

TEST_CASE("spec files") {
  const auto s = load_clip_spec(fs::path(VEILKIT_TEST_DATA) / "synth_blob.json");
  CHECK(s.clip_id == "blob");
  CHECK(s.frames == 8);
  vktest::TempDir dir("spec");
  CHECK_THROWS_AS(load_clip_spec(dir / "missing.json"), IoError);
  std::ofstream(dir / "bad.json") << "{ nope";
  CHECK_THROWS_WITH(load_clip_spec(dir / "bad.json"), ContainsSubstring("invalid JSON"));
}

TEST_CASE("synthetic library is orthonormal") {
  const auto lib = make_library(6, {"a", "b", "c"});
  REQUIRE(lib.size() == 3);
  const auto names = lib.names();
  for (const auto& x : names)
    for (const auto& y : names) {
      double dot = 0;
      const auto& u = lib.get(x).values;
      const auto& v = lib.get(y).values;
      for (std::size_t i = 0; i < u.size(); ++i) dot += double(u[i]) * v[i];
      CHECK(dot == (x == y ? 1.0 : 0.0));
    }
  CHECK_THROWS_WITH(make_library(2, {"a", "b", "c"}), ContainsSubstring("dimension 2"));
}

TEST_CASE("saliency of the synthetic patterns") {
  vktest::TempDir dir("synth");
  SECTION("none gives zeros, full gives ones") {
    for (auto [kind, want] : {std::pair{SaliencyPattern::Kind::none, 0.0f}, std::pair{SaliencyPattern::Kind::full, 1.0f}}) {
      const auto root = dir / (want == 0.0f ? "none" : "full");
      const auto m = make_clip(small_spec(kind), root);
      for (const auto& map : saliency_for_clip(m, target_only(load_library(root / "library"))))
        for (float v : map.values.data) CHECK(v == want);
    }
  }
  SECTION("blob cells match a geometric membership oracle") {
    const auto spec = small_spec(SaliencyPattern::Kind::blob);
    const auto m = make_clip(spec, dir.path());
    const auto sel = target_only(load_library(dir / "library"));
    std::size_t in_count = 0;
    for (int t = 0; t < spec.frames; ++t) {
      const auto grid = load_grid(m.resolve(m.descriptor_paths[t]), m.geometry, m.height, m.width);
      const auto s = patch_saliency(grid, sel);
      for (int r = 0; r < grid.rows; ++r)
        for (int c = 0; c < grid.cols; ++c) {
          const double cx = c * 4 + 4.0, cy = r * 4 + 4.0;
          const bool in = (cx - 22) * (cx - 22) + (cy - 18) * (cy - 18) <= 100.0;
          in_count += in;
          CHECK(s.at(r, c) == (in ? 1.0f : 0.0f));
        }
    }
    CHECK(in_count > 0);
    // The decoy scores positive outside and zero inside.
    const std::string decoy[] = {kDecoyTemplate};
    const auto grid = load_grid(m.resolve(m.descriptor_paths[0]), m.geometry, m.height, m.width);
    const auto s = patch_saliency(grid, select(load_library(dir / "library"), decoy));
    CHECK(s.at(0, 0) > 0.0f);
    CHECK(s.at(3, 4) == 0.0f);  // center (20, 16)
  }
}

TEST_CASE("masks use pixel centers") {
  const auto spec = small_spec(SaliencyPattern::Kind::blob);
  const auto mask = make_mask(spec);
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) {
      const double dx = x + 0.5 - 22, dy = y + 0.5 - 18;
      CHECK(mask.at(y, x) == (dx * dx + dy * dy <= 100.0 ? 1.0f : 0.0f));
    }
  for (float v : make_mask(small_spec(SaliencyPattern::Kind::full)).data) CHECK(v == 1.0f);
}

TEST_CASE("written clip is complete and exact") {
  vktest::TempDir dir("synth");
  const auto spec = small_spec(SaliencyPattern::Kind::blob);
  const auto m = make_clip(spec, dir.path());
  CHECK(m.frame_count() == 3);
  CHECK(m.flow_paths.size() == 2);
  CHECK(m.mask_paths.size() == 3);
  CHECK(m.height == 40);
  CHECK(m.width == 48);
  CHECK(m.descriptor_dim == 5);
  for (int t = 0; t < 3; ++t) {
    CHECK(load_frame(m.resolve(m.frame_paths[t])) == make_frame(spec, t));
    CHECK(load_mask(m.resolve(m.mask_paths[t])) == make_mask(spec));
  }
  for (const auto& f : m.flow_paths) {
    const auto flow = read_image_tensor(m.resolve(f));
    for (std::size_t p = 0; p < flow.pixel_count(); ++p) {
      CHECK(flow.data[2 * p] == 2.0f);
      CHECK(flow.data[2 * p + 1] == -1.0f);
    }
  }
  CHECK(make_frame(spec, 0) != make_frame(spec, 1));
}

TEST_CASE("shear flow") {
  auto spec = small_spec(SaliencyPattern::Kind::none);
  spec.flow = {FlowPattern::Kind::shear, 0.0f, 0.0f, 0.25f};
  const auto f = make_flow_image(spec);
  for (int y = 0; y < spec.height; ++y) {
    CHECK(f.at(y, 7, 0) == 0.25f * (y - 20.0f));
    CHECK(f.at(y, 7, 1) == 0.0f);
  }
}

TEST_CASE("same spec, same bytes") {
  vktest::TempDir a("synth"), b("synth");
  const auto spec = small_spec(SaliencyPattern::Kind::blob);
  make_clip(spec, a.path());
  make_clip(spec, b.path());
  const auto ta = tree_bytes(a.path());
  CHECK(ta.size() == 3 + 3 + 2 + 3 + 1 + 3);  // frames, desc, flow, masks, manifest, library (json + 2)
  CHECK(ta == tree_bytes(b.path()));
  auto other = spec;
  other.seed = 4;
  vktest::TempDir c("synth");
  make_clip(other, c.path());
  CHECK(tree_bytes(c.path()) != ta);
}
