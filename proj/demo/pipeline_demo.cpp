// Builds a synthetic clip, obfuscates the "target" template and writes the
// result next to the clip.
//
//   pipeline_demo [out_dir]

#include <cstdio>
#include <filesystem>

#include "veilkit/veilkit.hpp"

int main(int argc, char** argv) {
  namespace fs = std::filesystem;
  const fs::path out = argc > 1 ? argv[1] : "veilkit_demo";

  veilkit::ClipSpec spec;
  spec.clip_id = "demo";
  spec.frames = 6;
  spec.flow = {veilkit::FlowPattern::Kind::constant, 2.0f, 0.0f, 0.0f};
  spec.saliency = {veilkit::SaliencyPattern::Kind::blob, 24.0, 32.0, 14.0};
  spec.seed = 1;

  try {
    const auto clip = veilkit::make_clip(spec, out / "clip");
    const auto lib = veilkit::load_library(out / "clip" / "library");

    veilkit::ObfuscationConfig cfg;
    cfg.template_names = {veilkit::kTargetTemplate};
    cfg.seed = 42;

    veilkit::ObfuscationOptions opts;
    opts.log = veilkit::StageLog([](const veilkit::StageTiming& t) {
      std::printf("  %-9s %zu frames in %.3f s\n", t.stage.c_str(), t.frames, t.seconds);
    });
    const auto result = veilkit::obfuscate_clip(clip, lib, cfg, opts);

    fs::create_directories(out / "obfuscated");
    for (std::size_t t = 0; t < result.frames.size(); ++t) {
      char name[32];
      std::snprintf(name, sizeof name, "%04zu.png", t);
      veilkit::write_png(out / "obfuscated" / name, result.frames[t]);

      double covered = 0;
      for (float s : result.saliency[t].values.data) covered += s;
      std::printf("frame %zu: %.1f%% of pixels replaced by noise\n", t,
                  100.0 * covered / static_cast<double>(result.saliency[t].values.size()));
    }
    std::printf("config %s, output in %s\n", result.config_hash.c_str(), (out / "obfuscated").c_str());
  } catch (const veilkit::Error& e) {
    std::fprintf(stderr, "pipeline_demo: %s\n", e.what());
    return 1;
  }
  return 0;
}
