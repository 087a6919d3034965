#pragma once

// Command-line front end. `run` parses arguments, dispatches to a subcommand
// and maps errors to exit codes: 0 success, 1 validation or usage error,
// 2 I/O error.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "veilkit/baselines.hpp"
#include "veilkit/descriptor_grid.hpp"
#include "veilkit/error.hpp"
#include "veilkit/hash.hpp"
#include "veilkit/manifest.hpp"
#include "veilkit/metrics.hpp"
#include "veilkit/motion_noise.hpp"
#include "veilkit/obfuscator.hpp"
#include "veilkit/parallel.hpp"
#include "veilkit/png_io.hpp"
#include "veilkit/saliency.hpp"
#include "veilkit/synth.hpp"
#include "veilkit/template_lib.hpp"
#include "veilkit/tensor_store.hpp"
#include "veilkit/timing.hpp"
#include "veilkit/version.hpp"

namespace veilkit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

// ---------------------------------------------------------------------------
// Config file: flat `key = value` lines, keys named after the long flags of
// the chosen subcommand. Flags given on the command line win.

inline std::vector<std::pair<std::string, std::string>> read_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("missing file: " + path.string());
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  };
  while (std::getline(f, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(path.string() + ": line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    std::replace(key.begin(), key.end(), '_', '-');
    if (key.empty()) throw ValidationError(path.string() + ": line " + std::to_string(line_no) + ": empty key");
    entries.emplace_back(key, value);
  }
  return entries;
}

// ---------------------------------------------------------------------------
// Output helpers

inline std::string numbered(std::size_t i, const char* ext) {
  char name[32];
  std::snprintf(name, sizeof name, "%04zu%s", i, ext);
  return name;
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

inline void write_images(const fs::path& dir, const std::vector<Image>& images, bool png, bool tnsr) {
  ensure_dir(dir);
  parallel_for(images.size(), [&](std::size_t t) {
    if (png) write_png(dir / numbered(t, ".png"), images[t]);
    if (tnsr) write_image_tensor(dir / numbered(t, ".tnsr"), images[t]);
  });
}

inline void add_digest(json& inputs, const fs::path& p) { inputs[p.generic_string()] = digest_file(p); }

inline json manifest_inputs(const fs::path& manifest_path, const ClipManifest& m) {
  json inputs = json::object();
  add_digest(inputs, manifest_path);
  for (const auto* list : {&m.frame_paths, &m.descriptor_paths, &m.flow_paths, &m.mask_paths}) {
    for (const auto& p : *list) add_digest(inputs, m.resolve(p));
  }
  return inputs;
}

inline void library_inputs(json& inputs, const fs::path& dir) {
  add_digest(inputs, dir / kLibraryManifest);
  const auto lib = load_library(dir);
  for (const auto& name : lib.names()) add_digest(inputs, dir / (name + ".tnsr"));
}

/// run.json: provenance of one producing command. No timestamps, so equal
/// inputs give equal bytes.
inline void write_run_json(const fs::path& dir, const std::string& command, const json& config,
                           std::optional<std::uint64_t> seed, const json& inputs) {
  json j;
  j["tool"] = "veilkit";
  j["version"] = kVersion;
  j["command"] = command;
  j["config"] = config;
  j["config_hash"] = digest_string(config.dump());
  j["seed"] = seed ? json(*seed) : json(nullptr);
  j["inputs"] = inputs;
  ensure_dir(dir);
  write_text(dir / "run.json", j.dump(2) + "\n");
}

inline std::vector<std::string> clean_names(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const auto& n : raw) {
    if (!n.empty()) out.push_back(n);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subcommand arguments

struct ObfuscateArgs {
  std::string manifest, library, out, mode = "warp", reassembly = "nearest", cache, format = "png";
  std::vector<std::string> select;
  std::uint64_t seed = 0;
  float gain = 1.0f;
  bool flatten = false, emit_saliency = false, emit_noise = false;
};

struct SaliencyArgs {
  std::vector<std::string> manifests, select;
  std::string library, out, reassembly = "nearest";
  bool flatten = false, png = false, similarity = false, per_pixel = false;
};

struct NoiseArgs {
  std::string manifest, out, mode = "warp";
  std::uint64_t seed = 0;
  bool png = false;
};

struct BaselineArgs {
  std::string manifest, out, masks;
  int block = 4, kappa = 13, resize = 0;
  double sigma = 10.0;
};

struct TemplateArgs {
  std::string manifest, library, name, patches;
  int frame = 0;
  bool replace = false;
};

struct EvalArgs {
  std::string results, sweep, templates, out, dataset;
  double lambda = 0.5, weak_gap = kWeakSelectionGap;
  std::size_t select_k = 0;
};

struct SynthArgs {
  std::string spec, out;
};

struct StatsArgs {
  std::vector<std::string> manifests;
  std::string out;
};

// ---------------------------------------------------------------------------
// Handlers

struct Context {
  std::ostream& out;
  std::ostream& err;
  bool verbose = false;

  StageLog log() const {
    if (!verbose) return {};
    std::ostream* e = &err;
    return StageLog([e](const StageTiming& t) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "veilkit: %-10s %5zu frames %9.4f s %10.1f frames/s\n", t.stage.c_str(), t.frames,
                    t.seconds, t.frames_per_second());
      *e << buf;
    });
  }
};

inline int cmd_obfuscate(const ObfuscateArgs& a, const Context& ctx) {
  if (a.format != "png" && a.format != "tnsr") throw ValidationError("--format must be png or tnsr");
  const ClipManifest m = load_manifest(a.manifest);
  const TemplateLibrary lib = load_library(a.library);
  ObfuscationConfig cfg;
  cfg.template_names = clean_names(a.select);
  cfg.seed = a.seed;
  cfg.noise_mode = parse_noise_mode(a.mode);
  cfg.reassembly = parse_reassembly(a.reassembly);
  cfg.averaging = a.flatten ? TemplateAveraging::flatten : TemplateAveraging::per_template;
  cfg.saliency_gain = a.gain;
  ObfuscationOptions opts;
  if (!a.cache.empty()) opts.cache_dir = fs::path(a.cache);
  opts.log = ctx.log();
  const auto result = obfuscate_clip(m, lib, cfg, opts);

  const fs::path out(a.out);
  ctx.log().time("write", result.frames.size(), [&] {
    write_images(out / "frames", result.frames, a.format == "png", a.format == "tnsr");
    if (a.emit_saliency) {
      std::vector<Image> maps;
      for (const auto& s : result.saliency) maps.push_back(apply_gain(s.values, cfg.saliency_gain));
      write_images(out / "saliency", maps, true, true);
    }
    if (a.emit_noise) write_images(out / "noise", result.noise.frames, true, true);
  });

  json inputs = manifest_inputs(a.manifest, m);
  library_inputs(inputs, a.library);
  json j;
  j["tool"] = "veilkit";
  j["version"] = kVersion;
  j["command"] = "obfuscate";
  j["config"] = cfg.to_json();
  j["config_hash"] = result.config_hash;
  j["seed"] = cfg.seed;
  j["inputs"] = inputs;
  j["frames"] = result.frames.size();
  write_text(out / "run.json", j.dump(2) + "\n");
  ctx.out << "wrote " << result.frames.size() << " frames to " << (out / "frames").generic_string() << "\n";
  return kExitOk;
}

inline int cmd_saliency(const SaliencyArgs& a, const Context& ctx) {
  const TemplateLibrary lib = load_library(a.library);
  std::vector<std::string> names = clean_names(a.select);
  if (names.empty()) names = lib.names();
  const SaliencyOptions opts{parse_reassembly(a.reassembly),
                             a.flatten ? TemplateAveraging::flatten : TemplateAveraging::per_template};
  std::vector<ClipManifest> clips;
  json inputs = json::object();
  for (const auto& path : a.manifests) {
    clips.push_back(load_manifest(path));
    inputs.update(manifest_inputs(path, clips.back()));
  }
  library_inputs(inputs, a.library);
  const fs::path out(a.out);
  ensure_dir(out);

  if (a.similarity) {
    const auto averages = ctx.log().time("saliency", clips.size() * names.size(), [&] {
      return per_template_averages(clips, lib, names, opts);
    });
    const auto matrix = template_similarity_matrix(averages, a.per_pixel);
    std::ostringstream csv;
    csv << "template";
    for (const auto& n : matrix.names) csv << ',' << detail::csv_field(n);
    csv << '\n';
    for (std::size_t i = 0; i < matrix.size(); ++i) {
      csv << detail::csv_field(matrix.names[i]);
      for (std::size_t j = 0; j < matrix.size(); ++j) csv << ',' << std::setprecision(10) << matrix.at(i, j);
      csv << '\n';
    }
    write_text(out / "similarity.csv", csv.str());
    for (const auto& [name, map] : averages) write_image_tensor(out / ("average_" + name + ".tnsr"), map);
    ctx.out << csv.str();
  } else {
    for (const auto& clip : clips) {
      const auto selected = select(lib, names);
      const auto maps =
          ctx.log().time("saliency", clip.frame_count(), [&] { return saliency_for_clip(clip, selected, opts); });
      std::vector<Image> images;
      for (const auto& s : maps) images.push_back(s.values);
      write_images(clips.size() == 1 ? out : out / clip.clip_id, images, a.png, true);
    }
  }
  const json config = {{"templates", names},
                       {"reassembly", std::string(to_string(opts.reassembly))},
                       {"flatten", a.flatten},
                       {"similarity", a.similarity},
                       {"per_pixel", a.per_pixel}};
  write_run_json(out, "saliency", config, std::nullopt, inputs);
  return kExitOk;
}

inline int cmd_noise(const NoiseArgs& a, const Context& ctx) {
  const ClipManifest m = load_manifest(a.manifest);
  const NoiseMode mode = parse_noise_mode(a.mode);
  const auto seq = ctx.log().time("noise", m.frame_count(), [&] { return synthesize(m, a.seed, mode); });
  write_images(a.out, seq.frames, a.png, true);
  const json config = {{"seed", a.seed}, {"noise_mode", std::string(to_string(mode))}};
  write_run_json(a.out, "noise", config, a.seed, manifest_inputs(a.manifest, m));
  ctx.out << "wrote " << seq.frames.size() << " noise frames to " << a.out << "\n";
  return kExitOk;
}

inline std::vector<fs::path> mask_files(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("missing mask directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".png" || ext == ".tnsr")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

inline int cmd_baseline(const std::string& kind, const BaselineArgs& a, const Context& ctx) {
  BaselineSpec spec = kind == "pixelate" ? BaselineSpec::pixelation(a.block)
                      : kind == "blur"   ? BaselineSpec::blur(a.kappa, a.sigma)
                                         : BaselineSpec::masking();
  if (a.resize > 0) spec.resize_to = a.resize;
  if (a.resize < 0) throw ValidationError("--resize must be positive");
  spec.validate();
  const ClipManifest m = load_manifest(a.manifest);
  json inputs = manifest_inputs(a.manifest, m);
  std::vector<fs::path> masks;
  if (spec.kind == BaselineSpec::Kind::mask) {
    if (!a.masks.empty()) {
      masks = mask_files(a.masks);
      for (const auto& p : masks) add_digest(inputs, p);
    } else {
      for (const auto& p : m.mask_paths) masks.push_back(m.resolve(p));
    }
    if (masks.size() != m.frame_count()) {
      throw ValidationError("mask baseline needs " + std::to_string(m.frame_count()) + " masks, got " +
                            std::to_string(masks.size()));
    }
  }
  std::vector<Image> frames(m.frame_count());
  ctx.log().time(kind, frames.size(), [&] {
    parallel_for(frames.size(), [&](std::size_t t) {
      const Image frame = load_frame(m.resolve(m.frame_paths[t]));
      if (spec.kind == BaselineSpec::Kind::mask) {
        const Image mask = load_mask(masks[t]);
        frames[t] = apply_baseline(frame, spec, &mask);
      } else {
        frames[t] = apply_baseline(frame, spec);
      }
    });
  });
  write_images(a.out, frames, true, false);
  json config = {{"kind", kind}};
  if (spec.kind == BaselineSpec::Kind::pixelate) config["block"] = spec.block;
  if (spec.kind == BaselineSpec::Kind::blur) {
    config["kappa"] = spec.kappa;
    config["sigma"] = spec.sigma;
  }
  config["resize"] = spec.resize_to ? json(*spec.resize_to) : json(nullptr);
  write_run_json(a.out, "baseline", config, std::nullopt, inputs);
  ctx.out << "wrote " << frames.size() << " " << kind << " frames to " << a.out << "\n";
  return kExitOk;
}

/// "r,c;r,c;..." grid coordinates.
inline std::vector<PatchCoord> parse_patches(const std::string& s) {
  std::vector<PatchCoord> coords;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item.empty()) continue;
    int r = 0, c = 0;
    char tail = 0;
    if (std::sscanf(item.c_str(), " %d , %d %c", &r, &c, &tail) != 2) {
      throw ValidationError("--patches: expected row,col pairs separated by ';', got \"" + item + "\"");
    }
    coords.push_back({r, c});
  }
  if (coords.empty()) throw ValidationError("--patches: no coordinates given");
  return coords;
}

inline int cmd_template_build(const TemplateArgs& a, const Context& ctx) {
  const ClipManifest m = load_manifest(a.manifest);
  if (!m.has_descriptors()) throw ValidationError("manifest \"" + m.clip_id + "\" has no descriptor grids");
  if (a.frame < 0 || static_cast<std::size_t>(a.frame) >= m.frame_count()) {
    throw ValidationError("--frame " + std::to_string(a.frame) + " is out of range for " +
                          std::to_string(m.frame_count()) + " frames");
  }
  const auto grid = load_grid(m.resolve(m.descriptor_paths[a.frame]), m.geometry, m.height, m.width);
  const auto coords = parse_patches(a.patches);
  Template t = build_template(grid, coords, a.name, m.frame_paths[a.frame].generic_string());
  TemplateLibrary lib = fs::exists(fs::path(a.library) / kLibraryManifest) ? load_library(a.library) : TemplateLibrary{};
  if (a.replace) {
    lib.upsert(std::move(t));
  } else {
    lib.add(std::move(t));
  }
  save_library(lib, a.library);
  json inputs = json::object();
  add_digest(inputs, a.manifest);
  add_digest(inputs, m.resolve(m.descriptor_paths[a.frame]));
  const json config = {{"name", a.name}, {"frame", a.frame}, {"patches", a.patches}};
  write_run_json(a.library, "template build", config, std::nullopt, inputs);
  ctx.out << "template \"" << a.name << "\": " << coords.size() << " descriptor(s), library now holds " << lib.size()
          << "\n";
  return kExitOk;
}

inline int cmd_template_list(const TemplateArgs& a, const Context& ctx) {
  const TemplateLibrary lib = load_library(a.library);
  ctx.out << "dim " << lib.descriptor_dim() << ", " << lib.size() << " template(s)\n";
  for (const auto& [name, t] : lib.templates()) {
    ctx.out << "  " << std::left << std::setw(16) << name << std::right << std::setw(4) << t.count()
            << " descriptor(s)";
    if (!t.provenance.source_image.empty()) ctx.out << "  from " << t.provenance.source_image;
    ctx.out << "\n";
  }
  return kExitOk;
}

/// Left-justifies `s` to `width` code points.
inline std::string pad_right(const std::string& s, std::size_t width) {
  const auto points = static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
  return points >= width ? s + " " : s + std::string(width - points, ' ');
}

inline std::string ranking_table(const std::string& dataset, const std::vector<RankedRecord>& ranked, double lambda) {
  std::ostringstream os;
  os << "dataset " << dataset << "  (lambda = " << lambda << ")\n";
  os << "  rank  " << std::left << std::setw(18) << "method" << std::right << std::setw(9) << "action" << std::setw(9)
     << "privacy" << std::setw(7) << "f" << "\n";
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto& r = ranked[i].record;
    char nums[64];
    std::snprintf(nums, sizeof nums, "%9.2f%9.2f%7s", r.action_acc, r.privacy_acc, format2(ranked[i].f).c_str());
    os << "  " << std::setw(4) << i + 1 << "  " << pad_right(r.method, 18) << nums << "\n";
  }
  return os.str();
}

inline int cmd_eval(const EvalArgs& a, const Context& ctx) {
  validate_lambda(a.lambda);
  auto ingested = ingest_results(a.results);
  for (const auto& w : ingested.warnings) ctx.err << "warning: " << w << "\n";
  std::vector<MetricRecord> records;
  for (const auto& r : ingested.records) {
    if (a.dataset.empty() || r.dataset == a.dataset) records.push_back(r);
  }

  json inputs = json::object();
  add_digest(inputs, a.results);
  std::ostringstream ranking_csv;
  ranking_csv << "dataset,rank,method,action_acc,privacy_acc,f\n";
  for (const auto& [dataset, group] : group_by_dataset(records)) {
    const auto ranked = rank(group, a.lambda);
    ctx.out << ranking_table(dataset, ranked, a.lambda) << "\n";
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      const auto& r = ranked[i].record;
      ranking_csv << detail::csv_field(dataset) << ',' << i + 1 << ',' << detail::csv_field(r.method) << ','
                  << r.action_acc << ',' << r.privacy_acc << ',' << format2(ranked[i].f) << '\n';
    }
  }

  std::string sweep_text;
  if (!a.sweep.empty()) {
    const auto lambdas = parse_lambda_range(a.sweep);
    sweep_text = sweep_csv(sweep(records, lambdas));
    if (a.out.empty()) ctx.out << sweep_text;
  }

  json selection = json::object();
  if (a.select_k > 0) {
    if (a.templates.empty()) throw ValidationError("--select-k needs --templates");
    add_digest(inputs, a.templates);
    auto tmpl = ingest_template_results(a.templates);
    for (const auto& w : tmpl.warnings) ctx.err << "warning: " << w << "\n";
    std::vector<std::pair<std::string, std::vector<TemplateRecord>>> groups;
    for (const auto& r : tmpl.records) {
      if (!a.dataset.empty() && r.dataset != a.dataset) continue;
      auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == r.dataset; });
      if (it == groups.end()) {
        groups.push_back({r.dataset, {}});
        it = std::prev(groups.end());
      }
      it->second.push_back(r);
    }
    for (const auto& [dataset, group] : groups) {
      const auto sel = select_templates(group, a.select_k, a.weak_gap);
      ctx.out << "dataset " << dataset << "  selected templates (k = " << a.select_k << "):";
      for (const auto& n : sel.names) ctx.out << ' ' << n;
      ctx.out << "\n";
      for (const auto& w : sel.warnings) ctx.err << "warning: " << dataset << ": " << w << "\n";
      selection[dataset] = {{"templates", sel.names}, {"boundary_gap", sel.boundary_gap}, {"warnings", sel.warnings}};
    }
  }

  if (!a.out.empty()) {
    const fs::path out(a.out);
    ensure_dir(out);
    write_text(out / "ranking.csv", ranking_csv.str());
    if (!sweep_text.empty()) write_text(out / "sweep.csv", sweep_text);
    if (a.select_k > 0) write_text(out / "selection.json", selection.dump(2) + "\n");
    const json config = {{"lambda", a.lambda},   {"sweep", a.sweep},       {"select_k", a.select_k},
                         {"weak_gap", a.weak_gap}, {"dataset", a.dataset}};
    write_run_json(out, "eval", config, std::nullopt, inputs);
  }
  return kExitOk;
}

inline int cmd_synth(const SynthArgs& a, const Context& ctx) {
  const ClipSpec spec = load_clip_spec(a.spec);
  std::ifstream f(a.spec);
  json raw;
  f >> raw;
  const ClipManifest m = ctx.log().time("synth", static_cast<std::size_t>(spec.frames), [&] { return make_clip(spec, a.out); });
  json inputs = json::object();
  add_digest(inputs, a.spec);
  write_run_json(a.out, "synth", raw, spec.seed, inputs);
  ctx.out << "wrote clip \"" << m.clip_id << "\" (" << m.frame_count() << " frames) to "
          << (fs::path(a.out) / "manifest.json").generic_string() << "\n";
  return kExitOk;
}

inline int cmd_stats(const StatsArgs& a, const Context& ctx) {
  StatsAccumulator acc;
  std::size_t frames = 0;
  json inputs = json::object();
  for (const auto& path : a.manifests) {
    const ClipManifest m = load_manifest(path);
    inputs.update(manifest_inputs(path, m));
    for (const auto& p : m.frame_paths) {
      acc.add(load_frame(m.resolve(p)));
      ++frames;
    }
  }
  const DatasetStats s = acc.result();
  const json j = {{"frames", frames}, {"dataset_mean", s.mean}, {"dataset_std", s.std}};
  ctx.out << j.dump(2) << "\n";
  if (!a.out.empty()) {
    write_text(a.out, j.dump(2) + "\n");
    write_run_json(fs::path(a.out).parent_path().empty() ? fs::path(".") : fs::path(a.out).parent_path(), "stats",
                   json::object(), std::nullopt, inputs);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Dispatch

inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"veilkit: selective video privacy obfuscation and evaluation"};
  app.name("veilkit");
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);
  bool verbose = false;
  std::string config_path;
  app.add_flag("-v,--verbose", verbose, "Per-stage timing on stderr");
  app.add_option("--config", config_path, "key = value file with default flag values");

  auto mode_check = CLI::IsMember({"warp", "warp_iterative", "composed", "warp_composed", "iid"});
  auto reassembly_check = CLI::IsMember({"nearest", "bilinear"});

  ObfuscateArgs ob;
  auto* obfuscate = app.add_subcommand("obfuscate", "Blend motion-consistent noise into the salient regions of a clip");
  obfuscate->add_option("manifest", ob.manifest, "Clip manifest")->required();
  obfuscate->add_option("--library", ob.library, "Template library directory")->required();
  obfuscate->add_option("--select", ob.select, "Templates to obfuscate, comma separated")->delimiter(',')->required();
  obfuscate->add_option("--seed", ob.seed, "Noise seed");
  obfuscate->add_option("--mode", ob.mode, "Noise mode")->check(mode_check);
  obfuscate->add_option("--reassembly", ob.reassembly, "Patch-to-pixel upsampling")->check(reassembly_check);
  obfuscate->add_option("--gain", ob.gain, "Saliency gain");
  obfuscate->add_flag("--flatten", ob.flatten, "Treat every template descriptor as its own template");
  obfuscate->add_flag("--emit-saliency", ob.emit_saliency, "Also write saliency maps");
  obfuscate->add_flag("--emit-noise", ob.emit_noise, "Also write the noise sequence");
  obfuscate->add_option("--cache", ob.cache, "Directory reused across runs for saliency and noise");
  obfuscate->add_option("--format", ob.format, "Frame output format")->check(CLI::IsMember({"png", "tnsr"}));
  obfuscate->add_option("--out", ob.out, "Output directory")->required();

  SaliencyArgs sa;
  auto* saliency = app.add_subcommand("saliency", "Template saliency maps, or the template similarity matrix");
  saliency->add_option("manifests", sa.manifests, "Clip manifests")->required();
  saliency->add_option("--library", sa.library, "Template library directory")->required();
  saliency->add_option("--select", sa.select, "Templates, comma separated (default: all)")->delimiter(',');
  saliency->add_option("--reassembly", sa.reassembly, "Patch-to-pixel upsampling")->check(reassembly_check);
  saliency->add_flag("--flatten", sa.flatten, "Treat every template descriptor as its own template");
  saliency->add_flag("--png", sa.png, "Also write grayscale PNG maps");
  saliency->add_flag("--similarity", sa.similarity, "Write the pairwise L1 matrix of per-template average maps");
  saliency->add_flag("--per-pixel", sa.per_pixel, "Divide similarity sums by the pixel count");
  saliency->add_option("--out", sa.out, "Output directory")->required();

  NoiseArgs no;
  auto* noise = app.add_subcommand("noise", "Motion-consistent noise sequence for a clip");
  noise->add_option("manifest", no.manifest, "Clip manifest")->required();
  noise->add_option("--seed", no.seed, "Noise seed");
  noise->add_option("--mode", no.mode, "Noise mode")->check(mode_check);
  noise->add_flag("--png", no.png, "Also write PNG previews");
  noise->add_option("--out", no.out, "Output directory")->required();

  BaselineArgs ba;
  auto* baseline = app.add_subcommand("baseline", "Whole-frame baselines");
  baseline->require_subcommand(1);
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("manifest", ba.manifest, "Clip manifest")->required();
    sub->add_option("--resize", ba.resize, "Resize frames to N x N first");
    sub->add_option("--out", ba.out, "Output directory")->required();
  };
  auto* pixelate_cmd = baseline->add_subcommand("pixelate", "Block averaging");
  add_common(pixelate_cmd);
  pixelate_cmd->add_option("--block", ba.block, "Block size in pixels");
  auto* blur_cmd = baseline->add_subcommand("blur", "Gaussian blur");
  add_common(blur_cmd);
  blur_cmd->add_option("--kappa", ba.kappa, "Kernel size (odd)");
  blur_cmd->add_option("--sigma", ba.sigma, "Kernel standard deviation");
  auto* mask_cmd = baseline->add_subcommand("mask", "Fill masked pixels with their mean");
  add_common(mask_cmd);
  mask_cmd->add_option("--masks", ba.masks, "Directory of masks (default: the manifest's)");

  TemplateArgs ta;
  auto* tmpl = app.add_subcommand("template", "Manage template libraries");
  tmpl->require_subcommand(1);
  auto* build_cmd = tmpl->add_subcommand("build", "Add a template from descriptor grid cells");
  build_cmd->add_option("manifest", ta.manifest, "Clip manifest with descriptor grids")->required();
  build_cmd->add_option("--frame", ta.frame, "Frame index");
  build_cmd->add_option("--name", ta.name, "Template name")->required();
  build_cmd->add_option("--patches", ta.patches, "Grid cells as row,col;row,col")->required();
  build_cmd->add_option("--library", ta.library, "Library directory (created if absent)")->required();
  build_cmd->add_flag("--replace", ta.replace, "Replace a template of the same name");
  auto* list_cmd = tmpl->add_subcommand("list", "List a library");
  list_cmd->add_option("--library", ta.library, "Library directory")->required();

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Trade-off metric, ranking, sweeps and template selection");
  eval->add_option("--results", ev.results, "CSV: method,dataset,action_acc,privacy_acc")->required();
  eval->add_option("--lambda", ev.lambda, "Trade-off weight in [0,1]");
  eval->add_option("--sweep", ev.sweep, "start:stop:step lambda sweep, CSV output");
  eval->add_option("--select-k", ev.select_k, "Pick the k templates with lowest privacy accuracy");
  eval->add_option("--templates", ev.templates, "CSV: dataset,template,action_acc,privacy_acc");
  eval->add_option("--weak-gap", ev.weak_gap, "Warn when the selection boundary gap is below this (points)");
  eval->add_option("--dataset", ev.dataset, "Restrict to one dataset");
  eval->add_option("--out", ev.out, "Write ranking.csv, sweep.csv, selection.json and run.json here");

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic fixture clip");
  synth->add_option("--spec", sy.spec, "Clip spec JSON")->required();
  synth->add_option("--out", sy.out, "Output directory")->required();

  StatsArgs st;
  auto* stats = app.add_subcommand("stats", "Per-channel mean and std over clips");
  stats->add_option("manifests", st.manifests, "Clip manifests")->required();
  stats->add_option("--out", st.out, "Write the statistics JSON here");

  // Locate the subcommand path so that usage text and config keys target it.
  CLI::App* target = &app;
  std::size_t insert_at = 0;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[i + 1];
      ++i;
      continue;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
      continue;
    }
    if (args[i].empty() || args[i][0] == '-') continue;
    if (auto* sub = target->get_subcommand_no_throw(args[i])) {
      target = sub;
      insert_at = i + 1;
    }
  }

  try {
    if (!config_path.empty()) {
      for (const auto& [key, value] : read_config(config_path)) {
        if (key == "verbose" && (value == "true" || value == "1")) {
          verbose = true;
          continue;
        }
        const CLI::Option* opt = target->get_option_no_throw("--" + key);
        if (opt == nullptr) {
          throw ValidationError("config " + config_path + ": unknown key \"" + key + "\" for " + target->get_name());
        }
        const bool given = std::any_of(args.begin(), args.end(), [&](const std::string& s) {
          return s == "--" + key || s.rfind("--" + key + "=", 0) == 0;
        });
        if (given) continue;
        args.insert(args.begin() + static_cast<std::ptrdiff_t>(insert_at), "--" + key + "=" + value);
      }
    }
  } catch (const ValidationError& e) {
    err << "veilkit: error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const IoError& e) {
    err << "veilkit: error: " << e.what() << "\n";
    return kExitIo;
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << target->help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "veilkit: error: " << e.what() << "\n\n" << target->help();
    return kExitValidation;
  }

  const Context ctx{out, err, verbose};
  try {
    if (*obfuscate) return cmd_obfuscate(ob, ctx);
    if (*saliency) return cmd_saliency(sa, ctx);
    if (*noise) return cmd_noise(no, ctx);
    if (*pixelate_cmd) return cmd_baseline("pixelate", ba, ctx);
    if (*blur_cmd) return cmd_baseline("blur", ba, ctx);
    if (*mask_cmd) return cmd_baseline("mask", ba, ctx);
    if (*build_cmd) return cmd_template_build(ta, ctx);
    if (*list_cmd) return cmd_template_list(ta, ctx);
    if (*eval) return cmd_eval(ev, ctx);
    if (*synth) return cmd_synth(sy, ctx);
    if (*stats) return cmd_stats(st, ctx);
  } catch (const IoError& e) {
    err << "veilkit: error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "veilkit: error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "veilkit: error: " << e.what() << "\n";
    return kExitValidation;
  }
  err << app.help();
  return kExitValidation;
}

}  // namespace veilkit::cli
