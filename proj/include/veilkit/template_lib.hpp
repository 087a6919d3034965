#pragma once

// Privacy template library.
//
// A template names one privacy attribute ("hair", "hand", ...) and holds one
// or more descriptors copied from a descriptor grid. Libraries live on disk as
//
//   <dir>/library.json   names, dimension, provenance, relative file names
//   <dir>/<name>.tnsr    f32 [count, d] descriptors of one template

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "veilkit/descriptor_grid.hpp"
#include "veilkit/error.hpp"
#include "veilkit/tensor_store.hpp"

namespace veilkit {

struct PatchCoord {
  int row = 0;
  int col = 0;
  friend bool operator==(const PatchCoord&, const PatchCoord&) = default;
};

struct Provenance {
  std::string source_image;
  std::vector<PatchCoord> patch_coords;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct Template {
  std::string name;
  std::size_t dim = 0;
  std::vector<float> values;  // count x dim, unnormalized
  Provenance provenance;

  std::size_t count() const noexcept { return dim == 0 ? 0 : values.size() / dim; }
  std::span<const float> descriptor(std::size_t k) const noexcept {
    return std::span<const float>(values).subspan(k * dim, dim);
  }
  friend bool operator==(const Template&, const Template&) = default;
};

inline constexpr double kMinDescriptorNorm = 1e-12;

inline double l2_norm(std::span<const float> v) noexcept {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

/// Enforces the Template invariants: at least one descriptor, consistent
/// dimension, every descriptor finite and nonzero.
inline void validate_template(const Template& t) {
  if (t.name.empty()) throw ValidationError("template name is empty");
  if (t.name.find_first_of("/\\,") != std::string::npos || t.name == "." || t.name == "..") {
    throw ValidationError("template name \"" + t.name + "\" may not contain '/', '\\' or ','");
  }
  if (t.dim == 0 || t.values.empty() || t.values.size() % t.dim != 0) {
    throw ValidationError("template \"" + t.name + "\" must hold at least one descriptor of a fixed dimension");
  }
  for (std::size_t k = 0; k < t.count(); ++k) {
    const auto d = t.descriptor(k);
    if (!std::all_of(d.begin(), d.end(), [](float x) { return std::isfinite(x); })) {
      throw ValidationError("template \"" + t.name + "\" descriptor " + std::to_string(k) + " is not finite");
    }
    if (l2_norm(d) <= kMinDescriptorNorm) {
      throw ValidationError("template \"" + t.name + "\" descriptor " + std::to_string(k) + " is the zero vector");
    }
  }
}

/// Copies the grid vectors at `coords` verbatim, in the given order.
inline Template build_template(const DescriptorGrid& grid, std::span<const PatchCoord> coords, std::string name,
                               std::string source_image = {}) {
  if (coords.empty()) throw ValidationError("build_template needs at least one patch coordinate");
  Template t;
  t.name = std::move(name);
  t.dim = static_cast<std::size_t>(grid.dim);
  t.provenance.source_image = std::move(source_image);
  for (const auto& c : coords) {
    if (c.row < 0 || c.col < 0 || c.row >= grid.rows || c.col >= grid.cols) {
      throw ValidationError("patch coordinate (" + std::to_string(c.row) + "," + std::to_string(c.col) +
                            ") is outside the " + std::to_string(grid.rows) + "x" + std::to_string(grid.cols) +
                            " grid");
    }
    const auto v = grid.at(c.row, c.col);
    if (l2_norm(v) <= kMinDescriptorNorm) {
      throw ValidationError("zero-norm descriptor at patch coordinate (" + std::to_string(c.row) + "," +
                            std::to_string(c.col) + ")");
    }
    t.values.insert(t.values.end(), v.begin(), v.end());
    t.provenance.patch_coords.push_back(c);
  }
  return t;
}

class TemplateLibrary {
public:
  TemplateLibrary() = default;

  void add(Template t) {
    validate_template(t);
    if (!templates_.empty() && t.dim != dim_) {
      throw ValidationError("template \"" + t.name + "\" has dimension " + std::to_string(t.dim) +
                            ", library has " + std::to_string(dim_));
    }
    if (templates_.contains(t.name)) throw ValidationError("duplicate template name \"" + t.name + "\"");
    dim_ = t.dim;
    templates_.emplace(t.name, std::move(t));
  }

  /// Adds or replaces a template of the same dimension.
  void upsert(Template t) {
    templates_.erase(t.name);
    if (templates_.empty()) dim_ = 0;
    add(std::move(t));
  }

  bool contains(const std::string& name) const { return templates_.contains(name); }
  const Template& get(const std::string& name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) throw ValidationError("unknown template \"" + name + "\"");
    return it->second;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [n, _] : templates_) out.push_back(n);
    return out;
  }
  std::size_t size() const noexcept { return templates_.size(); }
  bool empty() const noexcept { return templates_.empty(); }
  std::size_t descriptor_dim() const noexcept { return dim_; }
  const std::map<std::string, Template>& templates() const noexcept { return templates_; }

  friend bool operator==(const TemplateLibrary&, const TemplateLibrary&) = default;

private:
  std::map<std::string, Template> templates_;
  std::size_t dim_ = 0;
};

/// User-chosen ordered subset of a library.
struct SelectedTemplates {
  std::vector<Template> templates;
  std::size_t dim = 0;

  std::size_t size() const noexcept { return templates.size(); }
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& t : templates) out.push_back(t.name);
    return out;
  }
};

/// Jaro-Winkler similarity in [0,1]; rewards shared prefixes, which suits
/// short attribute names.
inline double jaro_winkler(const std::string& a, const std::string& b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  const int la = static_cast<int>(a.size());
  const int lb = static_cast<int>(b.size());
  const int window = std::max(0, std::max(la, lb) / 2 - 1);
  std::vector<bool> ma(a.size(), false), mb(b.size(), false);
  int matches = 0;
  for (int i = 0; i < la; ++i) {
    const int lo = std::max(0, i - window);
    const int hi = std::min(lb - 1, i + window);
    for (int j = lo; j <= hi; ++j) {
      if (!mb[j] && a[i] == b[j]) {
        ma[i] = mb[j] = true;
        ++matches;
        break;
      }
    }
  }
  if (matches == 0) return 0.0;
  int transpositions = 0;
  for (int i = 0, j = 0; i < la; ++i) {
    if (!ma[i]) continue;
    while (!mb[j]) ++j;
    if (a[i] != b[j]) ++transpositions;
    ++j;
  }
  const double m = matches;
  const double jaro = (m / la + m / lb + (m - transpositions / 2.0) / m) / 3.0;
  int prefix = 0;
  while (prefix < std::min({la, lb, 4}) && a[prefix] == b[prefix]) ++prefix;
  return jaro + prefix * 0.1 * (1.0 - jaro);
}

inline std::string nearest_name(const std::string& query, const std::vector<std::string>& candidates) {
  std::string best;
  double best_score = -1.0;
  for (const auto& c : candidates) {
    const double s = jaro_winkler(query, c);
    if (s > best_score) {
      best_score = s;
      best = c;
    }
  }
  return best;
}

inline SelectedTemplates select(const TemplateLibrary& lib, std::span<const std::string> names) {
  if (names.empty()) throw ValidationError("template selection is empty");
  SelectedTemplates sel;
  sel.dim = lib.descriptor_dim();
  for (const auto& n : names) {
    if (!lib.contains(n)) {
      std::string msg = "unknown template \"" + n + "\"";
      if (!lib.empty()) msg += "; did you mean \"" + nearest_name(n, lib.names()) + "\"?";
      throw ValidationError(msg);
    }
    sel.templates.push_back(lib.get(n));
  }
  return sel;
}

// ---------------------------------------------------------------------------
// Persistence

inline constexpr const char* kLibraryManifest = "library.json";

inline void save_library(const TemplateLibrary& lib, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create library directory " + dir.string() + ": " + ec.message());
  nlohmann::json j;
  j["descriptor_dim"] = lib.descriptor_dim();
  j["templates"] = nlohmann::json::array();
  for (const auto& [name, t] : lib.templates()) {
    const std::string file = name + ".tnsr";
    const std::uint32_t shape[] = {static_cast<std::uint32_t>(t.count()), static_cast<std::uint32_t>(t.dim)};
    write_tensor(dir / file, shape, t.values);
    nlohmann::json coords = nlohmann::json::array();
    for (const auto& c : t.provenance.patch_coords) coords.push_back({c.row, c.col});
    j["templates"].push_back({{"name", name},
                              {"file", file},
                              {"count", t.count()},
                              {"dim", t.dim},
                              {"provenance", {{"source_image", t.provenance.source_image}, {"patch_coords", coords}}}});
  }
  std::ofstream f(dir / kLibraryManifest, std::ios::trunc);
  if (!f) throw IoError("cannot write " + (dir / kLibraryManifest).string());
  f << j.dump(2) << '\n';
}

inline TemplateLibrary load_library(const std::filesystem::path& dir) {
  const auto manifest = dir / kLibraryManifest;
  if (!std::filesystem::exists(manifest)) throw IoError("no library manifest in " + dir.string());
  std::ifstream f(manifest);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(manifest.string() + ": invalid JSON: " + e.what());
  }
  if (!j.contains("templates") || !j["templates"].is_array()) {
    throw ValidationError(manifest.string() + ": missing \"templates\" array");
  }
  TemplateLibrary lib;
  std::size_t dim = 0;
  for (const auto& e : j["templates"]) {
    Template t;
    t.name = e.at("name").get<std::string>();
    const TensorFile tf = read_tensor(dir / e.at("file").get<std::string>());
    if (tf.dtype != DType::f32 || tf.shape.size() != 2) {
      throw ValidationError("template \"" + t.name + "\": descriptor file must be f32 [count,d]");
    }
    t.dim = tf.shape[1];
    if (dim != 0 && t.dim != dim) {
      throw ValidationError("template \"" + t.name + "\" has dimension " + std::to_string(t.dim) +
                            ", expected " + std::to_string(dim) + " like the other templates");
    }
    dim = t.dim;
    t.values = tf.as_f32();
    if (e.contains("provenance")) {
      const auto& p = e["provenance"];
      t.provenance.source_image = p.value("source_image", std::string{});
      if (p.contains("patch_coords")) {
        for (const auto& c : p["patch_coords"]) t.provenance.patch_coords.push_back({c.at(0).get<int>(), c.at(1).get<int>()});
      }
    }
    lib.add(std::move(t));
  }
  if (j.contains("descriptor_dim") && !lib.empty() && j["descriptor_dim"].get<std::size_t>() != lib.descriptor_dim()) {
    throw ValidationError(manifest.string() + ": descriptor_dim disagrees with template files");
  }
  return lib;
}

}  // namespace veilkit
