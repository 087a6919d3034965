#pragma once

// Action/privacy trade-off metric and the tables built on it.
//
//   f_lambda(a, p) = (1 - lambda) * a + lambda * (1 - p)
//
// with a, p the action and privacy accuracies normalized to [0,1].

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "veilkit/error.hpp"

namespace veilkit {

struct MetricRecord {
  std::string method;
  std::string dataset;
  double action_acc = 0.0;   // percent
  double privacy_acc = 0.0;  // percent
};

struct TemplateRecord {
  std::string name;
  double action_acc = 0.0;   // percent
  double privacy_acc = 0.0;  // percent
  std::string dataset;
};

inline void validate_accuracy(double v, const std::string& what) {
  if (!std::isfinite(v) || v < 0.0 || v > 100.0) {
    std::ostringstream os;
    os << what << " = " << v << " is outside [0,100]";
    throw ValidationError(os.str());
  }
}

inline void validate(const MetricRecord& r) {
  validate_accuracy(r.action_acc, r.method + " action_acc");
  validate_accuracy(r.privacy_acc, r.method + " privacy_acc");
}

inline void validate_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ValidationError("lambda = " + std::to_string(lambda) + " is outside [0,1]");
  }
}

inline double f_lambda(double action_acc, double privacy_acc, double lambda) {
  validate_lambda(lambda);
  const double a = action_acc / 100.0;
  const double p = privacy_acc / 100.0;
  return (1.0 - lambda) * a + lambda * (1.0 - p);
}

inline double f_lambda(const MetricRecord& r, double lambda) {
  validate(r);
  return f_lambda(r.action_acc, r.privacy_acc, lambda);
}

/// Rounds half away from zero to two decimals. The nudge absorbs binary
/// representation error of decimal inputs (0.555 must print as 0.56).
inline double round2(double v) noexcept {
  return std::round(v * 100.0 + std::copysign(1e-9, v)) / 100.0;
}

inline std::string format2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", round2(v));
  return buf;
}

// ---------------------------------------------------------------------------
// Sweep

struct SweepRow {
  std::string method;
  std::string dataset;
  std::vector<double> values;  // f at each lambda
};

struct SweepTable {
  std::vector<double> lambdas;
  std::vector<SweepRow> rows;
};

inline SweepTable sweep(std::span<const MetricRecord> records, std::span<const double> lambdas) {
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    validate_lambda(lambdas[i]);
    if (i > 0 && lambdas[i] < lambdas[i - 1]) throw ValidationError("sweep lambdas must be sorted ascending");
  }
  SweepTable table{{lambdas.begin(), lambdas.end()}, {}};
  for (const auto& r : records) {
    SweepRow row{r.method, r.dataset, {}};
    for (double l : lambdas) row.values.push_back(f_lambda(r, l));
    table.rows.push_back(std::move(row));
  }
  return table;
}

/// start:stop:step, inclusive of stop when it lies on the grid.
inline std::vector<double> parse_lambda_range(const std::string& spec) {
  double v[3];
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    const auto colon = spec.find(':', pos);
    if ((i < 2) != (colon != std::string::npos)) throw ValidationError("sweep must be start:stop:step, got \"" + spec + "\"");
    const std::string part = spec.substr(pos, i < 2 ? colon - pos : std::string::npos);
    char* end = nullptr;
    v[i] = std::strtod(part.c_str(), &end);
    if (part.empty() || *end != '\0') throw ValidationError("sweep must be start:stop:step, got \"" + spec + "\"");
    pos = colon + 1;
  }
  if (!(v[2] > 0.0)) throw ValidationError("sweep step must be > 0");
  if (v[1] < v[0]) throw ValidationError("sweep stop must be >= start");
  const auto steps = static_cast<long>(std::floor((v[1] - v[0]) / v[2] + 1e-9));
  std::vector<double> out;
  for (long i = 0; i <= steps; ++i) out.push_back(std::min(v[1], v[0] + static_cast<double>(i) * v[2]));
  for (double l : out) validate_lambda(l);
  return out;
}

// ---------------------------------------------------------------------------
// Ranking

struct RankedRecord {
  MetricRecord record;
  double f = 0.0;
};

/// Descending f_lambda; exact ties go to the lower privacy accuracy, then to
/// the lexicographically smaller method name.
inline std::vector<RankedRecord> rank(std::span<const MetricRecord> records, double lambda) {
  std::vector<RankedRecord> out;
  for (const auto& r : records) out.push_back({r, f_lambda(r, lambda)});
  std::stable_sort(out.begin(), out.end(), [](const RankedRecord& a, const RankedRecord& b) {
    if (a.f != b.f) return a.f > b.f;
    if (a.record.privacy_acc != b.record.privacy_acc) return a.record.privacy_acc < b.record.privacy_acc;
    return a.record.method < b.record.method;
  });
  return out;
}

/// Records grouped by dataset, in order of first appearance.
inline std::vector<std::pair<std::string, std::vector<MetricRecord>>> group_by_dataset(
    std::span<const MetricRecord> records) {
  std::vector<std::pair<std::string, std::vector<MetricRecord>>> groups;
  for (const auto& r : records) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == r.dataset; });
    if (it == groups.end()) {
      groups.push_back({r.dataset, {}});
      it = std::prev(groups.end());
    }
    it->second.push_back(r);
  }
  return groups;
}

// ---------------------------------------------------------------------------
// Template selection

struct TemplateSelection {
  std::vector<std::string> names;
  double boundary_gap = 0.0;  // privacy gap between the k-th and (k+1)-th template
  std::vector<std::string> warnings;
};

inline constexpr double kWeakSelectionGap = 5.0;  // percentage points

/// The k templates with the lowest privacy accuracy (ties: higher action
/// accuracy, then name). Warns when the privacy gap across the selection
/// boundary is below `weak_gap`, i.e. privacy alone barely separates the
/// chosen templates from the rest.
inline TemplateSelection select_templates(std::span<const TemplateRecord> records, std::size_t k,
                                          double weak_gap = kWeakSelectionGap) {
  if (k == 0) throw ValidationError("select_templates needs k >= 1");
  if (k > records.size()) {
    throw ValidationError("select_templates: k = " + std::to_string(k) + " exceeds " + std::to_string(records.size()) +
                          " templates");
  }
  std::vector<TemplateRecord> sorted(records.begin(), records.end());
  for (const auto& r : sorted) {
    validate_accuracy(r.action_acc, r.name + " action_acc");
    validate_accuracy(r.privacy_acc, r.name + " privacy_acc");
  }
  std::stable_sort(sorted.begin(), sorted.end(), [](const TemplateRecord& a, const TemplateRecord& b) {
    if (a.privacy_acc != b.privacy_acc) return a.privacy_acc < b.privacy_acc;
    if (a.action_acc != b.action_acc) return a.action_acc > b.action_acc;
    return a.name < b.name;
  });
  TemplateSelection sel;
  for (std::size_t i = 0; i < k; ++i) sel.names.push_back(sorted[i].name);
  if (k < sorted.size()) {
    const auto& last = sorted[k - 1];
    const auto& next = sorted[k];
    sel.boundary_gap = next.privacy_acc - last.privacy_acc;
    if (sel.boundary_gap < weak_gap) {
      std::ostringstream os;
      os << "weak selection boundary: " << last.name << " (privacy " << last.privacy_acc << ") vs " << next.name
         << " (privacy " << next.privacy_acc << "), gap " << format2(sel.boundary_gap) << " < " << weak_gap
         << " points; the distinction is less striking and the choice is not clearly privacy-driven";
      sel.warnings.push_back(os.str());
    }
  }
  return sel;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (quoted) throw ValidationError("line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(cur);
  for (auto& f : fields) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string{} : f.substr(b, e - b + 1);
  }
  return fields;
}

inline double parse_percent(const std::string& s, std::size_t line_no, const char* column) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') {
    throw ValidationError("line " + std::to_string(line_no) + ": " + column + " \"" + s + "\" is not a number");
  }
  if (!std::isfinite(v) || v < 0.0 || v > 100.0) {
    throw ValidationError("line " + std::to_string(line_no) + ": " + column + " = " + s + " is outside [0,100]");
  }
  return v;
}

inline std::vector<std::pair<std::size_t, std::vector<std::string>>> read_csv_rows(
    const std::filesystem::path& path, const std::vector<std::string>& header, std::vector<std::string>& warnings) {
  std::ifstream f(path);
  if (!f) throw IoError("missing file: " + path.string());
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (line.find_first_not_of(" \t") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') continue;
    auto fields = split_csv_line(line, line_no);
    if (!have_header) {
      if (fields != header) {
        std::string expected;
        for (std::size_t i = 0; i < header.size(); ++i) expected += (i ? "," : "") + header[i];
        throw ValidationError("line " + std::to_string(line_no) + ": expected header \"" + expected + "\"");
      }
      have_header = true;
      continue;
    }
    if (fields.size() != header.size()) {
      throw ValidationError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                            " fields, got " + std::to_string(fields.size()));
    }
    rows.emplace_back(line_no, std::move(fields));
  }
  if (rows.empty()) warnings.push_back(path.string() + ": no records");
  return rows;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace detail

struct IngestResult {
  std::vector<MetricRecord> records;
  std::vector<std::string> warnings;
};

/// CSV with header `method,dataset,action_acc,privacy_acc`; accuracies in percent.
inline IngestResult ingest_results(const std::filesystem::path& path) {
  IngestResult out;
  for (auto& [line_no, f] :
       detail::read_csv_rows(path, {"method", "dataset", "action_acc", "privacy_acc"}, out.warnings)) {
    if (f[0].empty()) throw ValidationError("line " + std::to_string(line_no) + ": empty method name");
    out.records.push_back({f[0], f[1], detail::parse_percent(f[2], line_no, "action_acc"),
                           detail::parse_percent(f[3], line_no, "privacy_acc")});
  }
  return out;
}

struct TemplateIngestResult {
  std::vector<TemplateRecord> records;
  std::vector<std::string> warnings;
};

/// CSV with header `dataset,template,action_acc,privacy_acc`.
inline TemplateIngestResult ingest_template_results(const std::filesystem::path& path) {
  TemplateIngestResult out;
  for (auto& [line_no, f] :
       detail::read_csv_rows(path, {"dataset", "template", "action_acc", "privacy_acc"}, out.warnings)) {
    if (f[1].empty()) throw ValidationError("line " + std::to_string(line_no) + ": empty template name");
    out.records.push_back({f[1], detail::parse_percent(f[2], line_no, "action_acc"),
                           detail::parse_percent(f[3], line_no, "privacy_acc"), f[0]});
  }
  return out;
}

/// Long-format sweep CSV: method,dataset,lambda,f
inline std::string sweep_csv(const SweepTable& table) {
  std::ostringstream os;
  os << "method,dataset,lambda,f\n";
  char buf[64];
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < table.lambdas.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.4f,%.6f", table.lambdas[i], row.values[i]);
      os << detail::csv_field(row.method) << ',' << detail::csv_field(row.dataset) << ',' << buf << '\n';
    }
  }
  return os.str();
}

}  // namespace veilkit
