#pragma once

// Batch scoring of a manifest: PSNR and mean SSIM against the sharp target,
// edge connectivity of the restored image alone. Rendered as CSV and as an
// aligned text table.

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cmrlab/codec.hpp"
#include "cmrlab/error.hpp"
#include "cmrlab/manifest.hpp"
#include "cmrlab/metrics.hpp"
#include "cmrlab/parallel.hpp"

namespace cmrlab {

struct EvalRow {
  std::string pair;
  double psnr_db = 0.0;
  double mssim = 0.0;
  std::optional<double> c_over_b;  // empty when the restored image has no edges
  std::optional<double> c_over_a;

  friend bool operator==(const EvalRow&, const EvalRow&) = default;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  EvalRow mean;
  std::size_t no_edge_rows = 0;
  std::vector<std::string> row_errors;
};

// Which image of each record is scored against the sharp target.
enum class EvalSubject { restored, blurred };

struct EvalOptions {
  EvalSubject subject = EvalSubject::restored;
  double edge_fraction = 0.25;
};

inline EvalRow score_pair(const std::string& id, const Image& candidate, const Image& target, double edge_fraction) {
  EvalRow row;
  row.pair = id;
  row.psnr_db = psnr(candidate, target);
  row.mssim = mssim(candidate, target);
  try {
    const auto ec = edge_connectivity(candidate, edge_fraction);
    row.c_over_b = ec.c_over_b;
    row.c_over_a = ec.c_over_a;
  } catch (const NoEdgesError&) {
  }
  return row;
}

inline EvalRow mean_row(const std::vector<EvalRow>& rows) {
  EvalRow m;
  m.pair = "mean";
  if (rows.empty()) return m;
  double cb = 0.0, ca = 0.0;
  std::size_t edges = 0;
  for (const auto& r : rows) {
    m.psnr_db += r.psnr_db;
    m.mssim += r.mssim;
    if (r.c_over_b && r.c_over_a) {
      cb += *r.c_over_b;
      ca += *r.c_over_a;
      ++edges;
    }
  }
  m.psnr_db /= static_cast<double>(rows.size());
  m.mssim /= static_cast<double>(rows.size());
  if (edges > 0) {
    m.c_over_b = cb / static_cast<double>(edges);
    m.c_over_a = ca / static_cast<double>(edges);
  }
  return m;
}

inline EvalReport evaluate_report(const RunManifest& manifest, const EvalOptions& opt = {}) {
  const std::size_t n = manifest.records.size();
  std::vector<std::optional<EvalRow>> slots(n);
  std::vector<std::string> errors(n);
  parallel_for(n, [&](std::size_t i) {
    const auto& rec = manifest.records[i];
    try {
      std::string candidate_path = rec.blur_path;
      if (opt.subject == EvalSubject::restored) {
        if (!rec.restored_path) throw ConfigError("record has no restored_path");
        candidate_path = *rec.restored_path;
      }
      const Image candidate = read_image(manifest.resolve(candidate_path));
      const Image target = read_image(manifest.resolve(rec.sharp_path));
      slots[i] = score_pair(std::to_string(i), candidate, target, opt.edge_fraction);
    } catch (const Error& e) {
      errors[i] = "pair " + std::to_string(i) + ": " + e.what();
    }
  });
  EvalReport report;
  for (std::size_t i = 0; i < n; ++i) {
    if (slots[i]) {
      if (!slots[i]->c_over_b) ++report.no_edge_rows;
      report.rows.push_back(std::move(*slots[i]));
    } else {
      report.row_errors.push_back(std::move(errors[i]));
    }
  }
  if (report.rows.empty()) throw ConfigError("no valid rows to evaluate");
  report.mean = mean_row(report.rows);
  return report;
}

namespace detail {

inline std::string csv_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_optional(const std::optional<double>& v) { return v ? csv_number(*v) : std::string(); }

inline double parse_csv_number(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("report: bad number '" + s + "'");
  }
  if (used != s.size()) throw ConfigError("report: bad number '" + s + "'");
  return v;
}

}  // namespace detail

inline constexpr const char* kReportHeader = "pair,psnr_db,mssim,c_over_b,c_over_a";

inline std::string format_report_csv(const EvalReport& report) {
  std::string out = std::string(kReportHeader) + "\n";
  auto line = [&](const EvalRow& r) {
    out += r.pair + "," + detail::csv_number(r.psnr_db) + "," + detail::csv_number(r.mssim) + "," +
           detail::csv_optional(r.c_over_b) + "," + detail::csv_optional(r.c_over_a) + "\n";
  };
  for (const auto& r : report.rows) line(r);
  line(report.mean);
  return out;
}

// Inverse of format_report_csv. Row errors and the no-edge count are recomputed from the rows.
inline EvalReport parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader) throw ConfigError("report: missing header");
  EvalReport report;
  bool have_mean = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      f.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (f.size() != 5) throw ConfigError("report: expected 5 fields in '" + line + "'");
    EvalRow r;
    r.pair = f[0];
    r.psnr_db = detail::parse_csv_number(f[1]);
    r.mssim = detail::parse_csv_number(f[2]);
    if (!f[3].empty()) r.c_over_b = detail::parse_csv_number(f[3]);
    if (!f[4].empty()) r.c_over_a = detail::parse_csv_number(f[4]);
    if (r.pair == "mean") {
      report.mean = r;
      have_mean = true;
    } else {
      if (!r.c_over_b) ++report.no_edge_rows;
      report.rows.push_back(r);
    }
  }
  if (!have_mean) throw ConfigError("report: missing mean row");
  return report;
}

inline std::string format_report_text(const EvalReport& report) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-8s %10s %10s %10s %12s\n", "pair", "PSNR(dB)", "MSSIM", "C/B", "C/A");
  out += buf;
  auto opt = [](const std::optional<double>& v, const char* fmt) {
    char b[32];
    if (!v) return std::string("-");
    std::snprintf(b, sizeof b, fmt, *v);
    return std::string(b);
  };
  auto line = [&](const EvalRow& r) {
    std::snprintf(buf, sizeof buf, "%-8s %10.4f %10.4f %10s %12s\n", r.pair.c_str(), r.psnr_db, r.mssim,
                  opt(r.c_over_b, "%.4f").c_str(), opt(r.c_over_a, "%.4e").c_str());
    out += buf;
  };
  for (const auto& r : report.rows) line(r);
  line(report.mean);
  if (report.no_edge_rows > 0) {
    out += std::to_string(report.no_edge_rows) + " row(s) without edges excluded from connectivity means\n";
  }
  return out;
}

}  // namespace cmrlab
