#pragma once

// Line-oriented run manifest: one JSON object per line with sharp_path,
// blur_path, seed and an optional restored_path. Paths are relative to the
// directory holding the manifest.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cmrlab/error.hpp"
#include "cmrlab/io.hpp"

namespace cmrlab {

struct ManifestRecord {
  std::string sharp_path;
  std::string blur_path;
  std::optional<std::string> restored_path;
  std::uint64_t seed = 0;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

struct RunManifest {
  std::filesystem::path directory;
  std::vector<ManifestRecord> records;

  std::filesystem::path resolve(const std::string& relative) const { return directory / relative; }
};

inline std::string format_manifest(const std::vector<ManifestRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["sharp_path"] = r.sharp_path;
    j["blur_path"] = r.blur_path;
    if (r.restored_path) j["restored_path"] = *r.restored_path;
    j["seed"] = r.seed;
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline std::vector<ManifestRecord> parse_manifest(const std::string& text) {
  std::vector<ManifestRecord> records;
  std::set<std::pair<std::string, std::string>> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto where = "manifest line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    ManifestRecord r;
    try {
      r.sharp_path = j.at("sharp_path").get<std::string>();
      r.blur_path = j.at("blur_path").get<std::string>();
      if (j.contains("restored_path")) r.restored_path = j.at("restored_path").get<std::string>();
      r.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
    if (!seen.emplace(r.sharp_path, r.blur_path).second) {
      throw ConfigError(where + ": duplicate pair (" + r.sharp_path + ", " + r.blur_path + ")");
    }
    records.push_back(std::move(r));
  }
  return records;
}

inline RunManifest load_manifest(const std::filesystem::path& path) {
  RunManifest m;
  m.directory = path.parent_path();
  m.records = parse_manifest(read_file_text(path));
  return m;
}

inline void save_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  write_file_atomic(path, format_manifest(records));
}

}  // namespace cmrlab
