#pragma once

// On-disk formats: the validated profile store and generated profile CSVs.
//
// A store directory holds data.csv and meta.csv (the ingestion schemas) plus
// a manifest.json describing how it was produced.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>

#include "json.hpp"
#include "profgan/calendar.hpp"
#include "profgan/core_data.hpp"
#include "profgan/csv.hpp"

namespace profgan::store {

namespace fs = std::filesystem;

inline constexpr const char* kDataFile = "data.csv";
inline constexpr const char* kMetaFile = "meta.csv";
inline constexpr const char* kManifestFile = "manifest.json";

/// Creates `dir` for writing. An existing non-empty directory is refused
/// unless `force` is set.
inline void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw DataError("'" + dir.string() + "' exists and is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw DataError("output directory '" + dir.string() + "' already exists; pass --force to overwrite");
  }
  fs::create_directories(dir);
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline void write_store(const fs::path& dir, std::span<const HourlyProfile> profiles, std::span<const SiteMeta> metas,
                        const nlohmann::json& manifest) {
  write_data_csv(dir / kDataFile, profiles);
  write_meta_csv(dir / kMetaFile, metas);
  write_json(dir / kManifestFile, manifest);
}

inline IngestResult load_store(const fs::path& dir, const IngestOptions& options = {}) {
  if (!fs::is_directory(dir)) throw DataError("store '" + dir.string() + "' not found");
  return ingest_hourly_csv(dir / kDataFile, dir / kMetaFile, options);
}

/// `timestamp,power_mw` with three decimals.
inline void write_profile_csv(const fs::path& path, const HourlyProfile& profile) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "timestamp,power_mw\n";
  char buf[64];
  for (std::size_t h = 0; h < profile.values.size(); ++h) {
    std::snprintf(buf, sizeof(buf), "%.3f", profile.values[h]);
    out << calendar::format_timestamp({profile.year, static_cast<int>(h)}) << ',' << buf << '\n';
  }
}

/// Reads a generated profile CSV; site, type and capacity come from the caller.
inline HourlyProfile read_profile_csv(const fs::path& path, const std::string& site_id, const GenerationType& type,
                                      double capacity_mw) {
  const auto table = csv::read(path, {"timestamp", "power_mw"});
  if (table.rows.empty()) throw DataError(path.string() + ": no rows");
  HourlyProfile p{site_id, type, calendar::parse_timestamp(table.rows.front().fields[0]).year, capacity_mw, {}};
  calendar::HourStamp expected{p.year, 0};
  for (const auto& row : table.rows) {
    const auto stamp = calendar::parse_timestamp(row.fields[0]);
    if (stamp != expected) {
      throw DataError(path.string() + ":" + std::to_string(row.line) + ": expected " + calendar::format_timestamp(expected));
    }
    p.values.push_back(csv::parse_double(row.fields[1], path.string() + ":" + std::to_string(row.line)));
    expected = calendar::next_hour(expected);
  }
  if (p.values.size() != static_cast<std::size_t>(calendar::hours_in_year(p.year))) {
    throw DataError(path.string() + ": incomplete year " + std::to_string(p.year));
  }
  return p;
}

}  // namespace profgan::store
