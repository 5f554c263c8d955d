#pragma once

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "profgan/profgan.hpp"

namespace profgan::testing {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "") {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = "profgan_";
    if (info) name += std::string(info->test_suite_name()) + "_" + info->name();
    if (!tag.empty()) name += "_" + tag;
    for (char& c : name) {
      if (c == '/') c = '_';
    }
    path_ = fs::temp_directory_path() / name;
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  fs::path path_;
};

inline void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// One site-year of hourly values as data.csv rows (no header).
inline std::string data_rows(const std::string& site, int year, const std::vector<double>& values) {
  std::ostringstream out;
  for (std::size_t h = 0; h < values.size(); ++h) {
    out << calendar::format_timestamp({year, static_cast<int>(h)}) << ',' << site << ',' << values[h] << '\n';
  }
  return out.str();
}

inline std::vector<double> ramp_year(int year, double capacity) {
  std::vector<double> v(static_cast<std::size_t>(calendar::hours_in_year(year)));
  for (std::size_t h = 0; h < v.size(); ++h) v[h] = capacity * static_cast<double>(h % 24) / 23.0;
  return v;
}

inline synthetic::SiteSpec site(const std::string& id, const std::string& type, synthetic::Family family,
                                double capacity_factor) {
  synthetic::SiteSpec s;
  s.site_id = id;
  s.type = type;
  s.family = family;
  s.capacity_factor = capacity_factor;
  return s;
}

}  // namespace profgan::testing
