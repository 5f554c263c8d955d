#pragma once

// Historical hourly data: ingestion, day slicing, normalization and the
// conditioned daily training samples the GANs learn from.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "profgan/calendar.hpp"
#include "profgan/csv.hpp"
#include "profgan/errors.hpp"

namespace profgan {

inline constexpr std::size_t kDayHours = 24;
inline constexpr double kDefaultDutyThreshold = 0.01;
inline constexpr double kClampTolerance = 0.01;

struct GenerationType {
  std::string label;
  bool intermittent_dispatch = false;
  std::size_t index = 0;

  friend bool operator==(const GenerationType&, const GenerationType&) = default;
};

/// Closed, ordered set of generation types. Index = position.
class TypeRegistry {
 public:
  TypeRegistry() = default;

  /// Adds a type; returns the stored entry. Re-adding an identical label
  /// with a different intermittent flag is an error.
  const GenerationType& add(const std::string& label, bool intermittent) {
    if (const auto* existing = find(label)) {
      if (existing->intermittent_dispatch != intermittent) {
        throw DataError("type '" + label + "' declared both intermittent and non-intermittent");
      }
      return *existing;
    }
    types_.push_back({label, intermittent, types_.size()});
    return types_.back();
  }

  const GenerationType* find(const std::string& label) const {
    auto it = std::find_if(types_.begin(), types_.end(),
                           [&](const GenerationType& t) { return t.label == label; });
    return it == types_.end() ? nullptr : &*it;
  }

  const GenerationType& at(const std::string& label) const {
    const auto* t = find(label);
    if (!t) throw DataError("unknown generation type '" + label + "'");
    return *t;
  }

  const GenerationType& at(std::size_t index) const { return types_.at(index); }
  std::size_t size() const { return types_.size(); }
  bool empty() const { return types_.empty(); }
  const std::vector<GenerationType>& types() const { return types_; }

  bool any_intermittent() const {
    return std::any_of(types_.begin(), types_.end(),
                       [](const GenerationType& t) { return t.intermittent_dispatch; });
  }

 private:
  std::vector<GenerationType> types_;
};

struct SiteMeta {
  std::string site_id;
  GenerationType generation_type;
  double installed_capacity_mw = 0.0;
};

/// One calendar year of hourly mean power (MW) for one site.
struct HourlyProfile {
  std::string site_id;
  GenerationType generation_type;
  int year = 0;
  double capacity_mw = 0.0;
  std::vector<double> values;

  std::size_t day_count() const { return values.size() / kDayHours; }
  double energy_mwh() const {
    double e = 0.0;
    for (double v : values) e += v;
    return e;
  }
};

using DailyShape = std::array<double, kDayHours>;

/// Conditioning information for one generated day. The one-hot encodings are
/// produced on demand from the indices.
struct ConditionVector {
  std::size_t type_index = 0;
  std::size_t type_count = 1;
  int month = 1;  // 1..12
  double starting_point = 0.0;

  std::vector<double> type_onehot() const {
    std::vector<double> v(type_count, 0.0);
    v.at(type_index) = 1.0;
    return v;
  }
  std::array<double, 12> month_onehot() const {
    std::array<double, 12> v{};
    v.at(static_cast<std::size_t>(month - 1)) = 1.0;
    return v;
  }
};

struct TrainingSample {
  ConditionVector condition;
  DailyShape target_shape{};
  std::optional<double> target_duty;  // present iff the type is intermittent
  std::string site_id;
  int year = 0;
  int day_of_year = 0;
};

struct TrainingSet {
  TypeRegistry registry;
  std::vector<TrainingSample> samples;
};

struct IngestOptions {
  // Closed set of accepted type labels.
  std::vector<std::string> allowed_types{"biomass", "cogeneration", "gas",     "hydro",
                                         "nuclear", "peaker",       "solar",   "wind"};
  double clamp_tolerance = kClampTolerance;
};

struct IngestResult {
  std::vector<HourlyProfile> profiles;  // sorted by (site_id, year)
  std::vector<SiteMeta> metas;          // sorted by site_id
  TypeRegistry registry;                // sorted by label
};

namespace detail {

inline std::vector<SiteMeta> read_meta(const std::filesystem::path& meta_path,
                                       const IngestOptions& options, TypeRegistry& registry) {
  if (!std::filesystem::exists(meta_path)) {
    throw DataError("meta file not found: '" + meta_path.string() + "'");
  }
  const auto table = csv::read(meta_path, {"site_id", "type", "capacity_mw", "intermittent"});
  struct Raw {
    std::string site, type;
    double capacity;
    bool intermittent;
  };
  std::vector<Raw> raws;
  std::map<std::string, bool> type_flags;
  for (const auto& row : table.rows) {
    const auto where = meta_path.string() + ":" + std::to_string(row.line);
    const auto& f = row.fields;
    if (f[0].empty()) throw DataError(where + ": empty site_id");
    if (std::find(options.allowed_types.begin(), options.allowed_types.end(), f[1]) ==
        options.allowed_types.end()) {
      throw DataError(where + ": unknown generation type '" + f[1] + "'");
    }
    const double cap = csv::parse_double(f[2], where);
    if (!(cap > 0.0)) throw DataError(where + ": capacity_mw must be positive");
    if (f[3] != "0" && f[3] != "1") throw DataError(where + ": intermittent must be 0 or 1");
    const bool intermittent = f[3] == "1";
    if (auto [it, inserted] = type_flags.emplace(f[1], intermittent);
        !inserted && it->second != intermittent) {
      throw DataError(where + ": type '" + f[1] + "' has inconsistent intermittent flags");
    }
    raws.push_back({f[0], f[1], cap, intermittent});
  }
  for (const auto& [label, flag] : type_flags) registry.add(label, flag);

  std::vector<SiteMeta> metas;
  for (const auto& r : raws) {
    if (std::any_of(metas.begin(), metas.end(), [&](const SiteMeta& m) { return m.site_id == r.site; })) {
      throw DataError(meta_path.string() + ": duplicate site_id '" + r.site + "'");
    }
    metas.push_back({r.site, registry.at(r.type), r.capacity});
  }
  std::sort(metas.begin(), metas.end(),
            [](const SiteMeta& a, const SiteMeta& b) { return a.site_id < b.site_id; });
  return metas;
}

}  // namespace detail

/// Reads the data and meta CSVs, validates them and returns one complete
/// HourlyProfile per (site, year).
inline IngestResult ingest_hourly_csv(const std::filesystem::path& data_path,
                                      const std::filesystem::path& meta_path,
                                      const IngestOptions& options = {}) {
  IngestResult result;
  result.metas = detail::read_meta(meta_path, options, result.registry);
  if (!std::filesystem::exists(data_path)) {
    throw DataError("data file not found: '" + data_path.string() + "'");
  }
  const auto table = csv::read(data_path, {"timestamp", "site_id", "power_mw"});

  struct Reading {
    calendar::HourStamp stamp;
    double power;
    std::size_t line;
  };
  std::map<std::string, std::vector<Reading>> by_site;
  for (const auto& row : table.rows) {
    const auto where = data_path.string() + ":" + std::to_string(row.line);
    const auto stamp = calendar::parse_timestamp(row.fields[0]);
    const double power = csv::parse_double(row.fields[2], where);
    if (!std::isfinite(power)) throw DataError(where + ": non-finite power");
    if (power < 0.0) throw DataError(where + ": negative power " + row.fields[2]);
    by_site[row.fields[1]].push_back({stamp, power, row.line});
  }

  for (auto& [site, readings] : by_site) {
    auto meta_it = std::find_if(result.metas.begin(), result.metas.end(),
                                [&](const SiteMeta& m) { return m.site_id == site; });
    if (meta_it == result.metas.end()) throw DataError("site '" + site + "' has no meta entry");
    const double cap = meta_it->installed_capacity_mw;

    std::sort(readings.begin(), readings.end(),
              [](const Reading& a, const Reading& b) { return a.stamp < b.stamp; });
    for (std::size_t i = 1; i < readings.size(); ++i) {
      if (readings[i].stamp == readings[i - 1].stamp) {
        throw DataError(data_path.string() + ":" + std::to_string(readings[i].line) +
                        ": duplicate timestamp " + calendar::format_timestamp(readings[i].stamp) +
                        " for site '" + site + "'");
      }
    }

    std::size_t i = 0;
    while (i < readings.size()) {
      const int year = readings[i].stamp.year;
      HourlyProfile profile{site, meta_it->generation_type, year, cap, {}};
      const int hours = calendar::hours_in_year(year);
      profile.values.reserve(static_cast<std::size_t>(hours));
      calendar::HourStamp expected{year, 0};
      for (int h = 0; h < hours; ++h, expected = calendar::next_hour(expected)) {
        if (i >= readings.size() || readings[i].stamp != expected) {
          throw DataError("site '" + site + "': missing hour " + calendar::format_timestamp(expected));
        }
        double p = readings[i].power;
        if (p > cap * (1.0 + options.clamp_tolerance)) {
          throw DataError(data_path.string() + ":" + std::to_string(readings[i].line) + ": power " +
                          std::to_string(p) + " exceeds capacity " + std::to_string(cap) +
                          " of site '" + site + "'");
        }
        profile.values.push_back(std::min(p, cap));
        ++i;
      }
      result.profiles.push_back(std::move(profile));
    }
  }
  std::sort(result.profiles.begin(), result.profiles.end(), [](const auto& a, const auto& b) {
    return std::tie(a.site_id, a.year) < std::tie(b.site_id, b.year);
  });
  return result;
}

inline void write_data_csv(const std::filesystem::path& path, std::span<const HourlyProfile> profiles) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "timestamp,site_id,power_mw\n";
  char buf[64];
  for (const auto& p : profiles) {
    for (std::size_t h = 0; h < p.values.size(); ++h) {
      std::snprintf(buf, sizeof(buf), "%.6f", p.values[h]);
      out << calendar::format_timestamp({p.year, static_cast<int>(h)}) << ',' << p.site_id << ','
          << buf << '\n';
    }
  }
}

inline void write_meta_csv(const std::filesystem::path& path, std::span<const SiteMeta> metas) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "site_id,type,capacity_mw,intermittent\n";
  for (const auto& m : metas) {
    out << m.site_id << ',' << m.generation_type.label << ',' << m.installed_capacity_mw << ','
        << (m.generation_type.intermittent_dispatch ? 1 : 0) << '\n';
  }
}

/// Day d (0-based) is values[24d, 24d+24).
inline std::vector<DailyShape> split_into_days(const HourlyProfile& profile) {
  std::vector<DailyShape> days(profile.values.size() / kDayHours);
  for (std::size_t d = 0; d < days.size(); ++d) {
    std::copy_n(profile.values.begin() + static_cast<std::ptrdiff_t>(d * kDayHours), kDayHours,
                days[d].begin());
  }
  return days;
}

inline DailyShape normalize_shape(const DailyShape& day, double capacity_mw) {
  if (!(capacity_mw > 0.0)) throw std::invalid_argument("normalize_shape: capacity must be positive");
  DailyShape out{};
  for (std::size_t h = 0; h < kDayHours; ++h) out[h] = day[h] / capacity_mw;
  return out;
}

/// Fraction of hours strictly above `threshold`.
inline double compute_duty_cycle(const DailyShape& shape, double threshold = kDefaultDutyThreshold) {
  const auto on = std::count_if(shape.begin(), shape.end(), [&](double v) { return v > threshold; });
  return static_cast<double>(on) / static_cast<double>(kDayHours);
}

/// One sample per calendar day. The starting point of day d is the last
/// normalized hour of day d-1; day 0 of each (site, year) seeds from its own
/// hour 0.
inline TrainingSet build_training_set(std::span<const HourlyProfile> profiles,
                                      std::span<const SiteMeta> metas,
                                      double duty_threshold = kDefaultDutyThreshold) {
  if (profiles.empty()) throw DataError("build_training_set: no profiles");
  TrainingSet set;
  std::vector<SiteMeta> sorted(metas.begin(), metas.end());
  std::sort(sorted.begin(), sorted.end(), [](const SiteMeta& a, const SiteMeta& b) {
    return a.generation_type.index < b.generation_type.index;
  });
  for (const auto& m : sorted) {
    const bool used = std::any_of(profiles.begin(), profiles.end(),
                                  [&](const HourlyProfile& p) { return p.site_id == m.site_id; });
    if (used) set.registry.add(m.generation_type.label, m.generation_type.intermittent_dispatch);
  }

  for (const auto& profile : profiles) {
    auto meta = std::find_if(metas.begin(), metas.end(),
                             [&](const SiteMeta& m) { return m.site_id == profile.site_id; });
    if (meta == metas.end()) throw DataError("no meta for site '" + profile.site_id + "'");
    const auto& type = set.registry.at(meta->generation_type.label);
    const auto days = split_into_days(profile);
    double previous_last = 0.0;
    for (std::size_t d = 0; d < days.size(); ++d) {
      TrainingSample s;
      s.target_shape = normalize_shape(days[d], meta->installed_capacity_mw);
      s.condition.type_index = type.index;
      s.condition.type_count = set.registry.size();
      s.condition.month = calendar::month_of_day(profile.year, static_cast<int>(d));
      s.condition.starting_point = d == 0 ? s.target_shape[0] : previous_last;
      if (type.intermittent_dispatch) s.target_duty = compute_duty_cycle(s.target_shape, duty_threshold);
      s.site_id = profile.site_id;
      s.year = profile.year;
      s.day_of_year = static_cast<int>(d);
      previous_last = s.target_shape[kDayHours - 1];
      set.samples.push_back(std::move(s));
    }
  }
  return set;
}

}  // namespace profgan
