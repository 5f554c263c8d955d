#pragma once

// Parametric synthetic generation families used as self-contained fixtures:
// solar-like half-sines, wind-like smoothed noise and duty-cycled blocks.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "profgan/calendar.hpp"
#include "profgan/core_data.hpp"
#include "profgan/synthesis.hpp"

namespace profgan::synthetic {

enum class Family { solar, wind, duty };

inline Family family_from_string(const std::string& s) {
  if (s == "solar") return Family::solar;
  if (s == "wind") return Family::wind;
  if (s == "duty") return Family::duty;
  throw std::invalid_argument("unknown synthetic family '" + s + "' (expected solar, wind or duty)");
}

struct SiteSpec {
  std::string site_id;
  std::string type;
  Family family = Family::solar;
  double capacity_mw = 100.0;
  double capacity_factor = 0.2;
  double noise = 0.1;
  // solar: hours of daylight swing around 12 h; wind/duty: seasonal swing of the mean level
  double seasonal = 3.0;
  // wind only
  double mean_level = 0.35;
  double persistence = 0.97;
  double diurnal = 0.05;
  // duty only
  int min_on_hours = 2;
  int max_on_hours = 10;
  double off_probability = 0.15;

  bool intermittent() const { return family == Family::duty; }
};

struct SynthSpec {
  std::vector<SiteSpec> sites;
};

inline SynthSpec spec_from_json(const nlohmann::json& j) {
  if (!j.contains("sites") || !j.at("sites").is_array() || j.at("sites").empty()) {
    throw std::invalid_argument("synthetic spec needs a non-empty 'sites' array");
  }
  SynthSpec spec;
  for (const auto& sj : j.at("sites")) {
    SiteSpec s;
    s.site_id = sj.at("site_id").get<std::string>();
    s.type = sj.at("type").get<std::string>();
    s.family = family_from_string(sj.at("family").get<std::string>());
    auto get = [&](const char* key, auto& field) {
      if (sj.contains(key)) sj.at(key).get_to(field);
    };
    get("capacity_mw", s.capacity_mw);
    get("capacity_factor", s.capacity_factor);
    get("noise", s.noise);
    get("seasonal", s.seasonal);
    get("mean_level", s.mean_level);
    get("persistence", s.persistence);
    get("diurnal", s.diurnal);
    get("min_on_hours", s.min_on_hours);
    get("max_on_hours", s.max_on_hours);
    get("off_probability", s.off_probability);
    if (!(s.capacity_mw > 0.0)) throw std::invalid_argument(s.site_id + ": capacity_mw must be positive");
    if (!(s.capacity_factor > 0.0 && s.capacity_factor < 1.0)) {
      throw std::invalid_argument(s.site_id + ": capacity_factor must be in (0, 1)");
    }
    if (s.noise < 0.0 || s.noise > 1.0) throw std::invalid_argument(s.site_id + ": noise must be in [0, 1]");
    if (s.min_on_hours < 1 || s.max_on_hours > 24 || s.min_on_hours > s.max_on_hours) {
      throw std::invalid_argument(s.site_id + ": invalid on-hour range");
    }
    if (s.persistence < 0.0 || s.persistence >= 1.0) throw std::invalid_argument(s.site_id + ": persistence must be in [0, 1)");
    spec.sites.push_back(s);
  }
  return spec;
}

// Peak at the middle of hour 12 (hour h spans [h, h + 1)).
inline constexpr double kSolarNoon = 12.0;
inline constexpr double kBaseDayLength = 12.0;

/// Seasonal phase: +1 at the June solstice, -1 at the December solstice.
inline double summer_phase(int day_of_year) {
  return std::cos(2.0 * std::numbers::pi * (day_of_year - 171) / 365.25);
}

inline double solar_day_length(const SiteSpec& s, int day_of_year) {
  return kBaseDayLength + s.seasonal * summer_phase(day_of_year);
}

/// Hours that are dark on every day of the year for this site.
inline std::vector<int> solar_night_hours(const SiteSpec& s) {
  const double longest = kBaseDayLength + std::abs(s.seasonal);
  const double rise = kSolarNoon + 0.5 - longest / 2.0;
  const double set = kSolarNoon + 0.5 + longest / 2.0;
  std::vector<int> out;
  for (int h = 0; h < 24; ++h) {
    if (h + 0.5 <= rise || h + 0.5 >= set) out.push_back(h);
  }
  return out;
}

/// Noise-free clear-sky shape value for hour h of a day.
inline double solar_clear_sky(const SiteSpec& s, int day_of_year, int h) {
  const double len = solar_day_length(s, day_of_year);
  const double rise = kSolarNoon + 0.5 - len / 2.0;
  const double x = (h + 0.5 - rise) / len;
  if (x <= 0.0 || x >= 1.0) return 0.0;
  const double amp = 0.75 + 0.2 * summer_phase(day_of_year);
  return amp * std::sin(std::numbers::pi * x);
}

namespace detail {

inline std::vector<double> raw_year(const SiteSpec& s, int year, std::mt19937_64& rng, double& wind_state) {
  const int days = calendar::days_in_year(year);
  std::vector<double> v(static_cast<std::size_t>(days) * kDayHours, 0.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int d = 0; d < days; ++d) {
    auto at = [&](int h) -> double& { return v[static_cast<std::size_t>(d) * kDayHours + static_cast<std::size_t>(h)]; };
    switch (s.family) {
      case Family::solar: {
        const double clearness = 1.0 - s.noise * u(rng);
        for (int h = 0; h < 24; ++h) {
          const double clear = solar_clear_sky(s, d, h);
          if (clear <= 0.0) continue;
          at(h) = std::clamp(clear * clearness * (1.0 + 0.25 * s.noise * normal(rng)), 0.0, 1.0);
        }
        break;
      }
      case Family::wind: {
        const double level = s.mean_level * (1.0 + 0.1 * s.seasonal * -summer_phase(d));
        const double innovation = s.noise * std::sqrt(1.0 - s.persistence * s.persistence);
        for (int h = 0; h < 24; ++h) {
          wind_state = s.persistence * wind_state + innovation * normal(rng);
          const double diurnal = s.diurnal * std::sin(2.0 * std::numbers::pi * (h - 9) / 24.0);
          at(h) = std::clamp(level + diurnal + wind_state, 0.0, 1.0);
        }
        break;
      }
      case Family::duty: {
        if (u(rng) < s.off_probability) break;
        // Longer runs in summer.
        const double w = 0.5 * (1.0 + summer_phase(d));
        const int hi = s.min_on_hours + static_cast<int>(std::lround(w * (s.max_on_hours - s.min_on_hours)));
        std::uniform_int_distribution<int> hours(s.min_on_hours, std::max(s.min_on_hours, hi));
        const int n = hours(rng);
        std::uniform_int_distribution<int> jitter(-2, 2);
        const int start = std::clamp(14 - n / 2 + jitter(rng), 0, 24 - n);
        const double level = 0.5 + 0.35 * u(rng);
        for (int h = start; h < start + n; ++h) at(h) = std::clamp(level + 0.05 * s.noise * normal(rng), 0.05, 1.0);
        break;
      }
    }
  }
  return v;
}

}  // namespace detail

struct SynthResult {
  std::vector<HourlyProfile> profiles;
  std::vector<SiteMeta> metas;
};

/// Generates `years` consecutive calendar years per site, each rescaled so
/// its energy equals capacity_factor x capacity x hours.
inline SynthResult generate(const SynthSpec& spec, int start_year, int years, std::uint64_t seed) {
  if (years < 1) throw std::invalid_argument("synthetic data needs at least one year");
  SynthResult out;
  TypeRegistry registry;
  for (const auto& s : spec.sites) registry.add(s.type, s.intermittent());
  for (const auto& s : spec.sites) {
    if (std::any_of(out.metas.begin(), out.metas.end(), [&](const SiteMeta& m) { return m.site_id == s.site_id; })) {
      throw std::invalid_argument("duplicate synthetic site '" + s.site_id + "'");
    }
    out.metas.push_back({s.site_id, registry.at(s.type), s.capacity_mw});
  }
  for (std::size_t i = 0; i < spec.sites.size(); ++i) {
    const auto& s = spec.sites[i];
    std::mt19937_64 rng(synthesis::derive_seed(seed, s.site_id, 0));
    double wind_state = 0.0;
    for (int y = start_year; y < start_year + years; ++y) {
      HourlyProfile p{s.site_id, registry.at(s.type), y, s.capacity_mw, detail::raw_year(s, y, rng, wind_state)};
      for (double& v : p.values) v *= s.capacity_mw;
      synthesis::rescale_to_energy(p.values, s.capacity_factor * s.capacity_mw * calendar::hours_in_year(y), s.capacity_mw);
      out.profiles.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace profgan::synthetic
