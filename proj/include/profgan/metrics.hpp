#pragma once

// Evaluation metrics for synthesized profile sets, and the two traditional
// baselines they are compared against.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "profgan/calendar.hpp"
#include "profgan/core_data.hpp"
#include "profgan/stats.hpp"
#include "profgan/synthesis.hpp"

namespace profgan::metrics {

using synthesis::ForecastTarget;

inline constexpr std::size_t kAcfMaxLag = 168;

/// Wasserstein-1 distance between two empirical distributions.
inline double wasserstein1(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein1: empty sample");
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  if (sa.size() == sb.size()) {
    double total = 0.0;
    for (std::size_t i = 0; i < sa.size(); ++i) total += std::abs(sa[i] - sb[i]);
    return total / static_cast<double>(sa.size());
  }
  // Integrate |F_a^-1(t) - F_b^-1(t)| over the merged quantile breakpoints.
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  std::size_t i = 0, j = 0;
  double t = 0.0, total = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double next_a = static_cast<double>(i + 1) / na;
    const double next_b = static_cast<double>(j + 1) / nb;
    const double next = std::min(next_a, next_b);
    total += (next - t) * std::abs(sa[i] - sb[j]);
    t = next;
    if (next_a <= next) ++i;
    if (next_b <= next) ++j;
  }
  return total;
}

/// Sample autocorrelation for lags 0..max_lag; acf[0] = 1.
inline std::vector<double> acf(std::span<const double> series, std::size_t max_lag) {
  if (series.size() <= max_lag) throw std::invalid_argument("acf: series must be longer than max_lag");
  const double mean = stats::mean(series);
  double denom = 0.0;
  for (double x : series) denom += (x - mean) * (x - mean);
  if (!(denom > 0.0)) throw std::invalid_argument("acf: constant series");
  std::vector<double> out(max_lag + 1);
  for (std::size_t k = 0; k <= max_lag; ++k) {
    double num = 0.0;
    for (std::size_t t = 0; t + k < series.size(); ++t) num += (series[t] - mean) * (series[t + k] - mean);
    out[k] = num / denom;
  }
  return out;
}

inline double l2_distance(const DailyShape& a, const DailyShape& b) {
  double s = 0.0;
  for (std::size_t h = 0; h < kDayHours; ++h) s += (a[h] - b[h]) * (a[h] - b[h]);
  return std::sqrt(s);
}

struct DiversityResult {
  double min_pairwise = 0.0;
  std::size_t exact_duplicates = 0;  // number of exactly equal pairs
};

inline DiversityResult diversity(std::span<const DailyShape> days) {
  if (days.size() < 2) throw std::invalid_argument("diversity: need at least two days");
  DiversityResult r{std::numeric_limits<double>::infinity(), 0};
  for (std::size_t i = 0; i < days.size(); ++i) {
    for (std::size_t j = i + 1; j < days.size(); ++j) {
      if (days[i] == days[j]) {
        ++r.exact_duplicates;
        r.min_pairwise = 0.0;
        continue;
      }
      r.min_pairwise = std::min(r.min_pairwise, l2_distance(days[i], days[j]));
    }
  }
  return r;
}

/// Mean over generated days of the L2 distance to the nearest training day.
inline double memorization_distance(std::span<const DailyShape> generated, std::span<const DailyShape> training) {
  if (generated.empty() || training.empty()) throw std::invalid_argument("memorization_distance: empty input");
  double total = 0.0;
  for (const auto& g : generated) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& t : training) {
      double s = 0.0;
      for (std::size_t h = 0; h < kDayHours && s < best * best; ++h) s += (g[h] - t[h]) * (g[h] - t[h]);
      best = std::min(best, std::sqrt(s));
    }
    total += best;
  }
  return total / static_cast<double>(generated.size());
}

// ---------------------------------------------------------------------------
// Helpers over profile sets (capacity-normalized)

inline std::vector<DailyShape> normalized_days(std::span<const HourlyProfile> profiles) {
  std::vector<DailyShape> out;
  for (const auto& p : profiles) {
    for (const auto& d : split_into_days(p)) out.push_back(normalize_shape(d, p.capacity_mw));
  }
  return out;
}

/// Absolute hour-to-hour changes within each profile, normalized.
inline std::vector<double> hourly_ramps(std::span<const HourlyProfile> profiles) {
  std::vector<double> out;
  for (const auto& p : profiles) {
    for (std::size_t h = 1; h < p.values.size(); ++h) out.push_back(std::abs(p.values[h] - p.values[h - 1]) / p.capacity_mw);
  }
  return out;
}

/// Normalized jumps across each day boundary (hour 23 to hour 0).
inline std::vector<double> boundary_jumps(std::span<const HourlyProfile> profiles) {
  std::vector<double> out;
  for (const auto& p : profiles) {
    for (std::size_t d = 1; d < p.day_count(); ++d) {
      out.push_back(std::abs(p.values[d * kDayHours] - p.values[d * kDayHours - 1]) / p.capacity_mw);
    }
  }
  return out;
}

/// Share of day boundaries whose jump exceeds `limit`.
inline double boundary_violation_rate(std::span<const HourlyProfile> profiles, double limit) {
  const auto jumps = boundary_jumps(profiles);
  if (jumps.empty()) return 0.0;
  const auto bad = std::count_if(jumps.begin(), jumps.end(), [&](double j) { return j > limit; });
  return static_cast<double>(bad) / static_cast<double>(jumps.size());
}

inline double ramp_limit(std::span<const HourlyProfile> history, double percentile) {
  auto ramps = hourly_ramps(history);
  if (ramps.empty()) throw std::invalid_argument("ramp_limit: no history");
  return stats::percentile(std::move(ramps), percentile);
}

inline std::vector<double> duty_cycles(std::span<const HourlyProfile> profiles, double threshold) {
  std::vector<double> out;
  for (const auto& d : normalized_days(profiles)) out.push_back(compute_duty_cycle(d, threshold));
  return out;
}

/// Mean ACF (lags 1..max_lag) over the normalized profiles.
inline std::vector<double> mean_acf(std::span<const HourlyProfile> profiles, std::size_t max_lag = kAcfMaxLag) {
  std::vector<double> total(max_lag, 0.0);
  for (const auto& p : profiles) {
    const auto a = acf(p.values, max_lag);
    for (std::size_t k = 1; k <= max_lag; ++k) total[k - 1] += a[k];
  }
  for (double& x : total) x /= static_cast<double>(profiles.size());
  return total;
}

inline std::array<double, kDayHours> hour_of_day_means(std::span<const DailyShape> days) {
  std::array<double, kDayHours> m{};
  for (const auto& d : days)
    for (std::size_t h = 0; h < kDayHours; ++h) m[h] += d[h];
  for (double& x : m) x /= static_cast<double>(days.size());
  return m;
}

inline std::array<std::vector<double>, 12> values_by_month(std::span<const HourlyProfile> profiles) {
  std::array<std::vector<double>, 12> out;
  for (const auto& p : profiles) {
    for (std::size_t h = 0; h < p.values.size(); ++h) {
      const int month = calendar::month_of_day(p.year, static_cast<int>(h / kDayHours));
      out[static_cast<std::size_t>(month - 1)].push_back(p.values[h] / p.capacity_mw);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Baselines

namespace detail {

/// Maps a day of `year` onto the 366-day leap calendar.
inline int leap_calendar_day(int year, int day_of_year) {
  if (calendar::is_leap(year) || day_of_year < 59) return day_of_year;
  return day_of_year + 1;
}

inline std::vector<const HourlyProfile*> history_for(std::span<const HourlyProfile> history, const ForecastTarget& target) {
  std::vector<const HourlyProfile*> out;
  for (const auto& p : history) {
    if (p.generation_type.label == target.type_label) out.push_back(&p);
  }
  if (out.empty()) throw DataError("no history of type '" + target.type_label + "'");
  return out;
}

}  // namespace detail

/// Hour-by-hour mean of the historical years (Feb 29 borrows Feb 28 in
/// non-leap years), rescaled to the target energy.
inline HourlyProfile average_profile_baseline(std::span<const HourlyProfile> history, const ForecastTarget& target) {
  target.validate();
  const auto years = detail::history_for(history, target);
  std::vector<double> sum(366 * kDayHours, 0.0);
  for (const auto* p : years) {
    for (int ld = 0; ld < 366; ++ld) {
      // Nearest available day of this year for leap-calendar day ld.
      int d = ld;
      if (!calendar::is_leap(p->year) && ld >= 59) d = ld == 59 ? 58 : ld - 1;
      for (std::size_t h = 0; h < kDayHours; ++h) {
        sum[static_cast<std::size_t>(ld) * kDayHours + h] +=
            p->values[static_cast<std::size_t>(d) * kDayHours + h] / p->capacity_mw;
      }
    }
  }
  const auto days = calendar::days_in_year(target.target_year);
  HourlyProfile out{target.site_id, years.front()->generation_type, target.target_year, target.capacity_mw, {}};
  out.values.reserve(static_cast<std::size_t>(days) * kDayHours);
  for (int d = 0; d < days; ++d) {
    const auto ld = static_cast<std::size_t>(detail::leap_calendar_day(target.target_year, d));
    for (std::size_t h = 0; h < kDayHours; ++h) {
      out.values.push_back(sum[ld * kDayHours + h] / static_cast<double>(years.size()) * target.capacity_mw);
    }
  }
  synthesis::rescale_to_energy(out.values, target.annual_energy_mwh, target.capacity_mw);
  return out;
}

/// Concatenates uniformly drawn historical days of the same month with no
/// continuity correction, then rescales to the target energy.
inline HourlyProfile random_sampling_baseline(std::span<const HourlyProfile> history, const ForecastTarget& target,
                                              std::uint64_t seed) {
  target.validate();
  const auto years = detail::history_for(history, target);
  std::array<std::vector<DailyShape>, 12> pool;
  for (const auto* p : years) {
    const auto days = split_into_days(*p);
    for (std::size_t d = 0; d < days.size(); ++d) {
      const int month = calendar::month_of_day(p->year, static_cast<int>(d));
      pool[static_cast<std::size_t>(month - 1)].push_back(normalize_shape(days[d], p->capacity_mw));
    }
  }
  std::mt19937_64 rng(seed);
  const auto n_days = calendar::days_in_year(target.target_year);
  HourlyProfile out{target.site_id, years.front()->generation_type, target.target_year, target.capacity_mw, {}};
  for (int d = 0; d < n_days; ++d) {
    const auto& candidates = pool[static_cast<std::size_t>(calendar::month_of_day(target.target_year, d) - 1)];
    if (candidates.empty()) throw DataError("no historical day for month " + std::to_string(calendar::month_of_day(target.target_year, d)));
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    for (double v : candidates[pick(rng)]) out.values.push_back(v * target.capacity_mw);
  }
  synthesis::rescale_to_energy(out.values, target.annual_energy_mwh, target.capacity_mw);
  return out;
}

// ---------------------------------------------------------------------------
// Report

struct MetricsReport {
  double magnitude_error = 0.0;
  double hourly_profile_rmse = 0.0;
  std::array<double, 12> value_distribution_w1{};
  double acf_rmse = 0.0;
  double ramp_w1 = 0.0;
  std::optional<double> duty_w1;
  double diversity_min_pairwise = 0.0;
  std::size_t exact_duplicate_days = 0;
  double memorization_nn_distance = 0.0;
  double boundary_violation_rate = 0.0;

  double max_value_distribution_w1() const {
    return *std::max_element(value_distribution_w1.begin(), value_distribution_w1.end());
  }
};

struct EvaluateOptions {
  double ramp_percentile = 99.5;
  double duty_threshold = kDefaultDutyThreshold;
  std::size_t acf_max_lag = kAcfMaxLag;
};

/// Scores a set of generated yearly profiles against history. `target`
/// supplies the annual energy each generated year should meet.
inline MetricsReport evaluate(std::span<const HourlyProfile> generated, std::span<const HourlyProfile> history,
                              const ForecastTarget& target, const EvaluateOptions& options = {}) {
  if (generated.empty() || history.empty()) throw std::invalid_argument("evaluate: empty input");
  const auto& type = history.front().generation_type;
  for (const auto& p : history) {
    if (p.generation_type.label != type.label) throw DataError("evaluate: history mixes generation types");
  }
  for (const auto& p : generated) {
    if (p.generation_type.label != type.label) {
      throw DataError("evaluate: generated type '" + p.generation_type.label + "' does not match history type '" +
                      type.label + "'");
    }
  }
  MetricsReport r;
  for (const auto& p : generated) {
    r.magnitude_error = std::max(r.magnitude_error, std::abs(p.energy_mwh() / target.annual_energy_mwh - 1.0));
  }

  const auto gen_days = normalized_days(generated);
  const auto hist_days = normalized_days(history);
  const auto gm = hour_of_day_means(gen_days);
  const auto hm = hour_of_day_means(hist_days);
  double se = 0.0;
  for (std::size_t h = 0; h < kDayHours; ++h) se += (gm[h] - hm[h]) * (gm[h] - hm[h]);
  r.hourly_profile_rmse = std::sqrt(se / kDayHours);

  const auto gv = values_by_month(generated);
  const auto hv = values_by_month(history);
  for (std::size_t m = 0; m < 12; ++m) {
    r.value_distribution_w1[m] = (gv[m].empty() || hv[m].empty()) ? 0.0 : wasserstein1(gv[m], hv[m]);
  }

  const auto ga = mean_acf(generated, options.acf_max_lag);
  const auto ha = mean_acf(history, options.acf_max_lag);
  se = 0.0;
  for (std::size_t k = 0; k < ga.size(); ++k) se += (ga[k] - ha[k]) * (ga[k] - ha[k]);
  r.acf_rmse = std::sqrt(se / static_cast<double>(ga.size()));

  const auto hist_ramps = hourly_ramps(history);
  r.ramp_w1 = wasserstein1(hourly_ramps(generated), hist_ramps);
  if (type.intermittent_dispatch) {
    r.duty_w1 = wasserstein1(duty_cycles(generated, options.duty_threshold), duty_cycles(history, options.duty_threshold));
  }
  if (gen_days.size() >= 2) {
    const auto div = diversity(gen_days);
    r.diversity_min_pairwise = div.min_pairwise;
    r.exact_duplicate_days = div.exact_duplicates;
  }
  r.memorization_nn_distance = memorization_distance(gen_days, hist_days);
  r.boundary_violation_rate =
      boundary_violation_rate(generated, stats::percentile(hist_ramps, options.ramp_percentile));
  return r;
}

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j{{"magnitude_error", r.magnitude_error},
                   {"hourly_profile_rmse", r.hourly_profile_rmse},
                   {"value_distribution_w1", r.value_distribution_w1},
                   {"acf_rmse", r.acf_rmse},
                   {"ramp_w1", r.ramp_w1},
                   {"duty_w1", r.duty_w1 ? nlohmann::json(*r.duty_w1) : nlohmann::json(nullptr)},
                   {"diversity_min_pairwise", r.diversity_min_pairwise},
                   {"exact_duplicate_days", r.exact_duplicate_days},
                   {"memorization_nn_distance", r.memorization_nn_distance},
                   {"boundary_violation_rate", r.boundary_violation_rate}};
  return j;
}

inline std::string csv_header() {
  return "method,magnitude_error,hourly_profile_rmse,value_distribution_w1_max,acf_rmse,ramp_w1,duty_w1,"
         "diversity_min_pairwise,exact_duplicate_days,memorization_nn_distance,boundary_violation_rate";
}

inline std::string csv_row(const std::string& method, const MetricsReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s,%.6g,%.6g,%.6g,%.6g,%.6g,%s,%.6g,%zu,%.6g,%.6g", method.c_str(), r.magnitude_error,
                r.hourly_profile_rmse, r.max_value_distribution_w1(), r.acf_rmse, r.ramp_w1,
                r.duty_w1 ? std::to_string(*r.duty_w1).c_str() : "", r.diversity_min_pairwise, r.exact_duplicate_days,
                r.memorization_nn_distance, r.boundary_violation_rate);
  return buf;
}

}  // namespace profgan::metrics
