#pragma once

// Multi-level yearly synthesis: a monthly magnitude envelope on top of
// GAN-generated daily shapes chained through their starting points.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "profgan/calendar.hpp"
#include "profgan/core_data.hpp"
#include "profgan/gan.hpp"

namespace profgan::synthesis {

struct ForecastTarget {
  std::string site_id;
  std::string type_label;
  int target_year = 0;
  double annual_energy_mwh = 0.0;
  double capacity_mw = 0.0;
  std::optional<std::array<double, 12>> monthly_shares;

  double max_energy_mwh() const { return capacity_mw * calendar::hours_in_year(target_year); }

  void validate() const {
    if (!(capacity_mw > 0.0)) throw DataError("target '" + site_id + "': capacity must be positive");
    if (!(annual_energy_mwh > 0.0)) throw DataError("target '" + site_id + "': annual energy must be positive");
    if (annual_energy_mwh > max_energy_mwh()) {
      throw DataError("target '" + site_id + "' " + std::to_string(target_year) + ": infeasible annual energy " +
                      std::to_string(annual_energy_mwh) + " MWh exceeds capacity x hours = " +
                      std::to_string(max_energy_mwh()) + " MWh");
    }
    if (monthly_shares) {
      double sum = 0.0;
      for (double s : *monthly_shares) {
        if (s < 0.0) throw DataError("target '" + site_id + "': negative monthly share");
        sum += s;
      }
      if (std::abs(sum - 1.0) > 1e-9) throw DataError("target '" + site_id + "': monthly shares must sum to 1");
    }
  }
};

struct MonthlyEnvelope {
  std::array<double, 12> factors{};
};

struct SynthesisConfig {
  double ramp_percentile = 99.5;
  int max_resamples = 20;
  double blend_weight = 0.5;
  double duty_threshold = kDefaultDutyThreshold;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(ramp_percentile > 50.0 && ramp_percentile <= 100.0)) {
      throw std::invalid_argument("SynthesisConfig: ramp percentile must be in (50, 100]");
    }
    if (max_resamples < 1) throw std::invalid_argument("SynthesisConfig: max_resamples must be >= 1");
    if (blend_weight < 0.0 || blend_weight > 1.0) throw std::invalid_argument("SynthesisConfig: blend weight outside [0,1]");
  }
};

/// Mean capacity-normalized power per calendar month over profiles of `type_label`.
/// Months with no data are reported as nullopt.
inline std::array<std::optional<double>, 12> historical_month_means(std::span<const HourlyProfile> history,
                                                                    const std::string& type_label) {
  std::array<double, 12> sum{}, count{};
  for (const auto& p : history) {
    if (p.generation_type.label != type_label) continue;
    for (std::size_t d = 0; d < p.day_count(); ++d) {
      const auto m = static_cast<std::size_t>(calendar::month_of_day(p.year, static_cast<int>(d)) - 1);
      for (std::size_t h = 0; h < kDayHours; ++h) sum[m] += p.values[d * kDayHours + h] / p.capacity_mw;
      count[m] += kDayHours;
    }
  }
  std::array<std::optional<double>, 12> out;
  for (std::size_t m = 0; m < 12; ++m) {
    if (count[m] > 0) out[m] = sum[m] / count[m];
  }
  return out;
}

/// Envelope factors are relative to the historical month means: a factor of
/// 1 keeps a month at its historical level. Without shares every month moves
/// by the same ratio so the year meets the annual target; with shares each
/// month is set to its share of the annual energy.
inline MonthlyEnvelope build_monthly_envelope(const std::array<std::optional<double>, 12>& month_means,
                                              const ForecastTarget& target) {
  target.validate();
  MonthlyEnvelope env;
  const int year = target.target_year;
  if (!target.monthly_shares) {
    double base_energy = 0.0;
    for (int m = 1; m <= 12; ++m) {
      const auto& mean = month_means[static_cast<std::size_t>(m - 1)];
      if (!mean) throw DataError("history has no data for month " + std::to_string(m) + " and no shares were given");
      base_energy += *mean * target.capacity_mw * calendar::hours_in_month(year, m);
    }
    if (!(base_energy > 0.0)) throw DataError("historical energy is zero; cannot scale to target");
    env.factors.fill(target.annual_energy_mwh / base_energy);
    return env;
  }
  for (int m = 1; m <= 12; ++m) {
    const auto i = static_cast<std::size_t>(m - 1);
    const double share = (*target.monthly_shares)[i];
    const double hist = month_means[i].value_or(0.0);
    if (!(hist > 0.0)) throw DataError("history has no output in month " + std::to_string(m) + " to scale");
    if (!(share > 0.0)) throw DataError("monthly share for month " + std::to_string(m) + " must be positive");
    const double target_mean = share * target.annual_energy_mwh / (calendar::hours_in_month(year, m) * target.capacity_mw);
    env.factors[i] = target_mean / hist;
  }
  return env;
}

inline MonthlyEnvelope build_monthly_envelope(std::span<const HourlyProfile> history, const ForecastTarget& target) {
  return build_monthly_envelope(historical_month_means(history, target.type_label), target);
}

inline MonthlyEnvelope build_monthly_envelope(const gan::TypeStats& stats, const ForecastTarget& target) {
  std::array<std::optional<double>, 12> means;
  for (std::size_t m = 0; m < 12; ++m) means[m] = stats.month_mean[m];
  return build_monthly_envelope(means, target);
}

/// Keeps the n = round(24 * duty) largest hours and zeroes the rest; ties
/// keep the earlier hour.
inline DailyShape apply_duty_cycle(const DailyShape& shape, double duty) {
  const auto keep = gan::detail::duty_keep_mask(shape, duty);
  DailyShape out{};
  for (std::size_t h = 0; h < kDayHours; ++h) out[h] = keep[h] ? shape[h] : 0.0;
  return out;
}

struct ChainedDay {
  DailyShape shape{};  // after duty masking for intermittent types
  std::optional<double> duty;
  int attempts = 0;
  bool blended = false;
};

/// Source of one generator draw for a given condition. Lets tests substitute
/// a scripted generator.
using DaySampler = std::function<gan::SampleOutput(const ConditionVector&, nn::Rng&)>;

inline DaySampler model_sampler(const gan::TrainedGanModel& model) {
  return [&model](const ConditionVector& c, nn::Rng& rng) {
    const auto z = gan::draw_latent(1, model.config.latent_dim, rng);
    return gan::sample(model, c, z.data());
  };
}

/// Draws up to R days until the first hour lies within `ramp_limit` of the
/// previous day's last hour; otherwise blends the best attempt's first hour
/// toward the previous value.
inline ChainedDay chain_day(const DaySampler& sampler, const ConditionVector& condition, double ramp_limit,
                            const SynthesisConfig& config, nn::Rng& rng) {
  const double prev = condition.starting_point;
  if (prev < 0.0 || prev > 1.0) throw std::invalid_argument("chain_day: starting point outside [0,1]");
  std::optional<gan::SampleOutput> best;
  double best_gap = 0.0;
  for (int attempt = 1; attempt <= config.max_resamples; ++attempt) {
    auto draw = sampler(condition, rng);
    const DailyShape shaped = draw.duty ? apply_duty_cycle(draw.shape, *draw.duty) : draw.shape;
    const double gap = std::abs(shaped[0] - prev);
    if (gap <= ramp_limit) return {shaped, draw.duty, attempt, false};
    if (!best || gap < best_gap) {
      best = draw;
      best_gap = gap;
    }
  }
  auto raw = best->shape;
  raw[0] = config.blend_weight * prev + (1.0 - config.blend_weight) * raw[0];
  const DailyShape shaped = best->duty ? apply_duty_cycle(raw, *best->duty) : raw;
  return {shaped, best->duty, config.max_resamples, true};
}

inline ChainedDay chain_day(const gan::TrainedGanModel& model, double prev_last_value, int month,
                            std::size_t type_index, const SynthesisConfig& config, nn::Rng& rng) {
  const ConditionVector c{type_index, model.registry.size(), month, prev_last_value};
  return chain_day(model_sampler(model), c, model.type_stats.at(type_index).ramp_limit(config.ramp_percentile),
                   config, rng);
}

inline constexpr double kEnergyTolerance = 1e-3;

/// Scales values so they sum to `energy` with every value clipped at
/// `capacity`: solves sum(min(k * v, capacity)) == energy for k by walking
/// the clip breakpoints from the largest value down.
inline void rescale_to_energy(std::vector<double>& values, double energy, double capacity) {
  if (energy > capacity * static_cast<double>(values.size())) throw DataError("infeasible energy for capacity");
  std::vector<double> sorted(values);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double rest = 0.0;
  for (double v : sorted) rest += std::max(v, 0.0);
  if (!(rest > 0.0)) throw DataError("cannot scale an all-zero profile to positive energy");
  for (std::size_t j = 0; j < sorted.size() && sorted[j] > 0.0; ++j) {
    const double k = (energy - static_cast<double>(j) * capacity) / rest;
    if (k * sorted[j] <= capacity) {
      for (double& v : values) v = std::clamp(k * v, 0.0, capacity);
      return;
    }
    rest -= sorted[j];
  }
  throw DataError("annual energy " + std::to_string(energy) + " MWh is unreachable: the profile has too few non-zero hours");
}

struct YearDiagnostics {
  std::vector<double> emitted_duty;  // per day, intermittent types only
  std::vector<int> attempts;
  int blended_days = 0;
  double ramp_limit = 0.0;
};

inline HourlyProfile generate_year(const gan::TrainedGanModel& model, const ForecastTarget& target,
                                   const SynthesisConfig& config, YearDiagnostics* diagnostics = nullptr) {
  config.validate();
  target.validate();
  const auto* type = model.registry.find(target.type_label);
  if (!type) throw DataError("model has no generation type '" + target.type_label + "'");
  const auto& stats = model.type_stats.at(type->index);
  const auto envelope = build_monthly_envelope(stats, target);
  const double ramp_limit = stats.ramp_limit(config.ramp_percentile);
  if (stats.start_points.empty()) throw DataError("model has no historical starting points for '" + target.type_label + "'");

  nn::Rng rng(config.seed);
  const auto sampler = model_sampler(model);
  std::uniform_int_distribution<std::size_t> pick(0, stats.start_points.size() - 1);
  double prev = std::clamp(stats.start_points[pick(rng)], 0.0, 1.0);

  const int days = calendar::days_in_year(target.target_year);
  HourlyProfile out{target.site_id, *type, target.target_year, target.capacity_mw, {}};
  out.values.reserve(static_cast<std::size_t>(days) * kDayHours);
  YearDiagnostics diag;
  diag.ramp_limit = ramp_limit;
  for (int d = 0; d < days; ++d) {
    const int month = calendar::month_of_day(target.target_year, d);
    const ConditionVector c{type->index, model.registry.size(), month, prev};
    const auto day = chain_day(sampler, c, ramp_limit, config, rng);
    const double factor = envelope.factors[static_cast<std::size_t>(month - 1)];
    for (double v : day.shape) out.values.push_back(v * factor * target.capacity_mw);
    prev = std::clamp(day.shape[kDayHours - 1], 0.0, 1.0);
    if (day.duty) diag.emitted_duty.push_back(*day.duty);
    diag.attempts.push_back(day.attempts);
    diag.blended_days += day.blended ? 1 : 0;
  }
  rescale_to_energy(out.values, target.annual_energy_mwh, target.capacity_mw);
  for (double& v : out.values) v = std::clamp(v, 0.0, target.capacity_mw);
  if (diagnostics) *diagnostics = std::move(diag);
  return out;
}

/// Stable per-(site, year) seed derived from the master seed.
inline std::uint64_t derive_seed(std::uint64_t master, const std::string& site_id, int year) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char ch : site_id) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(year));
  h *= 1099511628211ULL;
  std::uint64_t x = master ^ h;
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct PortfolioEntry {
  ForecastTarget target;
  std::uint64_t seed = 0;
  std::optional<HourlyProfile> profile;
  std::string error;  // non-empty on failure
};

/// One profile per target, each on its own RNG stream. Failures are reported
/// per target and do not stop the others.
inline std::vector<PortfolioEntry> generate_portfolio(std::span<const gan::TrainedGanModel* const> models,
                                                      std::span<const ForecastTarget> targets,
                                                      const SynthesisConfig& config) {
  std::vector<PortfolioEntry> out;
  for (const auto& target : targets) {
    PortfolioEntry entry{target, derive_seed(config.seed, target.site_id, target.target_year), std::nullopt, {}};
    try {
      auto it = std::find_if(models.begin(), models.end(),
                             [&](const gan::TrainedGanModel* m) { return m->registry.find(target.type_label); });
      if (it == models.end()) throw DataError("no model covers type '" + target.type_label + "'");
      SynthesisConfig local = config;
      local.seed = entry.seed;
      entry.profile = generate_year(**it, target, local);
    } catch (const std::exception& e) {
      entry.error = e.what();
    }
    out.push_back(std::move(entry));
  }
  return out;
}

}  // namespace profgan::synthesis
