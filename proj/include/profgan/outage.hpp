#pragma once

// Monte-Carlo forced outages: a two-state hourly Markov chain whose
// stationary unavailability equals the forced outage rate and whose repair
// times are geometric with mean MTTR.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "profgan/core_data.hpp"

namespace profgan::outage {

struct OutageConfig {
  double forced_outage_rate = 0.0;
  double mean_time_to_repair = 24.0;  // hours
  std::uint64_t seed = 0;

  void validate() const {
    if (!(forced_outage_rate >= 0.0 && forced_outage_rate < 1.0)) {
      throw std::invalid_argument("forced outage rate must be in [0, 1)");
    }
    if (!(mean_time_to_repair >= 1.0)) throw std::invalid_argument("MTTR must be >= 1 hour");
  }

  double repair_probability() const { return 1.0 / mean_time_to_repair; }
  double failure_probability() const {
    return forced_outage_rate / ((1.0 - forced_outage_rate) * mean_time_to_repair);
  }
};

/// true = out of service. The initial state is drawn from the stationary
/// distribution.
inline std::vector<bool> simulate_states(std::size_t hours, const OutageConfig& config, std::mt19937_64& rng) {
  config.validate();
  std::vector<bool> out(hours, false);
  if (config.forced_outage_rate == 0.0 || hours == 0) return out;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double p_fail = config.failure_probability();
  const double p_repair = config.repair_probability();
  bool down = u(rng) < config.forced_outage_rate;
  for (std::size_t h = 0; h < hours; ++h) {
    if (h > 0) down = down ? !(u(rng) < p_repair) : u(rng) < p_fail;
    out[h] = down;
  }
  return out;
}

/// Out-of-service hours are set to exactly 0; all others are untouched.
inline HourlyProfile inject_outages(const HourlyProfile& profile, const OutageConfig& config) {
  config.validate();
  HourlyProfile out = profile;
  if (config.forced_outage_rate == 0.0) return out;
  std::mt19937_64 rng(config.seed);
  const auto down = simulate_states(out.values.size(), config, rng);
  for (std::size_t h = 0; h < out.values.size(); ++h) {
    if (down[h]) out.values[h] = 0.0;
  }
  return out;
}

struct OutageSummary {
  double unavailability = 0.0;
  std::size_t events = 0;
  double mean_duration = 0.0;
};

/// Out-hour fraction and mean length of maximal out runs.
inline OutageSummary summarize(const std::vector<bool>& states) {
  OutageSummary s;
  std::size_t out_hours = 0;
  for (std::size_t h = 0; h < states.size(); ++h) {
    if (!states[h]) continue;
    ++out_hours;
    if (h == 0 || !states[h - 1]) ++s.events;
  }
  if (!states.empty()) s.unavailability = static_cast<double>(out_hours) / static_cast<double>(states.size());
  if (s.events) s.mean_duration = static_cast<double>(out_hours) / static_cast<double>(s.events);
  return s;
}

}  // namespace profgan::outage
