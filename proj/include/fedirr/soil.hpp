#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace fedirr::soil {

/// Volumetric soil water plus the field parameters that govern its losses.
/// All moisture quantities are dimensionless volume fractions; coefficients
/// are per hour.
struct SoilState {
  double moisture = 0.25;
  double saturation = 0.45;
  double field_capacity = 0.30;
  double et_coeff = 0.03;
  double drain_coeff = 0.25;

  /// Throws Error(invalid_input) naming the first violated invariant.
  void validate() const;

  bool operator==(const SoilState&) const = default;
};

struct WeatherTick {
  double rain_rate = 0.0; // moisture fraction per hour
  double et_demand = 0.0; // ambient multiplier

  bool operator==(const WeatherTick&) const = default;
};

struct WeatherTrace {
  std::vector<WeatherTick> ticks;
  double dt_hours = 1.0;

  bool operator==(const WeatherTrace&) const = default;
};

/// Flux breakdown of one step, every entry a rate in moisture fraction per
/// hour. The clamp terms are the overflow removed at saturation and the
/// shortfall added back at zero, so that
///   moisture_after - moisture_before == net_rate() * dt_hours.
struct StepReport {
  double irrigation = 0.0;
  double rain = 0.0;
  double et = 0.0;
  double drainage = 0.0;
  double clamped_excess = 0.0;
  double clamped_deficit = 0.0;
  double dt_hours = 0.0;

  double inflow() const { return irrigation + rain; }
  double outflow() const { return et + drainage; }
  double net_rate() const {
    return inflow() - outflow() - clamped_excess + clamped_deficit;
  }
};

struct StepResult {
  SoilState state;
  StepReport report;
};

enum class ScenarioKind { dry_spell, rain_heavy, alternating };

std::string_view scenario_name(ScenarioKind kind) noexcept;
ScenarioKind parse_scenario(std::string_view name);

double et_loss(const SoilState& state, double demand);
double drainage_loss(const SoilState& state);

StepResult step_soil(const SoilState& state, double irrigation_rate,
                     const WeatherTick& weather, double dt_hours);

/// Deterministic weather. Each tick is drawn from a counter-based generator
/// keyed by (seed, tick), so any tick can be regenerated in isolation.
WeatherTrace make_scenario(ScenarioKind kind, std::size_t length,
                           std::uint64_t seed, double dt_hours = 1.0);

} // namespace fedirr::soil
