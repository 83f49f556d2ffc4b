#include "fedirr/soil.hpp"

#include "fedirr/error.hpp"
#include "fedirr/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace fedirr::soil {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw Error(Errc::invalid_input, what);
}

bool finite_nonneg(double x) { return std::isfinite(x) && x >= 0.0; }

} // namespace

void SoilState::validate() const {
  require(std::isfinite(moisture) && std::isfinite(saturation) &&
              std::isfinite(field_capacity),
          "soil: non-finite field");
  require(moisture >= 0.0, "soil: moisture must be >= 0");
  require(moisture <= saturation, "soil: moisture must be <= saturation");
  require(saturation <= 1.0, "soil: saturation must be <= 1");
  require(field_capacity > 0.0, "soil: field_capacity must be > 0");
  require(field_capacity <= saturation,
          "soil: field_capacity must be <= saturation");
  require(finite_nonneg(et_coeff), "soil: et_coeff must be >= 0");
  require(finite_nonneg(drain_coeff), "soil: drain_coeff must be >= 0");
}

std::string_view scenario_name(ScenarioKind kind) noexcept {
  switch (kind) {
  case ScenarioKind::dry_spell: return "dry-spell";
  case ScenarioKind::rain_heavy: return "rain-heavy";
  case ScenarioKind::alternating: return "alternating";
  }
  return "?";
}

ScenarioKind parse_scenario(std::string_view name) {
  if (name == "dry-spell") return ScenarioKind::dry_spell;
  if (name == "rain-heavy") return ScenarioKind::rain_heavy;
  if (name == "alternating") return ScenarioKind::alternating;
  throw Error(Errc::invalid_input,
              "unknown scenario '" + std::string(name) +
                  "' (expected dry-spell, rain-heavy or alternating)");
}

double et_loss(const SoilState& state, double demand) {
  return state.et_coeff * demand * state.moisture;
}

double drainage_loss(const SoilState& state) {
  return state.drain_coeff * std::max(0.0, state.moisture - state.field_capacity);
}

StepResult step_soil(const SoilState& state, double irrigation_rate,
                     const WeatherTick& weather, double dt_hours) {
  state.validate();
  require(finite_nonneg(irrigation_rate), "step_soil: irrigation_rate must be >= 0");
  require(finite_nonneg(weather.rain_rate), "step_soil: rain_rate must be >= 0");
  require(finite_nonneg(weather.et_demand), "step_soil: et_demand must be >= 0");
  require(std::isfinite(dt_hours) && dt_hours > 0.0, "step_soil: dt_hours must be > 0");

  StepReport report;
  report.irrigation = irrigation_rate;
  report.rain = weather.rain_rate;
  report.et = et_loss(state, weather.et_demand);
  report.drainage = drainage_loss(state);
  report.dt_hours = dt_hours;

  const double raw =
      state.moisture + (report.inflow() - report.outflow()) * dt_hours;

  StepResult out{state, report};
  if (raw > state.saturation) {
    out.report.clamped_excess = (raw - state.saturation) / dt_hours;
    out.state.moisture = state.saturation;
  } else if (raw < 0.0) {
    out.report.clamped_deficit = -raw / dt_hours;
    out.state.moisture = 0.0;
  } else {
    out.state.moisture = raw;
  }
  return out;
}

WeatherTrace make_scenario(ScenarioKind kind, std::size_t length,
                           std::uint64_t seed, double dt_hours) {
  require(length >= 1, "make_scenario: length must be >= 1");
  require(std::isfinite(dt_hours) && dt_hours > 0.0, "make_scenario: dt_hours must be > 0");

  // The draws are shared by every kind so that the dry-spell rain events are
  // a thinned, weakened subset of the rain-heavy ones.
  constexpr double heavy_probability = 0.25;
  constexpr double dry_probability = 0.04;
  constexpr double dry_intensity_scale = 0.25;

  WeatherTrace trace;
  trace.dt_hours = dt_hours;
  trace.ticks.reserve(length);
  for (std::size_t i = 0; i < length; ++i) {
    const std::uint64_t key = hash_combine(seed, i);
    const double u_event = unit_uniform(hash_combine(key, 1));
    const double u_intensity = unit_uniform(hash_combine(key, 2));
    const double u_et = unit_uniform(hash_combine(key, 3));

    const double intensity = 0.01 + 0.04 * u_intensity;
    double rain = 0.0;
    switch (kind) {
    case ScenarioKind::rain_heavy:
      rain = u_event < heavy_probability ? intensity : 0.0;
      break;
    case ScenarioKind::dry_spell:
      rain = u_event < dry_probability ? dry_intensity_scale * intensity : 0.0;
      break;
    case ScenarioKind::alternating:
      rain = i % 2 == 0 ? intensity : 0.0;
      break;
    }

    const double hour = std::fmod(static_cast<double>(i) * dt_hours, 24.0);
    double demand = 1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * hour / 24.0) +
                    0.2 * (u_et - 0.5);
    if (rain > 0.0) demand *= 0.3;
    trace.ticks.push_back({rain, std::max(0.0, demand)});
  }
  return trace;
}

} // namespace fedirr::soil
