#include "fedirr/sensor.hpp"

#include "fedirr/error.hpp"

#include <algorithm>
#include <cmath>

namespace fedirr::sensor {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw Error(Errc::invalid_input, what);
}

void check_moisture(double moisture) {
  require(std::isfinite(moisture) && moisture >= 0.0 && moisture <= 1.0,
          "sensor: moisture must lie in [0, 1]");
}

int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

} // namespace

void SensorCalib::validate() const {
  require(std::isfinite(r_dry) && std::isfinite(r_wet) && r_wet > 0.0 && r_dry > r_wet,
          "sensor: require r_dry > r_wet > 0");
  require(std::isfinite(divider_r) && divider_r > 0.0, "sensor: divider_r must be > 0");
  require(std::isfinite(vcc) && vcc > 0.0, "sensor: vcc must be > 0");
  require(std::isfinite(noise_std) && noise_std >= 0.0, "sensor: noise_std must be >= 0");
  require(threshold_counts >= 0 && threshold_counts <= kAdcMax,
          "sensor: threshold_counts must lie in [0, 1023]");
}

void TankState::validate() const {
  require(std::isfinite(capacity_max) && std::isfinite(threshold_low) &&
              threshold_low >= 0.0 && threshold_low < capacity_max,
          "tank: require 0 <= threshold_low < capacity_max");
  require(std::isfinite(level) && level >= 0.0 && level <= capacity_max,
          "tank: level must lie in [0, capacity_max]");
  require(std::isfinite(inflow_rate) && inflow_rate >= 0.0, "tank: inflow_rate must be >= 0");
  require(std::isfinite(pump_draw) && pump_draw >= 0.0, "tank: pump_draw must be >= 0");
}

double soil_resistance(double moisture, const SensorCalib& calib) {
  check_moisture(moisture);
  return calib.r_dry * std::pow(calib.r_wet / calib.r_dry, moisture);
}

double ideal_counts(double moisture, const SensorCalib& calib) {
  const double r = soil_resistance(moisture, calib);
  const double v = calib.vcc * calib.divider_r / (calib.divider_r + r);
  return kAdcMax * v / calib.vcc;
}

double estimate_moisture(double counts, const SensorCalib& calib) {
  if (!(counts > 0.0)) return 0.0;
  if (counts >= kAdcMax) return 1.0;
  const double frac = counts / kAdcMax;
  const double r = calib.divider_r * (1.0 - frac) / frac;
  const double m = std::log(r / calib.r_dry) / std::log(calib.r_wet / calib.r_dry);
  return std::clamp(m, 0.0, 1.0);
}

int analog_read(double moisture, const SensorCalib& calib, std::mt19937_64& rng) {
  double counts = ideal_counts(moisture, calib);
  if (calib.noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, calib.noise_std);
    counts += noise(rng);
  }
  return std::clamp(round_half_up(counts), 0, kAdcMax);
}

bool digital_read(int counts, const SensorCalib& calib) {
  return counts < calib.threshold_counts;
}

SensorCalib set_threshold(const SensorCalib& calib, double pot_fraction) {
  require(std::isfinite(pot_fraction) && pot_fraction >= 0.0 && pot_fraction <= 1.0,
          "set_threshold: pot_fraction must lie in [0, 1]");
  SensorCalib out = calib;
  out.threshold_counts = round_half_up(kAdcMax * pot_fraction);
  return out;
}

RelayLine pump_command(bool dry, const TankState& tank) {
  return dry && tank.level > 0.0 ? RelayLine::low : RelayLine::high;
}

TankState step_tank(const TankState& tank, bool pump_on, double dt_hours) {
  require(std::isfinite(dt_hours) && dt_hours > 0.0, "step_tank: dt_hours must be > 0");
  TankState next = tank;
  // Reset has priority over set.
  if (tank.level >= tank.capacity_max) {
    next.filling = false;
  } else if (tank.level <= tank.threshold_low) {
    next.filling = true;
  }
  const double in = next.filling ? tank.inflow_rate * dt_hours : 0.0;
  const double out = pump_on ? tank.pump_draw * dt_hours : 0.0;
  next.level = std::clamp(tank.level + in - out, 0.0, tank.capacity_max);
  return next;
}

} // namespace fedirr::sensor
