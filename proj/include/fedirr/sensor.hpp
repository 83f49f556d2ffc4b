#pragma once

#include <cstdint>
#include <random>

namespace fedirr::sensor {

inline constexpr int kAdcMax = 1023; // 10-bit converter

/// Resistive probe behind a voltage divider, read by a 10-bit ADC, with a
/// comparator against a potentiometer-set reference for the digital line.
struct SensorCalib {
  double r_dry = 100000.0;
  double r_wet = 1000.0;
  double divider_r = 10000.0;
  double vcc = 5.0;
  double noise_std = 4.0; // counts
  int threshold_counts = 205;

  void validate() const;
  bool operator==(const SensorCalib&) const = default;
};

struct SensorFrame {
  int analog_raw = 0;
  bool digital_dry = false;
  std::uint64_t tick = 0;

  bool operator==(const SensorFrame&) const = default;
};

/// Active-low relay input: LOW energizes the coil and closes NO to COM.
enum class RelayLine { low, high };

constexpr bool pump_running(RelayLine line) noexcept { return line == RelayLine::low; }

/// Reservoir refilled by a latch: set when the level falls to threshold_low,
/// reset once it reaches capacity_max, held in between. Volumes in liters,
/// rates in liters per hour.
struct TankState {
  double level = 400.0;
  double capacity_max = 500.0;
  double threshold_low = 100.0;
  bool filling = false;
  double inflow_rate = 120.0;
  double pump_draw = 360.0;

  void validate() const;
  bool operator==(const TankState&) const = default;
};

double soil_resistance(double moisture, const SensorCalib& calib);

/// Noiseless converter output before rounding, in counts.
double ideal_counts(double moisture, const SensorCalib& calib);

/// Inverse of ideal_counts, clamped to [0, 1].
double estimate_moisture(double counts, const SensorCalib& calib);

int analog_read(double moisture, const SensorCalib& calib, std::mt19937_64& rng);
bool digital_read(int counts, const SensorCalib& calib);
SensorCalib set_threshold(const SensorCalib& calib, double pot_fraction);

RelayLine pump_command(bool dry, const TankState& tank);
TankState step_tank(const TankState& tank, bool pump_on, double dt_hours);

} // namespace fedirr::sensor
