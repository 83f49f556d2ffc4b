#pragma once

#include "fedirr/alerts.hpp"
#include "fedirr/framing.hpp"
#include "fedirr/learning.hpp"
#include "fedirr/protocol.hpp"
#include "fedirr/sensor.hpp"
#include "fedirr/soil.hpp"

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace fedirr::edge {

/// Raw feature layout: moisture estimate from counts, ET demand, rain
/// forecast for the coming tick (fraction/hour), irrigation applied over
/// that tick (liters).
inline constexpr std::size_t kFeatureDim = 4;
std::vector<std::string> feature_names();

enum class Policy { reactive, predictive };

std::string_view policy_name(Policy policy) noexcept;
Policy parse_policy(std::string_view name);

/// Fixed affine map between raw samples and the model's input space. Keeps
/// every input and the target near unit scale so plain gradient descent is
/// well conditioned; it is a constant of the experiment, shared by all nodes.
struct FeatureScaling {
  double moisture_center = 0.25;
  double moisture_scale = 0.05;
  double et_center = 1.0;
  double et_scale = 0.5;
  double rain_scale = 0.01;
  double applied_scale = 50.0;

  std::vector<double> encode(std::span<const double> raw) const;
  double encode_target(double moisture) const;
  double decode_target(double value) const;
  fl::TrainingExample encode(const fl::TrainingExample& raw) const;
  std::vector<fl::TrainingExample> encode(std::span<const fl::TrainingExample> raw) const;

  void validate() const;
  bool operator==(const FeatureScaling&) const = default;
};

struct PlantConfig {
  double pump_flow_lpm = 6.0;
  double moisture_per_liter = 0.001; // nominal 10 m^2 plot
  double dry_target = 0.20;

  void validate() const;
  bool operator==(const PlantConfig&) const = default;
};

struct NodeConfig {
  std::string node_id = "n1";
  soil::SoilState soil;
  sensor::SensorCalib calib;
  sensor::TankState tank;
  PlantConfig plant;
  FeatureScaling scaling;
  Policy policy = Policy::predictive;
  std::size_t buffer_cap = 512;
  double forecast_noise = 0.0; // std of additive forecast error, fraction/hour
  double dt_hours = 1.0;
  std::uint64_t seed = 1;
};

/// Fixed-capacity FIFO; pushing at capacity evicts the oldest sample.
class SampleBuffer {
public:
  explicit SampleBuffer(std::size_t cap = 512) : cap_(cap) {}

  void push(fl::TrainingExample ex);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return cap_; }
  std::vector<fl::TrainingExample> to_vector() const { return {items_.begin(), items_.end()}; }
  const fl::TrainingExample& operator[](std::size_t i) const { return items_[i]; }

private:
  std::size_t cap_;
  std::deque<fl::TrainingExample> items_;
};

/// Cumulative water accounting, liters.
struct WaterLedger {
  double applied_liters = 0.0;
  double drained_from_irrigation_liters = 0.0;
  double rain_preempted_liters = 0.0;  // skipped by the predictive gate
  double baseline_applied_liters = 0.0; // what the reactive plan would apply
  double avoidable_applied_liters = 0.0; // applied although rain alone reached the dry target

  double wasted_liters() const { return drained_from_irrigation_liters + avoidable_applied_liters; }
  WaterLedger& operator+=(const WaterLedger& other);
  bool operator==(const WaterLedger&) const = default;
};

struct PumpPlan {
  bool pump_on = false;
  double planned_minutes = 0.0;
  double predicted_moisture = 0.0; // without irrigation; predictive policy only
  bool rain_preempted = false;
  double reactive_minutes = 0.0; // what the reactive policy plans in this state
};

struct NodeState {
  std::string node_id;
  soil::SoilState soil;
  sensor::SensorCalib calib;
  sensor::TankState tank;
  PlantConfig plant;
  FeatureScaling scaling;
  Policy policy = Policy::predictive;
  double forecast_noise = 0.0;
  SampleBuffer dataset;
  std::optional<fl::TrainingExample> pending; // awaiting its label
  fl::ModelParams current_model;
  std::mt19937_64 rng;

  std::uint64_t tick = 0;
  std::optional<sensor::SensorFrame> last_frame;
  std::optional<double> last_tank_level;
  double irrigation_water = 0.0; // irrigation-sourced moisture still held by the soil
  WaterLedger ledger;
  double deficit_sum = 0.0; // sum over ticks of max(0, dry_target - moisture)

  static NodeState make(const NodeConfig& cfg);
  double mean_moisture_deficit() const {
    return tick == 0 ? 0.0 : deficit_sum / static_cast<double>(tick);
  }
};

struct TickResult {
  sensor::SensorFrame frame;
  PumpPlan plan;
  std::vector<alerts::AlertEvent> alerts;
  WaterLedger delta;
  double moisture_before = 0.0;
  double moisture_after = 0.0;
  double applied_liters = 0.0;
};

/// Moisture estimate from counts through the noiseless calibration curve.
double estimate_moisture(const NodeState& node, int counts);

/// Builds the raw sample for the coming tick and parks it as node.pending;
/// the previous pending sample (if any) must already be labeled. The label
/// (true moisture one tick later) is filled by label_pending.
fl::TrainingExample collect_sample(NodeState& node, const sensor::SensorFrame& frame,
                                   const soil::WeatherTick& forecast, double applied_liters);

/// Labels node.pending with the observed moisture and moves it into the buffer.
void label_pending(NodeState& node, double true_moisture);

/// Model prediction of next-tick moisture with no irrigation.
double predict_moisture(const fl::ModelParams& model, const NodeState& node,
                        double moisture_estimate, const soil::WeatherTick& forecast);

PumpPlan decide_irrigation(const fl::ModelParams& model, const sensor::SensorFrame& frame,
                           const NodeState& node, const soil::WeatherTick& forecast,
                           double dt_hours);

/// One sense/decide/actuate/advance/record/alert cycle.
TickResult run_tick(NodeState& node, const soil::WeatherTick& weather, double dt_hours);

/// Builds the update answering a RoundStart: installs the global weights and
/// trains on the labeled buffer. Fewer than d+2 samples echo the global
/// weights with local_loss = -1.
proto::ClientUpdateMsg make_update(NodeState& node, const proto::RoundStart& start, double l2);

/// make_update followed by sending the answer on the stream.
proto::ClientUpdateMsg participate_round(net::ByteStream& stream, NodeState& node,
                                         const proto::RoundStart& start, double l2);

struct FederationOutcome {
  fl::ModelParams model;
  bool converged = false;
  std::size_t rounds = 0;
};

/// Registers and answers rounds until the server reports convergence or
/// closes the connection. Throws Error(io_error) if registration is refused.
FederationOutcome run_federation(net::ByteStream& stream, NodeState& node, double l2);

} // namespace fedirr::edge
