#include "fedirr/node.hpp"

#include "fedirr/error.hpp"

#include <algorithm>
#include <cmath>

namespace fedirr::edge {

std::vector<std::string> feature_names() {
  return {"moisture_estimate", "et_demand", "rain_forecast", "applied_liters"};
}

std::string_view policy_name(Policy policy) noexcept {
  return policy == Policy::reactive ? "reactive" : "predictive";
}

Policy parse_policy(std::string_view name) {
  if (name == "reactive") return Policy::reactive;
  if (name == "predictive") return Policy::predictive;
  throw Error(Errc::invalid_input,
              "unknown policy '" + std::string(name) + "' (expected reactive or predictive)");
}

// ------------------------------------------------------------------ scaling

std::vector<double> FeatureScaling::encode(std::span<const double> raw) const {
  if (raw.size() != kFeatureDim) {
    throw Error(Errc::dimension_mismatch, "expected " + std::to_string(kFeatureDim) + " raw features");
  }
  return {(raw[0] - moisture_center) / moisture_scale, (raw[1] - et_center) / et_scale,
          raw[2] / rain_scale, raw[3] / applied_scale};
}

double FeatureScaling::encode_target(double moisture) const {
  return (moisture - moisture_center) / moisture_scale;
}

double FeatureScaling::decode_target(double value) const {
  return moisture_center + moisture_scale * value;
}

fl::TrainingExample FeatureScaling::encode(const fl::TrainingExample& raw) const {
  return {encode(std::span<const double>(raw.features)), encode_target(raw.target)};
}

std::vector<fl::TrainingExample> FeatureScaling::encode(std::span<const fl::TrainingExample> raw) const {
  std::vector<fl::TrainingExample> out;
  out.reserve(raw.size());
  for (const auto& ex : raw) out.push_back(encode(ex));
  return out;
}

void FeatureScaling::validate() const {
  for (double s : {moisture_scale, et_scale, rain_scale, applied_scale}) {
    if (!(std::isfinite(s) && s > 0.0)) throw Error(Errc::invalid_input, "feature scales must be > 0");
  }
  if (!std::isfinite(moisture_center) || !std::isfinite(et_center))
    throw Error(Errc::invalid_input, "feature centers must be finite");
}

void PlantConfig::validate() const {
  if (!(std::isfinite(pump_flow_lpm) && pump_flow_lpm > 0.0))
    throw Error(Errc::invalid_input, "pump_flow_lpm must be > 0");
  if (!(std::isfinite(moisture_per_liter) && moisture_per_liter > 0.0))
    throw Error(Errc::invalid_input, "moisture_per_liter must be > 0");
  if (!(std::isfinite(dry_target) && dry_target >= 0.0 && dry_target <= 1.0))
    throw Error(Errc::invalid_input, "dry_target must lie in [0, 1]");
}

// ------------------------------------------------------------------- buffer

void SampleBuffer::push(fl::TrainingExample ex) {
  if (cap_ == 0) return;
  if (items_.size() == cap_) items_.pop_front();
  items_.push_back(std::move(ex));
}

WaterLedger& WaterLedger::operator+=(const WaterLedger& o) {
  applied_liters += o.applied_liters;
  drained_from_irrigation_liters += o.drained_from_irrigation_liters;
  rain_preempted_liters += o.rain_preempted_liters;
  baseline_applied_liters += o.baseline_applied_liters;
  avoidable_applied_liters += o.avoidable_applied_liters;
  return *this;
}

// --------------------------------------------------------------------- node

NodeState NodeState::make(const NodeConfig& cfg) {
  cfg.soil.validate();
  cfg.calib.validate();
  cfg.plant.validate();
  cfg.scaling.validate();
  if (cfg.buffer_cap < 1) throw Error(Errc::invalid_input, "buffer_cap must be >= 1");
  if (!(std::isfinite(cfg.forecast_noise) && cfg.forecast_noise >= 0.0))
    throw Error(Errc::invalid_input, "forecast_noise must be >= 0");

  NodeState node;
  node.node_id = cfg.node_id;
  node.soil = cfg.soil;
  node.calib = cfg.calib;
  node.tank = cfg.tank;
  // The pump empties the tank at exactly the plant's flow.
  node.tank.pump_draw = cfg.plant.pump_flow_lpm * 60.0;
  node.tank.validate();
  node.plant = cfg.plant;
  node.scaling = cfg.scaling;
  node.policy = cfg.policy;
  node.forecast_noise = cfg.forecast_noise;
  node.dataset = SampleBuffer(cfg.buffer_cap);
  node.current_model = fl::ModelParams::zeros(kFeatureDim, feature_names());
  node.rng.seed(cfg.seed);
  return node;
}

double estimate_moisture(const NodeState& node, int counts) {
  return sensor::estimate_moisture(static_cast<double>(counts), node.calib);
}

fl::TrainingExample collect_sample(NodeState& node, const sensor::SensorFrame& frame,
                                   const soil::WeatherTick& forecast, double applied_liters) {
  fl::TrainingExample ex;
  ex.features = {estimate_moisture(node, frame.analog_raw), forecast.et_demand,
                 forecast.rain_rate, applied_liters};
  ex.target = std::nan("");
  node.pending = ex;
  return ex;
}

void label_pending(NodeState& node, double true_moisture) {
  if (!node.pending) return;
  node.pending->target = true_moisture;
  node.dataset.push(std::move(*node.pending));
  node.pending.reset();
}

double predict_moisture(const fl::ModelParams& model, const NodeState& node,
                        double moisture_estimate, const soil::WeatherTick& forecast) {
  const double raw[kFeatureDim] = {moisture_estimate, forecast.et_demand, forecast.rain_rate, 0.0};
  const auto encoded = node.scaling.encode(raw);
  return node.scaling.decode_target(fl::predict(model, encoded));
}

PumpPlan decide_irrigation(const fl::ModelParams& model, const sensor::SensorFrame& frame,
                           const NodeState& node, const soil::WeatherTick& forecast,
                           double dt_hours) {
  const double m_hat = estimate_moisture(node, frame.analog_raw);
  const double flow = node.plant.pump_flow_lpm;
  const double max_minutes = std::min(60.0 * dt_hours, node.tank.level / flow);
  auto minutes_for = [&](double moisture_gap) {
    const double liters = std::max(0.0, moisture_gap) / node.plant.moisture_per_liter;
    return std::clamp(liters / flow, 0.0, std::max(0.0, max_minutes));
  };

  PumpPlan plan;
  plan.reactive_minutes = minutes_for(node.soil.field_capacity - m_hat);

  if (node.policy == Policy::reactive) {
    plan.pump_on = sensor::pump_running(sensor::pump_command(frame.digital_dry, node.tank));
    plan.planned_minutes = plan.pump_on ? plan.reactive_minutes : 0.0;
    return plan;
  }

  plan.predicted_moisture = predict_moisture(model, node, m_hat, forecast);
  const bool wants_water = frame.digital_dry && plan.predicted_moisture < node.plant.dry_target;
  plan.pump_on = sensor::pump_running(sensor::pump_command(wants_water, node.tank));
  plan.rain_preempted = frame.digital_dry && !wants_water && node.tank.level > 0.0;
  if (plan.pump_on) {
    plan.planned_minutes =
        std::min(plan.reactive_minutes,
                 minutes_for(node.soil.field_capacity - plan.predicted_moisture));
  }
  return plan;
}

namespace {

// Moves the irrigation tracer through one soil step and returns the
// irrigation-sourced moisture lost to drainage and overflow.
double advance_tracer(NodeState& node, const soil::SoilState& before,
                      const soil::StepResult& step) {
  const auto& rep = step.report;
  const double dt = rep.dt_hours;
  const double held = std::min(node.irrigation_water, before.moisture);
  const double added = rep.irrigation * dt;
  const double share = before.moisture > 0.0 ? held / before.moisture : 0.0;

  const double used = std::min(share * (rep.et + rep.drainage) * dt, held + added);
  double drained = std::min(share * rep.drainage * dt, used);
  double tracer = held + added - used;

  const double raw = before.moisture + (rep.inflow() - rep.outflow()) * dt;
  if (rep.clamped_excess > 0.0 && raw > 0.0) {
    const double spill = std::min(tracer, (tracer / raw) * rep.clamped_excess * dt);
    drained += spill;
    tracer -= spill;
  }
  node.irrigation_water = std::clamp(tracer, 0.0, step.state.moisture);
  return drained;
}

} // namespace

TickResult run_tick(NodeState& node, const soil::WeatherTick& weather, double dt_hours) {
  if (!(std::isfinite(dt_hours) && dt_hours > 0.0))
    throw Error(Errc::invalid_input, "run_tick: dt_hours must be > 0");

  TickResult out;
  const soil::SoilState before = node.soil;
  out.moisture_before = before.moisture;
  node.deficit_sum += std::max(0.0, node.plant.dry_target - before.moisture);

  // sense
  const int counts = sensor::analog_read(before.moisture, node.calib, node.rng);
  out.frame = {counts, sensor::digital_read(counts, node.calib), node.tick};

  soil::WeatherTick forecast = weather;
  if (node.forecast_noise > 0.0) {
    std::normal_distribution<double> err(0.0, node.forecast_noise);
    forecast.rain_rate = std::max(0.0, weather.rain_rate + err(node.rng));
  }

  label_pending(node, before.moisture);

  // decide and actuate
  out.plan = decide_irrigation(node.current_model, out.frame, node, forecast, dt_hours);
  const double flow = node.plant.pump_flow_lpm;
  const double applied = out.plan.pump_on ? flow * out.plan.planned_minutes : 0.0;
  if (applied > 0.0) {
    const double pump_hours = out.plan.planned_minutes / 60.0;
    node.tank = sensor::step_tank(node.tank, true, pump_hours);
    if (dt_hours - pump_hours > 1e-12) node.tank = sensor::step_tank(node.tank, false, dt_hours - pump_hours);
  } else {
    node.tank = sensor::step_tank(node.tank, false, dt_hours);
  }

  // advance the soil
  const double irrigation_rate = applied * node.plant.moisture_per_liter / dt_hours;
  const auto step = soil::step_soil(before, irrigation_rate, weather, dt_hours);
  const double drained = advance_tracer(node, before, step);
  node.soil = step.state;
  out.moisture_after = step.state.moisture;
  out.applied_liters = applied;

  // account
  const bool reactive_gate = out.frame.digital_dry && out.plan.reactive_minutes > 0.0;
  const double reactive_liters = reactive_gate ? flow * out.plan.reactive_minutes : 0.0;
  out.delta.applied_liters = applied;
  out.delta.drained_from_irrigation_liters = drained / node.plant.moisture_per_liter;
  out.delta.baseline_applied_liters = reactive_liters;
  out.delta.rain_preempted_liters = out.plan.rain_preempted ? reactive_liters : 0.0;
  if (applied > 0.0) {
    const auto dry_run = soil::step_soil(before, 0.0, weather, dt_hours);
    if (dry_run.state.moisture >= node.plant.dry_target) out.delta.avoidable_applied_liters = applied;
  }
  node.ledger += out.delta;

  collect_sample(node, out.frame, forecast, applied);

  out.alerts = alerts::evaluate_alerts(node.node_id, node.last_frame, out.frame, node.tank,
                                       node.last_tank_level);
  node.last_frame = out.frame;
  node.last_tank_level = node.tank.level;
  ++node.tick;
  return out;
}

// ----------------------------------------------------------------- protocol

proto::ClientUpdateMsg make_update(NodeState& node, const proto::RoundStart& start, double l2) {
  if (start.global_weights.size() != kFeatureDim + 1) {
    throw Error(Errc::schema_violation, "round_start weights have dimension " +
                                            std::to_string(start.global_weights.size()));
  }
  node.current_model.weights = start.global_weights;
  node.current_model.round = start.round;

  proto::ClientUpdateMsg msg;
  msg.client_id = node.node_id;
  msg.round = start.round;

  const auto raw = node.dataset.to_vector();
  if (raw.size() < kFeatureDim + 2) {
    msg.weights = start.global_weights;
    msg.sample_count = std::max<std::uint64_t>(1, raw.size());
    msg.local_loss = -1.0;
    return msg;
  }
  fl::TrainConfig cfg;
  cfg.local_epochs = static_cast<int>(start.cfg_echo.local_epochs);
  cfg.learning_rate = start.cfg_echo.learning_rate;
  cfg.l2 = l2;
  const auto data = node.scaling.encode(raw);
  auto update = fl::local_train(node.current_model, data, cfg, node.node_id);
  msg.weights = std::move(update.weights);
  msg.sample_count = update.sample_count;
  msg.local_loss = update.local_loss;
  return msg;
}

proto::ClientUpdateMsg participate_round(net::ByteStream& stream, NodeState& node,
                                         const proto::RoundStart& start, double l2) {
  auto msg = make_update(node, start, l2);
  net::send_message(stream, msg);
  return msg;
}

FederationOutcome run_federation(net::ByteStream& stream, NodeState& node, double l2) {
  net::send_message(stream, proto::Register{node.node_id, kFeatureDim});
  FederationOutcome outcome;
  outcome.model = node.current_model;

  bool registered = false;
  for (;;) {
    proto::Message msg;
    try {
      msg = net::recv_message(stream);
    } catch (const Error& e) {
      if (e.code() == Errc::clean_close && registered) return outcome;
      throw;
    }
    if (const auto* ack = std::get_if<proto::RegisterAck>(&msg)) {
      if (!ack->accepted) throw Error(Errc::io_error, "server refused registration of '" + node.node_id + "'");
      registered = true;
    } else if (const auto* start = std::get_if<proto::RoundStart>(&msg)) {
      participate_round(stream, node, *start, l2);
      ++outcome.rounds;
    } else if (const auto* global = std::get_if<proto::GlobalModelMsg>(&msg)) {
      node.current_model.weights = global->weights;
      node.current_model.round = global->round;
      outcome.model = node.current_model;
      if (global->converged) {
        outcome.converged = true;
        return outcome;
      }
    } else if (const auto* err = std::get_if<proto::ErrorMsg>(&msg)) {
      throw Error(Errc::schema_violation, "server error " + err->code + ": " + err->detail);
    }
  }
}

} // namespace fedirr::edge
