#pragma once

#include "fedirr/alerts.hpp"
#include "fedirr/learning.hpp"
#include "fedirr/node.hpp"
#include "fedirr/sensor.hpp"
#include "fedirr/soil.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fedirr {

struct ServerSettings {
  std::string listen = "127.0.0.1:7070";
  int round_deadline_ms = 10000;
  int registration_timeout_ms = 30000;
  std::size_t validation_ticks = 96;

  bool operator==(const ServerSettings&) const = default;
};

struct ExperimentConfig {
  std::size_t nodes = 3;
  soil::ScenarioKind scenario = soil::ScenarioKind::rain_heavy;
  std::size_t ticks = 200;
  std::size_t warmup_ticks = 240; // reactive data collection before training
  double dt_hours = 1.0;
  std::uint64_t seed = 1;
  edge::Policy policy = edge::Policy::predictive;
  fl::TrainConfig train;
  soil::SoilState soil;
  sensor::SensorCalib sensor;
  sensor::TankState tank;
  edge::PlantConfig plant;
  edge::FeatureScaling scaling;
  std::size_t buffer_cap = 512;
  double forecast_noise = 0.0;
  std::vector<alerts::SinkConfig> sinks;
  ServerSettings server;

  /// Throws Error(config_error) naming the first offending field.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig default_config();

std::string config_to_json(const ExperimentConfig& cfg);

/// Unknown keys are rejected; missing keys keep their defaults.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Identifier of the i-th node of an experiment: n1, n2, ...
std::string node_id_for(std::size_t index);
std::uint64_t node_seed(const ExperimentConfig& cfg, const std::string& node_id);
edge::NodeConfig node_config(const ExperimentConfig& cfg, const std::string& node_id);

} // namespace fedirr
