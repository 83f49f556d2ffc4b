#include "fedirr/config.hpp"

#include "fedirr/error.hpp"
#include "fedirr/random.hpp"
#include "fedirr/tcp.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace fedirr {

using ojson = nlohmann::ordered_json;

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& rule) {
  throw Error(Errc::config_error, "config field '" + field + "': " + rule);
}

// Walks one JSON object, remembering which keys were consumed so that typos
// surface as errors instead of silently falling back to defaults.
class Reader {
public:
  Reader(const ojson& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "<root>" : path_, "must be an object");
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  const ojson* find(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const char* key, double& out) {
    if (const auto* v = find(key)) {
      if (!v->is_number()) fail(field(key), "expected a number");
      out = v->get<double>();
    }
  }

  template <class Int>
  void integer(const char* key, Int& out) {
    if (const auto* v = find(key)) {
      if (!v->is_number_integer()) fail(field(key), "expected an integer");
      if constexpr (std::is_unsigned_v<Int>) {
        if (!v->is_number_unsigned()) fail(field(key), "must be >= 0");
        const auto x = v->get<std::uint64_t>();
        if (x > std::numeric_limits<Int>::max()) fail(field(key), "out of range");
        out = static_cast<Int>(x);
      } else {
        const auto x = v->get<std::int64_t>();
        if (x < std::numeric_limits<Int>::min() || x > std::numeric_limits<Int>::max())
          fail(field(key), "out of range");
        out = static_cast<Int>(x);
      }
    }
  }

  void boolean(const char* key, bool& out) {
    if (const auto* v = find(key)) {
      if (!v->is_boolean()) fail(field(key), "expected true or false");
      out = v->get<bool>();
    }
  }

  void string(const char* key, std::string& out) {
    if (const auto* v = find(key)) {
      if (!v->is_string()) fail(field(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  template <class Fn>
  void section(const char* key, Fn&& fn) {
    if (const auto* v = find(key)) {
      Reader sub(*v, field(key));
      fn(sub);
      sub.finish();
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) fail(path_.empty() ? key : path_ + "." + key, "unknown field");
    }
  }

private:
  const ojson& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class Enum, class Parse>
void enum_field(Reader& r, const char* key, Enum& out, Parse parse) {
  std::string text;
  r.string(key, text);
  if (text.empty()) return;
  try {
    out = parse(text);
  } catch (const Error& e) {
    fail(r.field(key), e.what());
  }
}

void check(bool ok, const char* field, const char* rule) {
  if (!ok) fail(field, rule);
}

bool finite(double x) { return std::isfinite(x); }

} // namespace

void ExperimentConfig::validate() const {
  check(nodes >= 1, "nodes", "must be >= 1");
  check(ticks >= 1, "ticks", "must be >= 1");
  check(finite(dt_hours) && dt_hours > 0.0, "dt_hours", "must be > 0");
  check(buffer_cap >= 1, "buffer_cap", "must be >= 1");
  check(finite(forecast_noise) && forecast_noise >= 0.0, "forecast_noise", "must be >= 0");

  check(train.local_epochs >= 1, "train.local_epochs", "must be >= 1");
  check(finite(train.learning_rate) && train.learning_rate > 0.0, "train.learning_rate", "must be > 0");
  check(finite(train.l2) && train.l2 >= 0.0, "train.l2", "must be >= 0");
  check(finite(train.convergence_tol) && train.convergence_tol > 0.0, "train.convergence_tol",
        "must be > 0");
  check(train.max_rounds >= 1, "train.max_rounds", "must be >= 1");

  check(finite(soil.saturation) && soil.saturation > 0.0 && soil.saturation <= 1.0,
        "soil.saturation", "must lie in (0, 1]");
  check(finite(soil.moisture) && soil.moisture >= 0.0, "soil.moisture", "must be >= 0");
  check(soil.moisture <= soil.saturation, "soil.moisture", "must be <= soil.saturation");
  check(finite(soil.field_capacity) && soil.field_capacity > 0.0, "soil.field_capacity", "must be > 0");
  check(soil.field_capacity <= soil.saturation, "soil.field_capacity", "must be <= soil.saturation");
  check(finite(soil.et_coeff) && soil.et_coeff >= 0.0, "soil.et_coeff", "must be >= 0");
  check(finite(soil.drain_coeff) && soil.drain_coeff >= 0.0, "soil.drain_coeff", "must be >= 0");

  check(finite(sensor.r_wet) && sensor.r_wet > 0.0, "sensor.r_wet", "must be > 0");
  check(finite(sensor.r_dry) && sensor.r_dry > sensor.r_wet, "sensor.r_dry", "must be > sensor.r_wet");
  check(finite(sensor.divider_r) && sensor.divider_r > 0.0, "sensor.divider_r", "must be > 0");
  check(finite(sensor.vcc) && sensor.vcc > 0.0, "sensor.vcc", "must be > 0");
  check(finite(sensor.noise_std) && sensor.noise_std >= 0.0, "sensor.noise_std", "must be >= 0");
  check(sensor.threshold_counts >= 0 && sensor.threshold_counts <= sensor::kAdcMax,
        "sensor.threshold_counts", "must lie in [0, 1023]");

  check(finite(tank.capacity_max) && tank.capacity_max > 0.0, "tank.capacity_max", "must be > 0");
  check(finite(tank.threshold_low) && tank.threshold_low >= 0.0, "tank.threshold_low", "must be >= 0");
  check(tank.threshold_low < tank.capacity_max, "tank.threshold_low", "must be < tank.capacity_max");
  check(finite(tank.level) && tank.level >= 0.0 && tank.level <= tank.capacity_max, "tank.level",
        "must lie in [0, tank.capacity_max]");
  check(finite(tank.inflow_rate) && tank.inflow_rate >= 0.0, "tank.inflow_rate", "must be >= 0");

  check(finite(plant.pump_flow_lpm) && plant.pump_flow_lpm > 0.0, "plant.pump_flow_lpm", "must be > 0");
  check(finite(plant.moisture_per_liter) && plant.moisture_per_liter > 0.0,
        "plant.moisture_per_liter", "must be > 0");
  check(finite(plant.dry_target) && plant.dry_target >= 0.0 && plant.dry_target <= soil.saturation,
        "plant.dry_target", "must lie in [0, soil.saturation]");

  check(finite(scaling.moisture_scale) && scaling.moisture_scale > 0.0, "scaling.moisture_scale", "must be > 0");
  check(finite(scaling.et_scale) && scaling.et_scale > 0.0, "scaling.et_scale", "must be > 0");
  check(finite(scaling.rain_scale) && scaling.rain_scale > 0.0, "scaling.rain_scale", "must be > 0");
  check(finite(scaling.applied_scale) && scaling.applied_scale > 0.0, "scaling.applied_scale", "must be > 0");
  check(finite(scaling.moisture_center), "scaling.moisture_center", "must be finite");
  check(finite(scaling.et_center), "scaling.et_center", "must be finite");

  for (std::size_t i = 0; i < sinks.size(); ++i) {
    const std::string base = "sinks[" + std::to_string(i) + "]";
    try {
      sinks[i].validate();
    } catch (const Error& e) {
      fail(base, e.what());
    }
  }

  try {
    net::parse_endpoint(server.listen);
  } catch (const Error& e) {
    fail("server.listen", e.what());
  }
  check(server.round_deadline_ms > 0, "server.round_deadline_ms", "must be > 0");
  check(server.registration_timeout_ms > 0, "server.registration_timeout_ms", "must be > 0");
}

ExperimentConfig default_config() { return {}; }

std::string config_to_json(const ExperimentConfig& cfg) {
  ojson sinks = ojson::array();
  for (const auto& s : cfg.sinks) {
    sinks.push_back({{"kind", alerts::sink_kind_name(s.kind)},
                     {"target", s.target},
                     {"rate_limit", s.rate_limit}});
  }
  ojson j = {
      {"nodes", cfg.nodes},
      {"scenario", soil::scenario_name(cfg.scenario)},
      {"ticks", cfg.ticks},
      {"warmup_ticks", cfg.warmup_ticks},
      {"dt_hours", cfg.dt_hours},
      {"seed", cfg.seed},
      {"policy", edge::policy_name(cfg.policy)},
      {"train",
       {{"local_epochs", cfg.train.local_epochs},
        {"learning_rate", cfg.train.learning_rate},
        {"l2", cfg.train.l2},
        {"convergence_tol", cfg.train.convergence_tol},
        {"max_rounds", cfg.train.max_rounds}}},
      {"soil",
       {{"moisture", cfg.soil.moisture},
        {"saturation", cfg.soil.saturation},
        {"field_capacity", cfg.soil.field_capacity},
        {"et_coeff", cfg.soil.et_coeff},
        {"drain_coeff", cfg.soil.drain_coeff}}},
      {"sensor",
       {{"r_dry", cfg.sensor.r_dry},
        {"r_wet", cfg.sensor.r_wet},
        {"divider_r", cfg.sensor.divider_r},
        {"vcc", cfg.sensor.vcc},
        {"noise_std", cfg.sensor.noise_std},
        {"threshold_counts", cfg.sensor.threshold_counts}}},
      {"tank",
       {{"level", cfg.tank.level},
        {"capacity_max", cfg.tank.capacity_max},
        {"threshold_low", cfg.tank.threshold_low},
        {"filling", cfg.tank.filling},
        {"inflow_rate", cfg.tank.inflow_rate}}},
      {"plant",
       {{"pump_flow_lpm", cfg.plant.pump_flow_lpm},
        {"moisture_per_liter", cfg.plant.moisture_per_liter},
        {"dry_target", cfg.plant.dry_target}}},
      {"scaling",
       {{"moisture_center", cfg.scaling.moisture_center},
        {"moisture_scale", cfg.scaling.moisture_scale},
        {"et_center", cfg.scaling.et_center},
        {"et_scale", cfg.scaling.et_scale},
        {"rain_scale", cfg.scaling.rain_scale},
        {"applied_scale", cfg.scaling.applied_scale}}},
      {"buffer_cap", cfg.buffer_cap},
      {"forecast_noise", cfg.forecast_noise},
      {"sinks", sinks},
      {"server",
       {{"listen", cfg.server.listen},
        {"round_deadline_ms", cfg.server.round_deadline_ms},
        {"registration_timeout_ms", cfg.server.registration_timeout_ms},
        {"validation_ticks", cfg.server.validation_ticks}}},
  };
  return j.dump(2) + "\n";
}

ExperimentConfig config_from_json(const std::string& text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const ojson::parse_error& e) {
    throw Error(Errc::config_error, std::string("config is not valid JSON: ") + e.what());
  }

  ExperimentConfig cfg = default_config();
  Reader r(j, "");
  r.integer("nodes", cfg.nodes);
  enum_field(r, "scenario", cfg.scenario, soil::parse_scenario);
  r.integer("ticks", cfg.ticks);
  r.integer("warmup_ticks", cfg.warmup_ticks);
  r.number("dt_hours", cfg.dt_hours);
  r.integer("seed", cfg.seed);
  enum_field(r, "policy", cfg.policy, edge::parse_policy);
  r.section("train", [&](Reader& s) {
    s.integer("local_epochs", cfg.train.local_epochs);
    s.number("learning_rate", cfg.train.learning_rate);
    s.number("l2", cfg.train.l2);
    s.number("convergence_tol", cfg.train.convergence_tol);
    s.integer("max_rounds", cfg.train.max_rounds);
  });
  r.section("soil", [&](Reader& s) {
    s.number("moisture", cfg.soil.moisture);
    s.number("saturation", cfg.soil.saturation);
    s.number("field_capacity", cfg.soil.field_capacity);
    s.number("et_coeff", cfg.soil.et_coeff);
    s.number("drain_coeff", cfg.soil.drain_coeff);
  });
  r.section("sensor", [&](Reader& s) {
    s.number("r_dry", cfg.sensor.r_dry);
    s.number("r_wet", cfg.sensor.r_wet);
    s.number("divider_r", cfg.sensor.divider_r);
    s.number("vcc", cfg.sensor.vcc);
    s.number("noise_std", cfg.sensor.noise_std);
    s.integer("threshold_counts", cfg.sensor.threshold_counts);
  });
  r.section("tank", [&](Reader& s) {
    s.number("level", cfg.tank.level);
    s.number("capacity_max", cfg.tank.capacity_max);
    s.number("threshold_low", cfg.tank.threshold_low);
    s.boolean("filling", cfg.tank.filling);
    s.number("inflow_rate", cfg.tank.inflow_rate);
  });
  r.section("plant", [&](Reader& s) {
    s.number("pump_flow_lpm", cfg.plant.pump_flow_lpm);
    s.number("moisture_per_liter", cfg.plant.moisture_per_liter);
    s.number("dry_target", cfg.plant.dry_target);
  });
  r.section("scaling", [&](Reader& s) {
    s.number("moisture_center", cfg.scaling.moisture_center);
    s.number("moisture_scale", cfg.scaling.moisture_scale);
    s.number("et_center", cfg.scaling.et_center);
    s.number("et_scale", cfg.scaling.et_scale);
    s.number("rain_scale", cfg.scaling.rain_scale);
    s.number("applied_scale", cfg.scaling.applied_scale);
  });
  r.integer("buffer_cap", cfg.buffer_cap);
  r.number("forecast_noise", cfg.forecast_noise);
  if (const auto* sinks = r.find("sinks")) {
    if (!sinks->is_array()) fail("sinks", "expected an array");
    cfg.sinks.clear();
    for (std::size_t i = 0; i < sinks->size(); ++i) {
      Reader s((*sinks)[i], "sinks[" + std::to_string(i) + "]");
      alerts::SinkConfig sink;
      enum_field(s, "kind", sink.kind, alerts::parse_sink_kind);
      s.string("target", sink.target);
      s.integer("rate_limit", sink.rate_limit);
      s.finish();
      cfg.sinks.push_back(sink);
    }
  }
  r.section("server", [&](Reader& s) {
    s.string("listen", cfg.server.listen);
    s.integer("round_deadline_ms", cfg.server.round_deadline_ms);
    s.integer("registration_timeout_ms", cfg.server.registration_timeout_ms);
    s.integer("validation_ticks", cfg.server.validation_ticks);
  });
  r.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config_error, "cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return config_from_json(buf.str());
  } catch (const Error& e) {
    throw Error(Errc::config_error, path.string() + ": " + e.what());
  }
}

std::string node_id_for(std::size_t index) { return "n" + std::to_string(index + 1); }

std::uint64_t node_seed(const ExperimentConfig& cfg, const std::string& node_id) {
  return hash_combine(cfg.seed, fnv1a(node_id));
}

edge::NodeConfig node_config(const ExperimentConfig& cfg, const std::string& node_id) {
  edge::NodeConfig nc;
  nc.node_id = node_id;
  nc.soil = cfg.soil;
  nc.calib = cfg.sensor;
  nc.tank = cfg.tank;
  nc.plant = cfg.plant;
  nc.scaling = cfg.scaling;
  nc.policy = cfg.policy;
  nc.buffer_cap = cfg.buffer_cap;
  nc.forecast_noise = cfg.forecast_noise;
  nc.dt_hours = cfg.dt_hours;
  nc.seed = node_seed(cfg, node_id);
  return nc;
}

} // namespace fedirr
