#include "fedirr/protocol.hpp"

#include "fedirr/error.hpp"

#include <json.hpp>

#include <cmath>

namespace fedirr::proto {

using ojson = nlohmann::ordered_json;

namespace {

void check_finite(double x, const char* field) {
  if (!std::isfinite(x)) {
    throw Error(Errc::encode_error, std::string("non-finite value in '") + field + "'");
  }
}

void check_finite(const std::vector<double>& v, const char* field) {
  for (double x : v) check_finite(x, field);
}

[[noreturn]] void schema(const std::string& detail) {
  throw Error(Errc::schema_violation, detail);
}

const ojson& field(const ojson& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) schema(std::string("missing field '") + key + "'");
  return *it;
}

std::string get_string(const ojson& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_string()) schema(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

bool get_bool(const ojson& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_boolean()) schema(std::string("field '") + key + "' must be a boolean");
  return v.get<bool>();
}

std::uint64_t get_count(const ojson& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_number_unsigned()) {
    schema(std::string("field '") + key + "' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::int64_t get_int(const ojson& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_number_integer()) schema(std::string("field '") + key + "' must be an integer");
  return v.get<std::int64_t>();
}

double get_number(const ojson& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_number()) schema(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

std::vector<double> get_weights(const ojson& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_array()) schema(std::string("field '") + key + "' must be an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) {
    if (!x.is_number()) schema(std::string("field '") + key + "' must hold numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

struct Encoder {
  ojson operator()(const Register& m) const {
    return {{"type", "register"}, {"client_id", m.client_id}, {"feature_dim", m.feature_dim}};
  }
  ojson operator()(const RegisterAck& m) const {
    return {{"type", "register_ack"}, {"accepted", m.accepted}, {"round", m.round}};
  }
  ojson operator()(const RoundStart& m) const {
    check_finite(m.global_weights, "global_weights");
    check_finite(m.cfg_echo.learning_rate, "learning_rate");
    ojson cfg = {{"local_epochs", m.cfg_echo.local_epochs},
                 {"learning_rate", m.cfg_echo.learning_rate}};
    return {{"type", "round_start"},
            {"round", m.round},
            {"global_weights", m.global_weights},
            {"cfg_echo", cfg}};
  }
  ojson operator()(const ClientUpdateMsg& m) const {
    check_finite(m.weights, "weights");
    check_finite(m.local_loss, "local_loss");
    return {{"type", "client_update"}, {"client_id", m.client_id},
            {"round", m.round},        {"weights", m.weights},
            {"sample_count", m.sample_count}, {"local_loss", m.local_loss}};
  }
  ojson operator()(const GlobalModelMsg& m) const {
    check_finite(m.weights, "weights");
    return {{"type", "global_model"},
            {"round", m.round},
            {"weights", m.weights},
            {"converged", m.converged}};
  }
  ojson operator()(const Heartbeat& m) const {
    return {{"type", "heartbeat"}, {"client_id", m.client_id}};
  }
  ojson operator()(const ErrorMsg& m) const {
    return {{"type", "error"}, {"code", m.code}, {"detail", m.detail}};
  }
};

} // namespace

std::string_view type_tag(const Message& msg) noexcept {
  static constexpr std::string_view tags[] = {"register",      "register_ack", "round_start",
                                              "client_update", "global_model", "heartbeat",
                                              "error"};
  return tags[msg.index()];
}

std::string encode(const Message& msg) { return std::visit(Encoder{}, msg).dump(); }

Message decode(std::string_view payload) {
  ojson j;
  try {
    j = ojson::parse(payload.begin(), payload.end());
  } catch (const ojson::exception& e) {
    throw Error(Errc::malformed_payload, e.what());
  }
  if (!j.is_object()) schema("payload must be a JSON object");
  const std::string type = get_string(j, "type");

  if (type == "register") {
    return Register{get_string(j, "client_id"), get_count(j, "feature_dim")};
  }
  if (type == "register_ack") {
    return RegisterAck{get_bool(j, "accepted"), get_count(j, "round")};
  }
  if (type == "round_start") {
    const auto& cfg = field(j, "cfg_echo");
    if (!cfg.is_object()) schema("field 'cfg_echo' must be an object");
    return RoundStart{get_count(j, "round"), get_weights(j, "global_weights"),
                      CfgEcho{get_int(cfg, "local_epochs"), get_number(cfg, "learning_rate")}};
  }
  if (type == "client_update") {
    return ClientUpdateMsg{get_string(j, "client_id"), get_count(j, "round"),
                           get_weights(j, "weights"), get_count(j, "sample_count"),
                           get_number(j, "local_loss")};
  }
  if (type == "global_model") {
    return GlobalModelMsg{get_count(j, "round"), get_weights(j, "weights"),
                          get_bool(j, "converged")};
  }
  if (type == "heartbeat") return Heartbeat{get_string(j, "client_id")};
  if (type == "error") return ErrorMsg{get_string(j, "code"), get_string(j, "detail")};
  throw Error(Errc::unknown_type, "unknown message type '" + type + "'");
}

} // namespace fedirr::proto
