#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace fedirr::proto {

struct Register {
  std::string client_id;
  std::uint64_t feature_dim = 0;
  bool operator==(const Register&) const = default;
};

struct RegisterAck {
  bool accepted = false;
  std::uint64_t round = 0;
  bool operator==(const RegisterAck&) const = default;
};

struct CfgEcho {
  std::int64_t local_epochs = 1;
  double learning_rate = 0.0;
  bool operator==(const CfgEcho&) const = default;
};

struct RoundStart {
  std::uint64_t round = 0;
  std::vector<double> global_weights;
  CfgEcho cfg_echo;
  bool operator==(const RoundStart&) const = default;
};

struct ClientUpdateMsg {
  std::string client_id;
  std::uint64_t round = 0;
  std::vector<double> weights;
  std::uint64_t sample_count = 1;
  double local_loss = 0.0; // -1 flags a cold-start echo
  bool operator==(const ClientUpdateMsg&) const = default;
};

struct GlobalModelMsg {
  std::uint64_t round = 0;
  std::vector<double> weights;
  bool converged = false;
  bool operator==(const GlobalModelMsg&) const = default;
};

struct Heartbeat {
  std::string client_id;
  bool operator==(const Heartbeat&) const = default;
};

struct ErrorMsg {
  std::string code;
  std::string detail;
  bool operator==(const ErrorMsg&) const = default;
};

using Message = std::variant<Register, RegisterAck, RoundStart, ClientUpdateMsg,
                             GlobalModelMsg, Heartbeat, ErrorMsg>;

/// Wire tag of the alternative held by msg, e.g. "client_update".
std::string_view type_tag(const Message& msg) noexcept;

/// Compact JSON, "type" first and the remaining keys in declaration order.
/// Throws Error(encode_error) on non-finite numbers.
std::string encode(const Message& msg);

/// Throws Error(malformed_payload | unknown_type | schema_violation).
Message decode(std::string_view payload);

} // namespace fedirr::proto
