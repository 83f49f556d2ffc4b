#pragma once

#include "fedirr/sensor.hpp"

#include <cstdint>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fedirr::alerts {

enum class AlertKind { dry, recovered, tank_low };
enum class Severity { info, warn };

inline constexpr std::string_view kDryMessage = "ALERT: The soil moisture is dry";
inline constexpr std::string_view kRecoveredMessage = "The soil moisture is back to normal";
inline constexpr std::string_view kTankLowMessage = "ALERT: The water tank level is low";

struct AlertEvent {
  std::string node_id;
  std::uint64_t tick = 0;
  AlertKind kind = AlertKind::dry;
  std::string message;
  Severity severity = Severity::warn;

  bool operator==(const AlertEvent&) const = default;
};

std::string_view kind_name(AlertKind kind) noexcept;       // DRY, RECOVERED, TANK_LOW
std::string_view severity_name(Severity sev) noexcept;     // INFO, WARN

/// Edge-triggered: DRY on a wet-to-dry transition (or a dry first frame),
/// RECOVERED on dry-to-wet, TANK_LOW when the level falls to or below
/// threshold_low from above (or starts there).
std::vector<AlertEvent> evaluate_alerts(std::string_view node_id,
                                        const std::optional<sensor::SensorFrame>& prev_frame,
                                        const sensor::SensorFrame& frame,
                                        const sensor::TankState& tank,
                                        std::optional<double> prev_tank_level = std::nullopt);

/// "WARN node=n1 tick=42 ALERT: The soil moisture is dry"
std::string format_line(const AlertEvent& event);

/// {"node_id":..,"tick":..,"kind":..,"message":..,"severity":..}
std::string webhook_body(const AlertEvent& event);

enum class SinkKind { console, file, webhook };

std::string_view sink_kind_name(SinkKind kind) noexcept;
SinkKind parse_sink_kind(std::string_view name);

struct SinkConfig {
  SinkKind kind = SinkKind::console;
  std::string target; // file path or webhook URL; unused for console
  int rate_limit = 4; // per node, per kind, per hour

  void validate() const;
  bool operator==(const SinkConfig&) const = default;
};

struct DeliveryReceipt {
  std::size_t sink_index = 0;
  SinkKind kind = SinkKind::console;
  bool delivered = false;
  bool suppressed = false; // dropped by the rate limiter, never attempted
  std::string error;
};

class Sink {
public:
  virtual ~Sink() = default;
  /// Throws on failure.
  virtual void deliver(const AlertEvent& event) = 0;
};

class ConsoleSink final : public Sink {
public:
  explicit ConsoleSink(std::ostream& out) : out_(out) {}
  void deliver(const AlertEvent& event) override;

private:
  std::ostream& out_;
  std::mutex mu_;
};

class FileSink final : public Sink {
public:
  explicit FileSink(std::filesystem::path path) : path_(std::move(path)) {}
  void deliver(const AlertEvent& event) override;

private:
  std::filesystem::path path_;
  std::mutex mu_;
};

class WebhookSink final : public Sink {
public:
  /// url: http://host[:port][/path]
  explicit WebhookSink(const std::string& url);
  void deliver(const AlertEvent& event) override;

private:
  std::string origin_;
  std::string path_;
};

/// Sliding one-hour window per (node, kind). Time is simulated hours.
class RateLimiter {
public:
  explicit RateLimiter(int max_per_hour) : max_per_hour_(max_per_hour) {}
  bool admit(const std::string& node_id, AlertKind kind, double time_hours);

private:
  int max_per_hour_;
  std::map<std::pair<std::string, AlertKind>, std::deque<double>> history_;
};

/// Fans each event out to every sink independently. A failing sink only
/// affects its own receipt.
class AlertDispatcher {
public:
  AlertDispatcher(double dt_hours = 1.0) : dt_hours_(dt_hours) {}
  AlertDispatcher(const std::vector<SinkConfig>& sinks, double dt_hours, std::ostream& console);

  void add_sink(SinkKind kind, std::unique_ptr<Sink> sink, int rate_limit);
  std::vector<DeliveryReceipt> dispatch(const AlertEvent& event);
  std::size_t sink_count() const { return routes_.size(); }

private:
  struct Route {
    SinkKind kind;
    std::unique_ptr<Sink> sink;
    RateLimiter limiter;
  };
  double dt_hours_;
  std::vector<Route> routes_;
};

} // namespace fedirr::alerts
