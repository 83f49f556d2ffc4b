#include "fedirr/alerts.hpp"

#include "fedirr/error.hpp"

#include <httplib.h>
#include <json.hpp>

#include <fstream>
#include <ostream>

namespace fedirr::alerts {

std::string_view kind_name(AlertKind kind) noexcept {
  switch (kind) {
  case AlertKind::dry: return "DRY";
  case AlertKind::recovered: return "RECOVERED";
  case AlertKind::tank_low: return "TANK_LOW";
  }
  return "?";
}

std::string_view severity_name(Severity sev) noexcept {
  return sev == Severity::warn ? "WARN" : "INFO";
}

std::vector<AlertEvent> evaluate_alerts(std::string_view node_id,
                                        const std::optional<sensor::SensorFrame>& prev_frame,
                                        const sensor::SensorFrame& frame,
                                        const sensor::TankState& tank,
                                        std::optional<double> prev_tank_level) {
  std::vector<AlertEvent> events;
  auto emit = [&](AlertKind kind, std::string_view message, Severity sev) {
    events.push_back({std::string(node_id), frame.tick, kind, std::string(message), sev});
  };

  const bool was_dry = prev_frame && prev_frame->digital_dry;
  if (frame.digital_dry && !was_dry) {
    emit(AlertKind::dry, kDryMessage, Severity::warn);
  } else if (!frame.digital_dry && was_dry) {
    emit(AlertKind::recovered, kRecoveredMessage, Severity::info);
  }

  const bool low_now = tank.level <= tank.threshold_low;
  const bool low_before = prev_tank_level && *prev_tank_level <= tank.threshold_low;
  if (low_now && !low_before) emit(AlertKind::tank_low, kTankLowMessage, Severity::warn);
  return events;
}

std::string format_line(const AlertEvent& event) {
  return std::string(severity_name(event.severity)) + " node=" + event.node_id +
         " tick=" + std::to_string(event.tick) + " " + event.message;
}

std::string webhook_body(const AlertEvent& event) {
  nlohmann::ordered_json body = {{"node_id", event.node_id},
                                 {"tick", event.tick},
                                 {"kind", kind_name(event.kind)},
                                 {"message", event.message},
                                 {"severity", severity_name(event.severity)}};
  return body.dump();
}

std::string_view sink_kind_name(SinkKind kind) noexcept {
  switch (kind) {
  case SinkKind::console: return "console";
  case SinkKind::file: return "file";
  case SinkKind::webhook: return "webhook";
  }
  return "?";
}

SinkKind parse_sink_kind(std::string_view name) {
  if (name == "console") return SinkKind::console;
  if (name == "file") return SinkKind::file;
  if (name == "webhook") return SinkKind::webhook;
  throw Error(Errc::invalid_input, "unknown sink kind '" + std::string(name) + "'");
}

void SinkConfig::validate() const {
  if (rate_limit < 1) throw Error(Errc::invalid_input, "rate_limit must be >= 1");
  if (kind != SinkKind::console && target.empty())
    throw Error(Errc::invalid_input, std::string(sink_kind_name(kind)) + " sink needs a target");
  if (kind == SinkKind::webhook && target.rfind("http://", 0) != 0)
    throw Error(Errc::invalid_input, "webhook target must start with http://");
}

void ConsoleSink::deliver(const AlertEvent& event) {
  std::lock_guard lock(mu_);
  out_ << format_line(event) << '\n';
  out_.flush();
  if (!out_) throw Error(Errc::io_error, "console write failed");
}

void FileSink::deliver(const AlertEvent& event) {
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::app);
  out << format_line(event) << '\n';
  if (!out) throw Error(Errc::io_error, "cannot append to " + path_.string());
}

WebhookSink::WebhookSink(const std::string& url) {
  const std::string scheme = "http://";
  if (url.rfind(scheme, 0) != 0) throw Error(Errc::invalid_input, "webhook URL must be http://");
  const auto slash = url.find('/', scheme.size());
  origin_ = url.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : url.substr(slash);
}

void WebhookSink::deliver(const AlertEvent& event) {
  httplib::Client client(origin_);
  client.set_connection_timeout(2, 0);
  client.set_read_timeout(2, 0);
  client.set_write_timeout(2, 0);
  auto res = client.Post(path_, webhook_body(event), "application/json");
  if (!res) throw Error(Errc::io_error, "webhook POST failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    throw Error(Errc::io_error, "webhook answered HTTP " + std::to_string(res->status));
}

bool RateLimiter::admit(const std::string& node_id, AlertKind kind, double time_hours) {
  auto& window = history_[{node_id, kind}];
  while (!window.empty() && window.front() <= time_hours - 1.0) window.pop_front();
  if (static_cast<int>(window.size()) >= max_per_hour_) return false;
  window.push_back(time_hours);
  return true;
}

AlertDispatcher::AlertDispatcher(const std::vector<SinkConfig>& sinks, double dt_hours,
                                 std::ostream& console)
    : dt_hours_(dt_hours) {
  for (const auto& cfg : sinks) {
    cfg.validate();
    switch (cfg.kind) {
    case SinkKind::console:
      add_sink(cfg.kind, std::make_unique<ConsoleSink>(console), cfg.rate_limit);
      break;
    case SinkKind::file:
      add_sink(cfg.kind, std::make_unique<FileSink>(cfg.target), cfg.rate_limit);
      break;
    case SinkKind::webhook:
      add_sink(cfg.kind, std::make_unique<WebhookSink>(cfg.target), cfg.rate_limit);
      break;
    }
  }
}

void AlertDispatcher::add_sink(SinkKind kind, std::unique_ptr<Sink> sink, int rate_limit) {
  if (rate_limit < 1) throw Error(Errc::invalid_input, "rate_limit must be >= 1");
  routes_.push_back({kind, std::move(sink), RateLimiter(rate_limit)});
}

std::vector<DeliveryReceipt> AlertDispatcher::dispatch(const AlertEvent& event) {
  const double now = static_cast<double>(event.tick) * dt_hours_;
  std::vector<DeliveryReceipt> receipts;
  receipts.reserve(routes_.size());
  for (std::size_t i = 0; i < routes_.size(); ++i) {
    auto& route = routes_[i];
    DeliveryReceipt receipt{i, route.kind, false, false, {}};
    if (!route.limiter.admit(event.node_id, event.kind, now)) {
      receipt.suppressed = true;
    } else {
      try {
        route.sink->deliver(event);
        receipt.delivered = true;
      } catch (const std::exception& e) {
        receipt.error = e.what();
      }
    }
    receipts.push_back(std::move(receipt));
  }
  return receipts;
}

} // namespace fedirr::alerts
