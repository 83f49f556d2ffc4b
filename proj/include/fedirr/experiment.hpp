#pragma once

#include "fedirr/alerts.hpp"
#include "fedirr/config.hpp"
#include "fedirr/node.hpp"
#include "fedirr/server.hpp"
#include "fedirr/tcp.hpp"

#include <chrono>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fedirr::experiment {

inline constexpr std::string_view kTelemetryHeader =
    "tick,node_id,analog_raw,digital_dry,moisture_true,pump_on,planned_minutes,tank_level,"
    "applied_liters";

struct TelemetryRow {
  std::uint64_t tick = 0;
  std::string node_id;
  int analog_raw = 0;
  bool digital_dry = false;
  double moisture_true = 0.0;
  bool pump_on = false;
  double planned_minutes = 0.0;
  double tank_level = 0.0;
  double applied_liters = 0.0;
};

std::string telemetry_line(const TelemetryRow& row);
void write_telemetry(const std::filesystem::path& path, const std::vector<TelemetryRow>& rows);

struct NodeReport {
  std::string node_id;
  edge::WaterLedger ledger;
  double mean_moisture_deficit = 0.0;
};

/// Sums the ledgers; the deficit is averaged over nodes.
NodeReport total_of(const std::vector<NodeReport>& nodes);

inline constexpr std::string_view kReportHeader =
    "node_id,applied_liters,drained_from_irrigation_liters,rain_preempted_liters,"
    "avoidable_applied_liters,baseline_applied_liters,wasted_liters,mean_moisture_deficit";

/// One row per node followed by a TOTAL row.
std::string report_csv(const std::vector<NodeReport>& nodes);
std::string report_text(const std::vector<NodeReport>& nodes, edge::Policy policy);
/// Rows of report.csv including TOTAL.
std::vector<NodeReport> read_report_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------- node life

/// Fresh node for the evaluation period whose buffer already holds the
/// samples of a reactive warm-up on a separate weather trace.
edge::NodeState prepare_node(const ExperimentConfig& cfg, const std::string& node_id);

soil::WeatherTrace evaluation_trace(const ExperimentConfig& cfg, const std::string& node_id);

/// Scaled samples from a dedicated node that never takes part in training.
std::vector<fl::TrainingExample> validation_set(const ExperimentConfig& cfg);

struct EvaluationRun {
  std::vector<TelemetryRow> telemetry;
  std::vector<alerts::AlertEvent> alerts;
  NodeReport report;
};

/// Runs cfg.ticks ticks with node.current_model. Alerts go to live when given.
EvaluationRun evaluate_node(edge::NodeState& node, const ExperimentConfig& cfg,
                            alerts::AlertDispatcher* live = nullptr);

/// Single-node training loop equivalent to a one-client federation.
fl::ModelParams train_offline(edge::NodeState& node, const ExperimentConfig& cfg);

server::ServerConfig make_server_config(const ExperimentConfig& cfg);

/// Initial attempt plus `retries` more, doubling the wait each time.
net::TcpStream connect_with_retry(const net::Endpoint& endpoint, int retries,
                                  std::chrono::milliseconds backoff);

// ---------------------------------------------------------------- commands

struct ServeOptions {
  net::Endpoint listen;
  std::optional<std::filesystem::path> out_dir;
  bool resume = false; // continue from out_dir/latest
};

/// 0 converged, 2 max_rounds reached, 1 error.
int run_serve(const ExperimentConfig& cfg, const ServeOptions& opts, std::ostream& out,
              std::ostream& err);

struct ClientOptions {
  net::Endpoint server;
  std::string node_id = "n1";
  std::optional<std::filesystem::path> telemetry;
  bool offline = false;
  int retries = 3;
  std::chrono::milliseconds backoff{200};
};

/// 0 on success, 1 on error (including an unreachable server).
int run_client(const ExperimentConfig& cfg, const ClientOptions& opts, std::ostream& out,
               std::ostream& err);

struct DemoResult {
  server::TrainingResult training;
  std::vector<NodeReport> nodes;
  NodeReport total;
};

/// In-process server and cfg.nodes clients over loopback TCP. Writes
/// config.json, checkpoints/, telemetry/<node>.csv, alerts.log, report.txt
/// and report.csv under run_dir.
DemoResult run_demo(const ExperimentConfig& cfg, const std::filesystem::path& run_dir);

struct CompareRow {
  std::string node_id;
  std::string metric;
  double a = 0.0;
  double b = 0.0;
  std::optional<double> delta_pct; // empty when a == 0 and b != 0
};

std::vector<CompareRow> compare_runs(const std::filesystem::path& run_a,
                                     const std::filesystem::path& run_b);
std::string compare_text(const std::vector<CompareRow>& rows);
std::string compare_csv(const std::vector<CompareRow>& rows);

} // namespace fedirr::experiment
